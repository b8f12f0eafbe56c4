"""Parameter sweeps, analytic/simulated comparison and figure datasets."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .analytic import RateMatrix, residence_time_distribution, total_handover_rate
from .io import Scenario
from .mobility import SimConfig, estimate_rate_matrix, residence_samples, run_replications
from .model import KM2, ConfigError, SpeedModel, validate_config, validate_speed

PROFILES = {
    "desk": dict(disk_radius=5_000.0, duration=2_000.0, replications=8),
    "paper": dict(disk_radius=10_000.0, duration=10_000.0, replications=8),
}

# residence intervals are pooled from a disk of this fraction of the motion boundary
RESIDENCE_FRACTION = 2.0 / 3.0


def profile_sim(profile: str = "desk", **overrides) -> SimConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    kw = dict(PROFILES[profile])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return SimConfig(**kw)


# --------------------------------------------------------------------------
# sweeps

_PATH = re.compile(r"^(?:tiers\[(\d+)\]\.(density|power|alpha|bias)|speed\.mean|user_density|region_area)$")


@dataclass(frozen=True)
class SweepSpec:
    """Sweep of one parameter.

    ``parameter`` is ``tiers[i].density`` (per km^2), ``tiers[i].power``,
    ``tiers[i].alpha``, ``tiers[i].bias`` (tier ``i`` 1-based),
    ``speed.mean`` (m/s), ``user_density`` (per km^2) or ``region_area``
    (km^2).  ``outputs`` selects ``"pairwise"`` rows, the ``"total"`` row,
    or both.
    """

    parameter: str
    values: tuple[float, ...]
    outputs: tuple[str, ...] = ("pairwise", "total")

    def __post_init__(self):
        if not _PATH.match(self.parameter):
            raise ConfigError(f"unknown sweep parameter {self.parameter!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one value")
        if not set(self.outputs) <= {"pairwise", "total"} or not self.outputs:
            raise ConfigError("sweep outputs must be 'pairwise' and/or 'total'")


def apply_parameter(sc: Scenario, parameter: str, value: float) -> Scenario:
    """Scenario with one parameter replaced, in file units, re-validated."""
    m = _PATH.match(parameter)
    if not m:
        raise ConfigError(f"unknown sweep parameter {parameter!r}")
    cfg = sc.network
    value = float(value)
    if m.group(1) is not None:
        i = int(m.group(1)) - 1
        if not 0 <= i < cfg.n_tiers:
            raise ConfigError(f"tier index {i + 1} out of range")
        field = {"density": "density", "power": "power", "alpha": "pathloss_exponent", "bias": "bias"}[m.group(2)]
        if field == "density":
            value /= KM2
        return replace(sc, network=validate_config(cfg.with_tier(i, **{field: value})))
    if parameter == "speed.mean":
        if not value >= 0:
            raise ConfigError("mean speed must be non-negative")
        return replace(sc, speed=validate_speed(_with_mean(sc.speed, value), cfg.n_tiers))
    if parameter == "user_density":
        return replace(sc, network=validate_config(replace(cfg, user_density=value / KM2)))
    return replace(sc, network=validate_config(replace(cfg, region_area=value * KM2)))


def _with_mean(speed: SpeedModel, mean: float) -> SpeedModel:
    if speed.mean > 0:
        return speed.scaled(mean / speed.mean)
    return SpeedModel(speed.kind if speed.kind != "table" else "constant", mean)


def analytic_rates(sc: Scenario) -> RateMatrix:
    return total_handover_rate(sc.network, sc.speed, sc.users)


def simulated_rates(sc: Scenario, sim: SimConfig, model: Optional[str] = None) -> RateMatrix:
    if sc.users is not None:
        raise ConfigError("the simulator supports a uniform UE density only")
    if model is not None:
        sim = replace(sim, walking_model=model)
    return estimate_rate_matrix(run_replications(sc.network, sim, sc.speed), sc.network)


def _pairs(rm: RateMatrix, outputs: Sequence[str]):
    if "pairwise" in outputs:
        for m in range(rm.n_tiers):
            for n in range(rm.n_tiers):
                yield m + 1, n + 1, float(rm.pairwise[m, n]), _ci(rm, m, n)
    if "total" in outputs:
        yield "total", "total", rm.total, rm.total_ci_halfwidth


def _ci(rm: RateMatrix, m: int, n: int):
    return None if rm.ci_halfwidth is None else float(rm.ci_halfwidth[m, n])


SWEEP_COLUMNS = ("parameter", "value", "m", "n", "analytic_hz", "simulated_hz", "ci_halfwidth")


def run_sweep(sc: Scenario, spec: SweepSpec, sim: Optional[SimConfig] = None) -> list[list]:
    rows = []
    for v in spec.values:
        s = apply_parameter(sc, spec.parameter, v)
        an = analytic_rates(s)
        si = simulated_rates(s, sim) if sim is not None else None
        sim_rows = list(_pairs(si, spec.outputs)) if si is not None else None
        for k, (m, n, a, _) in enumerate(_pairs(an, spec.outputs)):
            sv, ci = (sim_rows[k][2], sim_rows[k][3]) if sim_rows is not None else (None, None)
            rows.append([spec.parameter, v, m, n, a, sv, ci])
    return rows


# --------------------------------------------------------------------------
# comparison

COMPARE_COLUMNS = ("m", "n", "analytic_hz", "simulated_hz", "ci_halfwidth", "rel_error", "ok")


def pair_agrees(analytic: float, simulated: float, ci_halfwidth: Optional[float], tolerance: float, ci_aware: bool = True) -> bool:
    """Agreement rule: relative gap within ``tolerance``, or (when ``ci_aware``)
    the analytic value inside the simulated confidence interval."""
    gap = abs(simulated - analytic)
    if gap <= tolerance * abs(analytic) or (analytic == 0 and simulated == 0):
        return True
    if ci_aware and ci_halfwidth is not None and math.isfinite(ci_halfwidth):
        return gap <= ci_halfwidth
    return False


def compare_rates(
    analytic: RateMatrix, simulated: RateMatrix, tolerance: float = 0.03, ci_aware: bool = True
) -> tuple[list[list], bool]:
    rows = []
    ok_all = True
    sim_rows = list(_pairs(simulated, ("pairwise", "total")))
    for (m, n, a, _), (_, _, s, ci) in zip(_pairs(analytic, ("pairwise", "total")), sim_rows):
        rel = abs(s - a) / abs(a) if a != 0 else (0.0 if s == 0 else math.inf)
        ok = pair_agrees(a, s, ci, tolerance, ci_aware)
        ok_all &= ok
        rows.append([m, n, a, s, ci, rel, int(ok)])
    return rows, ok_all


# --------------------------------------------------------------------------
# figure datasets

FIGURE_IDS = (4, 5, 6, 7, 8, 9)


def _rate_rows(
    sc: Scenario,
    keys: Sequence,
    pairs: Sequence[tuple],
    sim: Optional[SimConfig],
    models: Sequence[str],
) -> list[list]:
    an = analytic_rates(sc)
    sims = {mdl: simulated_rates(sc, sim, mdl) for mdl in models} if sim is not None else {}
    out = []
    for pr in pairs:
        row = list(keys) + list(_label(pr)) + [_pick(an, pr)[0]]
        for mdl in models:
            row += list(_pick(sims[mdl], pr)) if mdl in sims else [None, None]
        out.append(row)
    return out


def _label(pr):
    return ("total", "total") if pr == "total" else (pr[0] + 1, pr[1] + 1)


def _pick(rm: RateMatrix, pr):
    if pr == "total":
        return rm.total, rm.total_ci_halfwidth
    return float(rm.pairwise[pr]), _ci(rm, *pr)


def _sim_columns(models):
    cols = []
    for mdl in models:
        cols += [f"{mdl}_hz", f"{mdl}_ci"]
    return cols


def _with_speed(sc: Scenario, v: float) -> Scenario:
    return replace(sc, speed=_with_mean(sc.speed, v))


def figure4(sc: Scenario, sim: Optional[SimConfig] = None, speeds=tuple(range(1, 11))):
    """Rates 1-1, 1-2, 2-2 versus mean speed."""
    models = ("straight", "rwp")
    rows = []
    for v in speeds:
        rows += _rate_rows(_with_speed(sc, v), [v], [(0, 0), (0, 1), (1, 1)], sim, models)
    return ["v_mean_mps", "m", "n", "analytic_hz"] + _sim_columns(models), rows


def figure5(sc: Scenario, sim: Optional[SimConfig] = None, speeds=tuple(range(1, 11)), densities=(1.0, 2.0, 4.0)):
    """Total and 1-2 rates versus mean speed for several tier-2 densities."""
    models = ("straight", "rwp")
    rows = []
    for lam in densities:
        s1 = apply_parameter(sc, "tiers[2].density", lam)
        for v in speeds:
            rows += _rate_rows(_with_speed(s1, v), [lam, v], ["total", (0, 1)], sim, models)
    return ["lambda2_per_km2", "v_mean_mps", "m", "n", "analytic_hz"] + _sim_columns(models), rows


def figure6(sc: Scenario, sim: Optional[SimConfig] = None, densities=(1.0, 2.0, 3.0, 4.0, 5.0), alphas=(3.0, 3.5, 4.0)):
    """All pairwise rates versus tier-2 density and path loss exponent."""
    models = ("straight", "rwp")
    rows = []
    for a2 in alphas:
        for lam in densities:
            s1 = apply_parameter(apply_parameter(sc, "tiers[2].alpha", a2), "tiers[2].density", lam)
            rows += _rate_rows(s1, [lam, a2], [(0, 0), (0, 1), (1, 0), (1, 1)], sim, models)
    return ["lambda2_per_km2", "alpha2", "m", "n", "analytic_hz"] + _sim_columns(models), rows


def figure7(
    sc: Scenario,
    sim: Optional[SimConfig] = None,
    densities=(1.0, 2.0, 4.0),
    alphas=(3.5, 4.0),
    speeds=(5.0, 10.0),
):
    """Forward (1-2) against reverse (2-1) rates, RWP simulation."""
    rows = []
    for a2 in alphas:
        for lam in densities:
            for v in speeds:
                s1 = _with_speed(apply_parameter(apply_parameter(sc, "tiers[2].alpha", a2), "tiers[2].density", lam), v)
                an = analytic_rates(s1)
                row = [lam, a2, v, float(an.pairwise[0, 1]), float(an.pairwise[1, 0])]
                if sim is not None:
                    si = simulated_rates(s1, sim, "rwp")
                    row += [float(si.pairwise[0, 1]), _ci(si, 0, 1), float(si.pairwise[1, 0]), _ci(si, 1, 0)]
                else:
                    row += [None] * 4
                rows.append(row)
    cols = ["lambda2_per_km2", "alpha2", "v_mean_mps", "analytic_12_hz", "analytic_21_hz",
            "rwp_12_hz", "rwp_12_ci", "rwp_21_hz", "rwp_21_ci"]
    return cols, rows


def figure8(sc: Scenario, sim: SimConfig, densities=(1.0, 2.0, 4.0), speed: float = 5.0, n_points: int = 101):
    """Residence-time CDFs per tier: exponential law against RWP samples at constant speed."""
    sim = replace(sim, walking_model="rwp", residence_radius=RESIDENCE_FRACTION * sim.boundary_radius)
    rows = []
    for lam in densities:
        s1 = replace(apply_parameter(sc, "tiers[2].density", lam), speed=SpeedModel.constant(speed))
        stats = run_replications(s1.network, sim, s1.speed)
        for m in range(s1.network.n_tiers):
            law = residence_time_distribution(s1.network, m, speed)
            samples = np.sort(residence_samples(stats, m))
            t = np.linspace(0.0, 5.0 * law.mean, n_points) if math.isfinite(law.mean) else np.zeros(1)
            emp = np.searchsorted(samples, t, side="right") / samples.size if samples.size else np.full(t.shape, np.nan)
            for ti, a, e in zip(t, law.cdf(t), emp):
                rows.append([lam, m + 1, float(ti), float(a), float(e), samples.size])
    return ["lambda2_per_km2", "tier", "t_s", "analytic_cdf", "empirical_cdf", "n_samples"], rows


def figure9(sc: Scenario, biases=tuple(np.round(np.linspace(1.0, 2.0, 11), 10))):
    """Analytic rates versus tier-2 bias."""
    rows = []
    for b in biases:
        an = analytic_rates(apply_parameter(sc, "tiers[2].bias", b))
        for pr in [(0, 0), (0, 1), (1, 0), (1, 1), "total"]:
            rows.append([float(b), *_label(pr), _pick(an, pr)[0]])
    return ["bias2", "m", "n", "analytic_hz"], rows


def figure_dataset(fig: int, sc: Scenario, sim: Optional[SimConfig]) -> tuple[list[str], list[list]]:
    if fig not in FIGURE_IDS:
        raise ConfigError(f"unknown figure id {fig}; choose one of {FIGURE_IDS}")
    if sc.network.n_tiers != 2:
        raise ConfigError("figure datasets need a two-tier config")
    if fig == 9:
        return figure9(sc)
    if fig == 8:
        if sim is None:
            raise ConfigError("figure 8 needs simulation settings")
        return figure8(sc, sim)
    return {4: figure4, 5: figure5, 6: figure6, 7: figure7}[fig](sc, sim)
