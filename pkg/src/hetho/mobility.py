"""Monte-Carlo handover simulation on Poisson base-station deployments.

Each replication draws one deployment per tier in a disk, scatters UEs at
density ``f_u`` inside a reflecting motion boundary, moves them with a
memoryless walking model, keeps every UE attached to its strongest station
(maximum biased received power) and records

* handovers, by (departing tier, arriving tier), detected at the end of the
  time step in which the serving station changes and attributed to the
  counting region when the UE is inside it at that step;
* the UE-time spent inside the counting region, which normalizes the rate;
* completed residence intervals (time between two consecutive serving
  changes), tagged with the tier of the station served in between.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats as sps
from scipy.spatial import cKDTree

from . import rng as rngmod
from .analytic import RateMatrix
from .model import KM2, ConfigError, NetworkConfig, SpeedModel
from .scan import BACKEND, ScanInput, scan

WALKING_MODELS = ("straight", "rwp")


@dataclass(frozen=True, eq=False)
class BsField:
    """One realized deployment: per-tier ``(k, 2)`` position arrays in a disk."""

    positions: tuple[np.ndarray, ...]
    disk_radius: float
    config: NetworkConfig

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.positions)

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Tier-major concatenation: ``(xy, tier, index_within_tier)``."""
        xy = np.concatenate([p.reshape(-1, 2) for p in self.positions], axis=0) if self.positions else np.zeros((0, 2))
        tier = np.concatenate([np.full(len(p), i, dtype=np.int32) for i, p in enumerate(self.positions)])
        local = np.concatenate([np.arange(len(p), dtype=np.int64) for p in self.positions])
        return xy, tier, local


@dataclass
class UeState:
    position: np.ndarray
    speed: float
    heading: float
    heading_hold_remaining: float
    serving: Optional[tuple[int, int]] = None


@dataclass(frozen=True)
class SimConfig:
    """Simulation protocol.

    ``time_step=None`` selects :func:`default_time_step`.  The counting
    region is the disk of radius ``count_radius`` at the origin; residence
    intervals are kept if they start inside ``residence_radius`` (defaults
    to ``count_radius``) no later than ``duration - residence_guard``
    (the guard defaults to half the duration), so long intervals are not
    cut off by the end of the run.
    """

    disk_radius: float = 10_000.0
    count_radius: float = math.sqrt(KM2 / math.pi)
    duration: float = 1.0e4
    time_step: Optional[float] = None
    walking_model: str = "straight"
    replications: int = 8
    base_seed: int = 0
    boundary_fraction: float = 0.9
    rwp_hold_max: float = 100.0
    rwp_redraw_speed: bool = True
    refresh_distance: float = 100.0
    residence_radius: Optional[float] = None
    residence_guard: Optional[float] = None

    @property
    def boundary_radius(self) -> float:
        return self.boundary_fraction * self.disk_radius

    def with_time_step(self, cfg: NetworkConfig, speed: SpeedModel) -> "SimConfig":
        if self.time_step is not None:
            return self
        return replace(self, time_step=default_time_step(cfg, speed, self.duration))

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.time_step))


def validate_sim(sim: SimConfig) -> SimConfig:
    if not (math.isfinite(sim.duration) and sim.duration > 0):
        raise ConfigError("duration must be positive")
    if sim.time_step is not None:
        if not (math.isfinite(sim.time_step) and sim.time_step > 0):
            raise ConfigError("time step must be positive")
        n = sim.duration / sim.time_step
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise ConfigError("duration must be a multiple of the time step")
    if sim.walking_model not in WALKING_MODELS:
        raise ConfigError(f"walking model must be one of {WALKING_MODELS}")
    if sim.replications < 1:
        raise ConfigError("replications must be at least 1")
    if not 0 < sim.boundary_fraction <= 1:
        raise ConfigError("boundary fraction must be in (0, 1]")
    if not 0 < sim.count_radius <= sim.boundary_radius:
        raise ConfigError("counting region must lie inside the motion boundary")
    if sim.residence_radius is not None and not 0 < sim.residence_radius <= sim.boundary_radius:
        raise ConfigError("residence region must lie inside the motion boundary")
    if sim.rwp_hold_max <= 0 or sim.refresh_distance <= 0:
        raise ConfigError("hold time and refresh distance must be positive")
    rngmod.check_seed(sim.base_seed)
    return sim


def default_time_step(cfg: NetworkConfig, speed: SpeedModel, duration: float) -> float:
    """Largest step dividing ``duration`` with top-speed displacement <= 1% of the
    mean nearest-station distance ``1 / (2 sqrt(lambda_total))``.

    The top speed is ``2 E[v]`` for the uniform model, the largest table value
    for tables, and ``E[v]`` for constant speed.
    """
    lam = float(np.sum(cfg.densities))
    vmax = _max_speed(speed)
    if vmax <= 0:
        return duration / max(1, int(math.ceil(duration)))
    dt = 0.01 / (2.0 * math.sqrt(lam)) / vmax
    return duration / math.ceil(duration / dt)


def _max_speed(speed: SpeedModel) -> float:
    if speed.kind == "uniform":
        return 2.0 * speed.mean
    if speed.kind == "table":
        return max(speed.values)
    return speed.mean


# --------------------------------------------------------------------------
# deployments and association


def sample_ppp(density: float, disk_radius: float, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous Poisson points in the disk of radius ``disk_radius``, as ``(k, 2)``."""
    if density < 0:
        raise ValueError("density must be non-negative")
    k = int(rng.poisson(density * math.pi * disk_radius * disk_radius))
    u = rng.random((2, k))
    r = disk_radius * np.sqrt(u[0])
    th = 2.0 * math.pi * u[1]
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def sample_field(cfg: NetworkConfig, disk_radius: float, base_seed: int, replication: int) -> BsField:
    pts = tuple(
        sample_ppp(t.density, disk_radius, rngmod.stream(base_seed, replication, rngmod.FIELD, i))
        for i, t in enumerate(cfg.tiers)
    )
    return BsField(pts, disk_radius, cfg)


def _log_weights(cfg: NetworkConfig) -> np.ndarray:
    return np.log(cfg.link_weights)


def _scores(cfg: NetworkConfig, tier: np.ndarray, d2: np.ndarray) -> np.ndarray:
    lw = _log_weights(cfg)[tier]
    ha = 0.5 * cfg.exponents[tier]
    with np.errstate(divide="ignore"):
        return lw - ha * np.log(d2)


def strongest_bs(field: BsField, position) -> tuple[int, int]:
    """Tier and within-tier index of the station with the largest biased received power.

    Exhaustive search.  A UE standing on a station is served by it; exact
    ties go to the lowest tier, then the lowest index.
    """
    xy, tier, local = field.stacked()
    if xy.shape[0] == 0:
        raise ValueError("deployment has no stations")
    p = np.asarray(position, dtype=float)
    d2 = np.sum((xy - p) ** 2, axis=1)
    j = int(np.argmax(_scores(field.config, tier, d2)))
    return int(tier[j]), int(local[j])


def associate(field: BsField, points: np.ndarray) -> np.ndarray:
    """Global (tier-major) index of the strongest station for each of ``points``."""
    xy, tier, _ = field.stacked()
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    best = np.full(points.shape[0], -1, dtype=np.int64)
    best_sc = np.full(points.shape[0], -np.inf)
    start = 0
    for i, p in enumerate(field.positions):
        if len(p):
            d, j = cKDTree(p).query(points)
            sc = _scores(field.config, np.full(points.shape[0], i), d * d)
            win = sc > best_sc
            best[win] = start + j[win]
            best_sc[win] = sc[win]
        start += len(p)
    return best


# --------------------------------------------------------------------------
# motion


def reflect(prev: np.ndarray, pos: np.ndarray, heading_cs: np.ndarray, step: float, radius: float):
    """Specular reflection of a step that left the disk of ``radius``.

    Returns the new position and direction cosines.  Same arithmetic as the
    scan kernels.
    """
    px, py = prev
    c, s = heading_cs
    dx, dy = pos[0] - px, pos[1] - py
    a = dx * dx + dy * dy
    b = px * dx + py * dy
    cc = px * px + py * py - radius * radius
    t = (-b + math.sqrt(b * b - a * cc)) / a
    hx, hy = px + t * dx, py + t * dy
    nx, ny = hx / radius, hy / radius
    dot = c * nx + s * ny
    c, s = c - 2.0 * dot * nx, s - 2.0 * dot * ny
    left = (1.0 - t) * step
    return np.array([hx + left * c, hy + left * s]), np.array([c, s])


def step_ue(
    state: UeState,
    model: str,
    time_step: float,
    rng: np.random.Generator,
    speed_model: Optional[SpeedModel] = None,
    boundary_radius: float = math.inf,
    hold_max: float = 100.0,
) -> UeState:
    """Advance one UE by one time step.

    Under ``"rwp"`` the hold timer is decremented and, once it runs out, a
    new heading (uniform on [0, 2 pi)) and hold duration (uniform on
    [0, ``hold_max``]) are drawn, plus a new speed when ``speed_model`` is
    given.  ``"straight"`` never changes heading except by reflection.
    """
    if model not in WALKING_MODELS:
        raise ValueError(f"unknown walking model {model!r}")
    heading, hold, speed = state.heading, state.heading_hold_remaining, state.speed
    if model == "rwp" and hold <= 0:
        heading = 2.0 * math.pi * rng.random()
        hold += hold_max * rng.random()
        if speed_model is not None:
            speed = float(speed_model.sample(rng))
    cs = np.array([math.cos(heading), math.sin(heading)])
    prev = np.asarray(state.position, dtype=float)
    pos = prev + speed * cs * time_step
    if pos @ pos > boundary_radius * boundary_radius:
        pos, cs = reflect(prev, pos, cs, speed * time_step, boundary_radius)
        heading = math.atan2(cs[1], cs[0])
    if model == "rwp":
        hold -= time_step
    return UeState(pos, speed, heading, hold, state.serving)


def motion_legs(
    sim: SimConfig, speed: SpeedModel, n_steps: int, rng: np.random.Generator, batch: int = 64
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Heading/speed legs of one UE covering ``n_steps`` steps.

    Returns ``(steps, heading, speed)``.  RWP hold times are rounded to whole
    steps (at least one).
    """
    if sim.walking_model == "straight":
        u = rng.random(2)
        return (
            np.array([n_steps], dtype=np.int64),
            np.array([2.0 * math.pi * u[0]]),
            speed.sample_from_uniforms(u[1:]),
        )
    steps, heads, speeds = [], [], []
    total = 0
    v0 = None
    while total < n_steps:
        u = rng.random((3, batch))
        s = np.maximum(1, np.rint(sim.rwp_hold_max * u[1] / sim.time_step)).astype(np.int64)
        v = speed.sample_from_uniforms(u[2])
        if not sim.rwp_redraw_speed:
            v0 = v[0] if v0 is None else v0
            v = np.full(batch, v0)
        steps.append(s)
        heads.append(2.0 * math.pi * u[0])
        speeds.append(v)
        total += int(s.sum())
    steps = np.concatenate(steps)
    keep = int(np.searchsorted(np.cumsum(steps), n_steps)) + 1
    return steps[:keep], np.concatenate(heads)[:keep], np.concatenate(speeds)[:keep]


# --------------------------------------------------------------------------
# replications


@dataclass
class HandoverStats:
    counts: np.ndarray
    ue_time_in_region: float
    residence_samples: tuple[np.ndarray, ...]
    replication: int
    seed: int
    config_hash: str
    n_ues: int = 0
    n_stations: tuple[int, ...] = ()
    backend: str = BACKEND
    final_positions: Optional[np.ndarray] = field(default=None, repr=False)
    final_serving: Optional[np.ndarray] = field(default=None, repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "replication": self.replication,
                "seed": self.seed,
                "config_hash": self.config_hash,
                "backend": self.backend,
                "n_ues": self.n_ues,
                "n_stations": list(self.n_stations),
                "counts": self.counts.tolist(),
                "ue_time_in_region_s": self.ue_time_in_region,
                "residence_samples_s": [r.tolist() for r in self.residence_samples],
            }
        )


def config_hash(cfg: NetworkConfig, sim: SimConfig, speed: SpeedModel) -> str:
    blob = json.dumps([asdict(cfg), asdict(sim), asdict(speed)], sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _check_simulable(cfg: NetworkConfig, speed: SpeedModel) -> None:
    if speed.per_tier is not None:
        raise ConfigError("the simulator supports one speed model for all UEs")


def build_scan_input(
    cfg: NetworkConfig,
    sim: SimConfig,
    speed: SpeedModel,
    replication: int,
    field: Optional[BsField] = None,
) -> tuple[ScanInput, BsField]:
    sim = sim.with_time_step(cfg, speed)
    if field is None:
        field = sample_field(cfg, sim.disk_radius, sim.base_seed, replication)
    xy, tier, _ = field.stacked()
    Rb = sim.boundary_radius
    n_steps = sim.n_steps
    if xy.shape[0] == 0:
        ue = np.zeros((0, 2))
    else:
        urng = rngmod.stream(sim.base_seed, replication, rngmod.USERS)
        ue = sample_ppp(cfg.user_density, Rb, urng)
    U = ue.shape[0]
    steps, heads, speeds = [], [], []
    ptr = np.zeros(U + 1, dtype=np.int64)
    for u in range(U):
        s, h, v = motion_legs(sim, speed, n_steps, rngmod.stream(sim.base_seed, replication, rngmod.MOTION, u))
        steps.append(s)
        heads.append(h)
        speeds.append(v)
        ptr[u + 1] = ptr[u] + s.size
    heads_all = np.concatenate(heads) if U else np.zeros(0)
    speeds_all = np.concatenate(speeds) if U else np.zeros(0)
    vmax = float(speeds_all.max()) if U else 0.0
    guard = sim.duration / 2.0 if sim.residence_guard is None else sim.residence_guard
    inp = ScanInput(
        bs_x=xy[:, 0],
        bs_y=xy[:, 1],
        bs_tier=tier,
        tier_logw=_log_weights(cfg),
        tier_alpha=cfg.exponents,
        ue_x=ue[:, 0],
        ue_y=ue[:, 1],
        serving=associate(field, ue) if U else np.zeros(0, dtype=np.int32),
        leg_ptr=ptr,
        leg_steps=np.concatenate(steps) if U else np.zeros(0, dtype=np.int64),
        leg_cos=np.cos(heads_all),
        leg_sin=np.sin(heads_all),
        leg_speed=speeds_all,
        n_steps=n_steps,
        dt=sim.time_step,
        boundary_radius=Rb,
        count_radius=sim.count_radius,
        residence_radius=sim.count_radius if sim.residence_radius is None else sim.residence_radius,
        residence_cutoff=sim.duration - guard,
        refresh_distance=max(sim.refresh_distance, 2.0 * vmax * sim.time_step),
    )
    return inp, field


def run_replication(
    cfg: NetworkConfig,
    sim: SimConfig,
    speed: SpeedModel,
    replication: int = 0,
    field: Optional[BsField] = None,
    backend: Optional[str] = None,
) -> HandoverStats:
    """Simulate one deployment and return its handover statistics.

    All randomness comes from streams keyed by ``(sim.base_seed,
    replication)``; ``field`` overrides the sampled deployment.
    """
    validate_sim(sim)
    _check_simulable(cfg, speed)
    sim = sim.with_time_step(cfg, speed)
    inp, field = build_scan_input(cfg, sim, speed, replication, field)
    N = cfg.n_tiers
    if inp.ue_x.size == 0:
        out_counts = np.zeros((N, N), dtype=np.int64)
        return HandoverStats(
            out_counts, 0.0, tuple(np.zeros(0) for _ in range(N)), replication, sim.base_seed,
            config_hash(cfg, sim, speed), 0, field.counts, BACKEND if backend is None else backend,
        )
    out = scan(inp, backend)
    res = tuple(out.residence_time[out.residence_tier == m] for m in range(N))
    return HandoverStats(
        counts=out.counts,
        ue_time_in_region=out.in_region_steps * sim.time_step,
        residence_samples=res,
        replication=replication,
        seed=sim.base_seed,
        config_hash=config_hash(cfg, sim, speed),
        n_ues=int(inp.ue_x.size),
        n_stations=field.counts,
        backend=BACKEND if backend is None else backend,
        final_positions=np.column_stack([out.final_x, out.final_y]),
        final_serving=out.final_serving,
    )


def _replication_job(args):
    cfg, sim, speed, rep, backend = args
    st = run_replication(cfg, sim, speed, rep, backend=backend)
    st.final_positions = None
    st.final_serving = None
    return st


def worker_count(jobs: int) -> int:
    raw = os.environ.get("HETHO_THREADS")
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError("HETHO_THREADS must be a positive integer") from None
        if cap < 1:
            raise ConfigError("HETHO_THREADS must be a positive integer")
    return max(1, min(cap, jobs))


def run_replications(
    cfg: NetworkConfig,
    sim: SimConfig,
    speed: SpeedModel,
    backend: Optional[str] = None,
    workers: Optional[int] = None,
) -> list[HandoverStats]:
    """All replications of ``sim``, in parallel processes, ordered by replication index."""
    validate_sim(sim)
    _check_simulable(cfg, speed)
    sim = sim.with_time_step(cfg, speed)
    jobs = [(cfg, sim, speed, r, backend) for r in range(sim.replications)]
    n = worker_count(len(jobs)) if workers is None else workers
    if n == 1:
        return [_replication_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_replication_job, jobs))


# --------------------------------------------------------------------------
# estimation


ZERO_EVENT_UPPER = -math.log(0.05)  # one-sided 95% Poisson bound on the mean with no events


def estimate_rate_matrix(stats: Sequence[HandoverStats], cfg: NetworkConfig, confidence: float = 0.95) -> RateMatrix:
    """Pooled handover rates in the configured region with a confidence interval.

    The point estimate is total events over total UE-time in the counting
    region, times ``f_u S``.  The half-width is the Student-t interval of the
    per-replication rates.  Pairs without events get the zero-event Poisson
    bound as half-width and are flagged unreliable, as are all pairs when
    fewer than two replications are available.
    """
    N = cfg.n_tiers
    if not stats:
        raise ValueError("no replications to aggregate")
    counts = np.sum([s.counts for s in stats], axis=0).astype(np.int64)
    times = np.array([s.ue_time_in_region for s in stats])
    T = float(times.sum())
    scale = cfg.users_in_region
    if T <= 0 or scale == 0:
        z = np.zeros((N, N))
        return RateMatrix.from_pairwise(
            z, provenance="simulated", ci_halfwidth=z.copy(), events=counts, sim_time=T,
            ci_reliable=np.zeros((N, N), dtype=bool), total_ci_halfwidth=0.0,
        )
    pairwise = counts / T * scale
    R = len(stats)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_rep = np.array([s.counts / t * scale if t > 0 else np.full((N, N), np.nan) for s, t in zip(stats, times)])
        totals = per_rep.sum(axis=(1, 2))
    ok = np.isfinite(totals)
    R_ok = int(ok.sum())
    if R_ok >= 2:
        q = float(sps.t.ppf(0.5 + 0.5 * confidence, R_ok - 1))
        half = q * per_rep[ok].std(axis=0, ddof=1) / math.sqrt(R_ok)
        total_half = q * float(totals[ok].std(ddof=1)) / math.sqrt(R_ok)
    else:
        half = np.full((N, N), np.inf)
        total_half = math.inf
    reliable = (counts > 0) & (R_ok >= 2)
    zero_bound = ZERO_EVENT_UPPER / T * scale
    half = np.where(counts == 0, zero_bound, half)
    return RateMatrix.from_pairwise(
        pairwise,
        provenance="simulated",
        ci_halfwidth=half,
        events=counts,
        sim_time=T,
        ci_reliable=reliable,
        total_ci_halfwidth=total_half,
    )


def residence_samples(stats: Sequence[HandoverStats], m: int) -> np.ndarray:
    return np.concatenate([s.residence_samples[m] for s in stats]) if stats else np.zeros(0)
