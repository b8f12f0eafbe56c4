"""Configuration files and tabular outputs.

Config files are JSON with km-based densities and areas::

    {
      "tiers": [{"density_per_km2": 1, "power": 1, "alpha": 3.5, "bias": 1}, ...],
      "user_density_per_km2": 100,
      "region_area_km2": 1,
      "speed": {"kind": "uniform", "mean_mps": 5},
      "propagation": {"L0": 1, "r0": 1}
    }

``speed.kind`` is ``constant``, ``uniform`` or ``table`` (with
``values_mps`` and ``probs``); ``speed.per_tier`` optionally lists one
speed object per tier.  ``user_density_per_tier_per_km2`` optionally gives
per-tier UE densities.  Everything is converted to SI on load.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Any, Iterable, Optional, Sequence, Union

import numpy as np

from .analytic import RateMatrix
from .model import (
    KM2,
    ConfigError,
    NetworkConfig,
    PropagationConstants,
    SpeedModel,
    TierParams,
    UserDensityModel,
    validate_config,
    validate_speed,
    validate_users,
)

DEFAULT_SPEED = SpeedModel.uniform(5.0)
RATE_COLUMNS = ("m", "n", "rate_hz", "ci_halfwidth", "events", "sim_time_s")


@dataclass(frozen=True)
class Scenario:
    """Everything a config file describes."""

    network: NetworkConfig
    speed: SpeedModel = DEFAULT_SPEED
    users: Optional[UserDensityModel] = None


def _num(obj: dict, key: str, default=None) -> float:
    if key not in obj:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key!r} must be a number")
    return float(v)


def _per_km2(v: float) -> float:
    return v / KM2


def _to_km2_units(x: float) -> float:
    """A float ``v`` with ``v / 1e6 == x`` exactly, so files round-trip."""
    v = x * KM2
    if v / KM2 == x:
        return v
    up = down = v
    for _ in range(8):
        up = math.nextafter(up, math.inf)
        down = math.nextafter(down, -math.inf)
        for c in (up, down):
            if c / KM2 == x:
                return c
    return v


def _speed_from_dict(d: Any) -> SpeedModel:
    if not isinstance(d, dict):
        raise ConfigError("speed must be an object")
    kind = d.get("kind", "uniform")
    per_tier = None
    if "per_tier" in d:
        if not isinstance(d["per_tier"], list):
            raise ConfigError("speed.per_tier must be a list")
        per_tier = tuple(_speed_from_dict(s) for s in d["per_tier"])
    if kind == "table":
        vals, probs = d.get("values_mps"), d.get("probs")
        if not isinstance(vals, list) or not isinstance(probs, list):
            raise ConfigError("table speed needs values_mps and probs lists")
        try:
            s = SpeedModel.table([float(v) for v in vals], [float(p) for p in probs])
        except (TypeError, ValueError, ZeroDivisionError):
            raise ConfigError("table speed entries must be numbers") from None
    elif kind in ("constant", "uniform"):
        s = SpeedModel(kind, _num(d, "mean_mps"))
    else:
        raise ConfigError(f"unknown speed kind {kind!r}")
    if per_tier is not None:
        s = SpeedModel(s.kind, s.mean_speed, s.values, s.probs, per_tier)
    return s


def _speed_to_dict(s: SpeedModel) -> dict:
    d: dict[str, Any] = {"kind": s.kind}
    if s.kind == "table":
        d["values_mps"] = list(s.values)
        d["probs"] = list(s.probs)
    else:
        d["mean_mps"] = s.mean_speed
    if s.per_tier is not None:
        d["per_tier"] = [_speed_to_dict(p) for p in s.per_tier]
    return d


def scenario_from_dict(raw: Any) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    tiers_raw = raw.get("tiers")
    if not isinstance(tiers_raw, list) or not tiers_raw:
        raise ConfigError("at least one tier is required")
    tiers = []
    for i, t in enumerate(tiers_raw):
        if not isinstance(t, dict):
            raise ConfigError(f"tier {i + 1} must be an object")
        tiers.append(
            TierParams(
                density=_per_km2(_num(t, "density_per_km2")),
                power=_num(t, "power"),
                pathloss_exponent=_num(t, "alpha"),
                bias=_num(t, "bias", 1.0),
            )
        )
    prop_raw = raw.get("propagation", {})
    if not isinstance(prop_raw, dict):
        raise ConfigError("propagation must be an object")
    wl = prop_raw.get("wavelength_m")
    prop = PropagationConstants(
        reference_loss=_num(prop_raw, "L0", 1.0),
        reference_distance=_num(prop_raw, "r0", 1.0),
        wavelength=None if wl is None else _num(prop_raw, "wavelength_m"),
    )
    cfg = validate_config(
        NetworkConfig(
            tuple(tiers),
            prop,
            user_density=_per_km2(_num(raw, "user_density_per_km2", 0.0)),
            region_area=_num(raw, "region_area_km2", 1.0) * KM2,
        )
    )
    speed = validate_speed(_speed_from_dict(raw["speed"]) if "speed" in raw else DEFAULT_SPEED, cfg.n_tiers)
    users = None
    if "user_density_per_tier_per_km2" in raw:
        vals = raw["user_density_per_tier_per_km2"]
        if not isinstance(vals, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            raise ConfigError("user_density_per_tier_per_km2 must be a list of numbers")
        users = validate_users(UserDensityModel.tiered([_per_km2(float(v)) for v in vals]), cfg.n_tiers)
    return Scenario(cfg, speed, users)


def scenario_to_dict(sc: Scenario) -> dict:
    cfg = sc.network
    d: dict[str, Any] = {
        "tiers": [
            {
                "density_per_km2": _to_km2_units(t.density),
                "power": t.power,
                "alpha": t.pathloss_exponent,
                "bias": t.bias,
            }
            for t in cfg.tiers
        ],
        "user_density_per_km2": _to_km2_units(cfg.user_density),
        "region_area_km2": _region_km2(cfg.region_area),
        "speed": _speed_to_dict(sc.speed),
        "propagation": {"L0": cfg.propagation.reference_loss, "r0": cfg.propagation.reference_distance},
    }
    if cfg.propagation.wavelength is not None:
        d["propagation"]["wavelength_m"] = cfg.propagation.wavelength
    if sc.users is not None and sc.users.per_tier is not None:
        d["user_density_per_tier_per_km2"] = [_to_km2_units(v) for v in sc.users.per_tier]
    return d


def _region_km2(area: float) -> float:
    # inverse of x * 1e6, chosen so that reloading gives the same area
    v = area / KM2
    if v * KM2 == area:
        return v
    up = down = v
    for _ in range(8):
        up = math.nextafter(up, math.inf)
        down = math.nextafter(down, -math.inf)
        for c in (up, down):
            if c * KM2 == area:
                return c
    return v


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read and validate a config file; malformed JSON raises :class:`ConfigError`."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON: {e}") from None
    return scenario_from_dict(raw)


def dump_scenario(sc: Scenario, path: Union[str, Path, None] = None) -> str:
    text = json.dumps(scenario_to_dict(sc), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


# --------------------------------------------------------------------------
# CSV


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return ""
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(rows: Iterable[Sequence], header: Sequence[str], out: Union[str, Path, IO[str], None] = None) -> str:
    """Write ``rows`` under ``header``; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    text = buf.getvalue()
    if out is None:
        return text
    if isinstance(out, (str, Path)):
        Path(out).write_text(text)
    else:
        out.write(text)
    return text


def rate_matrix_rows(rm: RateMatrix) -> list[list]:
    """Rows for :data:`RATE_COLUMNS`; tiers are 1-based and the last row is the total."""
    N = rm.n_tiers
    rows = []
    for m in range(N):
        for n in range(N):
            rows.append(
                [
                    m + 1,
                    n + 1,
                    float(rm.pairwise[m, n]),
                    None if rm.ci_halfwidth is None else float(rm.ci_halfwidth[m, n]),
                    None if rm.events is None else int(rm.events[m, n]),
                    rm.sim_time,
                ]
            )
    rows.append(
        [
            "total",
            "total",
            rm.total,
            rm.total_ci_halfwidth,
            None if rm.events is None else int(np.sum(rm.events)),
            rm.sim_time,
        ]
    )
    return rows


def write_rate_matrix(rm: RateMatrix, out=None) -> str:
    return write_csv(rate_matrix_rows(rm), RATE_COLUMNS, out)


def read_csv(path: Union[str, Path]) -> list[dict[str, str]]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))
