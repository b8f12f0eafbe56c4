"""Domain types for N-tier heterogeneous cellular networks.

All quantities are stored in SI units (meters, seconds, per-square-meter
densities).  Powers and biases are dimensionless relative values; only the
products ``power * bias`` of two tiers are ever compared.

Tier indices in the Python API are 0-based; the CLI and the file formats
use 1-based indices.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

KM2 = 1.0e6  # m^2 per km^2


class ConfigError(ValueError):
    """Raised when a configuration violates a model invariant."""


def _finite_positive(value: float, what: str) -> None:
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value)):
        raise ConfigError(f"{what} must be a finite number, got {value!r}")
    if value <= 0:
        raise ConfigError(f"{what} must be positive")


@dataclass(frozen=True)
class TierParams:
    """One tier of base stations.

    Parameters
    ----------
    density : float
        BS density in stations per m^2.
    power : float
        Relative transmit power.
    pathloss_exponent : float
        Path loss exponent, must exceed 2.
    bias : float
        Association bias factor.
    """

    density: float
    power: float
    pathloss_exponent: float
    bias: float = 1.0

    @property
    def weight(self) -> float:
        """Biased power ``P * B``; the only per-tier power quantity that matters."""
        return self.power * self.bias


@dataclass(frozen=True)
class PropagationConstants:
    # reference_loss and reference_distance cancel from every association
    # comparison; wavelength is informational only.
    reference_loss: float = 1.0
    reference_distance: float = 1.0
    wavelength: Optional[float] = None


@dataclass(frozen=True)
class NetworkConfig:
    tiers: tuple[TierParams, ...]
    propagation: PropagationConstants = field(default_factory=PropagationConstants)
    user_density: float = 0.0
    region_area: float = KM2

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))

    @property
    def n_tiers(self) -> int:
        return len(self.tiers)

    @property
    def densities(self) -> np.ndarray:
        return np.array([t.density for t in self.tiers])

    @property
    def weights(self) -> np.ndarray:
        return np.array([t.weight for t in self.tiers])

    def link_weight(self, i: int) -> float:
        """Biased received power at unit distance (1 m) from a tier-``i`` station.

        ``L_0`` is left out because it cancels exactly from every comparison;
        ``r_0`` only cancels between tiers with equal path loss exponents.
        """
        t = self.tiers[i]
        r0 = self.propagation.reference_distance
        return t.weight if r0 == 1.0 else t.weight * r0**t.pathloss_exponent

    @property
    def link_weights(self) -> np.ndarray:
        return np.array([self.link_weight(i) for i in range(self.n_tiers)])

    @property
    def exponents(self) -> np.ndarray:
        return np.array([t.pathloss_exponent for t in self.tiers])

    @property
    def equal_exponents(self) -> bool:
        a = self.exponents
        return bool(np.all(a == a[0]))

    @property
    def users_in_region(self) -> float:
        return self.user_density * self.region_area

    def with_tier(self, index: int, **changes) -> "NetworkConfig":
        tiers = list(self.tiers)
        tiers[index] = replace(tiers[index], **changes)
        return replace(self, tiers=tuple(tiers))


@dataclass(frozen=True)
class SpeedModel:
    """Distribution of the instantaneous UE speed.

    ``kind`` is one of ``"constant"`` (always ``mean``), ``"uniform"``
    (uniform on ``[0, 2*mean]``) or ``"table"`` (discrete speeds ``values``
    with probabilities ``probs``).  ``per_tier`` optionally overrides the
    model for UEs served by each tier.
    """

    kind: str = "uniform"
    mean_speed: float = 1.0
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    per_tier: Optional[tuple["SpeedModel", ...]] = None

    @classmethod
    def constant(cls, v: float) -> "SpeedModel":
        return cls("constant", float(v))

    @classmethod
    def uniform(cls, mean: float) -> "SpeedModel":
        return cls("uniform", float(mean))

    @classmethod
    def table(cls, values: Sequence[float], probs: Sequence[float]) -> "SpeedModel":
        values = tuple(float(v) for v in values)
        probs = tuple(float(p) for p in probs)
        mean = math.fsum(v * p for v, p in zip(values, probs)) / math.fsum(probs) if probs else 0.0
        return cls("table", mean, values, probs)

    @property
    def mean(self) -> float:
        return self.mean_speed

    def for_tier(self, m: int) -> "SpeedModel":
        if self.per_tier is None:
            return self
        return self.per_tier[m]

    def scaled(self, c: float) -> "SpeedModel":
        per_tier = None if self.per_tier is None else tuple(s.scaled(c) for s in self.per_tier)
        return replace(
            self,
            mean_speed=self.mean_speed * c,
            values=tuple(v * c for v in self.values),
            per_tier=per_tier,
        )

    def sample_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Map U(0,1) draws to speeds by inverse CDF."""
        u = np.asarray(u, dtype=float)
        if self.kind == "constant":
            return np.full(u.shape, self.mean_speed)
        if self.kind == "uniform":
            return 2.0 * self.mean_speed * u
        cdf = np.cumsum(self.probs) / math.fsum(self.probs)
        idx = np.searchsorted(cdf, u, side="right")
        return np.asarray(self.values)[np.minimum(idx, len(self.values) - 1)]

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        return self.sample_from_uniforms(rng.random(size))


@dataclass(frozen=True)
class UserDensityModel:
    """UE density: one value everywhere, or one value per serving tier."""

    density: Optional[float] = None
    per_tier: Optional[tuple[float, ...]] = None

    @classmethod
    def uniform(cls, f_u: float) -> "UserDensityModel":
        return cls(density=float(f_u))

    @classmethod
    def tiered(cls, densities: Sequence[float]) -> "UserDensityModel":
        return cls(per_tier=tuple(float(d) for d in densities))

    def for_tier(self, m: int) -> float:
        if self.per_tier is not None:
            return self.per_tier[m]
        return self.density


def validate_tier(t: TierParams, label: str = "tier") -> None:
    _finite_positive(t.density, f"{label} density")
    _finite_positive(t.power, f"{label} power")
    if not math.isfinite(t.bias) or t.bias <= 0:
        raise ConfigError(f"{label} bias must be positive")
    if not math.isfinite(t.pathloss_exponent) or t.pathloss_exponent <= 2:
        raise ConfigError(f"{label} pathloss exponent must exceed 2")


def validate_config(raw: NetworkConfig) -> NetworkConfig:
    """Check every invariant of ``raw`` and return it with floats normalized.

    Raises
    ------
    ConfigError
        On an empty tier list, a path loss exponent not above 2, or a
        non-positive density, power or bias.
    """
    if not raw.tiers:
        raise ConfigError("at least one tier is required")
    tiers = []
    for i, t in enumerate(raw.tiers):
        validate_tier(t, f"tier {i + 1}")
        tiers.append(TierParams(float(t.density), float(t.power), float(t.pathloss_exponent), float(t.bias)))
    p = raw.propagation
    _finite_positive(p.reference_loss, "reference loss")
    _finite_positive(p.reference_distance, "reference distance")
    if p.wavelength is not None:
        _finite_positive(p.wavelength, "wavelength")
    if not math.isfinite(raw.user_density) or raw.user_density < 0:
        raise ConfigError("user density must be non-negative")
    _finite_positive(raw.region_area, "region area")
    return NetworkConfig(tuple(tiers), p, float(raw.user_density), float(raw.region_area))


def validate_speed(speed: SpeedModel, n_tiers: Optional[int] = None) -> SpeedModel:
    if speed.kind not in ("constant", "uniform", "table"):
        raise ConfigError(f"unknown speed kind {speed.kind!r}")
    if not math.isfinite(speed.mean_speed) or speed.mean_speed < 0:
        raise ConfigError("mean speed must be finite and non-negative")
    if speed.kind == "table":
        if not speed.values or len(speed.values) != len(speed.probs):
            raise ConfigError("speed table needs matching values and probabilities")
        if min(speed.values) < 0 or min(speed.probs) < 0 or math.fsum(speed.probs) <= 0:
            raise ConfigError("speed table entries must be non-negative")
    if speed.per_tier is not None:
        if n_tiers is not None and len(speed.per_tier) != n_tiers:
            raise ConfigError("per-tier speed models must match the number of tiers")
        for s in speed.per_tier:
            validate_speed(s)
    return speed


def validate_users(users: UserDensityModel, n_tiers: Optional[int] = None) -> UserDensityModel:
    vals = list(users.per_tier) if users.per_tier is not None else [users.density]
    if users.per_tier is not None and n_tiers is not None and len(vals) != n_tiers:
        raise ConfigError("per-tier user densities must match the number of tiers")
    for v in vals:
        if v is None or not math.isfinite(v) or v < 0:
            raise ConfigError("user densities must be non-negative")
    return users


def range_ratio(cfg: NetworkConfig, m: int, n: int) -> float:
    """``(w_n / w_m)^(1/alpha_n)`` with ``w`` the unit-distance biased received power."""
    if m == n:
        return 1.0
    return (cfg.link_weight(n) / cfg.link_weight(m)) ** (1.0 / cfg.tiers[n].pathloss_exponent)


def beta_factor(cfg: NetworkConfig, m: int, n: int) -> float:
    """Equal-exponent range ratio ``(P_n B_n / P_m B_m)^(1/alpha)``."""
    if not cfg.equal_exponents:
        raise ConfigError("beta factor requires all tiers to share one pathloss exponent")
    if m == n:
        return 1.0
    tm, tn = cfg.tiers[m], cfg.tiers[n]
    return (tn.weight / tm.weight) ** (1.0 / tn.pathloss_exponent)


def macro_pico_config(
    density2_per_km2: float = 2.0,
    alpha2: float = 3.5,
    bias2: float = 1.0,
) -> NetworkConfig:
    """Two-tier macro/pico operating point used throughout the validation runs.

    f_u = 100/km^2, S = 1 km^2, P = (1, 0.2), alpha_1 = 3.5, lambda_1 = 1/km^2.
    """
    return NetworkConfig(
        tiers=(
            TierParams(1.0 / KM2, 1.0, 3.5, 1.0),
            TierParams(density2_per_km2 / KM2, 0.2, alpha2, bias2),
        ),
        user_density=100.0 / KM2,
        region_area=1.0 * KM2,
    )
