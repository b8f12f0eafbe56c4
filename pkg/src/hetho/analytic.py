"""Analytic handover rates for N-tier networks with biased max-power association.

The typical UE sits at the origin served by a tier-``m`` station at distance
``R``.  Every tier-``n`` station must then lie beyond the exclusion radius

    b_n(R) = (w_n / w_m)^(1/alpha_n) * R^(alpha_m/alpha_n),    w = P * B,

and the serving distance has density ``2 pi lambda_m R exp(-pi sum_i lambda_i b_i(R)^2)``.
Moving the UE an infinitesimal distance sweeps a "bad region" whose area
grows at a rate that, averaged over the direction to the serving station,
gives the per-speed handover rate

    H^{m-n} / v = 8 lambda_m lambda_n * int_0^inf kappa b_n^2 K(R / (kappa b_n))
                  exp(-pi sum_i lambda_i b_i^2) dR,      kappa = alpha_m / alpha_n,

with the kernel ``K`` defined in :func:`handover_kernel`.  The factor
``kappa`` comes from differentiating ``R^(alpha_m/alpha_n)``; it is 1 for
equal exponents and for ``m == n``, and makes ``H^{m-n} = H^{n-m}`` hold
for arbitrary exponents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .model import (
    ConfigError,
    NetworkConfig,
    SpeedModel,
    UserDensityModel,
    beta_factor,
    range_ratio,
)
from .quadrature import (
    DEFAULT_QUADRATURE,
    QuadratureError,
    QuadratureSpec,
    QuadResult,
    bisect_increasing,
    gauss_kronrod,
    tanh_sinh,
)

ArrayLike = Union[float, np.ndarray]

KERNEL_RTOL = 1e-13


# --------------------------------------------------------------------------
# association geometry


def distance_lower_bound(cfg: NetworkConfig, m: int, n: int, R_mk: ArrayLike) -> ArrayLike:
    """Exclusion radius of tier ``n`` given a tier-``m`` serving distance ``R_mk``."""
    if m == n:
        return R_mk
    tm, tn = cfg.tiers[m], cfg.tiers[n]
    a_n = tn.pathloss_exponent
    return range_ratio(cfg, m, n) * np.power(R_mk, tm.pathloss_exponent / a_n)


def _exposure(cfg: NetworkConfig, m: int, R: ArrayLike) -> ArrayLike:
    """``pi * sum_i lambda_i b_i(R)^2``: expected BS count inside the exclusion zones."""
    total = 0.0
    for i, t in enumerate(cfg.tiers):
        b = distance_lower_bound(cfg, m, i, R)
        total = total + t.density * b * b
    return math.pi * total


def association_distance_pdf(cfg: NetworkConfig, m: int, R_mk: ArrayLike) -> ArrayLike:
    """Density (per meter) of the serving distance jointly with serving tier ``m``.

    Integrates to the association probability of tier ``m``, not to one.
    """
    R = np.asarray(R_mk, dtype=float)
    out = 2.0 * math.pi * cfg.tiers[m].density * R * np.exp(-_exposure(cfg, m, R))
    return out if out.ndim else float(out)


def truncation_radius(cfg: NetworkConfig, m: int, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Serving distance beyond which the association weight is below ``exp(-T)``."""
    scale = 1.0 / math.sqrt(cfg.tiers[m].density)
    return bisect_increasing(lambda R: _exposure(cfg, m, R), quad.outer_truncation_exponent, scale)


def _outer(cfg, m, integrand, quad, points=()):
    """Integrate ``integrand(R)`` over [0, R*] in units of ``1/sqrt(lambda_m)``.

    The absolute tolerance applies to the result, not to the rescaled integral.
    """
    L = 1.0 / math.sqrt(cfg.tiers[m].density)
    upper = truncation_radius(cfg, m, quad) / L
    res = gauss_kronrod(
        lambda u: integrand(u * L),
        0.0,
        upper,
        rtol=quad.relative_tolerance,
        atol=quad.absolute_tolerance / L,
        max_subdivisions=quad.max_subdivisions,
        points=[p / L for p in points],
    )
    return QuadResult(res.value * L, res.error * L, res.intervals, res.converged)


def tier_association_probability(
    cfg: NetworkConfig, m: int, quad: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Probability that the typical UE is served by tier ``m``."""
    return _outer(cfg, m, lambda R: association_distance_pdf(cfg, m, R), quad).value


# --------------------------------------------------------------------------
# inner kernel


def _kernel_theta_integrand(rho: float) -> Callable[[np.ndarray], np.ndarray]:
    # z = min(1, rho) sin(t) removes the inverse-square-root endpoint
    # singularity; radicands are written as sums of non-negative terms.
    if rho <= 1.0:
        r2 = rho * rho
        gap = (1.0 - rho) * (1.0 + rho)

        def g(t):
            c2 = np.cos(t) ** 2
            q = np.sqrt(gap + r2 * c2)
            return q + r2 * c2 / q

    else:
        gap = (rho - 1.0) * (rho + 1.0)

        def g(t):
            c2 = np.cos(t) ** 2
            q = np.sqrt(gap + c2)
            return q + c2 / q

    return g


def _kernel_scalar(rho: float, rtol: float) -> float:
    if not rho > 0 or not math.isfinite(rho):
        raise ValueError(f"kernel argument must be positive and finite, got {rho!r}")
    if rho == 1.0:
        return 2.0
    g = _kernel_theta_integrand(rho)
    try:
        return gauss_kronrod(g, 0.0, 0.5 * math.pi, rtol=rtol, atol=1e-300, max_subdivisions=200).value
    except QuadratureError:
        return kernel_tanh_sinh(rho, rtol=max(rtol, 1e-12)).value


def kernel_tanh_sinh(rho: float, rtol: float = 1e-12) -> QuadResult:
    """Kernel evaluated directly in ``z`` with double-exponential quadrature."""
    b = min(1.0, rho)

    def f(z, _, gap_hi):
        # gap_hi = b - z exactly; it replaces whichever factor vanishes at b
        if rho <= 1.0:
            u = (1.0 - z) * (1.0 + z)
            w = gap_hi * (rho + z)
        else:
            u = gap_hi * (1.0 + z)
            w = (rho - z) * (rho + z)
        return np.sqrt(u / w) + np.sqrt(w / u)

    return tanh_sinh(f, 0.0, b, rtol=rtol, gaps=True)


def handover_kernel(rho: ArrayLike, rtol: float = KERNEL_RTOL) -> ArrayLike:
    """Inner integral ``K(rho) = int_0^min(1,rho) [sqrt((1-z^2)/(rho^2-z^2)) + sqrt((rho^2-z^2)/(1-z^2))] dz``.

    ``rho`` is the serving distance over the exclusion radius.  ``K(1) = 2``,
    ``K(0+) = pi/2``, ``K(rho)/rho -> pi/2`` as ``rho -> inf``, and
    ``K(rho) = rho * K(1/rho)``.
    """
    arr = np.asarray(rho, dtype=float)
    if arr.ndim == 0:
        return _kernel_scalar(float(arr), rtol)
    uniq, inv = np.unique(arr, return_inverse=True)
    vals = np.array([_kernel_scalar(float(r), rtol) for r in uniq])
    return vals[inv].reshape(arr.shape)


# --------------------------------------------------------------------------
# per-speed handover rates


def _exponent_ratio(cfg: NetworkConfig, m: int, n: int) -> float:
    if m == n:
        return 1.0
    return cfg.tiers[m].pathloss_exponent / cfg.tiers[n].pathloss_exponent


def _unit_ratio_radius(cfg: NetworkConfig, m: int, n: int) -> Optional[float]:
    """Serving distance at which the kernel argument crosses 1 (a kink), if any."""
    kappa = _exponent_ratio(cfg, m, n)
    if kappa == 1.0:
        return None
    c = range_ratio(cfg, m, n)
    # R / (kappa c R^kappa) = 1
    return (kappa * c) ** (1.0 / (1.0 - kappa))


def per_speed_integrand(cfg: NetworkConfig, m: int, n: int) -> Callable[[np.ndarray], np.ndarray]:
    """Integrand over the serving distance ``R`` of the per-speed rate (per meter^2)."""
    kappa = _exponent_ratio(cfg, m, n)
    pref = 8.0 * cfg.tiers[m].density * cfg.tiers[n].density * kappa

    def f(R):
        R = np.asarray(R, dtype=float)
        out = np.zeros_like(R)
        pos = R > 0
        Rp = R[pos]
        b = distance_lower_bound(cfg, m, n, Rp)
        out[pos] = pref * b * b * handover_kernel(Rp / (kappa * b)) * np.exp(-_exposure(cfg, m, Rp))
        return out

    return f


def pairwise_rate_per_speed_result(
    cfg: NetworkConfig, m: int, n: int, quad: QuadratureSpec = DEFAULT_QUADRATURE
) -> QuadResult:
    kink = _unit_ratio_radius(cfg, m, n)
    return _outer(cfg, m, per_speed_integrand(cfg, m, n), quad, points=() if kink is None else (kink,))


def pairwise_rate_per_speed(
    cfg: NetworkConfig, m: int, n: int, quad: QuadratureSpec = DEFAULT_QUADRATURE
) -> float:
    """Handover rate from tier ``m`` to tier ``n`` per unit UE speed (per meter).

    Unconditional on the serving tier: the association probability of tier
    ``m`` is already folded in.  Raises :class:`QuadratureError` on
    non-convergence.
    """
    return pairwise_rate_per_speed_result(cfg, m, n, quad).value


# --------------------------------------------------------------------------
# rates in a region


@dataclass
class RateMatrix:
    """Pairwise handover rates (per second) in a region of the configured area.

    ``pairwise[m, n]`` is the rate of handovers from tier ``m`` to tier ``n``;
    ``total`` is their sum, accumulated row-major with exact (fsum) summation.
    """

    pairwise: np.ndarray
    total: float
    provenance: str = "analytic"
    ci_halfwidth: Optional[np.ndarray] = None
    abs_error: Optional[np.ndarray] = None
    events: Optional[np.ndarray] = None
    sim_time: Optional[float] = None
    ci_reliable: Optional[np.ndarray] = None
    total_ci_halfwidth: Optional[float] = None

    @classmethod
    def from_pairwise(cls, pairwise: np.ndarray, **kw) -> "RateMatrix":
        pairwise = np.asarray(pairwise, dtype=float)
        return cls(pairwise, math.fsum(pairwise.ravel(order="C").tolist()), **kw)

    @property
    def n_tiers(self) -> int:
        return self.pairwise.shape[0]


def _users(cfg: NetworkConfig, users: Optional[UserDensityModel]) -> UserDensityModel:
    return UserDensityModel.uniform(cfg.user_density) if users is None else users


def pairwise_handover_rate(
    cfg: NetworkConfig,
    m: int,
    n: int,
    speed: SpeedModel,
    users: Optional[UserDensityModel] = None,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Average rate of tier-``m`` to tier-``n`` handovers in the configured region.

    Uses the speed model and UE density of the departing tier ``m``.
    """
    count = _users(cfg, users).for_tier(m) * cfg.region_area
    mean_v = speed.for_tier(m).mean
    if count == 0 or mean_v == 0:
        return 0.0
    return count * mean_v * pairwise_rate_per_speed(cfg, m, n, quad)


def total_handover_rate(
    cfg: NetworkConfig,
    speed: SpeedModel,
    users: Optional[UserDensityModel] = None,
    quad: QuadratureSpec = DEFAULT_QUADRATURE,
) -> RateMatrix:
    users = _users(cfg, users)
    N = cfg.n_tiers
    pairwise = np.zeros((N, N))
    err = np.zeros((N, N))
    for m in range(N):
        count = users.for_tier(m) * cfg.region_area
        mean_v = speed.for_tier(m).mean
        for n in range(N):
            res = pairwise_rate_per_speed_result(cfg, m, n, quad)
            pairwise[m, n] = count * mean_v * res.value
            err[m, n] = count * mean_v * res.error
    return RateMatrix.from_pairwise(pairwise, provenance="analytic", abs_error=err)


# --------------------------------------------------------------------------
# closed forms


def single_tier_rate(density: float, f_u: float, S: float, mean_speed: float) -> float:
    """Homogeneous-network rate ``(4 sqrt(lambda) / pi) f_u S E[v]``."""
    if density <= 0:
        raise ConfigError("density must be positive")
    return 4.0 * math.sqrt(density) / math.pi * f_u * S * mean_speed


def equal_alpha_pairwise_rate(
    cfg: NetworkConfig,
    m: int,
    n: int,
    speed: SpeedModel,
    users: Optional[UserDensityModel] = None,
) -> float:
    """Pairwise rate with the radial integral done in closed form (equal exponents).

    ``2 lambda_m lambda_n beta_n^2 f_u S E[v] K(1/beta_n) / (pi (sum_i lambda_i beta_i^2)^1.5)``
    """
    betas = [beta_factor(cfg, m, i) for i in range(cfg.n_tiers)]
    spread = math.fsum(t.density * b * b for t, b in zip(cfg.tiers, betas))
    bn = betas[n]
    count = _users(cfg, users).for_tier(m) * cfg.region_area
    lm, ln = cfg.tiers[m].density, cfg.tiers[n].density
    return (
        2.0 * lm * ln * bn * bn * count * speed.for_tier(m).mean
        / (math.pi * spread ** 1.5)
        * handover_kernel(1.0 / bn)
    )


@dataclass(frozen=True)
class ResidenceTime:
    """Exponential residence time in a tier-``m`` cell at constant speed."""

    mean: float

    @property
    def rate(self) -> float:
        return 0.0 if math.isinf(self.mean) else 1.0 / self.mean

    def pdf(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, self.rate * np.exp(-self.rate * t), 0.0)

    def cdf(self, t: ArrayLike) -> ArrayLike:
        t = np.asarray(t, dtype=float)
        return np.where(t >= 0, -np.expm1(-self.rate * t), 0.0)


def tier_handover_rate_per_speed(cfg: NetworkConfig, m: int, quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """``sum_n H^{m-n} / v``: all handovers out of tier ``m`` per unit speed."""
    return math.fsum(pairwise_rate_per_speed(cfg, m, n, quad) for n in range(cfg.n_tiers))


def residence_time_distribution(
    cfg: NetworkConfig, m: int, speed_constant: float, quad: QuadratureSpec = DEFAULT_QUADRATURE
) -> ResidenceTime:
    """Residence time in tier ``m`` for a UE at constant speed.

    The conditional handover rate of a tier-``m`` UE is ``H^m / gamma_m``,
    so the residence time is exponential with mean ``gamma_m / H^m``.
    """
    if not speed_constant > 0:
        raise ValueError("speed must be positive")
    h = speed_constant * tier_handover_rate_per_speed(cfg, m, quad)
    if h == 0:
        return ResidenceTime(math.inf)
    return ResidenceTime(tier_association_probability(cfg, m, quad) / h)
