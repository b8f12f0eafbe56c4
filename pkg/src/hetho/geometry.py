"""Bad-region geometry for a UE displaced from the origin.

The UE starts at the origin, served by a tier-``m`` station at polar
coordinates ``(R_mk, theta_mk)``, and moves to ``(r, 0)``.  A tier-``n``
station at ``(R_nj, theta_nj)`` takes over iff it lies in the *bad region*

    cos(theta_nj) > (R_nj^2 + x_nj) / (2 r R_nj)   and   R_nj > b_n,

which is the disk of radius ``sqrt(r^2 - x_nj)`` around the new position
minus the exclusion disk of radius ``b_n`` around the origin.  These
routines compute the region, its area at finite ``r`` and the limit of the
area growth rate as ``r -> 0``; the latter drives the analytic rates and is
cross-checked here against finite differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .analytic import (
    _exponent_ratio,
    _exposure,
    association_distance_pdf,
    distance_lower_bound,
    truncation_radius,
)
from .model import NetworkConfig, range_ratio
from .quadrature import DEFAULT_QUADRATURE, QuadratureSpec, QuadResult, gauss_kronrod


@dataclass(frozen=True)
class ServingGeometry:
    serving_distance: float
    serving_angle: float
    displacement: float
    m: int
    n: int

    def __post_init__(self):
        if self.displacement < 0:
            raise ValueError("displacement must be non-negative")
        if self.serving_distance <= 0:
            raise ValueError("serving distance must be positive")

    def at(self, r: float) -> "ServingGeometry":
        return ServingGeometry(self.serving_distance, self.serving_angle, r, self.m, self.n)

    def to_pair(self, n: int) -> "ServingGeometry":
        return ServingGeometry(self.serving_distance, self.serving_angle, self.displacement, self.m, n)


def lower_bound(g: ServingGeometry, cfg: NetworkConfig) -> float:
    return float(distance_lower_bound(cfg, g.m, g.n, g.serving_distance))


def x_offset(g: ServingGeometry, cfg: NetworkConfig) -> float:
    """``r^2 - rho(r)^2`` where ``rho(r)`` is the takeover radius around the new position."""
    tm, tn = cfg.tiers[g.m], cfg.tiers[g.n]
    R, th, r = g.serving_distance, g.serving_angle, g.displacement
    d2 = R * R - 2.0 * r * R * math.cos(th) + r * r
    if g.m == g.n:
        return r * r - d2
    a_n = tn.pathloss_exponent
    return r * r - range_ratio(cfg, g.m, g.n) ** 2 * d2 ** (tm.pathloss_exponent / a_n)


def x_offset_slope(g: ServingGeometry, cfg: NetworkConfig) -> float:
    """``d x_nj / d r`` at ``r = 0``: ``2 kappa b^2 cos(theta) / R``."""
    b = lower_bound(g, cfg)
    kappa = _exponent_ratio(cfg, g.m, g.n)
    return 2.0 * kappa * b * b * math.cos(g.serving_angle) / g.serving_distance


def phi_up(g: ServingGeometry, cfg: NetworkConfig) -> float:
    """Outer radius ``r + sqrt(r^2 - x)`` of the bad region."""
    r = g.displacement
    return r + math.sqrt(r * r - x_offset(g, cfg))


def phi_down(g: ServingGeometry, cfg: NetworkConfig) -> float:
    """Radius ``-r + sqrt(r^2 - x)`` inside which the whole circle is bad."""
    r = g.displacement
    return -r + math.sqrt(r * r - x_offset(g, cfg))


def _cos_threshold(R_nj, g: ServingGeometry, x: float):
    return (R_nj * R_nj + x) / (2.0 * g.displacement * R_nj)


def angular_width(R_nj, g: ServingGeometry, cfg: NetworkConfig, x: Optional[float] = None):
    """Angle subtended by the bad region on the circle of radius ``R_nj`` (0 to 2 pi)."""
    if x is None:
        x = x_offset(g, cfg)
    c = np.clip(_cos_threshold(np.asarray(R_nj, dtype=float), g, x), -1.0, 1.0)
    return 2.0 * np.arccos(c)


def arc_integrand(R_nj, g: ServingGeometry, cfg: NetworkConfig):
    """``f(r, R) = 2 R arccos((x + R^2) / (2 r R))`` (clipped to the valid range)."""
    return np.asarray(R_nj) * angular_width(R_nj, g, cfg)


def bad_region_indicator(candidate, g: ServingGeometry, cfg: NetworkConfig):
    """True where a tier-``n`` station at polar ``candidate = (R_nj, theta_nj)`` would take over."""
    R_nj, th_nj = (np.asarray(c, dtype=float) for c in candidate)
    if g.displacement <= 0:
        return np.zeros(np.broadcast(R_nj, th_nj).shape, dtype=bool)
    x = x_offset(g, cfg)
    b = lower_bound(g, cfg)
    out = (np.cos(th_nj) > _cos_threshold(R_nj, g, x)) & (R_nj > b)
    return out if out.ndim else bool(out)


def bad_region_case(g: ServingGeometry, cfg: NetworkConfig) -> str:
    """Which of the three boundary configurations applies at this displacement.

    ``"empty"``: no bad region; ``"full"``: an annulus ``[b, phi_down)`` is
    entirely bad, followed by a partial arc band up to ``phi_up``;
    ``"arc"``: only the partial band ``(b, phi_up)``.
    """
    b = lower_bound(g, cfg)
    up = phi_up(g, cfg)
    if up <= b:
        return "empty"
    if phi_down(g, cfg) > b:
        return "full"
    return "arc"


def _band_area(lo: float, hi: float, g: ServingGeometry, cfg: NetworkConfig, x: float, rtol: float) -> QuadResult:
    # R = lo + (hi - lo)(1 - cos s)/2 absorbs the square-root behavior of the
    # arccos at both band edges.
    half = 0.5 * (hi - lo)

    def f(s):
        R = lo + half * (1.0 - np.cos(s))
        return angular_width(R, g, cfg, x) * R * half * np.sin(s)

    return gauss_kronrod(f, 0.0, math.pi, rtol=rtol, atol=1e-300, max_subdivisions=400)


def bad_region_area_numeric(g: ServingGeometry, cfg: NetworkConfig, resolution: float = 1e-11) -> float:
    """Area of the tier-``n`` bad region, integrated in polar bands around the origin.

    ``resolution`` is the relative tolerance of the radial quadrature; a
    :class:`~hetho.quadrature.QuadratureError` is raised if it cannot be met.
    """
    if g.displacement == 0:
        return 0.0
    case = bad_region_case(g, cfg)
    if case == "empty":
        return 0.0
    x = x_offset(g, cfg)
    b = lower_bound(g, cfg)
    up = phi_up(g, cfg)
    if case == "arc":
        return _band_area(b, up, g, cfg, x, resolution).value
    down = phi_down(g, cfg)
    full = math.pi * (down - b) * (down + b)
    return full + _band_area(down, up, g, cfg, x, resolution).value


def bad_region_area_mc(
    g: ServingGeometry, cfg: NetworkConfig, n_samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Hit-count estimate of the bad-region area over its bounding annulus.

    Returns ``(area, standard_error)``.
    """
    b = lower_bound(g, cfg)
    if g.displacement == 0:
        return 0.0, 0.0
    up = phi_up(g, cfg)
    if up <= b:
        return 0.0, 0.0
    annulus = math.pi * (up - b) * (up + b)
    u = rng.random((2, n_samples))
    R = np.sqrt(b * b + u[0] * (up - b) * (up + b))
    th = math.pi * (2.0 * u[1] - 1.0)
    p = float(np.mean(bad_region_indicator((R, th), g, cfg)))
    return p * annulus, annulus * math.sqrt(p * (1.0 - p) / n_samples)


# --------------------------------------------------------------------------
# growth rate of the bad region at zero displacement


def _growth_terms(b: float, c):
    """Split of ``b * D(c)`` into the full-circle, arccos and radical parts.

    ``c = kappa b cos(theta) / R`` is minus the rate at which the takeover
    radius grows relative to the displacement.
    """
    c = np.asarray(c, dtype=float)
    full = np.where(c < -1.0, -2.0 * math.pi * b * c, 0.0)
    inside = np.abs(c) <= 1.0
    cc = np.clip(c, -1.0, 1.0)
    arc = np.where(inside, -2.0 * b * cc * np.arccos(cc), 0.0)
    rad = np.where(inside, 2.0 * b * np.sqrt((1.0 - cc) * (1.0 + cc)), 0.0)
    return full, arc, rad


def growth_coefficient(g: ServingGeometry, cfg: NetworkConfig, theta=None):
    b = lower_bound(g, cfg)
    th = g.serving_angle if theta is None else theta
    return _exponent_ratio(cfg, g.m, g.n) * b * np.cos(th) / g.serving_distance


def h_terms(g: ServingGeometry, cfg: NetworkConfig, theta=None):
    """The three pieces of the area growth rate as functions of the serving angle."""
    b = lower_bound(g, cfg)
    return _growth_terms(b, growth_coefficient(g, cfg, theta))


def bad_region_area_derivative(g0: ServingGeometry, cfg: NetworkConfig):
    """``lim_{r->0} dA_mn/dr`` in closed form (meters).

    With ``c = kappa b cos(theta)/R``: ``-2 pi b c`` for ``c < -1``;
    ``2 b sqrt(1 - c^2) - 2 b c arccos(c)`` for ``|c| <= 1``; 0 for ``c > 1``.
    """
    full, arc, rad = h_terms(g0, cfg)
    out = full + arc + rad
    return out if np.ndim(out) else float(out)


def keep_link_probability(g: ServingGeometry, cfg: NetworkConfig) -> float:
    """Probability that no station of any tier lies in its bad region."""
    if g.displacement == 0:
        return 1.0
    exposure = math.fsum(
        t.density * bad_region_area_numeric(g.to_pair(n), cfg) for n, t in enumerate(cfg.tiers)
    )
    return math.exp(-exposure)


def area_derivative_fd(
    g: ServingGeometry, cfg: NetworkConfig, steps=(1e-2, 1e-3), resolution: float = 1e-12
) -> float:
    """Richardson-extrapolated ``A(r)/r`` from two displacements ``steps * R_mk``."""
    r1, r2 = (s * g.serving_distance for s in steps)
    d1 = bad_region_area_numeric(g.at(r1), cfg, resolution) / r1
    d2 = bad_region_area_numeric(g.at(r2), cfg, resolution) / r2
    ratio = r1 / r2
    return (ratio * d2 - d1) / (ratio - 1.0)


# --------------------------------------------------------------------------
# angular averaging pipeline


def _angle_breaks(s: float) -> list[float]:
    # kinks of the growth rate in theta where c = s cos(theta) = +-1
    pts = []
    if s > 1.0:
        pts += [math.acos(1.0 / s), math.acos(-1.0 / s)]
    return pts


def h_term_averages(cfg: NetworkConfig, m: int, n: int, R: float, rtol: float = 1e-12) -> tuple[float, float, float]:
    """Angle-averaged full-circle, arccos and radical pieces at serving distance ``R``."""
    g = ServingGeometry(R, 0.0, 0.0, m, n)
    b = lower_bound(g, cfg)
    s = _exponent_ratio(cfg, m, n) * b / R
    out = []
    for k in range(3):
        res = gauss_kronrod(
            lambda th: _growth_terms(b, s * np.cos(th))[k],
            0.0,
            math.pi,
            rtol=rtol,
            atol=1e-300 if k else 1e-30,
            points=_angle_breaks(s),
        )
        out.append(res.value / math.pi)  # symmetric in theta: (1/2pi) * 2 * int_0^pi
    return tuple(out)


def angle_averaged_growth(cfg: NetworkConfig, m: int, n: int, R: float) -> float:
    return math.fsum(h_term_averages(cfg, m, n, R))


def angular_average_rate_per_speed(
    cfg: NetworkConfig, m: int, n: int, quad: QuadratureSpec = QuadratureSpec(relative_tolerance=1e-9)
) -> float:
    """Per-speed handover rate assembled from the bad-region growth rate.

    ``lambda_n * int_0^inf E_theta[lim dA/dr] f(R) dR`` with the angular
    average done numerically; independent of the kernel route.
    """
    L = 1.0 / math.sqrt(cfg.tiers[m].density)
    upper = truncation_radius(cfg, m, quad) / L
    ln = cfg.tiers[n].density

    def f(u):
        R = np.asarray(u) * L
        vals = np.array([angle_averaged_growth(cfg, m, n, float(x)) if x > 0 else 0.0 for x in R])
        return ln * vals * association_distance_pdf(cfg, m, R)

    kappa = _exponent_ratio(cfg, m, n)
    points = []
    if kappa != 1.0:
        c = range_ratio(cfg, m, n)
        points.append((kappa * c) ** (1.0 / (1.0 - kappa)) / L)
    res = gauss_kronrod(
        f, 0.0, upper, rtol=quad.relative_tolerance, atol=quad.absolute_tolerance / L, points=points
    )
    return res.value * L


# --------------------------------------------------------------------------
# boundary polylines


def boundary_polylines(g: ServingGeometry, cfg: NetworkConfig, n_points: int = 256) -> dict[str, np.ndarray]:
    """Sampled boundary of the bad region in Cartesian coordinates.

    ``"takeover"`` is the part of the circle of radius ``sqrt(r^2 - x)``
    around ``(r, 0)`` outside the exclusion disk; ``"exclusion"`` is the part
    of the exclusion circle inside the takeover disk.
    """
    r = g.displacement
    b = lower_bound(g, cfg)
    rho = math.sqrt(r * r - x_offset(g, cfg))
    t = np.linspace(-math.pi, math.pi, n_points)
    tk = np.column_stack([r + rho * np.cos(t), rho * np.sin(t)])
    tk = tk[np.hypot(tk[:, 0], tk[:, 1]) >= b]
    ex = np.column_stack([b * np.cos(t), b * np.sin(t)])
    ex = ex[np.hypot(ex[:, 0] - r, ex[:, 1]) <= rho]
    return {"takeover": tk, "exclusion": ex}
