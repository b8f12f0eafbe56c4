"""Adaptive quadrature used by the analytic rate engine.

Two integrators are provided: a globally adaptive 21-point Gauss-Kronrod
rule (the workhorse) and a tanh-sinh rule used as a fallback and as a
cross-check for integrands with endpoint singularities.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

_XK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
])
_WK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
])

NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
# Gauss nodes sit at the odd positions of the 21-point Kronrod grid.
GAUSS_WEIGHTS = np.zeros(21)
GAUSS_WEIGHTS[1:10:2] = _WG
GAUSS_WEIGHTS[11:20:2] = _WG[::-1]

_EPS = np.finfo(float).eps
_TINY = np.finfo(float).tiny


class QuadratureError(ArithmeticError):
    """Adaptive integration failed to reach the requested tolerance."""

    def __init__(self, message: str, value: float = math.nan, error: float = math.inf):
        super().__init__(f"{message} (value={value:.6g}, estimated error={error:.3g})")
        self.value = value
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    relative_tolerance: float = 1e-9
    absolute_tolerance: float = 1e-12
    outer_truncation_exponent: float = 40.0
    max_subdivisions: int = 500

    def __post_init__(self):
        if not (self.relative_tolerance > 0 and self.absolute_tolerance > 0):
            raise ValueError("quadrature tolerances must be positive")
        if self.outer_truncation_exponent <= 0 or self.max_subdivisions < 1:
            raise ValueError("invalid quadrature settings")


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    intervals: int = 1
    converged: bool = True

    def __float__(self) -> float:
        return self.value


def _gk21(f, a: float, b: float) -> tuple[float, float]:
    center = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fx = np.asarray(f(center + half * NODES), dtype=float)
    resk = float(np.dot(KRONROD_WEIGHTS, fx)) * half
    resg = float(np.dot(GAUSS_WEIGHTS, fx)) * half
    resabs = float(np.dot(KRONROD_WEIGHTS, np.abs(fx))) * abs(half)
    mean = resk / (b - a) if b != a else 0.0
    resasc = float(np.dot(KRONROD_WEIGHTS, np.abs(fx - mean))) * abs(half)
    err = abs(resk - resg)
    # QUADPACK error scaling
    if resasc != 0 and err != 0:
        err = resasc * min(1.0, (200.0 * err / resasc) ** 1.5)
    if resabs > _TINY / (50 * _EPS):
        err = max(50 * _EPS * resabs, err)
    return resk, err


def gauss_kronrod(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    max_subdivisions: int = 500,
    points: Optional[Sequence[float]] = None,
    strict: bool = True,
) -> QuadResult:
    """Globally adaptive Gauss-Kronrod (G10/K21) integration of ``f`` on [a, b].

    ``f`` must accept an array of abscissae.  ``points`` are interior
    breakpoints (kinks, near-singularities) used to seed the subdivision.
    The interval with the largest error estimate is bisected until the
    summed estimate drops below ``max(atol, rtol * |I|)``.
    """
    if a == b:
        return QuadResult(0.0, 0.0, 0)
    edges = [a]
    if points is not None:
        edges += sorted(p for p in points if a < p < b)
    edges.append(b)

    heap = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, err = _gk21(f, lo, hi)
        heapq.heappush(heap, (-err, lo, hi, val))

    def totals():
        return math.fsum(h[3] for h in heap), math.fsum(-h[0] for h in heap)

    total, error = totals()
    while not (error <= max(atol, rtol * abs(total)) and math.isfinite(total)):
        if not (math.isfinite(total) and math.isfinite(error)):
            if strict:
                raise QuadratureError("integrand is not finite on the interval", total, error)
            return QuadResult(total, math.inf, len(heap), False)
        if len(heap) >= max_subdivisions:
            if strict:
                raise QuadratureError("Gauss-Kronrod did not converge", total, error)
            return QuadResult(total, error, len(heap), False)
        _, lo, hi, _ = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            # interval cannot be split further in floating point
            if strict:
                raise QuadratureError("Gauss-Kronrod hit floating-point resolution", total, error)
            heapq.heappush(heap, (0.0, lo, hi, _gk21(f, lo, hi)[0]))
            total, error = totals()
            return QuadResult(total, error, len(heap), False)
        for x0, x1 in ((lo, mid), (mid, hi)):
            val, err = _gk21(f, x0, x1)
            heapq.heappush(heap, (-err, x0, x1, val))
        total, error = totals()
    return QuadResult(total, error, len(heap), True)


def tanh_sinh(
    f: Callable[..., np.ndarray],
    a: float,
    b: float,
    rtol: float = 1e-12,
    max_level: int = 10,
    strict: bool = True,
    gaps: bool = False,
) -> QuadResult:
    """Double-exponential (tanh-sinh) quadrature on the open interval (a, b).

    Integrable endpoint singularities are tolerated because the abscissae
    never touch the endpoints.  With ``gaps=True`` the integrand is called
    as ``f(x, x - a, b - x)`` with the endpoint distances formed exactly,
    which keeps singular factors accurate where ``x`` itself has rounded
    onto an endpoint.
    """
    half = 0.5 * (b - a)
    tmax = 4.0
    prev = None
    h = 1.0
    for level in range(max_level + 1):
        t = np.arange(-tmax, tmax + 0.5 * h, h)
        s = 0.5 * math.pi * np.sinh(t)
        # distance to the nearer endpoint, in units of half-width
        d = 1.0 / (np.exp(np.abs(s)) * np.cosh(s))
        w = 0.5 * math.pi * np.cosh(t) / np.cosh(s) ** 2
        gap_lo = np.where(t < 0, half * d, half * (2.0 - d))
        gap_hi = np.where(t < 0, half * (2.0 - d), half * d)
        x = np.where(t < 0, a + gap_lo, b - gap_hi)
        if gaps:
            keep = (d > 0) & (w > 0)
            fx = f(x[keep], gap_lo[keep], gap_hi[keep])
        else:
            keep = (x > a) & (x < b) & (w > 0)
            fx = f(x[keep])
        val = float(np.dot(w[keep], fx)) * half * h
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            return QuadResult(val, abs(val - prev), level)
        prev = val
        h *= 0.5
    if strict:
        raise QuadratureError("tanh-sinh did not converge", prev, math.inf)
    return QuadResult(prev, math.inf, max_level, False)


def bisect_increasing(
    g: Callable[[float], float],
    target: float,
    start: float,
    rtol: float = 1e-13,
    max_iter: int = 400,
) -> float:
    """Solve ``g(x) = target`` for a nondecreasing ``g`` on (0, inf)."""
    lo, hi = 0.0, start
    while g(hi) < target:
        lo, hi = hi, 2.0 * hi
        if not math.isfinite(hi):
            raise QuadratureError("could not bracket root")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * hi:
            break
    return hi
