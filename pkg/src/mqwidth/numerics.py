"""Numerical primitives: error functions, adaptive quadrature, bracketed root
finding and straight-line least squares.

Everything here is a pure function of its arguments.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Sequence

from scipy.special import erfcx as _erfcx

__all__ = [
    "NumericalError",
    "ConvergenceError",
    "BracketError",
    "Interval",
    "LineFit",
    "erf",
    "erfc_scaled",
    "quad_adaptive",
    "find_root_monotone",
    "fit_line",
]


class NumericalError(ArithmeticError):
    """Base class for failures of a numerical method (as opposed to bad input)."""


class ConvergenceError(NumericalError):
    pass


class BracketError(NumericalError):
    """The function does not change sign over the supplied bracket."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValueError(f"interval needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float

    def __call__(self, x):
        return self.slope * x + self.intercept


def erf(x: float) -> float:
    """Error function (libm)."""
    return math.erf(x)


def erfc_scaled(x: float) -> float:
    """Scaled complementary error function ``exp(x**2) * erfc(x)`` for x >= 0.

    Finite for every finite x >= 0 and behaves like ``1 / (x * sqrt(pi))``
    for large x, so it can be used where ``exp(x**2)`` alone would overflow.
    """
    x = float(x)
    if not x >= 0.0:
        raise ValueError(f"erfc_scaled is defined here for x >= 0, got {x}")
    return float(_erfcx(x))


# Gauss-Kronrod 7/15 abscissae and weights on [-1, 1] (QUADPACK qk15).
_XGK = (
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
)
_WGK = (
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
)
_WG = (
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
)


def _gk15(f, a, b):
    centre = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fc = f(centre)
    kronrod = fc * _WGK[7]
    gauss = fc * _WG[3]
    for k in range(7):
        dx = half * _XGK[k]
        pair = f(centre - dx) + f(centre + dx)
        kronrod += _WGK[k] * pair
        if k % 2 == 1:
            gauss += _WG[k // 2] * pair
    return kronrod * half, abs((kronrod - gauss) * half)


def quad_adaptive(
    f: Callable[[float], float],
    a: float,
    b: float,
    rel_tol: float = 1e-11,
    abs_tol: float = 0.0,
    max_depth: int = 60,
    max_intervals: int = 5000,
) -> float:
    """Globally adaptive Gauss-Kronrod (7/15) integration of ``f`` over [a, b].

    The interval with the largest error estimate is bisected until the summed
    estimate drops below ``max(abs_tol, rel_tol * |I|)``. Raises
    ConvergenceError if an interval would have to be split deeper than
    ``max_depth`` levels or more than ``max_intervals`` pieces are needed.
    """
    if rel_tol < 1e-13:
        raise ValueError(f"rel_tol must be >= 1e-13, got {rel_tol}")
    if not a <= b:
        raise ValueError(f"need a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0

    value, err = _gk15(f, a, b)
    # max-heap on error: entries are (-err, a, b, value, depth)
    heap = [(-err, a, b, value, 0)]
    total, total_err = value, err
    while total_err > max(abs_tol, rel_tol * abs(total)):
        neg_err, lo, hi, val, depth = heapq.heappop(heap)
        if depth >= max_depth or len(heap) + 2 > max_intervals:
            raise ConvergenceError(
                f"quad_adaptive did not reach rel_tol={rel_tol} on [{a}, {b}]: "
                f"estimate {total!r} +/- {total_err:.3e} "
                f"(depth {depth}, {len(heap) + 1} intervals)"
            )
        mid = 0.5 * (lo + hi)
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        total += v1 + v2 - val
        total_err += e1 + e2 + neg_err
        heapq.heappush(heap, (-e1, lo, mid, v1, depth + 1))
        heapq.heappush(heap, (-e2, mid, hi, v2, depth + 1))

    # re-sum to shed the drift of the running total
    return math.fsum(entry[3] for entry in heap)


def find_root_monotone(
    f: Callable[[float], float],
    bracket: Interval,
    tol: float = 1e-12,
    rtol: float = 0.0,
    max_iter: int = 2000,
) -> float:
    """Root of a continuous function that changes sign over ``bracket``.

    Regula falsi steps (Illinois variant) are used while they shrink the
    bracket at least as fast as bisection would; otherwise the step falls back
    to bisection, so convergence is guaranteed. Iteration stops once the
    bracket is narrower than ``tol + rtol * |x|``.

    Returns the bracket end with the smaller ``|f|``.
    """
    lo, hi = float(bracket.lo), float(bracket.hi)
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if math.isnan(flo) or math.isnan(fhi) or (flo > 0) == (fhi > 0):
        raise BracketError(
            f"no sign change on [{lo!r}, {hi!r}]: f(lo)={flo!r}, f(hi)={fhi!r}"
        )

    side = 0  # which end was kept on the last step, for the Illinois weight
    use_bisection = False
    for _ in range(max_iter):
        width = hi - lo
        if width <= tol + rtol * max(abs(lo), abs(hi)):
            break
        if use_bisection:
            x = 0.5 * (lo + hi)
        else:
            x = (lo * fhi - hi * flo) / (fhi - flo)
            if not lo < x < hi:
                x = 0.5 * (lo + hi)
        if x <= lo or x >= hi:
            break  # bracket is down to adjacent floats
        fx = f(x)
        if fx == 0.0:
            return x
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = x, fx
            if side == 1:
                flo *= 0.5
            side = 1
        use_bisection = (hi - lo) > 0.5 * width
    else:
        raise ConvergenceError(
            f"find_root_monotone: bracket [{lo!r}, {hi!r}] still wider than "
            f"tolerance after {max_iter} iterations"
        )
    # flo/fhi may carry Illinois down-weighting; compare true values
    return lo if abs(f(lo)) <= abs(f(hi)) else hi


def fit_line(points: Sequence[tuple[float, float]]) -> LineFit:
    """Ordinary least-squares line through ``(x, y)`` points."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError(f"fit_line needs at least 2 points, got {len(pts)}")
    n = len(pts)
    xbar = math.fsum(x for x, _ in pts) / n
    ybar = math.fsum(y for _, y in pts) / n
    sxx = math.fsum((x - xbar) ** 2 for x, _ in pts)
    if sxx <= (1e-14 * max(1.0, abs(xbar))) ** 2 * n:
        raise ValueError("fit_line: x values have no spread (all equal)")
    sxy = math.fsum((x - xbar) * (y - ybar) for x, y in pts)
    syy = math.fsum((y - ybar) ** 2 for _, y in pts)
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    if syy == 0.0:
        r2 = 1.0
    else:
        ss_res = math.fsum((y - slope * x - intercept) ** 2 for x, y in pts)
        r2 = min(1.0, max(0.0, 1.0 - ss_res / syy))
    return LineFit(slope=slope, intercept=intercept, r_squared=r2)
