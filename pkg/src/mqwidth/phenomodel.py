"""Phenomenological model of multiple-quantum coherence growth and decay.

Conventions
-----------
All times are in microseconds and all rates in 1/us; squared rates (``A2``,
``b2``) are in 1/us**2. Values quoted in (1/ms)**2 go through
:meth:`ModelParams.from_ms_units` (factor 1e-6).

Two preparation schemes are covered:

* separate stages: pumping with the double-quantum Hamiltonian, then free
  decay under the secular dipolar one (``decay_separate``,
  ``profile_separate``, ``k_eff_separate``);
* simultaneous stages: pumping with the mixed Hamiltonian
  ``(1 - p) H0 + p Hd`` during which every coherence decays from the moment it
  is created (``u2``, ``averaged_decay``, ``spectrum``,
  ``solve_effective_order`` and the steady-state laws).

The reduced coordinates are ``y = a_p T`` and ``m = |M| A p / a_p``; the ratio
``A p / a_p`` is called ``r`` throughout, so ``m = |M| r``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .numerics import (
    Interval,
    erfc_scaled,
    find_root_monotone,
    quad_adaptive,
)

# Nominal adamantane constants; unit in each name.
A0_PER_US = 0.0083
A2_PER_MS2 = 200.0
RATE_LINE_A2_PER_MS2 = 205.48
RATE_LINE_INTERCEPT_PER_MS2 = 23145.1
RATE_LINE_K = 650.0
# no direct value for b^2: take it from the rate-line intercept K b^2 / 2 at K = 650
B2_PER_MS2 = 2.0 * RATE_LINE_INTERCEPT_PER_MS2 / RATE_LINE_K
STEADY_STATE_COEFF_ROUNDED = 3.2

MS2_TO_US2 = 1e-6

# Relative size of U2 against its leading term below which the closed form is
# considered cancellation-dominated and quadrature is used instead.
U2_CANCELLATION_GUARD = 1e-4

_SQRT_PI = math.sqrt(math.pi)
_INV_E = math.exp(-1.0)
_MAX_EXP_ARG = 709.0


@dataclass(frozen=True)
class ModelParams:
    """Model constants in canonical units (us, 1/us, 1/us**2)."""

    a0: float = A0_PER_US
    A2: float = A2_PER_MS2 * MS2_TO_US2
    b2: float = B2_PER_MS2 * MS2_TO_US2
    p: float = 0.0
    lam: float = 2.0

    def __post_init__(self):
        if not self.a0 > 0:
            raise ValueError(f"growth rate a0 must be > 0 (1/us), got {self.a0}")
        if not self.A2 >= 0:
            raise ValueError(f"A^2 must be >= 0 (1/us^2), got {self.A2}")
        if not self.b2 >= 0:
            raise ValueError(f"b^2 must be >= 0 (1/us^2), got {self.b2}")
        if not 0 <= self.p < 1:
            raise ValueError(f"perturbation p must satisfy 0 <= p < 1, got {self.p}")
        if not self.lam > 0:
            raise ValueError(f"profile exponent lambda must be > 0, got {self.lam}")

    @classmethod
    def from_ms_units(cls, a0=A0_PER_US, A2_ms2=A2_PER_MS2, b2_ms2=B2_PER_MS2,
                      p=0.0, lam=2.0) -> "ModelParams":
        """Build from a0 in 1/us and A^2, b^2 in (1/ms)^2."""
        return cls(a0=a0, A2=A2_ms2 * MS2_TO_US2, b2=b2_ms2 * MS2_TO_US2,
                   p=p, lam=lam)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @property
    def a_p(self) -> float:
        return growth_exponent(self)

    @property
    def ratio(self) -> float:
        """r = A p / a_p, the factor turning |M| into the reduced order m."""
        return decay_ratio(self)


@dataclass(frozen=True)
class ReducedCoords:
    y: float
    m: float

    def __post_init__(self):
        if self.y < 0 or self.m < 0:
            raise ValueError(f"reduced coordinates must be >= 0, got y={self.y}, m={self.m}")

    @classmethod
    def from_physical(cls, M: int, T: float, params: ModelParams) -> "ReducedCoords":
        return cls(y=params.a_p * T, m=abs(M) * params.ratio)


@dataclass(frozen=True)
class CoherenceProfile:
    prep_time: float
    orders: tuple
    intensities: tuple

    def as_dict(self) -> dict:
        return dict(zip(self.orders, self.intensities))


@dataclass(frozen=True)
class ClusterTrajectory:
    """Effective cluster size against reduced time y = a_p T."""

    points: tuple  # ((y, k_eff), ...)
    params: ModelParams | None = None

    def __post_init__(self):
        ys = [pt[0] for pt in self.points]
        if any(b <= a for a, b in zip(ys, ys[1:])):
            raise ValueError("trajectory y values must be strictly increasing")

    @property
    def y(self) -> np.ndarray:
        return np.array([pt[0] for pt in self.points])

    @property
    def k_eff(self) -> np.ndarray:
        return np.array([pt[1] for pt in self.points])


# ---------------------------------------------------------------- growth

def growth_exponent(params: ModelParams) -> float:
    """Perturbed growth rate a_p = a0 (1 - p), in 1/us."""
    return params.a0 * (1.0 - params.p)


def decay_ratio(params: ModelParams) -> float:
    return math.sqrt(params.A2) * params.p / growth_exponent(params)


def cluster_size(a_p: float, T: float) -> float:
    """K(T) = exp(a_p T)."""
    if T < 0:
        raise ValueError(f"preparation time must be >= 0 us, got {T}")
    arg = a_p * T
    if arg > _MAX_EXP_ARG:
        raise OverflowError(
            f"cluster size exp({arg:.6g}) overflows a double (a_p*T must stay below {_MAX_EXP_ARG})"
        )
    return math.exp(arg)


def initial_profile(M: float, K: float, lam: float) -> float:
    """Undamped coherence-order profile exp(-(M^2/K)^(lam/2)).

    ``lam = 2`` is the Gaussian profile, ``lam = 1`` the exponential one.
    """
    if K <= 0:
        raise ValueError(f"cluster size K must be positive, got {K}")
    if lam <= 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    # (M^2/K)^(lam/2) == (|M|/sqrt(K))^lam, which avoids squaring huge M
    return math.exp(-((abs(M) / math.sqrt(K)) ** lam))


# --------------------------------------------------- separate-stage scheme

def decay_separate(M: float, t: float, K: float, params: ModelParams) -> float:
    """Decay factor of an order-M coherence after free evolution for ``t`` us."""
    if t < 0:
        raise ValueError(f"decay time must be >= 0 us, got {t}")
    return math.exp(-params.A2 * M * M * t * t - K * params.b2 * t * t / 2.0)


def profile_separate(M: float, T: float, t: float, params: ModelParams) -> float:
    """Normalized MQ intensity after pumping for ``T`` then decaying for ``t``.

    Pumping here uses the unperturbed Hamiltonian, so ``K = exp(a0 T)`` and the
    profile is Gaussian whatever ``params.lam`` says.
    """
    K = cluster_size(params.a0, T)
    prefactor = 2.0 / math.sqrt(math.pi * K)
    return prefactor * initial_profile(M, K, 2.0) * decay_separate(M, t, K, params)


def k_eff_separate(K: float, A2: float, t: float) -> float:
    """Effective cluster size 1 / (1/K + A^2 t^2) seen after decay time t."""
    if K < 1:
        raise ValueError(f"cluster size K must be >= 1, got {K}")
    if t < 0:
        raise ValueError(f"decay time must be >= 0 us, got {t}")
    return 1.0 / (1.0 / K + A2 * t * t)


def decoherence_rate_sq(M: float, K: float, params: ModelParams) -> float:
    """Squared inverse decay time A^2 M^2 + K b^2 / 2 (1/us^2).

    This is the 1/T_d^2 at which the separate-stage decay factor reaches 1/e.
    """
    if K < 1:
        raise ValueError(f"cluster size K must be >= 1, got {K}")
    return params.A2 * M * M + K * params.b2 / 2.0


# ------------------------------------------------ simultaneous-stage scheme

def emergence_density(t: float, a_p: float, T: float) -> float:
    """Probability density (1/us) that a coherence appears at time t in [0, T]."""
    if T <= 0 or a_p * T <= 0:
        raise ValueError(f"emergence density needs a_p*T > 0, got a_p={a_p}, T={T}")
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, T={T}]")
    # a_p e^{a_p t} / (e^{a_p T} - 1), written to stay finite for large a_p T
    return a_p * math.exp(a_p * (t - T)) / -math.expm1(-a_p * T)


def _u2_integrand(m: float):
    m2 = m * m
    return lambda x: math.exp(-x - m2 * x * x)


def u2_quadrature(y: float, m: float, rel_tol: float = 1e-12) -> float:
    """Integral of exp(-x - (m x)^2) over [0, y] by adaptive quadrature.

    The range is cut at multiples of the integrand's decay length
    min(1, 1/m) so that a sharp peak at x = 0 is never missed by the first
    Gauss-Kronrod pass.
    """
    if y < 0 or m < 0:
        raise ValueError(f"u2 needs y >= 0 and m >= 0, got y={y}, m={m}")
    f = _u2_integrand(m)
    scale = 1.0 if m <= 1.0 else 1.0 / m
    cuts = [0.0]
    edge = scale
    while edge < y:
        cuts.append(edge)
        edge *= 4.0
    cuts.append(y)
    return math.fsum(quad_adaptive(f, a, b, rel_tol=rel_tol) for a, b in zip(cuts, cuts[1:]))


def u2(y: float, m: float) -> float:
    """U2(y, m) = integral_0^y exp(-x) exp(-(m x)^2) dx.

    Evaluated through the error-function closed form rewritten with the scaled
    complementary error function, with ``z0 = 1/(2m)`` and ``z1 = y m + z0``::

        U2 = sqrt(pi)/(2m) * [erfcx(z0) - erfcx(z1) * exp(-y - y^2 m^2)]

    This never forms ``exp(1/(4 m^2))``, so it stays finite as m -> 0. When the
    bracket is dominated by cancellation (tiny y) the integral is done by
    quadrature.
    """
    if y < 0 or m < 0:
        raise ValueError(f"u2 needs y >= 0 and m >= 0, got y={y}, m={m}")
    if y == 0:
        return 0.0
    if (m * y) ** 2 < 1e-17:
        # exp(-(m x)^2) >= 1 - (m y)^2 on [0, y]: below double resolution
        return -math.expm1(-y)
    z0 = 0.5 / m
    z1 = y * m + z0
    scale = _SQRT_PI * z0
    lead = scale * erfc_scaled(z0)
    tail = scale * erfc_scaled(z1) * math.exp(-y - (y * m) ** 2)
    value = lead - tail
    if value < U2_CANCELLATION_GUARD * lead:
        return u2_quadrature(y, m)
    return value


def u2_infinite(m: float) -> float:
    """Limit of U2(y, m) as y -> infinity."""
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if m == 0:
        return 1.0
    z0 = 0.5 / m
    return _SQRT_PI * z0 * erfc_scaled(z0)


def averaged_decay(y: float, m: float) -> float:
    """Decay factor averaged over coherence emergence times, U2 / (1 - e^-y)."""
    if not y > 0:
        raise ValueError(f"averaged decay is 0/0 at y <= 0, got y={y}")
    if m == 0:
        return 1.0
    return u2(y, m) / -math.expm1(-y)


def spectrum(M: int, T: float, params: ModelParams) -> float:
    """Relative MQ intensity of order M after a preparation time T (us)."""
    if not T > 0:
        raise ValueError(f"preparation time must be > 0 us, got {T}")
    a_p = growth_exponent(params)
    K = cluster_size(a_p, T)
    return initial_profile(M, K, params.lam) * averaged_decay(a_p * T, abs(M) * decay_ratio(params))


def coherence_profile(T: float, params: ModelParams, max_order: int) -> CoherenceProfile:
    """Intensities of the even orders -max_order..max_order at time T."""
    top = int(max_order) - int(max_order) % 2
    orders = tuple(range(-top, top + 1, 2))
    values = {M: spectrum(M, T, params) for M in range(0, top + 1, 2)}
    return CoherenceProfile(
        prep_time=T,
        orders=orders,
        intensities=tuple(values[abs(M)] for M in orders),
    )


def effective_order_lhs(M: float, y: float, r: float, lam: float) -> float:
    """Left side of the 1/e width condition at order M, with K = e^y."""
    profile = math.exp(-((M * math.exp(-0.5 * y)) ** lam))
    return profile * averaged_decay(y, M * r)


def solve_effective_order(y: float, r: float, lam: float, rel_tol: float = 1e-12) -> float:
    """Order M_e at which the damped profile has fallen to 1/e.

    The left side equals 1 at M = 0 and is strictly decreasing; at
    ``M = e^{y/2}`` the profile factor alone is already 1/e, so
    ``[0, e^{y/2}]`` always brackets the root.
    """
    if not y > 0:
        raise ValueError(f"y must be > 0, got {y}")
    if r < 0:
        raise ValueError(f"ratio r must be >= 0, got {r}")
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    upper = math.exp(0.5 * y)
    if r == 0:
        return upper

    def g(M):
        return effective_order_lhs(M, y, r, lam) - _INV_E

    g_hi = g(upper)
    # the bracket holds by construction; a failure here is a bug, not bad input
    assert g_hi <= 0.0, f"width bracket broken: g(e^(y/2))={g_hi!r} for y={y}, r={r}, lam={lam}"
    return find_root_monotone(g, Interval(0.0, upper), tol=1e-300, rtol=rel_tol)


def small_y_effective_order(y: float, r: float, lam: float) -> float:
    """Two-term small-y expansion e^{y/2} [1 - (y r e^{y/2})^2 / (3 lam)]."""
    grown = math.exp(0.5 * y)
    return grown * (1.0 - (y * r * grown) ** 2 / (3.0 * lam))


def steady_state_constant() -> float:
    """Dimensionless m_e^2 solving U2(infinity, m_e) = 1/e (close to 3.2)."""
    m_e = find_root_monotone(
        lambda m: u2_infinite(m) - _INV_E, Interval(0.1, 100.0), tol=1e-15, rtol=1e-15
    )
    return m_e * m_e


def steady_state_size(params: ModelParams, coeff: float = STEADY_STATE_COEFF_ROUNDED) -> float:
    """Plateau of the effective cluster size, coeff * a_p^2 / (A^2 p^2).

    ``coeff`` defaults to the rounded 3.2; pass ``steady_state_constant()`` for
    the unrounded value.
    """
    if params.p == 0 or params.A2 == 0:
        raise ValueError("no steady state for p = 0 or A^2 = 0: the width grows without bound")
    a_p = growth_exponent(params)
    return coeff * a_p * a_p / (params.A2 * params.p * params.p)


def k_eff_trajectory(params: ModelParams, y_grid: Iterable[float]) -> ClusterTrajectory:
    """K_eff = M_e^2 on a grid of reduced times y = a_p T."""
    ys = [float(y) for y in y_grid]
    if any(y <= 0 for y in ys):
        raise ValueError("all y values must be > 0")
    if any(b <= a for a, b in zip(ys, ys[1:])):
        raise ValueError("y grid must be strictly increasing")
    r = decay_ratio(params)
    points = tuple((y, solve_effective_order(y, r, params.lam) ** 2) for y in ys)
    return ClusterTrajectory(points=points, params=params)


def k_eff_at(params: ModelParams, y: float) -> float:
    return solve_effective_order(y, decay_ratio(params), params.lam) ** 2


def frozen_rate_steady_sizes(ps: Sequence[float], a_p: float, A2: float,
                             coeff: float = STEADY_STATE_COEFF_ROUNDED) -> np.ndarray:
    """Steady-state sizes for several p with the growth rate held fixed at a_p."""
    ps = np.asarray(ps, dtype=float)
    if np.any(ps <= 0):
        raise ValueError("p values must be > 0")
    return coeff * a_p * a_p / (A2 * ps * ps)
