"""Exact density-matrix dynamics of small spin-1/2 clusters.

Basis: product states indexed by an integer bitmask, bit ``i`` set meaning spin
``i`` is up. The total M_z of basis state ``s`` is ``popcount(s) - n/2``.

Sums over ``i != j`` in the Hamiltonians run over ordered pairs, so every
unordered pair is counted twice:

    Hd = sum_{i!=j} b_ij Sz_i Sz_j - 1/2 sum_{i!=j} b_ij S+_i S-_j
    H0 = -1/4 sum_{i!=j} b_ij (S+_i S+_j + S-_i S-_j)

The initial state is the high-temperature deviation density operator, taken
equal to total S_z; coherence intensities are normalized by Tr(S_z^2).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .numerics import NumericalError

MAX_SPINS = 12


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """``n`` spins-1/2 with a symmetric coupling table ``b_ij`` in 1/us."""

    n: int
    couplings: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = int(self.n)
        if not 2 <= n <= MAX_SPINS:
            raise ValueError(f"number of spins must be in [2, {MAX_SPINS}], got {self.n}")
        b = np.array(self.couplings, dtype=float)
        if b.shape != (n, n):
            raise ValueError(f"coupling table must be {n}x{n}, got shape {b.shape}")
        if not np.allclose(b, b.T, rtol=0, atol=0):
            raise ValueError("coupling table must be symmetric (b_ij = b_ji)")
        if np.any(np.diag(b) != 0):
            raise ValueError("coupling table must have a zero diagonal")
        b.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "couplings", b)

    @property
    def dim(self) -> int:
        return 1 << self.n

    def pairs(self):
        """Unordered coupled pairs (i, j, b_ij) with i < j and b_ij != 0."""
        for i in range(self.n):
            for j in range(i + 1, self.n):
                if self.couplings[i, j] != 0.0:
                    yield i, j, float(self.couplings[i, j])

    @classmethod
    def all_to_all(cls, n: int, b: float = 1.0) -> "SpinSystem":
        table = np.full((n, n), float(b))
        np.fill_diagonal(table, 0.0)
        return cls(n, table)

    @classmethod
    def chain(cls, n: int, b: float = 1.0) -> "SpinSystem":
        table = np.zeros((n, n))
        for i in range(n - 1):
            table[i, i + 1] = table[i + 1, i] = b
        return cls(n, table)

    @classmethod
    def from_pairs(cls, n: int, pairs: Iterable[tuple[int, int, float]]) -> "SpinSystem":
        table = np.zeros((n, n))
        for i, j, b in pairs:
            if i == j:
                raise ValueError(f"self-coupling {i} {j} is not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"pair ({i}, {j}) out of range for n={n}")
            table[i, j] = table[j, i] = b
        return cls(n, table)

    @classmethod
    def from_file(cls, path, n: int | None = None) -> "SpinSystem":
        """Read ``i j b_ij`` lines (0-based, 1/us); ``#`` starts a comment."""
        pairs = []
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'i j b_ij', got {raw!r}")
            try:
                pairs.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: cannot parse {raw!r}") from None
        if not pairs:
            raise ValueError(f"{path}: no couplings found")
        if n is None:
            n = 1 + max(max(i, j) for i, j, _ in pairs)
        return cls.from_pairs(n, pairs)


@dataclass(frozen=True)
class ProtocolSpec:
    """Preparation / phase rotation / reversal protocol.

    ``prep_time`` is the total preparation N*tau_c under the mixed Hamiltonian,
    ``reverse_time`` the N*tau_0 spent under the ideal double-quantum
    Hamiltonian on the way back. When ``reverse_time`` is omitted it is
    ``(1 - p) * prep_time``, the share of the cycle spent pumping.
    """

    p: float
    prep_time: float
    reverse_time: float | None = None
    phase_count: int | None = None

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"perturbation p must be in [0, 1], got {self.p}")
        if self.prep_time < 0:
            raise ValueError(f"prep_time must be >= 0 us, got {self.prep_time}")
        if self.reverse_time is None:
            object.__setattr__(self, "reverse_time", (1.0 - self.p) * self.prep_time)
        elif self.reverse_time < 0:
            raise ValueError(f"reverse_time must be >= 0 us, got {self.reverse_time}")

    def phases(self, n: int) -> np.ndarray:
        count = 2 * n + 2 if self.phase_count is None else int(self.phase_count)
        if count < 2 * n + 1:
            raise ValueError(
                f"phase_count={count} cannot resolve orders up to {n}; need >= {2 * n + 1}"
            )
        return 2.0 * np.pi * np.arange(count) / count


@dataclass(frozen=True, eq=False)
class CoherenceSpectrum:
    orders: np.ndarray
    intensities: np.ndarray

    def __getitem__(self, M: int) -> float:
        n = (len(self.orders) - 1) // 2
        if abs(M) > n:
            return 0.0
        return float(self.intensities[M + n])

    def total(self) -> float:
        return float(np.sum(self.intensities))

    def odd_max(self) -> float:
        return float(np.max(np.abs(self.intensities[self.orders % 2 == 1])))


# ------------------------------------------------------------- operators

def basis_mz(n: int) -> np.ndarray:
    """Total M_z of every basis state."""
    states = np.arange(1 << n)
    ups = np.zeros_like(states)
    for i in range(n):
        ups += (states >> i) & 1
    return ups - n / 2.0


def total_sz(system: SpinSystem) -> np.ndarray:
    return np.diag(basis_mz(system.n)).astype(complex)


def sz_norm(n: int) -> float:
    """Tr(S_z^2) = n 2^n / 4."""
    return n * (1 << n) / 4.0


def build_dipolar(system: SpinSystem) -> np.ndarray:
    """Secular dipolar Hamiltonian Hd."""
    dim = system.dim
    states = np.arange(dim)
    H = np.zeros((dim, dim))
    diag = np.zeros(dim)
    for i, j, b in system.pairs():
        bit_i = (states >> i) & 1
        bit_j = (states >> j) & 1
        # ordered-pair sum doubles the zz term: 2 b sz_i sz_j
        diag += 2.0 * b * (bit_i - 0.5) * (bit_j - 0.5)
        # S+_i S-_j and S+_j S-_i: each antiparallel state hops to its swap once
        flip = bit_i != bit_j
        src = states[flip]
        H[src ^ ((1 << i) | (1 << j)), src] += -0.5 * b
    H[states, states] += diag
    return H


def build_double_quantum(system: SpinSystem) -> np.ndarray:
    """Double-quantum Hamiltonian H0; only links states with Delta M_z = +-2."""
    dim = system.dim
    states = np.arange(dim)
    H = np.zeros((dim, dim))
    for i, j, b in system.pairs():
        bit_i = (states >> i) & 1
        bit_j = (states >> j) & 1
        # (i,j) and (j,i) both give S+_i S+_j: 2 * (-b/4) per parallel pair
        same = bit_i == bit_j
        src = states[same]
        H[src ^ ((1 << i) | (1 << j)), src] += -0.5 * b
    return H


def build_effective(system: SpinSystem, p: float) -> np.ndarray:
    """Mixed Hamiltonian (1 - p) H0 + p Hd."""
    if not 0 <= p <= 1:
        raise ValueError(f"p must be in [0, 1], got {p}")
    return (1.0 - p) * build_double_quantum(system) + p * build_dipolar(system)


# ------------------------------------------------------------- dynamics

def _eigh(H):
    try:
        return np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc


def propagator(H: np.ndarray, T: float) -> np.ndarray:
    """exp(-i H T) for Hermitian H."""
    w, V = _eigh(H)
    return (V * np.exp(-1j * w * T)) @ V.conj().T


def evolve(rho: np.ndarray, H: np.ndarray, T: float) -> np.ndarray:
    """exp(iHT) rho exp(-iHT)."""
    if T < 0:
        raise ValueError(f"evolution time must be >= 0 us, got {T}")
    U = propagator(H, -T)
    return U @ rho @ U.conj().T


def evolve_series(rho: np.ndarray, H: np.ndarray, times: Sequence[float]):
    """Yield ``evolve(rho, H, t)`` for every t, reusing one eigendecomposition."""
    w, V = _eigh(H)
    rho_eig = V.conj().T @ rho @ V
    for t in times:
        if t < 0:
            raise ValueError(f"evolution time must be >= 0 us, got {t}")
        phase = np.exp(1j * w * t)
        yield V @ (phase[:, None] * rho_eig * phase.conj()[None, :]) @ V.conj().T


# ------------------------------------------------------ coherence orders

def _order_index(n: int) -> np.ndarray:
    mz = basis_mz(n)
    return (mz[:, None] - mz[None, :]).astype(int) + n


def coherence_decompose(rho: np.ndarray, system: SpinSystem) -> CoherenceSpectrum:
    """Split rho into Delta M_z blocks; g_M = Tr(rho_M rho_M^dag) / Tr(S_z^2)."""
    n = system.n
    weights = np.abs(rho) ** 2
    g = np.bincount(_order_index(n).ravel(), weights=weights.ravel(), minlength=2 * n + 1)
    return CoherenceSpectrum(np.arange(-n, n + 1), g / sz_norm(n))


def coherence_overlap(rho: np.ndarray, sigma: np.ndarray, system: SpinSystem) -> CoherenceSpectrum:
    """Real part of Tr(rho_M sigma_M^dag) / Tr(S_z^2) for every order M."""
    n = system.n
    prod = (rho * sigma.conj()).ravel()
    idx = _order_index(n).ravel()
    re = np.bincount(idx, weights=prod.real, minlength=2 * n + 1)
    return CoherenceSpectrum(np.arange(-n, n + 1), re / sz_norm(n))


def _protocol_operators(spec: ProtocolSpec, system: SpinSystem):
    Sz = total_sz(system)
    Up = propagator(build_effective(system, spec.p), spec.prep_time)
    U0 = propagator(build_double_quantum(system), spec.reverse_time)
    return Sz, Up, U0


def _rotation(system: SpinSystem, phi: float) -> np.ndarray:
    return np.diag(np.exp(1j * phi * basis_mz(system.n)))


def phase_signal(spec: ProtocolSpec, system: SpinSystem, phases: Sequence[float]) -> np.ndarray:
    """Normalized echo Tr{U0^+ Uphi Up Sz Up^+ Uphi^+ U0 Sz} / Tr{Sz^2} per phase."""
    Sz, Up, U0 = _protocol_operators(spec, system)
    prepared = Up @ Sz @ Up.conj().T
    refocus = U0 @ Sz @ U0.conj().T
    norm = sz_norm(system.n)
    out = np.empty(len(phases))
    for k, phi in enumerate(phases):
        R = _rotation(system, phi)
        rotated = R @ prepared @ R.conj().T
        # Tr(U0^+ X U0 Sz) = Tr(X U0 Sz U0^+)
        out[k] = np.trace(rotated @ refocus).real / norm
    return out


def phase_cycle_signal(spec: ProtocolSpec, system: SpinSystem) -> CoherenceSpectrum:
    """Coherence intensities as Fourier harmonics of the phase-cycled echo."""
    n = system.n
    phases = spec.phases(n)
    signal = phase_signal(spec, system, phases)
    harmonics = np.fft.fft(signal) / len(phases)  # sum_k S_k e^{-i M phi_k}
    orders = np.arange(-n, n + 1)
    return CoherenceSpectrum(orders, harmonics[orders % len(phases)].real)


def reversal_reference(spec: ProtocolSpec, system: SpinSystem) -> CoherenceSpectrum:
    """Blockwise prediction of what ``phase_cycle_signal`` should return."""
    Sz, Up, U0 = _protocol_operators(spec, system)
    return coherence_overlap(Up @ Sz @ Up.conj().T, U0 @ Sz @ U0.conj().T, system)


def second_moment(spectrum: CoherenceSpectrum) -> float:
    """Cluster-size estimator K = 2 <M^2>."""
    M = spectrum.orders.astype(float)
    return float(2.0 * np.sum(M * M * spectrum.intensities))


def cyclic_permutation_check(spec: ProtocolSpec, system: SpinSystem,
                             phases: Sequence[float] | None = None) -> float:
    """Largest change of the echo trace over all cyclic shifts of its factors.

    The trace is evaluated literally as an eight-fold matrix product, once per
    rotation of the factor list; the result is normalized by Tr(S_z^2).
    """
    Sz, Up, U0 = _protocol_operators(spec, system)
    norm = sz_norm(system.n)
    if phases is None:
        phases = spec.phases(system.n)
    worst = 0.0
    for phi in phases:
        R = _rotation(system, phi)
        factors = [U0.conj().T, R, Up, Sz, Up.conj().T, R.conj().T, U0, Sz]
        values = []
        for shift in range(len(factors)):
            order = factors[shift:] + factors[:shift]
            prod = order[0]
            for F in order[1:]:
                prod = prod @ F
            values.append(np.trace(prod) / norm)
        values = np.array(values)
        worst = max(worst, float(np.max(np.abs(values - values[0]))))
    return worst

