"""Cluster-Ising chain with open boundaries, exact diagonalization and Pauli-6 POVM statistics.

H = −J Σ_{i=1}^{L} (Z_{i−1} X_i Z_{i+1} + h₁ X_i + h₂ X_i X_{i+1}),
Z₀ = Z_{L+1} = X_{L+1} = 𝕀, J = 1, γ = (h₁, h₂).

Computational basis: site 1 is the most significant bit of the state index.
POVM outcomes are integers in [0, 6^L) whose base-6 digits (site 1 first)
index the elements {|0⟩, |1⟩, |+⟩, |−⟩, |+i⟩, |−i⟩}/3.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.signal import find_peaks

from .models import ExactModel

MAX_L = 12
DEGENERACY_TOL = 1e-10

_S2 = 1 / np.sqrt(2)
POVM_VECTORS = np.array([
    [1, 0],
    [0, 1],
    [_S2, _S2],
    [_S2, -_S2],
    [_S2, 1j * _S2],
    [_S2, -1j * _S2],
], dtype=complex)
_BRA = POVM_VECTORS.conj()  # row x gives ⟨b_x|


@dataclass(frozen=True)
class QuantumGroundState:
    L: int
    amplitudes: np.ndarray
    energy: float
    gap: float
    gamma: tuple[float, float] = (0.0, 0.0)

    @property
    def degenerate(self) -> bool:
        return self.gap < DEGENERACY_TOL


def _check_L(L: int) -> None:
    if L < 3 or L % 2 == 0:
        raise ValueError(f"chain length must be odd and >= 3, got {L}")
    if L > MAX_L:
        raise ValueError(f"dense diagonalization limited to L <= {MAX_L}")


def _bit(L: int, site: int) -> int:
    """Mask of 1-based ``site`` in the state index."""
    return 1 << (L - site)


def _pauli_masks(L: int, xs=(), zs=()) -> tuple[int, int]:
    xm = 0
    zm = 0
    for s in xs:
        xm |= _bit(L, s)
    for s in zs:
        zm |= _bit(L, s)
    return xm, zm


def _parity(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    p = np.zeros_like(v)
    while np.any(v):
        p ^= v & 1
        v >>= 1
    return p


def _apply_pauli(psi: np.ndarray, xm: int, zm: int) -> np.ndarray:
    idx = np.arange(psi.size)
    sign = 1 - 2 * _parity(idx & zm)
    out = np.empty_like(psi)
    out[idx ^ xm] = sign * psi
    return out


def _expect_pauli(psi: np.ndarray, xm: int, zm: int) -> float:
    return float(np.real(np.vdot(psi, _apply_pauli(psi, xm, zm))))


def _terms(L: int, h1: float, h2: float):
    """(coefficient, xmask, zmask) for every term of H."""
    out = []
    for i in range(1, L + 1):
        zs = [s for s in (i - 1, i + 1) if 1 <= s <= L]
        out.append((-1.0, *_pauli_masks(L, xs=[i], zs=zs)))
        out.append((-h1, *_pauli_masks(L, xs=[i])))
        xs = [i, i + 1] if i + 1 <= L else [i]
        out.append((-h2, *_pauli_masks(L, xs=xs)))
    return out


def hamiltonian(gamma, L: int) -> np.ndarray:
    """Dense real-symmetric H in the computational basis."""
    _check_L(L)
    h1, h2 = gamma
    dim = 1 << L
    idx = np.arange(dim)
    H = np.zeros((dim, dim))
    for c, xm, zm in _terms(L, h1, h2):
        if c == 0:
            continue
        sign = 1 - 2 * _parity(idx & zm)
        np.add.at(H, (idx ^ xm, idx), c * sign)
    return H


def ground_state(gamma, L: int) -> QuantumGroundState:
    H = hamiltonian(gamma, L)
    w, v = scipy.linalg.eigh(H, subset_by_index=[0, 1])
    psi = v[:, 0]
    # fix the arbitrary global sign so results are reproducible across solvers
    k = int(np.argmax(np.abs(psi)))
    if psi[k] < 0:
        psi = -psi
    psi = psi.astype(complex)
    psi.setflags(write=False)
    return QuantumGroundState(L, psi, float(w[0]), float(w[1] - w[0]), (float(gamma[0]), float(gamma[1])))


def ground_states(gammas, L: int, threads: int = 1) -> list[QuantumGroundState]:
    gammas = [tuple(g) for g in gammas]
    if threads <= 1:
        return [ground_state(g, L) for g in gammas]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(lambda g: ground_state(g, L), gammas))


def _amplitudes(state) -> tuple[np.ndarray, int]:
    if isinstance(state, QuantumGroundState):
        return np.asarray(state.amplitudes, dtype=complex), state.L
    psi = np.asarray(state, dtype=complex)
    L = int(round(np.log2(psi.size)))
    if 1 << L != psi.size:
        raise ValueError("state dimension is not a power of 2")
    return psi, L


def energy_expectation(state, gamma) -> float:
    psi, L = _amplitudes(state)
    return float(np.real(np.vdot(psi, hamiltonian(gamma, L) @ psi)))


def stabilizer(L: int, i: int) -> tuple[int, int]:
    """(xmask, zmask) of K_i = Z_{i−1} X_i Z_{i+1}, truncated at the chain ends."""
    zs = [s for s in (i - 1, i + 1) if 1 <= s <= L]
    return _pauli_masks(L, xs=[i], zs=zs)


def stabilizer_expectations(state) -> np.ndarray:
    psi, L = _amplitudes(state)
    return np.array([_expect_pauli(psi, *stabilizer(L, i)) for i in range(1, L + 1)])


def x_expectations(state) -> np.ndarray:
    psi, L = _amplitudes(state)
    return np.array([_expect_pauli(psi, *_pauli_masks(L, xs=[i])) for i in range(1, L + 1)])


def string_operator(L: int) -> tuple[int, int]:
    """(xmask, zmask) of Z₁ X₂ X₄ ⋯ X_{L−1} Z_L."""
    if L % 2 == 0:
        raise ValueError("string order requires odd L")
    return _pauli_masks(L, xs=range(2, L, 2), zs=[1, L])


def string_order(state) -> float:
    psi, L = _amplitudes(state)
    return _expect_pauli(psi, *string_operator(L))


# --- POVM -------------------------------------------------------------------------

def outcome_digits(x: int, L: int) -> list[int]:
    d = []
    for _ in range(L):
        x, r = divmod(int(x), 6)
        d.append(r)
    return d[::-1]


def outcome_index(digits) -> int:
    x = 0
    for d in digits:
        if not 0 <= d < 6:
            raise ValueError(f"POVM digit {d} out of range")
        x = 6 * x + int(d)
    return x


def povm_probability(state, x) -> float:
    """⟨ψ|Π_x|ψ⟩ by contracting one single-qubit factor at a time."""
    psi, L = _amplitudes(state)
    digits = outcome_digits(x, L) if np.isscalar(x) else list(x)
    if len(digits) != L:
        raise ValueError(f"outcome has {len(digits)} digits, chain has {L} sites")
    t = psi
    for d in digits:
        t = _BRA[d] @ t.reshape(2, -1)
    return float(abs(t[0]) ** 2 / 3.0 ** L)


def povm_distribution(state) -> np.ndarray:
    """All 6^L outcome probabilities, indexed by base-6 outcome integer."""
    psi, L = _amplitudes(state)
    t = psi.reshape((1,) + (2,) * L)
    for _ in range(L):
        # contract the leading qubit axis, append the outcome axis at the back
        t = np.tensordot(t, _BRA, axes=([1], [1]))
    # axes are now (1, x_1, ..., x_L)
    p = np.abs(t.reshape(-1)) ** 2 / 3.0 ** L
    return p


def povm_model(state) -> ExactModel:
    p = povm_distribution(state)
    return ExactModel(np.arange(p.size, dtype=np.int64), p)


def povm_sample(state, n: int, rng: np.random.Generator) -> np.ndarray:
    """Exact ancestral sampling of ``n`` outcomes (base-6 integers).

    Samples sharing a prefix share the conditional state, so the work per site
    scales with the number of distinct prefixes rather than with ``n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    psi, L = _amplitudes(state)
    states = psi.reshape(1, 2, -1)
    group = np.zeros(n, dtype=np.int64)
    prefix = np.zeros(1, dtype=np.int64)
    for site in range(L):
        amps = np.einsum("xa,gar->gxr", _BRA, states)
        w = np.sum(np.abs(amps) ** 2, axis=2)
        cdf = np.cumsum(w / w.sum(axis=1, keepdims=True), axis=1)
        u = rng.random(n)
        x = np.minimum((u[:, None] > cdf[group]).sum(axis=1), 5)
        key = group * 6 + x
        uniq, inv = np.unique(key, return_inverse=True)
        g_old, x_new = np.divmod(uniq, 6)
        prefix = prefix[g_old] * 6 + x_new
        nxt = amps[g_old, x_new]
        if site < L - 1:
            states = nxt.reshape(len(uniq), 2, -1)
        group = inv.reshape(-1)
    return prefix[group]


def write_povm_samples(path, samples, L: int) -> None:
    lines = ["".join(str(d) for d in outcome_digits(x, L)) for x in samples]
    Path(path).write_text("\n".join(lines) + "\n")


def read_povm_samples(path) -> tuple[np.ndarray, int]:
    rows = [r for r in Path(path).read_text().split() if r]
    if not rows:
        raise ValueError(f"{path}: no samples")
    L = len(rows[0])
    if any(len(r) != L for r in rows):
        raise ValueError(f"{path}: outcomes of unequal length")
    return np.array([outcome_index(int(c) for c in r) for r in rows], dtype=np.int64), L


# --- references ---------------------------------------------------------------------

@dataclass
class ReferenceScan:
    gamma2: np.ndarray
    energy: np.ndarray
    string_order: np.ndarray
    d2_energy: np.ndarray  # |∂²E/∂γ₂²|, NaN at the two ends
    d_string: np.ndarray  # |∂⟨S⟩/∂γ₂|
    boundaries: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)


def second_derivative(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Central three-point second derivative (non-uniform stencil); NaN at the ends."""
    f = np.asarray(values, dtype=float)
    out = np.full(f.shape, np.nan)
    h0 = x[1:-1] - x[:-2]
    h1 = x[2:] - x[1:-1]
    out[1:-1] = 2 * (h0 * f[2:] - (h0 + h1) * f[1:-1] + h1 * f[:-2]) / (h0 * h1 * (h0 + h1))
    return out


def curve_maxima(values: np.ndarray, x: np.ndarray, rel_tol: float = 1e-8) -> list[float]:
    """Locations of interior local maxima, ignoring numerically flat curves."""
    v = np.nan_to_num(np.asarray(values, dtype=float), nan=-np.inf)
    finite = v[np.isfinite(v)]
    if finite.size == 0:
        return []
    scale = max(np.max(np.abs(finite)), 0.0)
    thresh = rel_tol * max(scale, 1.0)
    if scale - np.min(finite) <= thresh:
        return []
    w = np.where(np.isfinite(v), v, np.min(finite))
    peaks, _ = find_peaks(w, prominence=thresh)
    return [float(x[p]) for p in peaks]


def reference_boundaries(h1: float, gamma2, L: int, threads: int = 1,
                         states: list[QuantumGroundState] | None = None) -> ReferenceScan:
    g2 = np.asarray(gamma2, dtype=float)
    if g2.size < 5:
        raise ValueError("reference scan needs at least 5 grid points")
    if states is None:
        states = ground_states([(h1, g) for g in g2], L, threads)
    e = np.array([s.energy for s in states])
    so = np.array([string_order(s) for s in states])
    d2 = np.abs(second_derivative(e, g2))
    ds = np.abs(np.gradient(so, g2))
    scan = ReferenceScan(g2, e, so, d2, ds)
    scan.boundaries = curve_maxima(d2, g2)
    scan.degenerate = [bool(s.degenerate) for s in states]
    return scan
