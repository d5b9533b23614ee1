"""Anisotropic 2-D Ising model on a periodic L×L lattice.

Dimensionless energy ℋ = γ₁X₁ + γ₂X₂ with γ = (J_x/k_BT, J_y/k_BT) and the
bond sums X₁ = −Σ σ_{j,k}σ_{j,k+1}, X₂ = −Σ σ_{j+1,k}σ_{j,k}. Spins are
indexed ``spins[j, k]``: k runs along x (columns), j along y (rows).
"""
from __future__ import annotations

import math

import numba
import numpy as np

from .models import ExactModel

MAX_EXACT_L = 4
_CHUNK = 1 << 20  # flip attempts per block of pre-drawn random numbers


def sufficient_stat(spins: np.ndarray) -> tuple[int, int]:
    s = np.asarray(spins, dtype=np.int64)
    x1 = -int(np.sum(s * np.roll(s, -1, axis=1)))
    x2 = -int(np.sum(np.roll(s, -1, axis=0) * s))
    return x1, x2


def _stats_batch(spins: np.ndarray) -> np.ndarray:
    s = spins.astype(np.int64)
    x1 = -(s * np.roll(s, -1, axis=2)).sum(axis=(1, 2))
    x2 = -(np.roll(s, -1, axis=1) * s).sum(axis=(1, 2))
    return np.stack([x1, x2], axis=1)


def energy(spins: np.ndarray, gamma) -> float:
    x1, x2 = sufficient_stat(spins)
    return gamma[0] * x1 + gamma[1] * x2


def ground_state(L: int, gamma) -> np.ndarray:
    """Lowest-energy configuration of the quadrant containing ``gamma`` (sign ≥ 0 counts as ferro)."""
    sx = 1 if gamma[0] >= 0 else -1
    sy = 1 if gamma[1] >= 0 else -1
    j, k = np.indices((L, L))
    return (np.where(k % 2 == 0, 1, sx) * np.where(j % 2 == 0, 1, sy)).astype(np.int8)


def random_config(L: int, rng: np.random.Generator) -> np.ndarray:
    return (2 * rng.integers(0, 2, size=(L, L)) - 1).astype(np.int8)


@numba.njit(cache=True, nogil=True)
def _metropolis_block(spins, g1, g2, sites, us, n_sweeps, x, stats_out, cfg_out, offset, record):
    L = spins.shape[0]
    n = L * L
    t = 0
    acc = 0
    for s in range(n_sweeps):
        for _ in range(n):
            site = sites[t]
            u = us[t]
            t += 1
            j = site // L
            k = site % L
            sv = spins[j, k]
            h = spins[j, (k + 1) % L] + spins[j, (k - 1) % L]
            v = spins[(j + 1) % L, k] + spins[(j - 1) % L, k]
            dx1 = 2 * sv * h
            dx2 = 2 * sv * v
            de = g1 * dx1 + g2 * dx2
            if de <= 0.0 or u < math.exp(-de):
                spins[j, k] = -sv
                x[0] += dx1
                x[1] += dx2
                acc += 1
        if record:
            stats_out[offset + s, 0] = x[0]
            stats_out[offset + s, 1] = x[1]
            if cfg_out.shape[0] > 0:
                cfg_out[offset + s] = spins
    return acc


def _run(spins, gamma, n_sweeps, rng, stats_out, cfg_out, record):
    L = spins.shape[0]
    x = np.array(sufficient_stat(spins), dtype=np.int64)
    per_block = max(1, _CHUNK // (L * L))
    done = 0
    acc = 0
    while done < n_sweeps:
        m = min(per_block, n_sweeps - done)
        sites = rng.integers(0, L * L, size=m * L * L, dtype=np.int64)
        us = rng.random(m * L * L)
        acc += _metropolis_block(spins, float(gamma[0]), float(gamma[1]), sites, us, m, x,
                                 stats_out, cfg_out, done, record)
        done += m
    return acc


def metropolis_chain(gamma, L: int, n_samples: int, n_therm_sweeps: int, init: np.ndarray,
                     rng: np.random.Generator, keep_configs: bool = False):
    """Single-spin-flip Metropolis with random site selection, one record per sweep.

    Returns ``(stats, configs, final_spins, acceptance)``; ``configs`` is None
    unless ``keep_configs``. ``init`` is not modified.
    """
    if L < 2:
        raise ValueError("lattice side must be >= 2")
    if n_therm_sweeps < 0 or n_samples < 0:
        raise ValueError("sweep counts must be nonnegative")
    spins = np.array(init, dtype=np.int8, copy=True)
    if spins.shape != (L, L) or not np.all(np.abs(spins) == 1):
        raise ValueError("init must be an L×L array of ±1")
    empty_stats = np.zeros((0, 2), dtype=np.int64)
    empty_cfg = np.zeros((0, L, L), dtype=np.int8)
    _run(spins, gamma, n_therm_sweeps, rng, empty_stats, empty_cfg, False)
    stats = np.zeros((n_samples, 2), dtype=np.int64)
    cfgs = np.zeros((n_samples, L, L), dtype=np.int8) if keep_configs else empty_cfg
    acc = _run(spins, gamma, n_samples, rng, stats, cfgs, True)
    rate = acc / max(1, n_samples * L * L)
    return stats, (cfgs if keep_configs else None), spins, rate


def metropolis_sample(gamma, L: int, n_samples: int, n_therm_sweeps: int, init: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    """``(n_samples, L, L)`` configurations, one per sweep after burn-in."""
    _, cfgs, _, _ = metropolis_chain(gamma, L, n_samples, n_therm_sweeps, init, rng, keep_configs=True)
    return cfgs


def symmetry_canonical(spins: np.ndarray, translations: bool = False) -> tuple[int, ...]:
    """Lexicographically smallest member of the orbit under global flip (and lattice translations)."""
    s = np.asarray(spins, dtype=np.int64)
    L = s.shape[0]
    shifts = [(a, b) for a in range(L) for b in range(L)] if translations else [(0, 0)]
    best = None
    for a, b in shifts:
        t = np.roll(s, (a, b), axis=(0, 1)).ravel()
        for cand in (tuple(t.tolist()), tuple((-t).tolist())):
            if best is None or cand < best:
                best = cand
    return best


# --- exact enumeration ---------------------------------------------------------

def enumerate_configs(L: int) -> np.ndarray:
    """All 2^(L²) configurations; state index bit (L²−1−p) is site p = j·L + k (+1 ↔ bit 0)."""
    if L > MAX_EXACT_L:
        raise ValueError(f"exact enumeration limited to L <= {MAX_EXACT_L}")
    n = L * L
    idx = np.arange(2 ** n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n - 1, -1, -1)) & 1
    return (1 - 2 * bits).astype(np.int8).reshape(-1, L, L)


def enumerate_stats(L: int) -> np.ndarray:
    return _stats_batch(enumerate_configs(L))


def _boltzmann(stats: np.ndarray, gamma) -> np.ndarray:
    e = gamma[0] * stats[:, 0] + gamma[1] * stats[:, 1]
    w = np.exp(-(e - e.min()))
    return w / w.sum()


def boltzmann_model(gamma, L: int, representation: str = "stat", translations: bool = False) -> ExactModel:
    """Exact Boltzmann distribution over configurations, X, or symmetry-canonical keys."""
    cfgs = enumerate_configs(L)
    stats = _stats_batch(cfgs)
    p = _boltzmann(stats, gamma)
    if representation == "config":
        return ExactModel(np.arange(p.size, dtype=np.int64), p)
    if representation == "stat":
        keys = [tuple(r) for r in stats.tolist()]
    elif representation == "canonical":
        keys = [symmetry_canonical(c, translations) for c in cfgs]
    else:
        raise ValueError(f"unknown representation {representation!r}")
    # orbit members share one energy, so each key's mass is multiplicity × q;
    # a running sum would pile up rounding error in proportion to the orbit size
    first: dict = {}
    count: dict = {}
    for k, q in zip(keys, p):
        first.setdefault(k, q)
        count[k] = count.get(k, 0) + 1
    return ExactModel(list(first), np.array([count[k] * first[k] for k in first]))


def mean_stat_exact(gamma, L: int) -> np.ndarray:
    stats = enumerate_stats(L)
    return _boltzmann(stats, gamma) @ stats


# --- reference quantities -----------------------------------------------------

def heat_capacity(stats: np.ndarray, gamma, L: int) -> float:
    """C_v/Nk_B = Var(γ·X)/N from samples of X (plug-in variance)."""
    stats = np.asarray(stats, dtype=float)
    if stats.shape[0] < 2:
        raise ValueError("heat capacity needs at least 2 samples")
    e = stats @ np.asarray(gamma, dtype=float)
    return float(np.var(e) / (L * L))


def heat_capacity_exact(model, gamma, L: int) -> float:
    """Same quantity from an exact distribution over X keys."""
    keys, probs = model.table()
    e = np.array([gamma[0] * k[0] + gamma[1] * k[1] for k in keys])
    m = probs @ e
    return float(probs @ (e - m) ** 2 / (L * L))


def onsager_boundary(gamma1: float, upper: bool = True) -> float:
    """Critical γ₂ at given γ₁: ±(−ln tanh|γ₁|)/2, positive branch when ``upper``."""
    if gamma1 == 0:
        raise ValueError("Onsager boundary diverges at gamma1 = 0")
    c = -0.5 * math.log(math.tanh(abs(gamma1)))
    return c if upper else -c


ONSAGER_ISOTROPIC = 0.5 * math.log(1 + math.sqrt(2))
