"""Active-contour boundary tracer driven by generative-classifier cross-entropy.

An open chain of nodes r_0..r_{n-1} moves to minimize
E_tot = E_int + E_ext. E_int penalizes stretching (α) and bending (β);
E_ext sums, over nodes, the cross-entropy of a one-dimensional soft-label
task sensed along the local normal. Gradients use central finite
differences; E_int and E_ext gradients feed two independent Adam
accumulators with their own learning rates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import ParameterGrid
from .models import ModelStack

_TINY = 1e-300


class InterpolatedField:
    """Bilinear interpolation of grid models on a 2-D grid, renormalized per point.

    ``probs`` has shape ``(n1, n2, n_keys)``: ``probs[i, j]`` is the model at
    ``(axes[0][i], axes[1][j])`` on the shared key axis.
    """

    def __init__(self, grid: ParameterGrid, probs: np.ndarray):
        if grid.dims != 2:
            raise ValueError("snake fields live on 2-D grids")
        if probs.shape[:2] != grid.shape:
            raise ValueError(f"probs shape {probs.shape[:2]} does not match grid {grid.shape}")
        self.grid = grid
        self.probs = np.asarray(probs, dtype=float)
        self.lo = np.array([a[0] for a in grid.axes])
        self.hi = np.array([a[-1] for a in grid.axes])

    @classmethod
    def from_models(cls, grid: ParameterGrid, models) -> "InterpolatedField":
        ordered = [models[idx] for idx in grid.indices()] if hasattr(models, "keys") else list(models)
        stack = ModelStack.from_models(ordered)
        return cls(grid, stack.probs.reshape(grid.shape + (stack.n_keys,)))

    @property
    def n_keys(self) -> int:
        return self.probs.shape[2]

    def spacing(self) -> float:
        return min(self.grid.spacing(0), self.grid.spacing(1))

    def clamp(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = np.clip(pts, self.lo, self.hi)
        return c, np.any(c != pts, axis=-1)

    def models_at(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(m, n_keys)`` interpolated distributions and the clamped flags."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        c, flagged = self.clamp(pts)
        w = []
        lo_idx = []
        for ax in range(2):
            a = self.grid.axes[ax]
            k = np.clip(np.searchsorted(a, c[:, ax], side="right") - 1, 0, a.size - 2)
            t = (c[:, ax] - a[k]) / (a[k + 1] - a[k])
            lo_idx.append(k)
            w.append(t)
        i, j = lo_idx
        t, u = w
        P = self.probs
        out = ((1 - t) * (1 - u))[:, None] * P[i, j] + (t * (1 - u))[:, None] * P[i + 1, j] \
            + ((1 - t) * u)[:, None] * P[i, j + 1] + (t * u)[:, None] * P[i + 1, j + 1]
        out /= out.sum(axis=1, keepdims=True)
        return out, flagged


class Adam:
    """Plain Adam on a fixed-shape parameter array."""

    def __init__(self, shape, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def update(self, g: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * g
        self.v = self.b2 * self.v + (1 - self.b2) * g * g
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return -self.lr * mh / (np.sqrt(vh) + self.eps)

    def copy(self) -> "Adam":
        a = Adam(self.m.shape, self.lr, self.b1, self.b2, self.eps)
        a.m, a.v, a.t = self.m.copy(), self.v.copy(), self.t
        return a


@dataclass
class SnakeState:
    nodes: np.ndarray  # (n, 2)
    sigma_end: float
    alpha: float = 0.002
    beta: float = 0.4
    l_sense: int = 4
    kappa: float = 0.9
    sigma_start: float | None = None
    lr_int: float = 1e-4
    lr_ext: float = 5e-4
    epoch: int = 0
    pinned: np.ndarray | None = None  # (n,) bool
    adam_int: Adam | None = None
    adam_ext: Adam | None = None
    flagged: int = 0  # sensing points clamped to the grid box in the last step
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.nodes = np.array(self.nodes, dtype=float)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2 or self.nodes.shape[0] < 3:
            raise ValueError("a snake needs at least 3 two-dimensional nodes")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")
        if self.l_sense < 1:
            raise ValueError("need at least one sensing point per side")
        if self.sigma_start is None:
            self.sigma_start = 5.0 * self.sigma_end
        if self.sigma_start < self.sigma_end:
            raise ValueError("sigma_start must be >= sigma_end")
        if self.pinned is None:
            self.pinned = np.zeros(len(self.nodes), dtype=bool)
        if self.adam_int is None:
            self.adam_int = Adam(self.nodes.shape, self.lr_int)
        if self.adam_ext is None:
            self.adam_ext = Adam(self.nodes.shape, self.lr_ext)

    @property
    def sigma(self) -> float:
        return sigma_schedule(self.epoch, self.sigma_start, self.sigma_end, self.kappa)

    @property
    def sigma_g(self) -> float:
        return self.sigma / 10.0


def sigma_schedule(k: int, sigma_start: float, sigma_end: float, kappa: float) -> float:
    return sigma_end + (sigma_start - sigma_end) * kappa ** k


def straight_snake(start, end, n: int, spacing: float, **kw) -> SnakeState:
    """Equispaced chain from ``start`` to ``end`` with σ_end = ``spacing``."""
    t = np.linspace(0.0, 1.0, n)[:, None]
    nodes = (1 - t) * np.asarray(start, float) + t * np.asarray(end, float)
    return SnakeState(nodes=nodes, sigma_end=spacing, **kw)


# --- energies -----------------------------------------------------------------------

def _ds(n: int) -> float:
    return 1.0 / (n - 1)


def internal_energy(nodes: np.ndarray, alpha: float, beta: float) -> float:
    """Σ α‖Δr/ds‖² ds + Σ β‖Δ²r/ds²‖² ds over first and second differences."""
    r = np.asarray(nodes, dtype=float)
    ds = _ds(len(r))
    d1 = np.diff(r, axis=0) / ds
    d2 = (r[2:] - 2 * r[1:-1] + r[:-2]) / ds ** 2
    return float(alpha * np.sum(d1 ** 2) * ds + beta * np.sum(d2 ** 2) * ds)


def internal_gradient(nodes: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Exact gradient of the quadratic discretization."""
    r = np.asarray(nodes, dtype=float)
    n = len(r)
    ds = _ds(n)
    D1 = np.diff(np.eye(n), axis=0)
    D2 = D1[1:] - D1[:-1]
    A = 2 * alpha / ds * D1.T @ D1 + 2 * beta / ds ** 3 * D2.T @ D2
    return A @ r


def normals(nodes: np.ndarray) -> np.ndarray:
    """Unit normals: perpendicular to r_{i+1} − r_{i−1}; endpoints use their adjacent segment."""
    r = np.asarray(nodes, dtype=float)
    t = np.empty_like(r)
    t[1:-1] = r[2:] - r[:-2]
    t[0] = r[1] - r[0]
    t[-1] = r[-1] - r[-2]
    return _perp(t)


def _perp(t: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(t, axis=-1, keepdims=True)
    safe = np.where(nrm > 0, nrm, 1.0)
    n = np.stack([-t[..., 1], t[..., 0]], axis=-1) / safe
    # coincident neighbours leave the direction undefined; fall back to +γ₂
    return np.where(nrm > 0, n, np.array([0.0, 1.0]))


def guesser(tau: np.ndarray, sigma_g: float) -> np.ndarray:
    """Soft label P̃(1|τ) = 1/(1 + e^{(0 − τ)/σ_G}) for normal coordinate τ."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(tau) / sigma_g))


def _offsets(l: int, sigma: float) -> np.ndarray:
    k = np.arange(1, l + 1, dtype=float)
    return np.concatenate([-k[::-1], k]) * sigma


def node_losses(centers: np.ndarray, normal: np.ndarray, field: InterpolatedField, l: int,
                sigma: float, chunk: int = 4096) -> tuple[np.ndarray, int]:
    """Per-node cross-entropy of the soft-label task along each normal.

    Returns the losses ``(m,)`` and the number of clamped sensing points.
    """
    tau = _offsets(l, sigma)
    g1 = guesser(tau, sigma / 10.0)
    soft = np.stack([g1, 1.0 - g1])  # (2, 2l)
    m = len(centers)
    out = np.empty(m)
    flagged = 0
    per = max(1, chunk // len(tau))
    for s in range(0, m, per):
        c = centers[s:s + per]
        nv = normal[s:s + per]
        pts = c[:, None, :] + tau[None, :, None] * nv[:, None, :]
        P, fl = field.models_at(pts.reshape(-1, 2))
        flagged += int(fl.sum())
        P = P.reshape(len(c), len(tau), -1)  # (b, 2l, K)
        # class-conditional mixtures over the shared point set, uniform P(γ|y)
        num = np.einsum("yk,bkx->byx", soft, P)  # (b, 2, K)
        z = num.sum(axis=1, keepdims=True)
        post = num / np.where(z > 0, z, 1.0)
        logp = np.log(np.maximum(post, _TINY))
        # L = −(1/|Y|) Σ_y (1/|Γ_y|) Σ_γ P̃(y|γ) 𝔼_{x∼P(x|γ)} ln P(y|x)
        out[s:s + per] = -np.einsum("yk,bkx,byx->b", soft, P, logp) / (2 * len(tau))
    return out, flagged


def external_energy(nodes: np.ndarray, field: InterpolatedField, l: int, sigma: float) -> float:
    r = np.asarray(nodes, dtype=float)
    losses, _ = node_losses(r, normals(r), field, l, sigma)
    return float(losses.sum())


def external_gradient(nodes: np.ndarray, field: InterpolatedField, l: int, sigma: float,
                      h: float) -> tuple[np.ndarray, int]:
    """Central-difference ∂E_ext/∂r. Moving node j changes only the terms of nodes j−1, j, j+1."""
    r = np.asarray(nodes, dtype=float)
    n = len(r)
    centers, norms, owner = [], [], []
    for j in range(n):
        for c in range(2):
            for sgn in (1.0, -1.0):
                rp = r.copy()
                rp[j, c] += sgn * h
                lo, hi = max(0, j - 1), min(n, j + 2)
                nrm = normals(rp)[lo:hi]
                centers.append(rp[lo:hi])
                norms.append(nrm)
                owner.extend([(j, c, sgn)] * (hi - lo))
    losses, _ = node_losses(np.concatenate(centers), np.concatenate(norms), field, l, sigma)
    g = np.zeros_like(r)
    for (j, c, sgn), v in zip(owner, losses):
        g[j, c] += sgn * v
    _, flagged = node_losses(r, normals(r), field, l, sigma)
    return g / (2 * h), flagged


# --- optimization -------------------------------------------------------------------

def step(s: SnakeState, field: InterpolatedField, h: float | None = None) -> SnakeState:
    """One epoch: gradients at the current σ, two Adam updates, then σ anneals."""
    if h is None:
        h = field.spacing() / 100.0
    g_int = internal_gradient(s.nodes, s.alpha, s.beta)
    g_ext, flagged = external_gradient(s.nodes, field, s.l_sense, s.sigma, h)
    g_int[s.pinned] = 0.0
    g_ext[s.pinned] = 0.0
    ai, ae = s.adam_int.copy(), s.adam_ext.copy()
    nodes = s.nodes + ai.update(g_int) + ae.update(g_ext)
    nodes[s.pinned] = s.nodes[s.pinned]
    return replace(s, nodes=nodes, epoch=s.epoch + 1, adam_int=ai, adam_ext=ae, flagged=flagged,
                   history=s.history)


def run(s: SnakeState, field: InterpolatedField, epochs: int = 400, h: float | None = None,
        record: bool = True) -> SnakeState:
    if record and not s.history:
        s.history.append(s.nodes.copy())
    for _ in range(epochs):
        s = step(s, field, h)
        if record:
            s.history.append(s.nodes.copy())
    return s


def write_trajectory(path, history, config_hash: str = "") -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# config_sha256={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "node", "gamma1", "gamma2"])
        for e, nodes in enumerate(history):
            for i, (a, b) in enumerate(nodes):
                w.writerow([e, i, f"{a:.17g}", f"{b:.17g}"])


def line_boundary_field(grid: ParameterGrid, n_keys: int = 16, width: float = 0.25, seed: int = 0) -> InterpolatedField:
    """Synthetic two-regime field whose distributions change across γ₂ = 0.

    P(x|γ) = (1 − w) A(x) + w B(x), w = ½(1 + tanh(γ₂/width)), with A and B
    mirror images on ``n_keys`` outcomes, so the field is symmetric about γ₂ = 0.
    """
    rng = np.random.default_rng(seed)
    A = rng.dirichlet(np.ones(n_keys))
    B = A[::-1].copy()
    w = 0.5 * (1 + np.tanh(grid.axes[1] / width))
    P = (1 - w)[:, None] * A + w[:, None] * B  # (n2, K)
    probs = np.broadcast_to(P, grid.shape + (n_keys,)).copy()
    return InterpolatedField(grid, probs)
