"""Indicators of phase transitions over a parameter grid.

All expectations 𝔼_{x∼P̃(x|γ)} are weighted sums over a shared key axis: the
weights of a grid point are either the model's own probabilities (exact) or
the empirical frequencies of one fixed dataset drawn from it (sampled). The
dataset for a point is drawn once per :class:`ModelField` and reused by every
scheme and bipartition evaluated on that field.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .classifier import class_conditionals, posterior_table
from .grid import Bipartition, GridError, Index, LabelScheme, ParameterGrid, make_scheme2_bipartitions
from .models import ModelStack, exact_model, model_tv_distance

SIGMA_RTOL = 1e-12


@dataclass(frozen=True)
class Sampled:
    """Sample-mean estimator with ``n`` draws per grid point."""

    n: int
    seed: int | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sampled estimator needs n >= 1")


class ModelField:
    """Grid models on a common key axis plus per-point expectation weights."""

    def __init__(self, grid: ParameterGrid, models, estimator="exact", rng: np.random.Generator | None = None):
        if isinstance(models, Mapping):
            ordered = [models[idx] for idx in grid.indices()]
        else:
            ordered = list(models)
        if len(ordered) != grid.size:
            raise GridError(f"expected {grid.size} models, got {len(ordered)}")
        self.grid = grid
        self.models = ordered
        self.stack = ModelStack.from_models(ordered)
        self.estimator = estimator
        if estimator == "exact":
            self.weights = self.stack.probs
            self.n_samples = np.zeros(grid.size, dtype=np.int64)
        elif isinstance(estimator, Sampled):
            if rng is None:
                rng = np.random.default_rng(estimator.seed)
            self.weights = np.zeros_like(self.stack.probs)
            for i, m in enumerate(ordered):
                cols = self.stack.columns(m.sample(rng, estimator.n))
                self.weights[i] = np.bincount(cols, minlength=self.stack.n_keys) / estimator.n
            self.n_samples = np.full(grid.size, estimator.n, dtype=np.int64)
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
        self.mass = self.weights.sum(axis=1)

    def expect(self, values: np.ndarray, rows: Sequence[int]) -> np.ndarray:
        """Normalized expectation of a per-key function at the given stack rows."""
        rows = list(rows)
        w = self.weights[rows] if len(rows) <= 16 else self.weights
        # numerator and normalizer through the same reduction, so constant
        # values come back exactly
        num = w @ values
        den = w @ np.ones_like(values)
        if len(rows) > 16:
            num, den = num[rows], den[rows]
        return num / den

    @classmethod
    def of(cls, grid, models, estimator="exact", rng=None) -> "ModelField":
        if isinstance(models, ModelField):
            return models
        return cls(grid, models, estimator, rng)

    def rows(self, points: Sequence[Index]) -> list[int]:
        return [self.grid.flat(p) for p in points]

    def dropped_count(self, point_row: int, ok: np.ndarray) -> int:
        w = self.weights[point_row]
        if isinstance(self.estimator, Sampled):
            return int(round(w[~ok].sum() * self.estimator.n))
        return int(np.count_nonzero(w[~ok] > 0))


@dataclass
class PosteriorCurve:
    """Per-point class posterior P(y|γ) (scheme 1) or mean prediction γ̂ and σ (scheme 3)."""

    points: list[Index]
    labels: list = field(default_factory=list)
    posterior: np.ndarray | None = None  # (n_points, n_classes)
    mean: np.ndarray | None = None  # (n_points,)
    std: np.ndarray | None = None
    n_samples: np.ndarray | None = None
    n_dropped: np.ndarray | None = None


@dataclass
class IndicatorField:
    grid: ParameterGrid
    scheme: str
    values: np.ndarray  # grid.shape
    n_samples: np.ndarray
    n_dropped: np.ndarray
    flags: np.ndarray  # grid.shape, True where a component was excluded
    metadata: dict = field(default_factory=dict)
    components: np.ndarray | None = None  # grid.shape + (d,)

    def at(self, idx: Index) -> float:
        return float(self.values[idx])

    def write_csv(self, path, config_hash: str = "") -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(f"# config_sha256={config_hash}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([*self.grid.names, "value", "n_samples", "n_dropped"])
            for idx in self.grid.indices():
                c = self.grid.coords(idx)
                w.writerow([*(f"{v:.17g}" for v in c), f"{self.values[idx]:.17g}",
                            int(self.n_samples[idx]), int(self.n_dropped[idx])])

    def sidecar(self) -> dict:
        return {"scheme": self.scheme, "grid": self.grid.to_dict(), "n_flagged": int(self.flags.sum()),
                **self.metadata}

    def write_sidecar(self, path) -> None:
        Path(path).write_text(json.dumps(self.sidecar(), indent=2, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    return str(o)


def finite_difference(values: np.ndarray, coords: np.ndarray, axis: int = 0) -> np.ndarray:
    """Central differences inside, one-sided at the two edges."""
    values = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    x = np.asarray(coords, dtype=float)
    n = values.shape[0]
    if n < 2:
        raise GridError("derivative needs at least 2 points along the axis")
    out = np.empty_like(values)
    shape = (-1,) + (1,) * (values.ndim - 1)
    if n > 2:
        out[1:-1] = (values[2:] - values[:-2]) / (x[2:] - x[:-2]).reshape(shape)
    out[0] = (values[1] - values[0]) / (x[1] - x[0])
    out[-1] = (values[-1] - values[-2]) / (x[-1] - x[-2])
    return np.moveaxis(out, 0, axis)


# --- scheme 1 ----------------------------------------------------------------

def class_posterior_field(models, scheme: LabelScheme, estimator="exact", grid: ParameterGrid | None = None,
                          points: Sequence[Index] | None = None, rng=None) -> PosteriorCurve:
    """P(y|γ) = 𝔼_{x∼P̃(x|γ)}[P(y|x)] at every grid point (or at ``points``)."""
    mf = ModelField.of(grid, models, estimator, rng)
    rows = [mf.rows(pts) for pts in scheme.classes.values()]
    post, ok = posterior_table(class_conditionals(mf.stack, rows))
    pts = list(mf.grid.indices()) if points is None else [tuple(p) for p in points]
    r = mf.rows(pts)
    w = mf.weights[r][:, ok]
    kept = w.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        pyg = (w @ post[:, ok].T) / kept[:, None]
    dropped = np.array([mf.dropped_count(i, ok) for i in r], dtype=np.int64)
    return PosteriorCurve(points=pts, labels=scheme.labels, posterior=pyg,
                          n_samples=mf.n_samples[r].copy(), n_dropped=dropped)


def indicator1(curve: PosteriorCurve, grid: ParameterGrid, metadata: dict | None = None) -> IndicatorField:
    """I₁ = (1/K) Σ_y ‖∇_γ P(y|γ)‖₂ with finite-difference gradients on the grid."""
    if curve.posterior is None:
        raise ValueError("indicator1 needs a class-posterior curve")
    for i, a in enumerate(grid.axes):
        if a.size < 2:
            raise GridError(f"axis {i} has fewer than 2 points; gradient undefined")
    if len(curve.points) != grid.size or curve.points != list(grid.indices()):
        raise GridError("curve must cover the whole grid in C order")
    k = curve.posterior.shape[1]
    p = curve.posterior.reshape(grid.shape + (k,))
    sq = np.zeros_like(p)
    for i, a in enumerate(grid.axes):
        sq += finite_difference(p, a, axis=i) ** 2
    values = np.sqrt(sq).sum(axis=-1) / k
    return IndicatorField(grid, "1", values, curve.n_samples.reshape(grid.shape),
                          curve.n_dropped.reshape(grid.shape), ~np.isfinite(values),
                          dict(metadata or {}, n_classes=k))


# --- scheme 2 ----------------------------------------------------------------

def _side_error(mf: ModelField, rows_by_class: list[list[int]], prior: np.ndarray | None) -> float:
    post, ok = posterior_table(class_conditionals(mf.stack, rows_by_class), prior)
    perr_x = post.min(axis=0)
    weight = np.full(len(rows_by_class), 1.0 / len(rows_by_class)) if prior is None else prior
    total = 0.0
    for c, rows in enumerate(rows_by_class):
        total += weight[c] * np.mean(mf.expect(perr_x, rows))
    return float(total)


def error_probability(bip: Bipartition, models, estimator="exact", grid: ParameterGrid | None = None,
                      prior: str = "uniform", rng=None) -> float:
    """Optimal average error of the binary task left-vs-right (uniform prior: within [0, 1/2])."""
    if bip.degenerate:
        raise GridError(f"bipartition at {bip.center} along axis {bip.axis} has an empty side")
    mf = ModelField.of(grid, models, estimator, rng)
    rows = [mf.rows(bip.left), mf.rows(bip.right)]
    if prior == "uniform":
        # min over a normalized posterior never exceeds 1/2; clip summation rounding
        return min(_side_error(mf, rows, None), 0.5)
    if prior == "biased":
        n = np.array([len(r) for r in rows], dtype=float)
        return _side_error(mf, rows, n / n.sum())
    raise ValueError(f"unknown prior {prior!r}")


def tv_error_probability(p, q) -> float:
    """Binary Bayes error from total variation: ½(1 − TV(p, q))."""
    return 0.5 * (1.0 - model_tv_distance(p, q))


def side_mixture(bip_side: Sequence[Index], models: Mapping[Index, object]):
    """Class-conditional mixture of one side, assembled key by key from ``support()``."""
    acc: dict = {}
    for g in bip_side:
        for k, p in models[g].support():
            acc[k] = acc.get(k, 0.0) + p / len(bip_side)
    return exact_model(acc.items())


def indicator2(grid: ParameterGrid, models, l: int, estimator="exact", metric: str = "axis",
               prior: str = "uniform", rng=None) -> IndicatorField:
    """I₂ = ‖(1 − 2 p_err^(i))_i‖₂ over local bipartitions with window ``l``.

    Components with an empty side are 0 under the uniform prior; under the
    biased prior the single populated class is always right and the component is 1.
    """
    mf = ModelField.of(grid, models, estimator, rng)
    comps = np.zeros(grid.shape + (grid.dims,))
    for bip in make_scheme2_bipartitions(grid, l, metric):
        if bip.degenerate:
            comps[bip.center + (bip.axis,)] = 1.0 if prior == "biased" else 0.0
            continue
        perr = error_probability(bip, mf, prior=prior)
        comps[bip.center + (bip.axis,)] = 1.0 - 2.0 * perr
    values = np.sqrt((comps ** 2).sum(axis=-1))
    ns = mf.n_samples.reshape(grid.shape)
    return IndicatorField(grid, "2", values, ns, np.zeros(grid.shape, dtype=np.int64),
                          np.zeros(grid.shape, dtype=bool),
                          {"l": l, "metric": metric, "prior": prior}, components=comps)


# --- scheme 3 ----------------------------------------------------------------

def mean_prediction_curve(models, line: Sequence[Index], axis: int, estimator="exact",
                          grid: ParameterGrid | None = None, rng=None) -> PosteriorCurve:
    """γ̂_i(γ) and σ_i(γ) along one grid line, every point of the line its own class."""
    mf = ModelField.of(grid, models, estimator, rng)
    line = [tuple(p) for p in line]
    rows = mf.rows(line)
    targets = np.array([mf.grid.axes[axis][p[axis]] for p in line])
    # extended precision: the σ division amplifies rounding in γ̂ where σ is small
    post, ok = posterior_table(mf.stack.probs[rows].astype(np.longdouble))
    pred = targets.astype(np.longdouble) @ post[:, ok]  # γ̂(x) for supported keys
    w = mf.weights[rows][:, ok].astype(np.longdouble)
    kept = w.sum(axis=1)
    mean = (w @ pred) / kept
    var = (w * (pred[None, :] - mean[:, None]) ** 2).sum(axis=1) / kept
    std = np.sqrt(np.maximum(var, 0.0)).astype(float)
    mean = mean.astype(float)
    dropped = np.array([mf.dropped_count(i, ok) for i in rows], dtype=np.int64)
    return PosteriorCurve(points=line, labels=list(range(1, len(line) + 1)), mean=mean, std=std,
                          n_samples=mf.n_samples[rows].copy(), n_dropped=dropped)


def indicator3(grid: ParameterGrid, models, estimator="exact", mode: str = "normalized", rng=None) -> IndicatorField:
    """I₃ (``mode="normalized"``) or I₃′ (``"unnormalized"``) from per-axis line scans."""
    if mode not in ("normalized", "unnormalized"):
        raise ValueError(f"unknown mode {mode!r}")
    for i, a in enumerate(grid.axes):
        if a.size < 2:
            raise GridError(f"axis {i} has fewer than 2 points; derivative undefined")
    mf = ModelField.of(grid, models, estimator, rng)
    comps = np.zeros(grid.shape + (grid.dims,))
    flags = np.zeros(grid.shape, dtype=bool)
    dropped = np.zeros(grid.shape, dtype=np.int64)
    mean = np.zeros(grid.shape + (grid.dims,))
    std = np.zeros(grid.shape + (grid.dims,))
    for axis in range(grid.dims):
        a = grid.axes[axis]
        tol = SIGMA_RTOL * (a[-1] - a[0])
        for line in grid.lines(axis):
            curve = mean_prediction_curve(mf, line, axis)
            deriv = finite_difference(curve.mean, a)
            for k, p in enumerate(line):
                mean[p + (axis,)] = curve.mean[k]
                std[p + (axis,)] = curve.std[k]
                dropped[p] = max(dropped[p], curve.n_dropped[k])
                if mode == "unnormalized":
                    comps[p + (axis,)] = deriv[k]
                elif curve.std[k] > tol:
                    comps[p + (axis,)] = deriv[k] / curve.std[k]
                else:
                    flags[p] = True
    values = np.sqrt((comps ** 2).sum(axis=-1))
    scheme = "3" if mode == "normalized" else "3prime"
    return IndicatorField(grid, scheme, values, mf.n_samples.reshape(grid.shape), dropped, flags,
                          {"mode": mode, "n_sigma_zero": int(flags.sum())}, components=comps)


# --- log-derivative cross-checks for exactly enumerable models ----------------

ScoreFn = Callable[[int], np.ndarray]


def indicator1_score_form(mf: ModelField, scheme: LabelScheme, score: ScoreFn) -> np.ndarray:
    """I₁ via 𝔼[P(y|x) ∇ ln P(x|γ)]; ``score(row)`` returns ``(n_keys, d)`` scores at that point."""
    rows = [mf.rows(pts) for pts in scheme.classes.values()]
    post, _ = posterior_table(class_conditionals(mf.stack, rows))
    out = np.empty(mf.grid.size)
    for r in range(mf.grid.size):
        p = mf.stack.probs[r]
        g = (post * p) @ score(r)  # (n_classes, d)
        out[r] = np.linalg.norm(g, axis=1).sum() / len(rows)
    return out.reshape(mf.grid.shape)


def indicator3_score_form(mf: ModelField, score: ScoreFn, mode: str = "normalized") -> np.ndarray:
    """I₃ via 𝔼[γ̂(x) ∂_i ln P(x|γ)] / σ_i, element-wise from each line's own classes."""
    grid = mf.grid
    comps = np.zeros(grid.shape + (grid.dims,))
    for axis in range(grid.dims):
        for line in grid.lines(axis):
            rows = mf.rows(line)
            targets = np.array([grid.axes[axis][p[axis]] for p in line])
            post, ok = posterior_table(mf.stack.probs[rows])
            pred = np.where(ok, targets @ post, 0.0)
            for k, p in enumerate(line):
                prob = mf.stack.probs[rows[k]]
                d = float((prob * pred) @ score(rows[k])[:, axis])
                if mode == "normalized":
                    m = prob @ pred
                    s = np.sqrt(max(prob @ (pred - m) ** 2, 0.0))
                    d = d / s if s > 0 else 0.0
                comps[p + (axis,)] = d
    return np.sqrt((comps ** 2).sum(axis=-1))


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()
