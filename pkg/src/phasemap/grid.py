"""Sampled parameter space and the three labeling schemes.

Grid points are addressed by integer multi-indices so that set membership is
exact; float coordinates are only produced on demand.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

Index = tuple[int, ...]


class GridError(ValueError):
    """Invalid grid specification or a point that does not lie on the grid."""


@dataclass(frozen=True, eq=False)
class ParameterGrid:
    """Uniform-or-not rectangular grid Γ, the Cartesian product of its axes."""

    axes: tuple[np.ndarray, ...]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.axes:
            raise GridError("grid needs at least one axis")
        axes = []
        for i, a in enumerate(self.axes):
            a = np.asarray(a, dtype=float)
            if a.ndim != 1 or a.size == 0:
                raise GridError(f"axis {i} must be a nonempty 1-D sequence")
            if a.size > 1 and not np.all(np.diff(a) > 0):
                raise GridError(f"axis {i} is not strictly increasing")
            a.setflags(write=False)
            axes.append(a)
        object.__setattr__(self, "axes", tuple(axes))
        names = tuple(self.names) or tuple(f"gamma{i + 1}" for i in range(len(axes)))
        if len(names) != len(axes):
            raise GridError("one name per axis required")
        object.__setattr__(self, "names", names)

    @classmethod
    def from_ranges(cls, ranges: Sequence[tuple[float, float, int]], names: Sequence[str] = ()) -> "ParameterGrid":
        """Build from per-axis ``(min, max, count)`` triples."""
        axes = []
        for i, (lo, hi, n) in enumerate(ranges):
            n = int(n)
            if n < 1:
                raise GridError(f"axis {i}: count must be >= 1, got {n}")
            if n > 1 and not hi > lo:
                raise GridError(f"axis {i}: max must exceed min")
            axes.append(np.linspace(lo, hi, n) if n > 1 else np.array([float(lo)]))
        return cls(tuple(axes), tuple(names))

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def indices(self) -> Iterator[Index]:
        """All multi-indices in C order (last axis fastest)."""
        return itertools.product(*(range(n) for n in self.shape))

    def flat(self, idx: Index) -> int:
        return int(np.ravel_multi_index(idx, self.shape))

    def unflat(self, k: int) -> Index:
        return tuple(int(i) for i in np.unravel_index(k, self.shape))

    def coords(self, idx: Index) -> tuple[float, ...]:
        return tuple(float(a[i]) for a, i in zip(self.axes, idx))

    def coord_array(self) -> np.ndarray:
        """``(size, dims)`` array of coordinates in C order."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def spacing(self, axis: int) -> float:
        a = self.axes[axis]
        if a.size < 2:
            raise GridError(f"axis {axis} has a single value; spacing undefined")
        return float(a[1] - a[0])

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        for a in self.axes:
            if a.size > 2:
                d = np.diff(a)
                if not np.allclose(d, d[0], rtol=rtol, atol=0):
                    return False
        return True

    def snap(self, point: Sequence[float]) -> Index:
        """Nearest grid point, accepted only within half a spacing on every axis."""
        if len(point) != self.dims:
            raise GridError(f"point {tuple(point)} has {len(point)} coordinates, grid has {self.dims}")
        idx = []
        for i, (a, v) in enumerate(zip(self.axes, point)):
            k = int(np.argmin(np.abs(a - v)))
            if a.size > 1:
                # local half-spacing; tolerate rounding at exactly half
                nb = [abs(a[j] - a[k]) for j in (k - 1, k + 1) if 0 <= j < a.size]
                tol = 0.5 * min(nb) * (1 + 1e-9)
            else:
                tol = 1e-9 * max(1.0, abs(a[0]))
            if abs(a[k] - v) > tol:
                raise GridError(f"coordinate {v!r} on axis {i} ({self.names[i]}) is not on the grid")
            idx.append(k)
        return tuple(idx)

    def line(self, axis: int, idx: Index) -> list[Index]:
        """Grid points on the line through ``idx`` along ``axis``."""
        out = []
        for k in range(self.shape[axis]):
            j = list(idx)
            j[axis] = k
            out.append(tuple(j))
        return out

    def lines(self, axis: int) -> Iterator[list[Index]]:
        """Every grid line along ``axis``."""
        others = [range(n) if i != axis else range(1) for i, n in enumerate(self.shape)]
        for base in itertools.product(*others):
            yield self.line(axis, base)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "axes": [a.tolist() for a in self.axes]}


@dataclass(frozen=True, eq=False)
class LabelScheme:
    """Labeling {Γ_y} with uniform prior P(y) and uniform P(γ|y) on each Γ_y."""

    classes: dict  # label -> tuple[Index, ...], insertion order fixes label order
    kind: str = "custom"
    targets: dict = field(default_factory=dict)  # label -> coordinate vector (scheme 3)

    def __post_init__(self):
        if not self.classes:
            raise GridError("a label scheme needs at least one class")
        for y, pts in self.classes.items():
            if len(pts) == 0:
                raise GridError(f"class {y!r} is empty")

    @property
    def labels(self) -> list:
        return list(self.classes)

    def __len__(self) -> int:
        return len(self.classes)

    def sizes(self) -> dict:
        return {y: len(p) for y, p in self.classes.items()}

    def prior(self, y) -> float:
        if y not in self.classes:
            raise KeyError(y)
        return 1.0 / len(self.classes)

    def biased_prior(self, y) -> float:
        """Size-proportional prior |Γ_y| / Σ|Γ_y'|."""
        total = sum(len(p) for p in self.classes.values())
        return len(self.classes[y]) / total

    def conditional(self, y, idx: Index) -> float:
        pts = self.classes[y]
        return 1.0 / len(pts) if tuple(idx) in set(pts) else 0.0

    def points(self) -> list[Index]:
        """Every grid point used by some class, deduplicated, in first-seen order."""
        seen = {}
        for pts in self.classes.values():
            for p in pts:
                seen.setdefault(tuple(p), None)
        return list(seen)


@dataclass(frozen=True)
class Bipartition:
    """Local split at ``center`` along ``axis``: left ≤ center, right > center."""

    center: Index
    axis: int
    window: int
    left: tuple[Index, ...]
    right: tuple[Index, ...]

    @property
    def degenerate(self) -> bool:
        return not self.left or not self.right

    def scheme(self) -> LabelScheme:
        if self.degenerate:
            raise GridError(f"bipartition at {self.center} along axis {self.axis} has an empty side")
        return LabelScheme({1: self.left, 2: self.right}, kind="bipartition")


def make_scheme1_labels(grid: ParameterGrid, reps: Iterable[tuple[object, Sequence[Sequence[float]]]]) -> LabelScheme:
    """Classes made of representative points, given as coordinates and snapped to the grid."""
    classes = {}
    for label, points in reps:
        if label in classes:
            raise GridError(f"duplicate class label {label!r}")
        snapped = []
        for p in points:
            p = tuple(np.atleast_1d(np.asarray(p, dtype=float)))
            snapped.append(grid.snap(p))
        if not snapped:
            raise GridError(f"class {label!r} is empty")
        classes[label] = tuple(dict.fromkeys(snapped))
    return LabelScheme(classes, kind="representative")


def _nearest(cands: list[Index], key, l: int) -> tuple[Index, ...]:
    return tuple(sorted(cands, key=key)[:l])


def make_scheme2_bipartitions(grid: ParameterGrid, l: int, metric: str = "axis") -> list[Bipartition]:
    """All d·|Γ| local bipartitions with at most ``l`` points per side.

    ``metric="axis"`` ranks points on the grid line through the center by
    |γ_i − γ*_i| (uniform grids); ``metric="euclidean"`` ranks every point of
    each half-space by ‖γ − γ*‖₂ (non-uniform grids).
    """
    if l < 1:
        raise GridError(f"window l must be >= 1, got {l}")
    if metric not in ("axis", "euclidean"):
        raise GridError(f"unknown metric {metric!r}")
    out = []
    coords = grid.coord_array()
    all_idx = list(grid.indices())
    for center in all_idx:
        c = np.array(grid.coords(center))
        for axis in range(grid.dims):
            if metric == "axis":
                cands = grid.line(axis, center)
                dist = {p: abs(grid.axes[axis][p[axis]] - c[axis]) for p in cands}
            else:
                cands = all_idx
                d2 = np.linalg.norm(coords - c, axis=1)
                dist = {p: d2[k] for k, p in enumerate(all_idx)}
            left = [p for p in cands if p[axis] <= center[axis]]
            right = [p for p in cands if p[axis] > center[axis]]
            key = lambda p: (dist[p], p)  # noqa: E731
            out.append(Bipartition(center, axis, l, _nearest(left, key, l), _nearest(right, key, l)))
    return out


def make_scheme3_labels(grid: ParameterGrid, points: Sequence[Index] | None = None) -> LabelScheme:
    """Every grid point (or every point of ``points``) is its own class."""
    pts = list(grid.indices()) if points is None else [tuple(p) for p in points]
    classes = {k + 1: (p,) for k, p in enumerate(pts)}
    targets = {k + 1: np.array(grid.coords(p)) for k, p in enumerate(pts)}
    return LabelScheme(classes, kind="singleton", targets=targets)
