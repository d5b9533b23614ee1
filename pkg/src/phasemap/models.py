"""Generative models P̃(x|γ): histogram (empirical) and exact-table backends.

Outcome keys are any hashable, totally ordered values. Integer keys held in
numpy arrays take vectorized fast paths; tuples of ints (e.g. sufficient
statistics) go through plain dicts.
"""
from __future__ import annotations

import math
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Protocol, Sequence, runtime_checkable

import numpy as np

NORM_TOL = 1e-9


class ModelError(ValueError):
    pass


class OutOfSupportError(ValueError):
    """An outcome has zero probability under every class model."""


class CorruptModelFileError(ModelError):
    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}")
        self.path = str(path)


@runtime_checkable
class GenerativeModel(Protocol):
    def prob(self, x) -> float: ...

    def sample(self, rng: np.random.Generator, n: int): ...

    def support(self) -> Iterator[tuple[object, float]] | None: ...


def _is_int_array(keys) -> bool:
    return isinstance(keys, np.ndarray) and keys.ndim == 1 and np.issubdtype(keys.dtype, np.integer)


class TableModel:
    """Probability table over a finite sorted support.

    ``keys`` is either a 1-D integer array or a list of hashable keys. Zero
    entries are allowed in the table but never reported by ``support()``.
    """

    def __init__(self, keys, probs):
        probs = np.asarray(probs, dtype=float)
        if _is_int_array(keys):
            keys = np.asarray(keys, dtype=np.int64)
            order = np.argsort(keys, kind="stable")
            keys = keys[order]
            if keys.size > 1 and np.any(keys[1:] == keys[:-1]):
                raise ModelError("duplicate outcome keys")
        else:
            keys = list(keys)
            if len(set(keys)) != len(keys):
                raise ModelError("duplicate outcome keys")
            order = sorted(range(len(keys)), key=keys.__getitem__)
            keys = [keys[i] for i in order]
            order = np.asarray(order, dtype=np.int64)
        if probs.shape != (len(keys),):
            raise ModelError("keys and probabilities differ in length")
        if len(keys) == 0:
            raise ModelError("empty support")
        self._keys = keys
        self._order = order
        self._probs = probs[order]
        self._probs.setflags(write=False)
        self._index = None
        self._cdf = None

    @property
    def keys(self):
        return self._keys

    @property
    def probs(self) -> np.ndarray:
        return self._probs

    def table(self):
        return self._keys, self._probs

    def _lookup(self) -> dict:
        if self._index is None:
            keys = self._keys.tolist() if isinstance(self._keys, np.ndarray) else self._keys
            self._index = {k: i for i, k in enumerate(keys)}
        return self._index

    def prob(self, x) -> float:
        if isinstance(self._keys, np.ndarray):
            i = int(np.searchsorted(self._keys, x))
            if i < self._keys.size and self._keys[i] == x:
                return float(self._probs[i])
            return 0.0
        i = self._lookup().get(x)
        return 0.0 if i is None else float(self._probs[i])

    def support(self) -> Iterator[tuple[object, float]]:
        for i in np.flatnonzero(self._probs > 0):
            k = self._keys[i]
            yield (int(k) if isinstance(self._keys, np.ndarray) else k), float(self._probs[i])

    def sample_indices(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Inverse-CDF draw of ``n`` positions into the sorted table."""
        if self._cdf is None:
            cdf = np.cumsum(self._probs)
            self._cdf = cdf / cdf[-1]
        u = rng.random(n)
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, len(self._cdf) - 1)

    def sample(self, rng: np.random.Generator, n: int = 1):
        idx = self.sample_indices(rng, n)
        if isinstance(self._keys, np.ndarray):
            return self._keys[idx]
        return [self._keys[i] for i in idx]

    def __len__(self) -> int:
        return len(self._keys)


class ExactModel(TableModel):
    def __init__(self, keys, probs, tol: float = NORM_TOL):
        super().__init__(keys, probs)
        if np.any(self._probs < 0):
            raise ModelError("negative probability")
        dev = abs(float(self._probs.sum()) - 1.0)
        if dev > tol:
            raise ModelError(f"probabilities sum to 1 {'+' if self._probs.sum() > 1 else '-'} {dev:.3e}")

    def __repr__(self):
        return f"ExactModel(n_outcomes={len(self)})"


class HistogramModel(TableModel):
    """Empirical distribution M(x)/|D|."""

    def __init__(self, keys, counts):
        counts = np.asarray(counts, dtype=np.int64)
        if np.any(counts < 0):
            raise ModelError("negative count")
        total = int(counts.sum())
        if total <= 0:
            raise ModelError("histogram with no samples")
        super().__init__(keys, counts / total)
        self._counts = counts[self._order]
        self.total = total

    @property
    def counts(self) -> dict:
        keys = self._keys.tolist() if isinstance(self._keys, np.ndarray) else self._keys
        return dict(zip(keys, self._counts.tolist()))

    def prob_exact(self, x) -> Fraction:
        i = self._lookup().get(int(x) if isinstance(self._keys, np.ndarray) else x)
        return Fraction(0) if i is None else Fraction(int(self._counts[i]), self.total)

    def __repr__(self):
        return f"HistogramModel(total={self.total}, n_outcomes={len(self)})"


def _rows_to_keys(samples):
    """Normalize a sample collection: 2-D int arrays become row tuples."""
    if isinstance(samples, np.ndarray):
        if samples.ndim == 2:
            return [tuple(int(v) for v in row) for row in samples]
        if np.issubdtype(samples.dtype, np.integer):
            return samples.astype(np.int64)
        return list(samples.tolist())
    return list(samples)


def histogram_fit(samples) -> HistogramModel:
    """Histogram of the given outcomes."""
    if isinstance(samples, np.ndarray) and samples.ndim == 2 and samples.size:
        uniq, counts = np.unique(samples, axis=0, return_counts=True)
        return HistogramModel([tuple(int(v) for v in row) for row in uniq], counts)
    keys = _rows_to_keys(samples)
    if len(keys) == 0:
        raise ModelError("cannot fit a histogram to an empty sample list")
    if isinstance(keys, np.ndarray):
        uniq, counts = np.unique(keys, return_counts=True)
        return HistogramModel(uniq, counts)
    tally: dict = {}
    for k in keys:
        tally[k] = tally.get(k, 0) + 1
    return HistogramModel(list(tally), list(tally.values()))


def exact_model(support_probs: Iterable[tuple[object, float]]) -> ExactModel:
    pairs = list(support_probs)
    if not pairs:
        raise ModelError("empty support")
    keys, probs = zip(*pairs)
    return ExactModel(list(keys), np.array(probs, dtype=float))


def _support_dict(m) -> dict:
    sup = m.support() if hasattr(m, "support") else None
    if sup is None:
        raise ModelError(f"{m!r} does not expose support()")
    out: dict = {}
    for k, p in sup:
        out[k] = out.get(k, 0.0) + p
    return out


def model_tv_distance(p, q) -> float:
    """Total-variation distance ½ Σ|p(x) − q(x)| over the union of supports."""
    a, b = _support_dict(p), _support_dict(q)
    keys = sorted(set(a) | set(b))
    return 0.5 * math.fsum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in keys)


def empirical_tv(samples, model) -> float:
    """TV distance between the histogram of ``samples`` and ``model``."""
    return model_tv_distance(histogram_fit(samples), model)


class ModelStack:
    """Models of one run placed on a common key axis: ``probs[m, k] = P̃(key_k | model m)``."""

    def __init__(self, keys, probs: np.ndarray):
        self.keys = keys
        self.probs = probs
        self._index = None

    @classmethod
    def from_models(cls, models: Sequence) -> "ModelStack":
        tables = []
        for m in models:
            if not hasattr(m, "table"):
                sup = m.support()
                if sup is None:
                    raise ModelError(f"{m!r} does not expose support()")
                m = exact_model(sup)
            tables.append(m.table())
        if all(_is_int_array(k) for k, _ in tables):
            first = tables[0][0]
            if all(k.shape == first.shape and np.array_equal(k, first) for k, _ in tables):
                return cls(first, np.stack([p for _, p in tables]))
            keys = np.unique(np.concatenate([k for k, _ in tables]))
            probs = np.zeros((len(tables), keys.size))
            for i, (k, p) in enumerate(tables):
                probs[i, np.searchsorted(keys, k)] = p
            return cls(keys, probs)
        def norm(k):
            return k.tolist() if isinstance(k, np.ndarray) else k
        keys = sorted(set().union(*(set(norm(k)) for k, _ in tables)))
        index = {k: i for i, k in enumerate(keys)}
        probs = np.zeros((len(tables), len(keys)))
        for i, (k, p) in enumerate(tables):
            probs[i, [index[x] for x in norm(k)]] = p
        return cls(keys, probs)

    @property
    def n_keys(self) -> int:
        return len(self.keys)

    def columns(self, outcomes) -> np.ndarray:
        """Column positions of ``outcomes``; -1 for keys outside the stack."""
        if isinstance(self.keys, np.ndarray):
            out = np.asarray(outcomes, dtype=np.int64)
            pos = np.searchsorted(self.keys, out)
            pos = np.minimum(pos, self.keys.size - 1)
            return np.where(self.keys[pos] == out, pos, -1)
        if self._index is None:
            self._index = {k: i for i, k in enumerate(self.keys)}
        return np.array([self._index.get(k, -1) for k in _rows_to_keys(outcomes)], dtype=np.int64)


# --- serialization -----------------------------------------------------------

def format_key(k) -> str:
    if isinstance(k, (tuple, list)):
        return ",".join(str(int(v)) for v in k)
    return str(k)


def parse_key(s: str):
    if "," in s:
        return tuple(int(v) for v in s.split(","))
    try:
        return int(s)
    except ValueError:
        return s


def write_histogram(path, model: HistogramModel) -> None:
    lines = [f"# total\t{model.total}"]
    lines += [f"{format_key(k)}\t{c}" for k, c in model.counts.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_histogram(path) -> HistogramModel:
    total = None
    keys, counts = [], []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "total":
                total = int(parts[1])
            continue
        try:
            k, c = line.split("\t")
            keys.append(parse_key(k))
            counts.append(int(c))
        except ValueError:
            raise CorruptModelFileError(path, f"line {n}: expected key<TAB>count") from None
    if total is None:
        raise CorruptModelFileError(path, "missing total header")
    if total != sum(counts):
        raise CorruptModelFileError(path, f"header total {total} != sum of counts {sum(counts)}")
    return HistogramModel(keys, counts)


def write_exact(path, model: TableModel) -> None:
    lines = [f"{format_key(k)}\t{p:.17g}" for k, p in model.support()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_exact(path) -> ExactModel:
    pairs = []
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            k, p = line.split("\t")
            pairs.append((parse_key(k), float(p)))
    try:
        return exact_model(pairs)
    except ModelError as e:
        raise CorruptModelFileError(path, str(e)) from None
