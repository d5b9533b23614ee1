"""Bayes-rule classifiers built from per-point generative models."""
from __future__ import annotations

import math
from collections import Counter
from typing import Mapping, Sequence

import numpy as np

from .grid import Index, LabelScheme
from .models import ModelStack, OutOfSupportError


class GenerativeClassifier:
    """P(y|x) from class-conditionals P(x|y) = (1/|Γ_y|) Σ_{γ∈Γ_y} P̃(x|γ)."""

    def __init__(self, scheme: LabelScheme, models: Mapping[Index, object]):
        missing = [p for p in scheme.points() if p not in models]
        if missing:
            raise KeyError(f"no model for grid point(s) {missing[:5]}")
        self.scheme = scheme
        self.models = models

    def class_likelihoods(self, x) -> dict:
        return {
            y: math.fsum(self.models[g].prob(x) for g in pts) / len(pts)
            for y, pts in self.scheme.classes.items()
        }

    def _normalize(self, weights: dict, x) -> dict:
        z = math.fsum(weights.values())
        if z <= 0:
            raise OutOfSupportError(f"outcome {x!r} has zero probability under every class")
        return {y: w / z for y, w in weights.items()}

    def posterior(self, x) -> dict:
        """Uniform prior P(y) = 1/|𝒴|."""
        return self._normalize(self.class_likelihoods(x), x)

    def posterior_biased(self, x) -> dict:
        """Size-proportional prior P(y) ∝ |Γ_y| (reproduces the class-imbalance pathology)."""
        sizes = self.scheme.sizes()
        lik = self.class_likelihoods(x)
        return self._normalize({y: lik[y] * sizes[y] for y in lik}, x)


def empirical_optimal_posterior(datasets: Mapping[object, Sequence], x) -> dict:
    """Closed-form minimizer of the class-balanced cross-entropy loss.

    ``P_emp(y|x) ∝ M_y(x) / |𝒟_y|`` where M_y counts ``x`` in 𝒟_y.
    """
    weights = {}
    for y, data in datasets.items():
        n = len(data)
        if n == 0:
            raise ValueError(f"dataset for class {y!r} is empty")
        weights[y] = Counter(data)[x] / n / len(datasets)
    z = math.fsum(weights.values())
    if z == 0:
        raise OutOfSupportError(f"outcome {x!r} appears in no dataset")
    return {y: w / z for y, w in weights.items()}


def class_conditionals(stack: ModelStack, rows: Sequence[Sequence[int]]) -> np.ndarray:
    """``(n_classes, n_keys)`` mixtures, one row per class, each the mean over its stack rows.

    Sums run in extended precision so that a class of identical models
    reproduces that model bit for bit (flat fields then give exact zeros).
    """
    out = np.empty((len(rows), stack.n_keys))
    for c, r in enumerate(rows):
        r = list(r)
        if len(r) == 1:
            out[c] = stack.probs[r[0]]
            continue
        out[c] = stack.probs[r].sum(axis=0, dtype=np.longdouble) / len(r)
    return out


def posterior_table(cond: np.ndarray, prior: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Bayes rule over all keys.

    Returns ``(post, ok)`` with ``post[c, k] = P(c | key_k)`` and ``ok[k]`` false
    where every class assigns zero probability (those columns are zero).
    """
    w = cond if prior is None else cond * prior[:, None]
    z = w.sum(axis=0)
    ok = z > 0
    post = np.zeros_like(w)
    post[:, ok] = w[:, ok] / z[ok]
    return post, ok
