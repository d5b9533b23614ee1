"""Oracle checks bundled with the CLI ``verify`` verb."""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from . import ising, quantum
from .classifier import GenerativeClassifier, empirical_optimal_posterior
from .grid import Bipartition, ParameterGrid, make_scheme1_labels
from .indicators import (ModelField, class_posterior_field, error_probability, indicator1, indicator2, indicator3,
                         tv_error_probability)
from .models import ExactModel, histogram_fit, model_tv_distance


def _random_task(rng, n_out):
    p = rng.dirichlet(np.ones(n_out))
    q = rng.dirichlet(np.ones(n_out))
    # exercise zero-probability outcomes too
    p[rng.random(n_out) < 0.2] = 0
    q[rng.random(n_out) < 0.2] = 0
    if p.sum() == 0:
        p[0] = 1
    if q.sum() == 0:
        q[-1] = 1
    keys = np.arange(n_out, dtype=np.int64)
    return ExactModel(keys, p / p.sum()), ExactModel(keys, q / q.sum())


def check_tv_identity(n_tasks: int = 500, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    grid = ParameterGrid((np.array([0.0, 1.0]),))
    bip = Bipartition((0,), 0, 1, ((0,),), ((1,),))
    worst = 0.0
    for _ in range(n_tasks):
        a, b = _random_task(rng, int(rng.integers(2, 30)))
        perr = error_probability(bip, [a, b], grid=grid)
        worst = max(worst, abs(perr - tv_error_probability(a, b)))
    return worst <= 1e-12, f"max |p_err - (1-TV)/2| = {worst:.3e} over {n_tasks} tasks"


def check_discriminative_generative(n_instances: int = 1000, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        k = int(rng.integers(1, 6))
        n_out = int(rng.integers(1, 21))
        data = {y: rng.integers(0, n_out, size=int(rng.integers(1, 201))).tolist() for y in range(k)}
        grid = ParameterGrid((np.arange(k, dtype=float),))
        scheme = make_scheme1_labels(grid, [(y, [[float(y)]]) for y in range(k)])
        clf = GenerativeClassifier(scheme, {(y,): histogram_fit(np.array(d, dtype=np.int64)) for y, d in data.items()})
        for x in set().union(*map(set, data.values())):
            a = empirical_optimal_posterior(data, x)
            b = clf.posterior(x)
            worst = max(worst, max(abs(a[y] - b[y]) for y in a))
    return worst <= 1e-12, f"max posterior difference {worst:.3e} over {n_instances} instances"


def sufficient_stat_equivalence(L: int = 3, n: int = 10, span=(-1.0, 1.0)) -> float:
    """Largest difference of I₁, I₂, I₃ between configuration-level and X-level exact models."""
    a = np.linspace(span[0], span[1], n)
    grid = ParameterGrid((a, a))
    full = ModelField(grid, [ising.boltzmann_model(grid.coords(i), L, "config") for i in grid.indices()])
    stat = ModelField(grid, [ising.boltzmann_model(grid.coords(i), L, "stat") for i in grid.indices()])
    reps = [("F", [[a[-1], a[-1]]]), ("A", [[a[0], a[0]]]), ("P", [[a[n // 2], a[n // 2]]])]
    scheme = make_scheme1_labels(grid, reps)
    worst = 0.0
    pairs = [
        (indicator1(class_posterior_field(full, scheme), grid), indicator1(class_posterior_field(stat, scheme), grid)),
        (indicator2(grid, full, 1), indicator2(grid, stat, 1)),
        (indicator2(grid, full, 3, prior="biased"), indicator2(grid, stat, 3, prior="biased")),
        (indicator3(grid, full), indicator3(grid, stat)),
        (indicator3(grid, full, mode="unnormalized"), indicator3(grid, stat, mode="unnormalized")),
    ]
    for f1, f2 in pairs:
        worst = max(worst, float(np.max(np.abs(f1.values - f2.values))))
    return worst


def check_sufficient_stat() -> tuple[bool, str]:
    worst = sufficient_stat_equivalence(3, 5)
    return worst <= 1e-12, f"max indicator difference config vs X: {worst:.3e}"


def check_sampler(n: int = 10**6, seed: int = 0) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    g = (0.3, 0.3)
    st, _, _, _ = ising.metropolis_chain(g, 3, n, 1000, ising.ground_state(3, g), rng)
    tv = model_tv_distance(histogram_fit(st), ising.boltzmann_model(g, 3, "stat"))
    return tv <= 0.01, f"TV(histogram, exact) = {tv:.4f} at L=3, gamma={g}, {n} samples"


def check_povm_normalization() -> tuple[bool, str]:
    worst = 0.0
    for g in [(0.2, -1.0), (0.2, 0.0), (0.5, 0.7)]:
        s = quantum.ground_state(g, 5)
        worst = max(worst, abs(quantum.povm_distribution(s).sum() - 1.0))
    return worst <= 1e-9, f"max |sum_x P(x) - 1| = {worst:.3e} at L=5"


def check_cluster_state() -> tuple[bool, str]:
    s = quantum.ground_state((0.0, 0.0), 7)
    k = quantum.stabilizer_expectations(s)
    so = quantum.string_order(s)
    dev = max(float(np.max(np.abs(k - 1))), abs(so - 1))
    return dev <= 1e-8, f"max deviation of stabilizers and string order from +1: {dev:.3e}"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "tv_identity": check_tv_identity,
    "discriminative_generative_equivalence": check_discriminative_generative,
    "ising_L3_sufficient_statistic": check_sufficient_stat,
    "ising_L3_sampler": check_sampler,
    "povm_normalization": check_povm_normalization,
    "cluster_state_stabilizers": check_cluster_state,
}


def run_checks(names=None) -> list[dict]:
    out = []
    for name, fn in CHECKS.items():
        if names is not None and name not in names:
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as e:  # a crashing oracle is a failed oracle
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.append({"name": name, "passed": bool(ok), "detail": detail, "seconds": time.perf_counter() - t0})
    return out
