import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasemap import ising
from phasemap.grid import Bipartition, ParameterGrid, make_scheme1_labels
from phasemap.indicators import (ModelField, Sampled, class_posterior_field, error_probability, indicator1,
                                 indicator1_score_form, indicator2, indicator3, indicator3_score_form,
                                 mean_prediction_curve, tv_error_probability)
from phasemap.models import ExactModel


def table(p):
    p = np.asarray(p, dtype=float)
    return ExactModel(np.arange(p.size, dtype=np.int64), p / p.sum())


def flat_models(grid, p=(0.1, 0.2, 0.3, 0.4)):
    return [table(p) for _ in range(grid.size)]


def regimes_1d(n, k):
    """Points 0..k use key 0, points k+1.. use key 1."""
    return [table([1.0, 0.0]) if i <= k else table([0.0, 1.0]) for i in range(n)]


def ising_field(n=6, L=3, span=(0.05, 0.9)):
    a = np.linspace(*span, n)
    g = ParameterGrid((a, a))
    return g, ModelField(g, [ising.boltzmann_model(g.coords(i), L, "stat") for i in g.indices()])


def stat_score(mf):
    X = np.array(mf.stack.keys, dtype=float)

    def score(r):
        # ∇_γ ln P(X|γ) = −X + ⟨X⟩_γ for P ∝ g(X) e^{−γ·X}
        return -X + mf.stack.probs[r] @ X
    return score


# --- scheme 1 -----------------------------------------------------------------------

def test_class_posterior_identical_models():
    g = ParameterGrid.from_ranges([(0, 1, 5), (0, 1, 5)])
    s = make_scheme1_labels(g, [(1, [[0, 0]]), (2, [[1, 1]]), (3, [[0.5, 0.5]])])
    c = class_posterior_field(flat_models(g), s, grid=g)
    np.testing.assert_allclose(c.posterior, 1 / 3, atol=1e-15)


def test_class_posterior_disjoint():
    g = ParameterGrid.from_ranges([(0, 1, 4)])
    s = make_scheme1_labels(g, [("a", [[0.0]]), ("b", [[1.0]])])
    c = class_posterior_field(regimes_1d(4, 1), s, grid=g)
    assert c.posterior[0, 0] == 1.0


def test_class_posterior_sampled_within_standard_errors():
    a = np.array([0.1, 0.3, 0.45, 0.6, 0.8])
    g = ParameterGrid((a, a))
    models = [ising.boltzmann_model(g.coords(i), 3, "config") for i in g.indices()]
    s = make_scheme1_labels(g, [(1, [[0.1, 0.1]]), (2, [[0.8, 0.8]])])
    exact_mf = ModelField(g, models)
    exact = class_posterior_field(exact_mf, s)
    n = 10**5
    samp = class_posterior_field(ModelField(g, models, Sampled(n, seed=3)), s)
    # per-point standard error of the mean of P(1|x) under P(x|γ)
    from phasemap.classifier import class_conditionals, posterior_table
    post, _ = posterior_table(class_conditionals(exact_mf.stack, [exact_mf.rows(p) for p in s.classes.values()]))
    p1 = post[0]
    var = exact_mf.weights @ p1 ** 2 - (exact_mf.weights @ p1) ** 2
    se = np.sqrt(np.maximum(var, 0) / n)
    assert np.all(np.abs(samp.posterior[:, 0] - exact.posterior[:, 0]) <= 3 * se + 1e-12)


def test_indicator1_constant_is_zero():
    g = ParameterGrid.from_ranges([(0, 1, 5), (0, 1, 4)])
    s = make_scheme1_labels(g, [(1, [[0, 0]]), (2, [[1, 1]])])
    f = indicator1(class_posterior_field(flat_models(g), s, grid=g), g)
    assert np.all(f.values == 0)


def test_indicator1_step_single_interior_max():
    n = 21
    g = ParameterGrid.from_ranges([(0, 1, n)])
    w = np.clip(np.arange(n) - 9.5, -0.5, 0.5) + 0.5  # step smoothed over one cell
    models = [table([1 - t + 1e-3, t + 1e-3]) for t in w]
    s = make_scheme1_labels(g, [(1, [[0.0]]), (2, [[1.0]])])
    v = indicator1(class_posterior_field(models, s, grid=g), g).values
    top = np.flatnonzero(v == v.max())
    assert set(top) <= {9, 10} and 0 < top[0] < n - 1
    assert np.all(v[:8] < 1e-12) and np.all(v[12:] < 1e-12)


def test_indicator1_needs_two_points_per_axis():
    g = ParameterGrid((np.array([0.0]), np.array([0.0, 1.0])))
    s = make_scheme1_labels(g, [(1, [[0, 0]]), (2, [[0, 1]])])
    with pytest.raises(ValueError):
        indicator1(class_posterior_field(flat_models(g), s, grid=g), g)


def _score_form_errors(fd_fn, score_fn, sizes=(17, 33)):
    out = []
    for n in sizes:
        g, mf = ising_field(n)
        ref = score_fn(g, mf)
        out.append(float(np.max(np.abs(fd_fn(g, mf) - ref)[1:-1, 1:-1]) / np.max(np.abs(ref))))
    return out


def _corner_scheme(g):
    a = g.axes[0]
    return make_scheme1_labels(g, [(1, [[a[0], a[0]]]), (2, [[a[-1], a[-1]]]), (3, [[a[0], a[-1]]])])


def test_indicator1_matches_score_form():
    e1, e2 = _score_form_errors(
        lambda g, mf: indicator1(class_posterior_field(mf, _corner_scheme(g)), g).values,
        lambda g, mf: indicator1_score_form(mf, _corner_scheme(g), stat_score(mf)))
    # halving Δ cuts the central-difference error by about 4
    assert e2 < 0.01 and e2 < e1 / 3


@pytest.mark.parametrize("mode", ["normalized", "unnormalized"])
def test_indicator3_matches_score_form(mode):
    e1, e2 = _score_form_errors(lambda g, mf: indicator3(g, mf, mode=mode).values,
                                lambda g, mf: indicator3_score_form(mf, stat_score(mf), mode))
    assert e2 < 0.01 and e2 < e1 / 3


# --- scheme 2 -----------------------------------------------------------------------

def _bip(n_left=1, n_right=1):
    g = ParameterGrid.from_ranges([(0, 1, n_left + n_right)])
    left = tuple((i,) for i in range(n_left))
    right = tuple((i,) for i in range(n_left, n_left + n_right))
    return g, Bipartition(left[-1], 0, max(n_left, n_right), left, right)


def test_error_probability_limits():
    g, b = _bip()
    assert error_probability(b, [table([1, 2]), table([1, 2])], grid=g) == pytest.approx(0.5, abs=1e-15)
    assert error_probability(b, regimes_1d(2, 0), grid=g) == 0.0
    g, b = _bip(2, 0)
    with pytest.raises(ValueError):
        error_probability(b, flat_models(g), grid=g)


pair = st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.lists(st.floats(0, 1), min_size=n, max_size=n).filter(lambda v: sum(v) > 0.01),
    st.lists(st.floats(0, 1), min_size=n, max_size=n).filter(lambda v: sum(v) > 0.01)))


@given(pair)
def test_error_probability_tv_identity(pq):
    p, q = (table(v) for v in pq)
    g, b = _bip()
    perr = error_probability(b, [p, q], grid=g)
    assert 0 <= perr <= 0.5
    assert abs(perr - tv_error_probability(p, q)) <= 1e-12


def test_indicator2_flat_is_zero_including_edges():
    g = ParameterGrid.from_ranges([(0, 1, 7), (0, 1, 5)])
    for l in (1, 3, 7):
        assert np.all(indicator2(g, flat_models(g), l).values == 0)


def test_indicator2_disjoint_regimes():
    g = ParameterGrid.from_ranges([(0, 1, 10)])
    v = indicator2(g, regimes_1d(10, 4), 1).values
    expect = np.zeros(10)
    expect[4] = 1.0  # bipartition {4} | {5}
    # the point 3 split {3} | {4} and 5 split {5} | {6} see identical sides
    np.testing.assert_array_equal(v, expect)


def test_indicator2_biased_prior_edge_pathology():
    g = ParameterGrid.from_ranges([(0, 1, 11)])
    f = indicator2(g, flat_models(g), 11, prior="biased")
    assert f.values[-1] == 1.0  # right side empty: the populated class always wins
    assert indicator2(g, flat_models(g), 11).values[-1] == 0.0


@settings(max_examples=20)
@given(st.integers(2, 5), st.integers(2, 5), st.integers(1, 4), st.integers(0, 10**6))
def test_indicator2_bounds(n1, n2, l, seed):
    rng = np.random.default_rng(seed)
    g = ParameterGrid.from_ranges([(0, 1, n1), (0, 1, n2)])
    models = [table(rng.dirichlet(np.ones(6)) + 1e-3) for _ in range(g.size)]
    f = indicator2(g, models, l)
    assert np.all(f.components >= -1e-12) and np.all(f.components <= 1 + 1e-12)
    assert np.all(f.values <= np.sqrt(2) + 1e-12)


# --- scheme 3 -----------------------------------------------------------------------

def test_mean_prediction_single_point():
    g = ParameterGrid((np.array([0.4]),))
    c = mean_prediction_curve([table([1, 1])], [(0,)], 0, grid=g)
    assert c.mean[0] == pytest.approx(0.4) and c.std[0] == 0.0


def test_mean_prediction_identical_models():
    g = ParameterGrid.from_ranges([(0, 2, 5)])
    c = mean_prediction_curve(flat_models(g), list(g.indices()), 0, grid=g)
    np.testing.assert_allclose(c.mean, 1.0, atol=1e-15)


def test_mean_prediction_disjoint_regimes():
    g = ParameterGrid.from_ranges([(0, 4, 5)])
    c = mean_prediction_curve(regimes_1d(5, 1), list(g.indices()), 0, grid=g)
    # regime {0,1} averages to 0.5, regime {2,3,4} to 3
    np.testing.assert_allclose(c.mean, [0.5, 0.5, 3, 3, 3], atol=1e-15)
    np.testing.assert_allclose(c.std, 0.0, atol=1e-15)


def test_indicator3_flat_zero_and_sigma_flags():
    g = ParameterGrid.from_ranges([(0, 1, 6), (0, 1, 4)])
    for mode in ("normalized", "unnormalized"):
        assert np.all(indicator3(g, flat_models(g), mode=mode).values == 0)
    h = ParameterGrid.from_ranges([(0, 4, 5)])
    f = indicator3(h, regimes_1d(5, 1))
    assert f.flags.all() and f.metadata["n_sigma_zero"] == 5
    assert np.all(np.isfinite(f.values))


# --- properties ---------------------------------------------------------------------

def _random_field(rng, n_keys=8):
    g = ParameterGrid.from_ranges([(0, 1, 4), (0, 1, 3)])
    return g, [table(rng.dirichlet(np.ones(n_keys)) + 1e-3) for _ in range(g.size)]


@settings(max_examples=15)
@given(st.integers(0, 10**6))
def test_invariance_under_key_permutation(seed):
    rng = np.random.default_rng(seed)
    g, models = _random_field(rng)
    perm = rng.permutation(8)
    permuted = [ExactModel(np.arange(8, dtype=np.int64), m.probs[perm]) for m in models]
    s = make_scheme1_labels(g, [(1, [[0, 0]]), (2, [[1, 1]])])
    s_swapped = make_scheme1_labels(g, [(2, [[1, 1]]), (1, [[0, 0]])])
    for a, b in [
        (indicator1(class_posterior_field(models, s, grid=g), g),
         indicator1(class_posterior_field(permuted, s_swapped, grid=g), g)),
        (indicator2(g, models, 2), indicator2(g, permuted, 2)),
        (indicator3(g, models), indicator3(g, permuted)),
    ]:
        np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_sampled_estimators_converge():
    g, mf = ising_field(5)
    models = mf.models
    s = make_scheme1_labels(g, [(1, [[0.05, 0.05]]), (2, [[0.9, 0.9]])])
    fns = [
        lambda f: indicator1(class_posterior_field(f, s), g).values,
        lambda f: indicator2(g, f, 1).values,
        lambda f: indicator3(g, f).values,
    ]
    for fn in fns:
        exact = fn(mf)
        dev = []
        for n in (10**3, 10**5):
            dev.append(np.max(np.abs(fn(ModelField(g, models, Sampled(n, seed=11))) - exact)))
        assert dev[1] < dev[0]


def test_indicator_csv_format(tmp_path):
    g = ParameterGrid.from_ranges([(0, 1, 3)], names=["t"])
    f = indicator2(g, regimes_1d(3, 0), 1)
    f.write_csv(tmp_path / "i2.csv", "abc")
    lines = (tmp_path / "i2.csv").read_text().splitlines()
    assert lines[0] == "# config_sha256=abc"
    assert lines[1] == "t,value,n_samples,n_dropped"
    assert lines[2] == "0,1,0,0"
    assert f.sidecar()["l"] == 1
