import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasemap import quantum
from phasemap.models import histogram_fit, model_tv_distance

# dense Pauli matrices for an independent operator oracle
I2 = np.eye(2)
X = np.array([[0, 1], [1, 0]])
Z = np.diag([1, -1])


def site_op(L, ops):
    """Kronecker product placing ``ops[site]`` (1-based) on the chain, site 1 leftmost."""
    return _kron([ops.get(s, I2) for s in range(1, L + 1)])


def _kron(mats):
    out = np.array([[1.0]])
    for m in mats:
        out = np.kron(out, m)
    return out


def dense_h(h1, h2, L):
    H = np.zeros((2 ** L, 2 ** L))
    for i in range(1, L + 1):
        zz = {s: Z for s in (i - 1, i + 1) if 1 <= s <= L}
        H -= site_op(L, {**zz, i: X})
        H -= h1 * site_op(L, {i: X})
        H -= h2 * site_op(L, {i: X, **({i + 1: X} if i < L else {})})
    return H


def product_state(L, ket):
    v = np.array([1.0 + 0j])
    for _ in range(L):
        v = np.kron(v, ket)
    return quantum.QuantumGroundState(L, v, 0.0, 0.0)


def random_state(L, rng):
    v = rng.normal(size=2 ** L) + 1j * rng.normal(size=2 ** L)
    return quantum.QuantumGroundState(L, v / np.linalg.norm(v), 0.0, 0.0)


def test_hamiltonian_matches_kronecker_construction():
    for L in (3, 5):
        H = quantum.hamiltonian((0.37, -0.81), L)
        np.testing.assert_allclose(H, dense_h(0.37, -0.81, L), atol=1e-14)
        assert np.max(np.abs(H - H.T.conj())) == 0.0


def test_odd_length_required():
    with pytest.raises(ValueError):
        quantum.ground_state((0, 0), 4)
    with pytest.raises(ValueError):
        quantum.ground_state((0, 0), 13)


@pytest.mark.parametrize("L", [3, 5, 7])
def test_cluster_state(L):
    s = quantum.ground_state((0.0, 0.0), L)
    assert abs(np.linalg.norm(s.amplitudes) - 1) <= 1e-10
    np.testing.assert_allclose(quantum.stabilizer_expectations(s), 1.0, atol=1e-8)
    assert quantum.string_order(s) == pytest.approx(1.0, abs=1e-8)
    # the string operator equals the product of the even-site stabilizers
    prod = np.eye(2 ** L)
    for i in range(2, L, 2):
        ops = {i: X, **{s: Z for s in (i - 1, i + 1)}}
        prod = prod @ site_op(L, ops)
    S = site_op(L, {1: Z, L: Z, **{i: X for i in range(2, L, 2)}})
    np.testing.assert_allclose(prod, S, atol=1e-14)


def test_deep_paramagnet():
    s = quantum.ground_state((0.2, 5.0), 7)
    assert np.all(quantum.x_expectations(s) > 0.99)
    assert abs(quantum.string_order(s)) < 0.05


def test_energy_monotone_in_h2_and_below_product_states():
    L, h1 = 7, 0.2
    for sign in (1, -1):
        e = [quantum.ground_state((h1, sign * h), L).energy for h in np.linspace(0, 3, 7)]
        assert np.all(np.diff(e) <= 1e-12)
    # X-basis product trial states: ⟨ZXZ⟩ = 0, so their energy is classical
    for h2 in (-2.0, -0.5, 0.0, 0.5, 2.0):
        best = min(-h1 * sum(s) - h2 * (sum(a * b for a, b in zip(s, s[1:])) + s[-1])
                   for s in itertools.product([1, -1], repeat=L))
        assert quantum.ground_state((h1, h2), L).energy <= best + 1e-12


def test_variational_property():
    rng = np.random.default_rng(0)
    g = (0.4, -0.3)
    s = quantum.ground_state(g, 5)
    H = quantum.hamiltonian(g, 5)
    e0 = np.real(np.vdot(s.amplitudes, H @ s.amplitudes))
    assert e0 == pytest.approx(s.energy, abs=1e-10)
    for _ in range(100):
        phi = random_state(5, rng).amplitudes
        assert e0 <= np.real(np.vdot(phi, H @ phi)) + 1e-12


def test_povm_single_qubit():
    zero = product_state(1, np.array([1, 0]))
    assert quantum.povm_probability(zero, 0) == pytest.approx(1 / 3, abs=1e-15)
    assert quantum.povm_probability(zero, 1) == 0.0


def test_povm_completeness_L2():
    s = random_state(2, np.random.default_rng(1))
    total = sum(quantum.povm_probability(s, [a, b]) for a in range(6) for b in range(6))
    assert total == pytest.approx(1.0, abs=1e-10)


def test_povm_normalization_L7():
    s = quantum.ground_state((0.2, 0.0), 7)
    p = quantum.povm_distribution(s)
    assert p.size == 6 ** 7
    assert abs(p.sum() - 1) <= 1e-9


@settings(max_examples=25)
@given(st.integers(0, 6 ** 5 - 1), st.integers(0, 2**32 - 1))
def test_single_outcome_matches_distribution(x, seed):
    s = random_state(5, np.random.default_rng(seed))
    assert quantum.povm_probability(s, x) == pytest.approx(quantum.povm_distribution(s)[x], abs=1e-15)
    assert quantum.outcome_index(quantum.outcome_digits(x, 5)) == x


def test_povm_dense_trace_oracle():
    # tr(Π_x ρ) with explicit Kronecker POVM elements
    s = quantum.ground_state((0.3, 0.6), 3)
    rho = np.outer(s.amplitudes, s.amplitudes.conj())
    proj = [np.outer(v, v.conj()) / 3 for v in quantum.POVM_VECTORS]
    p = quantum.povm_distribution(s)
    for x in range(6 ** 3):
        d = quantum.outcome_digits(x, 3)
        assert np.trace(_kron([proj[k] for k in d]) @ rho).real == pytest.approx(p[x], abs=1e-14)


def test_product_state_sampling_marginals():
    L, n = 4, 2 * 10**5
    s = product_state(L, np.array([1, 0]))
    xs = quantum.povm_sample(s, n, np.random.default_rng(2))
    digits = np.array([quantum.outcome_digits(x, L) for x in xs[:50000]])
    target = np.array([1 / 3, 0, 1 / 6, 1 / 6, 1 / 6, 1 / 6])
    m = len(digits)
    for site in range(L):
        freq = np.bincount(digits[:, site], minlength=6) / m
        assert np.all(np.abs(freq - target) <= 4 * np.sqrt(target * (1 - target) / m) + 1e-12)
    # independence: the joint pair histogram factorizes
    joint = np.zeros((6, 6))
    np.add.at(joint, (digits[:, 0], digits[:, 1]), 1)
    joint /= m
    assert np.max(np.abs(joint - np.outer(target, target))) < 0.01


def test_sampling_matches_enumeration_L3():
    s = quantum.ground_state((0.2, 0.5), 3)
    xs = quantum.povm_sample(s, 10**6, np.random.default_rng(3))
    assert model_tv_distance(histogram_fit(xs), quantum.povm_model(s)) <= 0.01


def test_sampling_reproducible(tmp_path):
    s = quantum.ground_state((0.2, -0.4), 5)
    a = quantum.povm_sample(s, 500, np.random.default_rng(42))
    b = quantum.povm_sample(s, 500, np.random.default_rng(42))
    np.testing.assert_array_equal(a, b)
    quantum.write_povm_samples(tmp_path / "x.txt", a, 5)
    back, L = quantum.read_povm_samples(tmp_path / "x.txt")
    assert L == 5 and np.array_equal(back, a)
    assert len((tmp_path / "x.txt").read_text().split()[0]) == 5


@settings(max_examples=15)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_string_order_bounded(h1, h2):
    assert -1 - 1e-12 <= quantum.string_order(quantum.ground_state((h1, h2), 5)) <= 1 + 1e-12


def test_flat_curve_has_no_maxima():
    x = np.linspace(-1, 1, 11)
    assert quantum.curve_maxima(np.full(11, 3.0), x) == []
    assert quantum.curve_maxima(np.abs(quantum.second_derivative(2 * x + 1, x)), x) == []
    with pytest.raises(ValueError):
        quantum.reference_boundaries(0.2, np.linspace(-1, 1, 4), 3)


def test_reference_boundaries_L7():
    coarse = quantum.reference_boundaries(0.2, np.linspace(-1.5, 1.5, 101), 7)
    b = coarse.boundaries
    assert len(b) == 2 and b[0] < 0 < b[1]
    assert not any(coarse.degenerate)
    fine = quantum.reference_boundaries(0.2, np.linspace(-1.5, 1.5, 201), 7)
    assert len(fine.boundaries) == 2
    assert np.all(np.abs(np.array(fine.boundaries) - b) <= 0.03 + 1e-12)
    assert np.all(np.isfinite(coarse.d_string))
