from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from phasemap.grid import (GridError, ParameterGrid, make_scheme1_labels, make_scheme2_bipartitions,
                           make_scheme3_labels)


def grid2(n1=5, n2=4):
    return ParameterGrid.from_ranges([(-1, 1, n1), (0, 3, n2)])


def test_grid_size_is_product_of_axes():
    g = grid2(5, 4)
    assert g.size == 20 and g.shape == (5, 4)
    assert len(list(g.indices())) == 20
    assert g.coord_array().shape == (20, 2)


def test_axis_must_increase():
    with pytest.raises(GridError):
        ParameterGrid((np.array([0.0, 0.0, 1.0]),))
    with pytest.raises(GridError):
        ParameterGrid.from_ranges([(0, 1, 0)])


def test_scheme1_five_classes_uniform_prior():
    g = ParameterGrid.from_ranges([(-1, 1, 30), (-1, 1, 30)])
    c, m = 0.793103448275862, 0.0344827586206896
    reps = [(1, [[c, c]]), (2, [[-c, -c]]), (3, [[c, -c]]), (4, [[-c, c]]), (5, [[m, m]])]
    s = make_scheme1_labels(g, reps)
    assert len(s) == 5
    assert all(s.prior(y) == pytest.approx(1 / 5) for y in s.labels)


def test_scheme1_single_class_covering_grid():
    g = grid2(3, 3)
    s = make_scheme1_labels(g, [(1, [g.coords(i) for i in g.indices()])])
    assert s.prior(1) == 1.0
    assert all(s.conditional(1, i) == pytest.approx(1 / 9) for i in g.indices())


def test_scheme1_three_singletons_on_101_points():
    g = ParameterGrid.from_ranges([(-1.5, 1.5, 101)])
    s = make_scheme1_labels(g, [(1, [[-1.5]]), (2, [[-0.03]]), (3, [[1.47]])])
    assert s.sizes() == {1: 1, 2: 1, 3: 1}
    assert s.classes[2] == ((49,),)


def test_scheme1_off_grid_point_names_coordinate():
    g = ParameterGrid.from_ranges([(0, 1, 11)])
    assert make_scheme1_labels(g, [(1, [[0.33]])]).classes[1] == ((3,),)
    with pytest.raises(GridError, match="1.2"):
        make_scheme1_labels(g, [(1, [[1.2]])])
    with pytest.raises(GridError, match="empty"):
        make_scheme1_labels(g, [(1, [])])


def test_scheme2_nearest_neighbours():
    g = ParameterGrid((np.array([1.0, 2.0, 3.0, 4.0]),))
    bips = {b.center: b for b in make_scheme2_bipartitions(g, 1)}
    assert bips[(1,)].left == ((1,),) and bips[(1,)].right == ((2,),)
    assert bips[(3,)].right == () and bips[(3,)].degenerate


def test_scheme2_l2_on_2d_grid_uses_grid_lines():
    g = grid2(6, 6)
    bips = {(b.center, b.axis): b for b in make_scheme2_bipartitions(g, 2)}
    b = bips[((2, 3), 0)]
    assert set(b.left) == {(1, 3), (2, 3)} and set(b.right) == {(3, 3), (4, 3)}
    b = bips[((2, 3), 1)]
    assert set(b.left) == {(2, 2), (2, 3)} and set(b.right) == {(2, 4), (2, 5)}
    assert len(bips) == 2 * g.size


def test_scheme2_global_window():
    g = ParameterGrid.from_ranges([(-1.5, 1.5, 101)])
    for b in make_scheme2_bipartitions(g, 101):
        c = b.center[0]
        assert sorted(p[0] for p in b.left) == list(range(c + 1))
        assert sorted(p[0] for p in b.right) == list(range(c + 1, 101))


def test_scheme2_euclidean_metric_half_spaces():
    g = ParameterGrid((np.array([0.0, 1.0, 3.0]), np.array([0.0, 0.5, 2.0])))
    for b in make_scheme2_bipartitions(g, 2, metric="euclidean"):
        assert all(p[b.axis] <= b.center[b.axis] for p in b.left)
        assert all(p[b.axis] > b.center[b.axis] for p in b.right)
        assert len(b.left) <= 2 and len(b.right) <= 2


def test_scheme3_singletons():
    g = ParameterGrid.from_ranges([(0, 1, 101)])
    s = make_scheme3_labels(g)
    assert len(s) == 101
    one = make_scheme3_labels(ParameterGrid((np.array([0.7]),)))
    assert len(one) == 1 and one.targets[1][0] == 0.7
    sq = ParameterGrid.from_ranges([(0, 1, 60), (0, 1, 60)])
    line = next(sq.lines(1))
    assert len(make_scheme3_labels(sq, line)) == 60


@given(st.lists(st.lists(st.integers(0, 5), min_size=1, max_size=6).map(lambda v: sorted(set(v))),
                min_size=1, max_size=4))
def test_label_scheme_normalization(classes):
    g = ParameterGrid.from_ranges([(0, 5, 6)])
    s = make_scheme1_labels(g, [(k, [[float(i)] for i in pts]) for k, pts in enumerate(classes)])
    assert sum(Fraction(1, len(s)) for _ in s.labels) == 1
    assert sum(s.prior(y) for y in s.labels) == pytest.approx(1, abs=1e-12)
    for y in s.labels:
        assert sum(s.conditional(y, i) for i in g.indices()) == pytest.approx(1, abs=1e-12)


@given(st.integers(3, 12), st.integers(2, 6))
def test_interior_l1_bipartitions_have_one_point_per_side(n1, n2):
    g = ParameterGrid.from_ranges([(0, 1, n1), (0, 1, n2)])
    for b in make_scheme2_bipartitions(g, 1):
        if b.center[b.axis] < g.shape[b.axis] - 1:
            assert len(b.left) == 1 and len(b.right) == 1


@given(st.integers(1, 8), st.integers(1, 8))
def test_scheme3_bijection(n1, n2):
    g = ParameterGrid.from_ranges([(0, 1, n1), (0, 1, n2)])
    s = make_scheme3_labels(g)
    pts = [p[0] for p in s.classes.values()]
    assert sorted(pts) == sorted(g.indices())
