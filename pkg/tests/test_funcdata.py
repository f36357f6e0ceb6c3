import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sofr.exceptions import InvalidArgument, ParseError
from sofr.funcdata import (
    FunctionalDataset,
    Grid,
    SparseFunctionalDataset,
    center_curves,
    inner_product,
    make_uniform_grid,
    read_csv,
    write_csv,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_three_point_grid():
    g = make_uniform_grid(3, 0, 1)
    np.testing.assert_allclose(g.points, [0, 0.5, 1])
    np.testing.assert_allclose(g.weights, [0.25, 0.5, 0.25])


def test_weight_sum_is_domain_length():
    g = make_uniform_grid(201, 0, 1)
    assert len(g) == 201
    assert abs(g.weights.sum() - 1) < 1e-12


def test_single_trapezoid():
    np.testing.assert_allclose(make_uniform_grid(2, 0, 10).weights, [5, 5])


@pytest.mark.parametrize("args", [(1, 0, 1), (5, 1, 1), (5, 2, 1)])
def test_bad_grid(args):
    with pytest.raises(InvalidArgument):
        make_uniform_grid(*args)


def test_grid_rejects_unsorted_points():
    with pytest.raises(InvalidArgument):
        Grid(np.array([0.0, 0.5, 0.4]), np.array([0.1, 0.1, 0.1]))


def test_inner_product_values():
    g = make_uniform_grid(201, 0, 1)
    s, c = np.sin(2 * np.pi * g.points), np.cos(2 * np.pi * g.points)
    assert inner_product(np.zeros(201), c, g) == 0
    assert abs(inner_product(s, s, g) - 0.5) < 1e-3
    assert abs(inner_product(s, c, g)) < 1e-3


def test_inner_product_length_mismatch():
    g = make_uniform_grid(5, 0, 1)
    with pytest.raises(InvalidArgument):
        inner_product(np.ones(4), np.ones(5), g)


def test_trapezoid_exact_for_piecewise_linear():
    # integral of the piecewise-linear interpolant of f*g is not exact, but for
    # f = 1 the rule integrates the linear interpolant of g exactly
    g = make_uniform_grid(7, -1, 2)
    vals = np.array([0.0, 2.0, -1.0, 3.0, 3.0, 0.5, 1.0])
    exact = sum((vals[k] + vals[k + 1]) / 2 * 0.5 for k in range(6))
    assert abs(inner_product(np.ones(7), vals, g) - exact) < 1e-14


@settings(max_examples=50, deadline=None)
@given(arrays(float, 11, elements=finite))
def test_inner_product_nonnegative(f):
    assert inner_product(f, f, make_uniform_grid(11, 0, 3)) >= 0


def test_center_identical_curves(grid101):
    ds = FunctionalDataset(np.arange(4.0), np.tile(np.sin(grid101.points), (4, 1)), grid101)
    out, mean = center_curves(ds)
    assert np.abs(out.curves).max() < 1e-15
    np.testing.assert_allclose(mean, np.sin(grid101.points))


def test_center_symmetric_pair(grid101):
    c = np.cos(grid101.points)
    ds = FunctionalDataset(np.zeros(2), np.vstack([c, -c]), grid101)
    np.testing.assert_allclose(center_curves(ds)[0].curves, ds.curves, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (5, 10), elements=finite))
def test_center_means_and_idempotence(X):
    g = make_uniform_grid(10, 0, 1)
    once, _ = center_curves(FunctionalDataset(np.zeros(5), X, g))
    assert np.abs(once.curves.mean(axis=0)).max() < 1e-12
    twice, _ = center_curves(once)
    np.testing.assert_allclose(twice.curves, once.curves, atol=1e-12)


def test_dataset_validation(grid101):
    with pytest.raises(InvalidArgument):
        FunctionalDataset(np.zeros(3), np.zeros((2, 101)), grid101)
    with pytest.raises(InvalidArgument):
        FunctionalDataset(np.zeros(2), np.zeros((2, 100)), grid101)
    bad = np.zeros((2, 101))
    bad[0, 3] = np.nan
    with pytest.raises(InvalidArgument):
        FunctionalDataset(np.zeros(2), bad, grid101)


def test_dataset_is_immutable(grid101):
    ds = FunctionalDataset(np.zeros(2), np.zeros((2, 101)), grid101)
    with pytest.raises(ValueError):
        ds.curves[0, 0] = 1.0


def test_sparse_validation():
    ok = SparseFunctionalDataset(np.zeros(1), ([0.1, 0.5],), ([1.0, 2.0],), (0, 1))
    assert ok.counts.tolist() == [2]
    with pytest.raises(InvalidArgument):
        SparseFunctionalDataset(np.zeros(1), ([0.1],), ([1.0],), (0, 1))
    with pytest.raises(InvalidArgument):
        SparseFunctionalDataset(np.zeros(1), ([0.5, 0.1],), ([1.0, 2.0],), (0, 1))
    with pytest.raises(InvalidArgument):
        SparseFunctionalDataset(np.zeros(1), ([0.5, 1.5],), ([1.0, 2.0],), (0, 1))


def test_csv_round_trip(tmp_path, rng):
    g = make_uniform_grid(6, 0, 2)
    ds = FunctionalDataset(rng.standard_normal(4), rng.standard_normal((4, 6)), g)
    path = tmp_path / "d.csv"
    write_csv(ds, path)
    back = read_csv(path)
    np.testing.assert_array_equal(back.y, ds.y)
    np.testing.assert_array_equal(back.curves, ds.curves)
    np.testing.assert_array_equal(back.grid.points, g.points)


def test_csv_reports_location(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,0,1\n1.0,2.0,3.0\n2.0,NA,1.0\n")
    with pytest.raises(ParseError) as err:
        read_csv(path)
    assert err.value.row == 2 and err.value.column == 1
