import numpy as np
import pytest

from sofr.datagen import RngStream, SimulationSetting, generate, sparsify
from sofr.exceptions import DegenerateCovariance, ImputationFailure, InvalidArgument
from sofr.fpca import (
    align_signs,
    fit_fpca,
    fit_sparse_fpca,
    impute_sparse,
    n_for_pve,
    reconstruct,
)
from sofr.funcdata import FunctionalDataset, SparseFunctionalDataset, make_uniform_grid


def _gram(fit):
    return (fit.eigenfunctions * fit.grid.weights) @ fit.eigenfunctions.T


def test_rank_one_recovery(grid101):
    phi = np.sqrt(2) * np.sin(np.pi * grid101.points)
    xi = np.random.default_rng(0).normal(0, 1.5, 300)
    fit = fit_fpca(FunctionalDataset(np.zeros(300), np.outer(xi, phi), grid101), k=1)
    assert np.corrcoef(fit.eigenfunctions[0], phi)[0, 1] ** 2 > 0.999
    # the trapezoid norm of phi differs from 1 by O(h^2)
    norm2 = phi @ (grid101.weights * phi)
    assert fit.eigenvalues[0] == pytest.approx(xi.var(ddof=1) * norm2, rel=1e-10)


def test_m0_eigenvalues_match_generating_operator():
    ds = generate(SimulationSetting("M0", 0.0, 1000), RngStream(4))
    t, w = ds.grid.points, ds.grid.weights
    phi = np.vstack(
        [np.sin(np.pi * t), np.cos(np.pi * t), np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)]
    )
    kernel = phi.T @ np.diag(8.0 / np.arange(1, 5) ** 2) @ phi
    sw = np.sqrt(w)
    truth = np.sort(np.linalg.eigvalsh(sw[:, None] * kernel * sw))[::-1][:4]
    est = fit_fpca(ds, k=4).eigenvalues
    se = truth * np.sqrt(2 / ds.n)
    assert np.all(np.abs(est - truth) < 3 * se)


def test_full_truncation_reconstructs(g0_small):
    fit = fit_fpca(g0_small, pve=1.0)
    Xc = g0_small.curves - g0_small.curves.mean(axis=0)
    assert np.abs(fit.scores @ fit.eigenfunctions - Xc).max() < 1e-8


def test_orthonormality_and_score_variances(m0_small):
    fit = fit_fpca(m0_small, k=4)
    assert np.abs(_gram(fit) - np.eye(4)).max() < 1e-8
    assert np.all(np.diff(fit.eigenvalues) <= 0)
    np.testing.assert_allclose(fit.scores.var(axis=0, ddof=1), fit.eigenvalues, rtol=1e-8)
    assert np.abs(fit.scores.mean(axis=0)).max() < 1e-10


def test_pve_truncation(g0_small):
    fit = fit_fpca(g0_small, pve=0.9)
    share = np.cumsum(fit.all_eigenvalues) / fit.all_eigenvalues.sum()
    assert fit.pve >= 0.9
    assert fit.n_components == 1 or share[fit.n_components - 2] < 0.9


def test_n_for_pve_arithmetic():
    assert n_for_pve([8, 2, 0.889, 0.5], 0.95) == 3
    assert n_for_pve([8, 2, 0.889, 0.5], 1.0) == 4
    assert n_for_pve([3.0, 0.0, 0.0], 0.5) == 1
    with pytest.raises(InvalidArgument):
        n_for_pve([1.0], 0.0)


def test_fpca_errors(grid101):
    with pytest.raises(InvalidArgument):
        fit_fpca(FunctionalDataset(np.zeros(1), np.ones((1, 101)), grid101))
    with pytest.raises(DegenerateCovariance):
        fit_fpca(FunctionalDataset(np.zeros(3), np.ones((3, 101)), grid101))
    ds = FunctionalDataset(np.zeros(3), np.random.default_rng(1).normal(size=(3, 101)), grid101)
    with pytest.raises(InvalidArgument):
        fit_fpca(ds, k=2, pve=0.9)


def test_align_signs(m0_small):
    fit = fit_fpca(m0_small, k=3)
    same = align_signs(fit, fit.eigenfunctions)
    np.testing.assert_array_equal(same.eigenfunctions, fit.eigenfunctions)
    flipped = align_signs(fit, -fit.eigenfunctions)
    np.testing.assert_array_equal(flipped.eigenfunctions, -fit.eigenfunctions)
    np.testing.assert_array_equal(flipped.scores, -fit.scores)
    ref = np.random.default_rng(3).normal(size=(3, len(fit.grid)))
    once = align_signs(fit, ref)
    np.testing.assert_array_equal(align_signs(once, ref).eigenfunctions, once.eigenfunctions)


def test_impute_round_trip_g1():
    ds = generate(SimulationSetting("G1", 0.0, 200), RngStream(8))
    sds = sparsify(ds, "G1", "moderate", RngStream(9))
    out = impute_sparse(sds, ds.grid, 0.99)
    w = ds.grid.weights
    err = np.sqrt(((out.curves - ds.curves) ** 2) @ w / ((ds.curves**2) @ w))
    assert err.mean() < 0.10


def test_impute_retains_pve():
    ds = generate(SimulationSetting("M1", 0.0, 200), RngStream(8))
    fit = fit_sparse_fpca(sparsify(ds, "M1", "moderate", RngStream(9)), ds.grid, 0.99)
    assert fit.pve >= 0.99
    assert np.abs(_gram(fit) - np.eye(fit.n_components)).max() < 1e-8
    assert fit.sigma2 >= 1e-8


def test_fully_observed_subjects_match_projection():
    # every subject observed everywhere and constant in t: the local-linear
    # smoothers are exact, the noise variance sits at its floor and the
    # conditional expectation reduces to projecting each curve
    grid = make_uniform_grid(30, 0, 1)
    level = 2.0 + np.random.default_rng(5).standard_normal(150)
    points = tuple(grid.points for _ in level)
    values = tuple(np.full(30, c) for c in level)
    sds = SparseFunctionalDataset(np.zeros(150), points, values, (0.0, 1.0))
    fit = fit_sparse_fpca(sds, grid, 0.99)
    assert fit.sigma2 == pytest.approx(1e-8)
    curves = np.array(values)
    Pc = ((curves - fit.mean) * grid.weights) @ fit.eigenfunctions.T @ fit.eigenfunctions
    assert np.abs(reconstruct(fit) - (fit.mean + Pc)).max() < 1e-6


def test_impute_needs_coverage():
    grid = make_uniform_grid(30, 0, 1)
    pts = tuple(grid.points[[2, 5]] for _ in range(20))
    vals = tuple(np.array([1.0, float(i)]) for i in range(20))
    sds = SparseFunctionalDataset(np.zeros(20), pts, vals, (0.0, 1.0))
    with pytest.raises(ImputationFailure):
        impute_sparse(sds, grid)
