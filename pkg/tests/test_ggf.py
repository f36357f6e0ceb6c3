import numpy as np
import pytest

from sofr.datagen import RngStream, SimulationSetting, generate
from sofr.exceptions import BootstrapFailure, InvalidArgument
from sofr.flm import flm_basis
from sofr.funcdata import FunctionalDataset
from sofr.ggf import (
    GOLDEN_HIGH,
    GOLDEN_LOW,
    ggf_test,
    monte_carlo_matrix,
    pcvm_a_matrix,
    pcvm_monte_carlo,
    random_directions,
    wedge_matrix,
    wild_multipliers,
)

from .conftest import linear_dataset


@pytest.fixture
def toy():
    gen = np.random.default_rng(17)
    return gen.standard_normal(25), gen.standard_normal((25, 3))


def _brute_force(e, X, dirs):
    """Average over directions and observed u of the squared marked process."""
    n = e.size
    total = 0.0
    for g in dirs:
        u = X @ g
        for j in range(n):
            total += sum(e[i] for i in range(n) if u[i] <= u[j]) ** 2 / n**2
    return total / len(dirs)


def test_zero_residuals(toy):
    _, X = toy
    assert pcvm_monte_carlo(np.zeros(25), X, 50, RngStream(1)).value == 0
    assert pcvm_a_matrix(np.zeros(25), X).value == 0


def test_quadratic_scaling(toy):
    e, X = toy
    a = pcvm_monte_carlo(e, X, 200, RngStream(2)).value
    b = pcvm_monte_carlo(3 * e, X, 200, RngStream(2)).value
    assert b == pytest.approx(9 * a, rel=1e-12)
    assert pcvm_a_matrix(-2 * e, X).value == pytest.approx(4 * pcvm_a_matrix(e, X).value)


def test_monte_carlo_matches_brute_force(toy):
    e, X = toy
    stat = pcvm_monte_carlo(e, X, 40, RngStream(3))
    dirs = random_directions(3, 40, RngStream(3))
    assert abs(stat.value - _brute_force(e, X, dirs)) < 1e-12
    assert stat.route == "monte_carlo" and stat.n_projections == 40 and stat.p == 3


def test_ties_count_as_exceedances():
    X = np.array([[0.0], [0.0], [1.0]])
    A = monte_carlo_matrix(X, np.array([[1.0]]))
    np.testing.assert_array_equal(A, [[3, 3, 1], [3, 3, 1], [1, 1, 1]])


def test_a_matrix_agrees_with_monte_carlo(toy):
    e, X = toy
    mc = pcvm_monte_carlo(e, X, 20_000, RngStream(4)).value
    closed = pcvm_a_matrix(e, X).value
    assert abs(closed - mc) / mc < 0.03


def test_a_matrix_structure(toy):
    _, X = toy
    A = wedge_matrix(X)
    np.testing.assert_allclose(A, A.T, atol=1e-12)
    assert np.all(np.diag(A) >= 0)
    # the quadratic form is a second moment, so A is positive semi-definite
    assert np.linalg.eigvalsh(A).min() > -1e-9


def test_permutation_invariance(toy):
    e, X = toy
    perm = np.random.default_rng(5).permutation(25)
    assert pcvm_a_matrix(e[perm], X[perm]).value == pytest.approx(pcvm_a_matrix(e, X).value)
    a = pcvm_monte_carlo(e, X, 100, RngStream(6)).value
    b = pcvm_monte_carlo(e[perm], X[perm], 100, RngStream(6)).value
    assert b == pytest.approx(a, rel=1e-12)


def test_monte_carlo_variance_halves(toy):
    e, X = toy
    reps = 300
    small = [pcvm_monte_carlo(e, X, 20, RngStream(7, k)).value for k in range(reps)]
    large = [pcvm_monte_carlo(e, X, 40, RngStream(8, k)).value for k in range(reps)]
    ratio = np.var(small, ddof=1) / np.var(large, ddof=1)
    # F(299, 299) central 99% range around the expected ratio of 2
    assert 2 * 0.74 < ratio < 2 * 1.35


def test_statistic_input_checks():
    with pytest.raises(InvalidArgument):
        pcvm_a_matrix(np.zeros(0), np.zeros((0, 2)))
    with pytest.raises(InvalidArgument):
        pcvm_monte_carlo(np.zeros(3), np.zeros((4, 2)), 10, RngStream(0))
    with pytest.raises(InvalidArgument):
        pcvm_monte_carlo(np.zeros(3), np.zeros((3, 2)), 0, RngStream(0))


def test_golden_multipliers_moments():
    v = wild_multipliers(200_000, np.random.default_rng(0))
    assert set(np.unique(v)) == {GOLDEN_LOW, GOLDEN_HIGH}
    assert abs(v.mean()) < 0.01 and abs(v.var() - 1) < 0.01 and abs((v**3).mean() - 1) < 0.03
    r = wild_multipliers(1000, np.random.default_rng(0), "rademacher")
    assert set(np.unique(r)) == {-1.0, 1.0}
    with pytest.raises(InvalidArgument):
        wild_multipliers(3, np.random.default_rng(0), "normal")


def test_noiseless_linear_data():
    ds = generate(SimulationSetting("G1", 0.0, 60), RngStream(9))
    beta = flm_basis(ds.grid, 7) @ np.linspace(-1, 1, 7)
    exact = ds.replace(y=0.5 + ds.curves @ (ds.grid.weights * beta))
    res = ggf_test(exact, "H01", 200, 7, RngStream(1))
    assert res.statistic == 0 and res.p_value == 1


def test_result_fields_and_determinism():
    ds = linear_dataset(n=60, noise=0.4, seed=3)
    a = ggf_test(ds, "H02", 150, 5, RngStream(2))
    b = ggf_test(ds, "null", 150, 5, RngStream(2))
    assert (a.statistic, a.p_value) == (b.statistic, b.p_value)
    assert a.method == "GGF" and a.hypothesis == "H02"
    assert 0 < a.p_value <= 1
    assert a.p_value * 151 == pytest.approx(round(a.p_value * 151))
    c = ggf_test(ds, "H02", 150, 5, RngStream(2), route="a_matrix")
    assert c.statistic > 0


def test_strong_effect_rejects():
    ds = generate(SimulationSetting("G0", 0.9, 100), RngStream(4))
    assert ggf_test(ds, "H02", 200, 7, RngStream(5)).p_value < 0.01


def test_ggf_contract():
    ds = linear_dataset(n=30, noise=0.1)
    with pytest.raises(InvalidArgument):
        ggf_test(ds, "H01", 50, 4)
    with pytest.raises(InvalidArgument):
        ggf_test(ds, "H01", 100, 4, route="exact")
    with pytest.raises(InvalidArgument):
        ggf_test(ds, "H05", 100, 4)


def test_singular_null_design_is_a_bootstrap_failure():
    ds = generate(SimulationSetting("M1", 0.0, 80), RngStream(6))
    # M1 curves span four functions; with 6 basis functions the design aliases
    with pytest.raises(BootstrapFailure) as err:
        ggf_test(ds, "H01", 100, 6, RngStream(0))
    assert err.value.round_index == 0


def test_constant_curves_rejected_gracefully(grid101):
    ds = FunctionalDataset(np.arange(20.0), np.ones((20, 101)), grid101)
    with pytest.raises(BootstrapFailure):
        ggf_test(ds, "H01", 100, 4, RngStream(0))
