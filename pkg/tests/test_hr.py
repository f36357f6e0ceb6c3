import warnings
from dataclasses import replace

import numpy as np
import pytest

from sofr import hr
from sofr.datagen import RngStream, SimulationSetting, generate
from sofr.exceptions import InsufficientSample, SmallSampleWarning
from sofr.fpca import fit_fpca
from sofr.hr import hr_design, hr_test, quadratic_terms


def _g1(n, delta=0.0, seed=0, setting="G1"):
    return generate(SimulationSetting(setting, delta, n), RngStream(seed))


def test_design_columns():
    ds = _g1(80)
    Z = hr_design(fit_fpca(ds, k=3))
    assert Z.shape == (80, 10)
    np.testing.assert_array_equal(Z[:, -1], 1.0)


def test_unit_score_vector():
    np.testing.assert_array_equal(quadratic_terms(np.array([[1.0, 0, 0]])), [[1, 0, 0, 0, 0, 0]])


def test_duplication_factor():
    s = np.array([[2.0, 3.0, 5.0]])
    raw = np.outer(s, s)[np.triu_indices(3)]
    factor = quadratic_terms(s)[0] / raw
    np.testing.assert_array_equal(factor, [1, 2, 2, 1, 2, 1])


def test_design_rejects_small_samples():
    with pytest.raises(InsufficientSample):
        hr_design(fit_fpca(_g1(10), k=3))


def test_quadratic_free_response():
    ds = _g1(120, seed=1)
    fit = fit_fpca(ds, k=3)
    y = 0.4 + fit.scores @ np.array([1.0, -0.5, 2.0])
    res = hr_test(ds.replace(y=y), p=3)
    assert res.df == 6
    assert res.statistic == pytest.approx(0.0, abs=1e-8) and res.p_value == pytest.approx(1.0)


def _flip_signs(monkeypatch, signs):
    original = hr.fit_fpca

    def flipped(ds, k):
        fit = original(ds, k=k)
        return replace(
            fit,
            eigenfunctions=fit.eigenfunctions * signs[:, None],
            scores=fit.scores * signs,
        )

    monkeypatch.setattr(hr, "fit_fpca", flipped)


def test_sign_flip_invariance(monkeypatch):
    ds = _g1(150, delta=0.3, seed=2)
    base = hr_test(ds).statistic
    _flip_signs(monkeypatch, np.array([-1.0, 1.0, -1.0]))
    assert hr_test(ds).statistic == pytest.approx(base, rel=1e-9)


def test_constant_shift_invariance():
    ds = _g1(150, delta=0.3, seed=3)
    a = hr_test(ds)
    b = hr_test(ds.replace(y=ds.y - 12.0))
    assert b.statistic == pytest.approx(a.statistic, rel=1e-9)


def test_small_sample_warning():
    with pytest.warns(SmallSampleWarning):
        hr_test(_g1(50, seed=4))
    with warnings.catch_warnings():
        warnings.simplefilter("error", SmallSampleWarning)
        hr_test(_g1(61, seed=4))


def test_result_details():
    res = hr_test(_g1(100, seed=5))
    assert res.method == "HR" and res.hypothesis == "H01"
    assert res.details["A_hat"].shape == (6,) and res.details["B_hat"].shape == (3,)
    assert res.details["tau2"] > 0 and 0 <= res.p_value <= 1


def test_power_grows_with_n():
    small = [hr_test(_g1(100, 1.0, s, "H1")).p_value for s in range(20)]
    large = [hr_test(_g1(500, 1.0, s, "H1")).p_value for s in range(20)]
    assert np.median(large) < np.median(small)
    assert np.mean(np.array(large) < 0.05) > np.mean(np.array(small) < 0.05)
