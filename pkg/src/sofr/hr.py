"""Quadratic-regression test of linearity on functional principal component scores."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import chi2

from .exceptions import InsufficientSample, NumericalWarning, SingularDesign, SmallSampleWarning
from .fpca import FpcaFit, fit_fpca
from .funcdata import FunctionalDataset
from .results import TestResult


def quadratic_terms(scores: np.ndarray) -> np.ndarray:
    """Half-vectorized score products, off-diagonal entries doubled.

    Column order follows ``(j, k)`` with ``j <= k``, row-major.

    >>> quadratic_terms(np.array([[1.0, 2.0]]))
    array([[1., 4., 4.]])
    """
    scores = np.atleast_2d(scores)
    p = scores.shape[1]
    j, k = np.triu_indices(p)
    factor = np.where(j == k, 1.0, 2.0)
    return scores[:, j] * scores[:, k] * factor


def hr_design(fit: FpcaFit, ds: FunctionalDataset | None = None) -> np.ndarray:
    """Design ``[D, F, 1]`` of quadratic terms, scores and an intercept.

    Scores are recomputed from ``ds`` when it is given, otherwise the fit's
    own scores are used.
    """
    F = fit.scores
    if ds is not None:
        F = (ds.curves - fit.mean) @ (fit.grid.weights * fit.eigenfunctions).T
    n, p = F.shape
    n_cols = p * (p + 1) // 2 + p + 1
    if n_cols >= n:
        raise InsufficientSample(f"{n_cols} design columns need more than {n} observations")
    return np.column_stack([quadratic_terms(F), F, np.ones(n)])


def hr_test(ds: FunctionalDataset, p: int = 3) -> TestResult:
    """Chi-square test that all quadratic score coefficients vanish."""
    fit = fit_fpca(ds, k=p)
    if fit.n_components < p:
        raise InsufficientSample(f"only {fit.n_components} positive eigenvalues for p={p}")
    Z = hr_design(fit)
    n = ds.n
    r = p * (p + 1) // 2
    if n <= 10 * r:
        warnings.warn(
            f"n={n} is at most 10 times the {r} degrees of freedom; "
            "the chi-square reference is unreliable",
            SmallSampleWarning,
            stacklevel=2,
        )
    coef, _, rank, _ = np.linalg.lstsq(Z, ds.y, rcond=None)
    if rank < Z.shape[1]:
        raise SingularDesign("quadratic design is rank deficient")
    resid = ds.y - Z @ coef
    tau2 = float(np.mean(resid**2))
    A = coef[:r]
    D = Z[:, :r]
    G = D.T @ D / n
    M = D.mean(axis=0)
    form = float(A @ (G - np.outer(M, M)) @ A)
    spread = float(np.mean((ds.y - ds.y.mean()) ** 2))
    if tau2 <= 1e-20 * spread or spread == 0:
        # exact fit: the quadratic part either explains something or nothing
        u_n, p_value = (0.0, 1.0) if abs(form) <= 1e-12 * spread else (np.inf, 0.0)
    else:
        u_n = n * form / tau2
        if u_n < 0:
            warnings.warn(
                f"negative U_n ({u_n:.3g}) from an indefinite matrix", NumericalWarning, 2
            )
        p_value = float(chi2.sf(u_n, r))
    return TestResult(
        "HR",
        "H01",
        float(u_n),
        p_value,
        r,
        {"p": p, "tau2": tau2, "A_hat": A, "B_hat": coef[r:-1], "mu_hat": float(coef[-1])},
    )
