"""Functional linear model fits and null-model residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .basis import bspline_basis, eval_bspline
from .exceptions import InvalidArgument, SingularDesign
from .fpca import FpcaFit
from .funcdata import FunctionalDataset, Grid
from .results import normalize_hypothesis


@dataclass(frozen=True)
class FlmFit:
    alpha: float
    beta: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    route: str
    p: int
    coef: np.ndarray


def default_basis_dim(setting_id: str | None) -> int:
    """Basis size used for the FLM residuals: 4 for the M settings, else 7."""
    return 4 if setting_id and setting_id.startswith("M") else 7


def flm_basis(grid: Grid, p: int) -> np.ndarray:
    """``J x p`` matrix of B-splines on the grid (cubic when ``p >= 4``)."""
    if p < 1:
        raise InvalidArgument("basis dimension must be positive")
    degree = min(3, p - 1)
    a, b = grid.domain
    return eval_bspline(bspline_basis(a, b, p, degree), grid.points)


def projected_design(ds: FunctionalDataset, p: int) -> np.ndarray:
    """Integrals of every curve against each of the ``p`` basis functions."""
    return ds.curves @ (ds.grid.weights[:, None] * flm_basis(ds.grid, p))


def orthonormal_coefficients(ds: FunctionalDataset, p: int) -> np.ndarray:
    """Coefficients of the curves in an L2-orthonormalized ``p``-spline basis."""
    B = flm_basis(ds.grid, p)
    gram = B.T @ (ds.grid.weights[:, None] * B)
    L = np.linalg.cholesky(gram)
    return solve_triangular(L, projected_design(ds, p).T, lower=True).T


def _ols(D, y):
    coef, _, rank, _ = np.linalg.lstsq(D, y, rcond=None)
    if rank < D.shape[1]:
        raise SingularDesign(f"design of {D.shape[1]} columns has rank {rank}")
    fitted = D @ coef
    return coef, fitted, y - fitted


def fit_flm_basis(ds: FunctionalDataset, p: int) -> FlmFit:
    """OLS fit with curves and coefficient function in a common spline basis.

    Projecting the curves on the basis and integrating against ``beta`` reduces
    to regressing ``y`` on the integrals of each curve against each basis
    function, which is what is done here.
    """
    if ds.n <= p + 1:
        raise InvalidArgument(f"need n > p + 1 (n={ds.n}, p={p})")
    D = np.column_stack([np.ones(ds.n), projected_design(ds, p)])
    coef, fitted, resid = _ols(D, ds.y)
    beta = flm_basis(ds.grid, p) @ coef[1:]
    return FlmFit(float(coef[0]), beta, fitted, resid, "basis", p, coef[1:])


def fit_flm_scores(fit: FpcaFit, y) -> FlmFit:
    """OLS of ``y`` on an intercept plus the FPCA scores."""
    y = np.asarray(y, dtype=float)
    n, s = fit.scores.shape
    if y.shape != (n,):
        raise InvalidArgument("y must have one entry per score row")
    if n <= s + 1:
        raise InvalidArgument(f"need n > s + 1 (n={n}, s={s})")
    D = np.column_stack([np.ones(n), fit.scores])
    coef, fitted, resid = _ols(D, y)
    return FlmFit(
        float(coef[0]), coef[1:] @ fit.eigenfunctions, fitted, resid, "scores", s, coef[1:]
    )


def select_basis_dim(ds: FunctionalDataset, p_min: int = 4, p_max: int = 40) -> int:
    """Basis size minimizing the corrected Schwarz criterion of the FLM fit.

    The criterion is ``log(RSS/n) + df log(n) / (n - df - 2)`` with
    ``df = p + 1``; sizes whose design is singular are skipped.
    """
    n = ds.n
    p_max = min(p_max, n - 4)
    if p_max < p_min:
        raise InvalidArgument(f"no admissible basis size for n={n}")
    best, best_p = np.inf, None
    for p in range(p_min, p_max + 1):
        try:
            rss = float(np.sum(fit_flm_basis(ds, p).residuals ** 2))
        except SingularDesign:
            continue
        df = p + 1
        crit = np.log(max(rss, 1e-300) / n) + df * np.log(n) / (n - df - 2)
        if crit < best:
            best, best_p = crit, p
    if best_p is None:
        raise SingularDesign("every candidate basis size gave a singular design")
    return best_p


def null_residuals(
    ds: FunctionalDataset, hypothesis: str, p: int = 7, literal: bool = False
) -> np.ndarray:
    """Residuals of the model fitted under the null hypothesis.

    Linearity (``H01``) uses the FLM basis fit. Nullity (``H02``) centers ``y``;
    with ``literal=True`` the raw responses are returned instead.
    """
    hypothesis = normalize_hypothesis(hypothesis)
    if hypothesis == "H01":
        return fit_flm_basis(ds, p).residuals
    if literal:
        return ds.y.copy()
    return ds.y - ds.y.mean()
