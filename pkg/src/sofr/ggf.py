"""Projected Cramer-von Mises test with wild-bootstrap calibration.

The statistic is a quadratic form ``n^-2 e' A e`` in the null residuals ``e``.
``A[i, k]`` counts, averaged over projection directions, the observations
whose projection is at least as large as both ``u_i`` and ``u_k``. Averaging
over a finite set of random directions gives the Monte Carlo route; the
closed form over the whole sphere uses the angles of spherical wedges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .datagen import RngStream
from .exceptions import BootstrapFailure, InvalidArgument
from .flm import orthonormal_coefficients, projected_design
from .funcdata import FunctionalDataset
from .results import TestResult, normalize_hypothesis

GOLDEN_LOW = (1 - np.sqrt(5)) / 2
GOLDEN_HIGH = (1 + np.sqrt(5)) / 2
GOLDEN_P_LOW = (5 + np.sqrt(5)) / 10
ROUTES = ("monte_carlo", "a_matrix")


@dataclass(frozen=True)
class PcvmStatistic:
    value: float
    p: int
    route: str
    n_projections: int | None = None


def _check(residuals, coef_scores):
    e = np.asarray(residuals, dtype=float).ravel()
    X = np.asarray(coef_scores, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if e.size == 0:
        raise InvalidArgument("residual vector is empty")
    if X.shape[0] != e.size or X.shape[1] < 1:
        raise InvalidArgument("coef_scores must be n x p with p >= 1")
    return e, X


def random_directions(p: int, n_proj: int, rng: RngStream) -> np.ndarray:
    """``n_proj`` directions drawn uniformly on the unit sphere of R^p."""
    if n_proj < 1:
        raise InvalidArgument("n_proj must be positive")
    g = rng.generator().standard_normal((n_proj, p))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g / np.where(norms > 0, norms, 1.0)


def monte_carlo_matrix(coef_scores, directions) -> np.ndarray:
    """Direction-averaged count matrix of the Monte Carlo route."""
    X = np.asarray(coef_scores, dtype=float)
    n = X.shape[0]
    chunk = max(1, 4_000_000 // (n * n))
    A = np.zeros((n, n))
    for start in range(0, directions.shape[0], chunk):
        u = directions[start : start + chunk] @ X.T
        # number of projections >= u_i, ties included
        cnt = n + 1 - rankdata(u, method="min", axis=1)
        A += np.minimum(cnt[:, :, None], cnt[:, None, :]).sum(axis=0)
    return A / directions.shape[0]


def wedge_matrix(coef_scores) -> np.ndarray:
    """Limit of :func:`monte_carlo_matrix` for directions uniform on the sphere.

    For each anchor ``r`` the probability that a random direction puts both
    ``x_i`` and ``x_k`` at or below ``x_r`` is ``(pi - angle) / (2 pi)``, where
    the angle is taken between ``x_i - x_r`` and ``x_k - x_r``.
    """
    X = np.asarray(coef_scores, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    scale = max(np.abs(X).max(), 1.0)
    A = np.zeros((n, n))
    for r in range(n):
        V = X - X[r]
        norm = np.linalg.norm(V, axis=1)
        zero = norm <= 1e-12 * scale
        unit = V / np.where(zero, 1.0, norm)[:, None]
        cos = np.clip(unit @ unit.T, -1.0, 1.0)
        term = (np.pi - np.arccos(cos)) / (2 * np.pi)
        term[zero, :] = 0.5
        term[:, zero] = 0.5
        term[np.ix_(zero, zero)] = 1.0
        A += term
    return A


def _quad(A, E):
    """``n^-2 diag(E' A E)`` for a residual matrix with one column per replicate."""
    n = A.shape[0]
    return np.einsum("ib,ib->b", A @ E, E) / n**2


def pcvm_monte_carlo(residuals, coef_scores, n_proj: int, rng: RngStream) -> PcvmStatistic:
    """Statistic averaged over ``n_proj`` random projection directions."""
    e, X = _check(residuals, coef_scores)
    dirs = random_directions(X.shape[1], n_proj, rng)
    A = monte_carlo_matrix(X, dirs)
    value = max(float(_quad(A, e[:, None])[0]), 0.0)
    return PcvmStatistic(value, X.shape[1], "monte_carlo", n_proj)


def pcvm_a_matrix(residuals, coef_scores) -> PcvmStatistic:
    """Closed-form statistic over all projection directions."""
    e, X = _check(residuals, coef_scores)
    value = max(float(_quad(wedge_matrix(X), e[:, None])[0]), 0.0)
    return PcvmStatistic(value, X.shape[1], "a_matrix")


def wild_multipliers(shape, gen: np.random.Generator, kind: str = "golden") -> np.ndarray:
    """Mean-zero, unit-variance bootstrap multipliers."""
    if kind == "golden":
        return np.where(gen.random(shape) < GOLDEN_P_LOW, GOLDEN_LOW, GOLDEN_HIGH)
    if kind == "rademacher":
        return np.where(gen.random(shape) < 0.5, -1.0, 1.0)
    raise InvalidArgument(f"unknown multiplier distribution {kind!r}")


def ggf_test(
    ds: FunctionalDataset,
    hypothesis: str,
    B: int = 500,
    p: int = 7,
    rng: RngStream | None = None,
    route: str = "monte_carlo",
    n_proj: int = 1000,
    multipliers: str = "golden",
    literal: bool = False,
) -> TestResult:
    """Projected Cramer-von Mises test of linearity (``H01``) or nullity (``H02``).

    The null model is refitted on every wild-bootstrap sample, which for both
    hypotheses amounts to projecting the perturbed residuals; all ``B`` rounds
    are therefore evaluated in one batch.
    """
    hypothesis = normalize_hypothesis(hypothesis)
    if B < 100:
        raise InvalidArgument("B must be at least 100")
    if route not in ROUTES:
        raise InvalidArgument(f"route must be one of {ROUTES}")
    rng = rng or RngStream(0)
    n = ds.n
    if n <= p + 1:
        raise InvalidArgument(f"need n > p + 1 (n={n}, p={p})")

    if hypothesis == "H01":
        D = np.column_stack([np.ones(n), projected_design(ds, p)])
        Q, R = np.linalg.qr(D)
        if np.abs(np.diag(R)).min() <= 1e-10 * np.abs(np.diag(R)).max():
            raise BootstrapFailure("null design is singular", round_index=0)

        def refit(E):
            return E - Q @ (Q.T @ E)

    elif literal:

        def refit(E):
            return E

    else:

        def refit(E):
            return E - E.mean(axis=0)

    resid = refit(ds.y[:, None])[:, 0]
    if np.linalg.norm(resid) <= 1e-10 * max(1.0, np.linalg.norm(ds.y)):
        resid = np.zeros(n)

    scores = orthonormal_coefficients(ds, p)
    if route == "monte_carlo":
        A = monte_carlo_matrix(scores, random_directions(p, n_proj, rng.substream(0)))
    else:
        A = wedge_matrix(scores)
    stat = max(float(_quad(A, resid[:, None])[0]), 0.0)

    V = wild_multipliers((n, B), rng.substream(1).generator(), multipliers)
    boot = _quad(A, refit(V * resid[:, None]))
    bad = np.flatnonzero(~np.isfinite(boot))
    if bad.size:
        raise BootstrapFailure("non-finite bootstrap statistic", round_index=int(bad[0]))
    # relative slack so that equal statistics count as exceedances
    exceed = int(np.sum(boot >= stat - 1e-12 * max(stat, 1e-300)))
    p_value = (1 + exceed) / (B + 1)
    return TestResult(
        "GGF",
        hypothesis,
        stat,
        p_value,
        None,
        {"B": B, "p": p, "route": route, "n_proj": n_proj if route == "monte_carlo" else None},
    )
