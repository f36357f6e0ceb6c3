"""Functional principal components for dense and sparsely observed curves."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DegenerateCovariance, ImputationFailure, InvalidArgument
from .funcdata import FunctionalDataset, Grid, SparseFunctionalDataset

EIG_TOL = 1e-10
SIGMA2_FLOOR = 1e-8


@dataclass(frozen=True)
class FpcaFit:
    """Estimated mean, leading eigenpairs and per-subject scores.

    ``eigenfunctions`` holds one curve per row and is orthonormal under the
    grid quadrature. ``all_eigenvalues`` keeps the full positive spectrum so
    that other truncation levels can be chosen later.
    """

    mean: np.ndarray
    eigenfunctions: np.ndarray
    eigenvalues: np.ndarray
    scores: np.ndarray
    pve: float
    all_eigenvalues: np.ndarray
    grid: Grid
    sigma2: float | None = None

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size

    def truncate(self, k: int) -> "FpcaFit":
        if not 1 <= k <= self.n_components:
            raise InvalidArgument(f"k must lie in [1, {self.n_components}]")
        total = self.all_eigenvalues.sum()
        return replace(
            self,
            eigenfunctions=self.eigenfunctions[:k],
            eigenvalues=self.eigenvalues[:k],
            scores=self.scores[:, :k],
            pve=float(self.eigenvalues[:k].sum() / total),
        )


def n_for_pve(eigenvalues, pve: float) -> int:
    """Smallest count whose cumulative eigenvalue share reaches ``pve``."""
    if not 0 < pve <= 1:
        raise InvalidArgument("pve must lie in (0, 1]")
    lam = np.asarray(eigenvalues, dtype=float)
    lam = lam[lam > 0]
    if lam.size == 0:
        raise DegenerateCovariance("no positive eigenvalues")
    share = np.cumsum(lam) / lam.sum()
    # the relative slack keeps pve=1.0 from failing on rounding
    return int(min(np.searchsorted(share, pve - 1e-12) + 1, lam.size))


def _weighted_eigh(cov, w):
    """Eigenpairs of the integral operator with kernel ``cov`` under weights ``w``."""
    sw = np.sqrt(w)
    lam, U = np.linalg.eigh(sw[:, None] * cov * sw[None, :])
    lam, U = lam[::-1], U[:, ::-1]
    keep = lam > EIG_TOL * max(lam[0], 0.0) if lam[0] > 0 else np.zeros(lam.size, bool)
    if not keep.any():
        raise DegenerateCovariance("covariance has no positive eigenvalues")
    phi = (U[:, keep] / sw[:, None]).T
    return lam[keep], phi


def _choose_k(lam, k, pve):
    if k is not None and pve is not None:
        raise InvalidArgument("give either k or pve, not both")
    if k is None:
        return n_for_pve(lam, 0.99 if pve is None else pve)
    if int(k) != k or k < 1:
        raise InvalidArgument("k must be a positive integer")
    return int(min(k, lam.size))


def fit_fpca(ds: FunctionalDataset, k: int | None = None, pve: float | None = None) -> FpcaFit:
    """FPCA of densely observed curves.

    Truncate either at ``k`` components or at the smallest count explaining
    ``pve`` of the variance (default 0.99).
    """
    if ds.n < 2:
        raise InvalidArgument("FPCA needs at least two curves")
    w = ds.grid.weights
    if np.any(w <= 0):
        raise InvalidArgument("quadrature weights must be positive")
    mean = ds.curves.mean(axis=0)
    Xc = ds.curves - mean
    cov = Xc.T @ Xc / (ds.n - 1)
    lam, phi = _weighted_eigh(cov, w)
    m = _choose_k(lam, k, pve)
    scores = Xc @ (w * phi[:m]).T
    return FpcaFit(
        mean=mean,
        eigenfunctions=phi[:m],
        eigenvalues=lam[:m],
        scores=scores,
        pve=float(lam[:m].sum() / lam.sum()),
        all_eigenvalues=lam,
        grid=ds.grid,
    )


def align_signs(fit: FpcaFit, reference) -> FpcaFit:
    """Flip eigenfunctions (and their scores) to agree in sign with ``reference``."""
    ref = np.atleast_2d(np.asarray(reference, dtype=float))
    m = min(ref.shape[0], fit.n_components)
    if ref.shape[1] != len(fit.grid):
        raise InvalidArgument("reference curves must match the grid length")
    ip = (fit.eigenfunctions[:m] * fit.grid.weights) @ ref[:m].T
    signs = np.ones(fit.n_components)
    signs[:m] = np.where(np.diag(ip) < 0, -1.0, 1.0)
    return replace(
        fit,
        eigenfunctions=fit.eigenfunctions * signs[:, None],
        scores=fit.scores * signs,
    )


# ---------------------------------------------------------------------------
# sparse designs


def _epanechnikov_weights(grid_pts, h):
    """Kernel matrices ``K_p[s, a] = K((g_a - g_s)/h) (g_a - g_s)^p`` for p = 0, 1, 2."""
    d = grid_pts[None, :] - grid_pts[:, None]
    u = d / h
    K = np.where(np.abs(u) < 1, 0.75 * (1 - u**2), 0.0)
    return K, K * d, K * d**2


def _solve_local(S0, S1, S2, T0, T1):
    det = S0 * S2 - S1**2
    if np.any(np.abs(det) <= 1e-14 * np.maximum(S0 * S2, 1e-300)):
        raise ImputationFailure("local-linear smoother has no support at some grid points")
    return (S2 * T0 - S1 * T1) / det


def _smooth_mean(counts, sums, kernels):
    K0, K1, K2 = kernels
    return _solve_local(K0 @ counts, K1 @ counts, K2 @ counts, K0 @ sums, K1 @ sums)


def _smooth_surface(N, S, kernels):
    """Local-linear surface smoother on binned pair counts ``N`` and sums ``S``."""
    K0, K1, K2 = kernels
    m00 = K0 @ N @ K0.T
    m10 = K1 @ N @ K0.T
    m01 = K0 @ N @ K1.T
    m20 = K2 @ N @ K0.T
    m02 = K0 @ N @ K2.T
    m11 = K1 @ N @ K1.T
    r0 = K0 @ S @ K0.T
    r1 = K1 @ S @ K0.T
    r2 = K0 @ S @ K1.T
    A = np.stack(
        [
            np.stack([m00, m10, m01], -1),
            np.stack([m10, m20, m11], -1),
            np.stack([m01, m11, m02], -1),
        ],
        -2,
    )
    rhs = np.stack([r0, r1, r2], -1)
    scale = np.abs(A).max(axis=(-1, -2), keepdims=True)
    if np.any(scale == 0):
        raise ImputationFailure("covariance smoother has no support at some grid pairs")
    try:
        sol = np.linalg.solve(A / scale, (rhs / scale[..., 0])[..., None])[..., 0]
    except np.linalg.LinAlgError:
        raise ImputationFailure("covariance smoother is singular") from None
    return sol[..., 0]


def _bin(sds: SparseFunctionalDataset, target: Grid):
    g = target.points
    mids = (g[1:] + g[:-1]) / 2
    return [np.searchsorted(mids, t) for t in sds.points]


def fit_sparse_fpca(
    sds: SparseFunctionalDataset,
    target: Grid,
    pve: float = 0.99,
    bandwidth: float | None = None,
) -> FpcaFit:
    """FPCA from pooled sparse observations with conditional-expectation scores.

    Observations are binned to the nearest ``target`` grid point. The mean and
    the covariance surface (own-observation products excluded) are estimated by
    local-linear smoothing with an Epanechnikov kernel. The measurement error
    variance is the average gap between the smoothed raw variance and the
    surface diagonal over the central half of the domain.
    """
    a, b = target.domain
    if sds.domain[0] < a - 1e-12 or sds.domain[1] > b + 1e-12:
        raise InvalidArgument("target grid must cover the observation domain")
    h = (b - a) / 5 if bandwidth is None else float(bandwidth)
    if h <= 0:
        raise InvalidArgument("bandwidth must be positive")
    J = len(target)
    idx = _bin(sds, target)
    if np.unique(np.concatenate(idx)).size < 10:
        raise ImputationFailure("fewer than 10 distinct observation locations")
    kernels = _epanechnikov_weights(target.points, h)

    flat_idx = np.concatenate(idx)
    flat_val = np.concatenate(sds.values)
    counts = np.bincount(flat_idx, minlength=J).astype(float)
    sums = np.bincount(flat_idx, weights=flat_val, minlength=J)
    mu = _smooth_mean(counts, sums, kernels)

    N = np.zeros((J, J))
    S = np.zeros((J, J))
    diag_sums = np.zeros(J)
    for ii, v in zip(idx, sds.values):
        r = v - mu[ii]
        outer = np.outer(r, r)
        np.fill_diagonal(outer, 0.0)
        off = np.ones_like(outer)
        np.fill_diagonal(off, 0.0)
        np.add.at(N, (ii[:, None], ii[None, :]), off)
        np.add.at(S, (ii[:, None], ii[None, :]), outer)
        np.add.at(diag_sums, ii, r**2)
    G = _smooth_surface(N, S, kernels)
    G = (G + G.T) / 2
    var_raw = _smooth_mean(counts, diag_sums, kernels)

    t = target.points
    mid = (t >= a + (b - a) / 4) & (t <= b - (b - a) / 4)
    sigma2 = max(float(np.mean(var_raw[mid] - np.diag(G)[mid])), SIGMA2_FLOOR)

    lam, phi = _weighted_eigh(G, target.weights)
    m = n_for_pve(lam, pve)
    lam_m, phi_m = lam[:m], phi[:m]

    scores = np.empty((sds.n, m))
    for i, (ii, v) in enumerate(zip(idx, sds.values)):
        Phi = phi_m[:, ii].T
        cov_i = (Phi * lam_m) @ Phi.T + sigma2 * np.eye(ii.size)
        scores[i] = lam_m * (Phi.T @ np.linalg.solve(cov_i, v - mu[ii]))
    return FpcaFit(
        mean=mu,
        eigenfunctions=phi_m,
        eigenvalues=lam_m,
        scores=scores,
        pve=float(lam_m.sum() / lam.sum()),
        all_eigenvalues=lam,
        grid=target,
        sigma2=sigma2,
    )


def reconstruct(fit: FpcaFit) -> np.ndarray:
    return fit.mean + fit.scores @ fit.eigenfunctions


def impute_sparse(
    sds: SparseFunctionalDataset, target: Grid, pve: float = 0.99
) -> FunctionalDataset:
    """Fill sparse curves onto ``target`` as mean plus truncated score expansion."""
    fit = fit_sparse_fpca(sds, target, pve)
    return FunctionalDataset(sds.y, reconstruct(fit), target)
