"""F-type test of no effect based on a regression on FPCA scores."""

from __future__ import annotations

import numpy as np
from scipy.stats import chi2, f

from .exceptions import InvalidArgument, SingularDesign
from .fpca import FpcaFit, fit_fpca, n_for_pve
from .funcdata import FunctionalDataset
from .results import TestResult

P_FLOOR = 1e-16


def select_sn(fit: FpcaFit, pve: float = 0.95) -> int:
    """Number of components reaching ``pve``, capped at ``n - 2``."""
    n = fit.scores.shape[0]
    return max(1, min(n_for_pve(fit.all_eigenvalues, pve), n - 2))


def _rss(D, y):
    coef, _, rank, _ = np.linalg.lstsq(D, y, rcond=None)
    if rank < D.shape[1]:
        raise SingularDesign("score design is rank deficient")
    r = y - D @ coef
    return float(r @ r)


def ksm_from_scores(scores: np.ndarray, y) -> TestResult:
    """Test on a given score matrix (all of its columns are used)."""
    y = np.asarray(y, dtype=float)
    n, s = scores.shape
    if y.shape != (n,):
        raise InvalidArgument("y must have one entry per score row")
    if n <= s + 1:
        raise InvalidArgument(f"need n > s_n + 1 (n={n}, s_n={s})")
    rss0 = float(np.sum((y - y.mean()) ** 2))
    rss1 = _rss(np.column_stack([np.ones(n), scores]), y)
    rss1 = min(rss1, rss0)
    dof = n - s - 1
    if rss1 <= 1e-14 * max(rss0, 1e-300):
        t_f = np.inf if rss0 > 0 else 0.0
    else:
        t_f = ((rss0 - rss1) / s) / (rss1 / dof)
    p_chi2 = max(float(chi2.sf(s * t_f, s)), P_FLOOR) if t_f > 0 else 1.0
    p_f = max(float(f.sf(t_f, s, dof)), P_FLOOR) if t_f > 0 else 1.0
    return TestResult(
        "KSM",
        "H02",
        float(t_f),
        p_chi2,
        s,
        {"s_n": s, "df_den": dof, "p_value_f": p_f, "rss_null": rss0, "rss_alt": rss1},
    )


def ksm_test(
    ds: FunctionalDataset | None = None,
    pve: float = 0.95,
    s_n: int | None = None,
    fit: FpcaFit | None = None,
    y=None,
) -> TestResult:
    """Nullity test regressing ``y`` on the leading FPCA scores.

    The number of scores is ``s_n`` when given, otherwise chosen by ``pve``.
    Pass ``fit`` (and ``y``) to reuse scores computed elsewhere, for example
    conditional-expectation scores of sparsely observed curves.
    """
    if fit is None:
        if ds is None:
            raise InvalidArgument("need a dataset or an FPCA fit")
        fit = fit_fpca(ds, pve=1.0)
    y = ds.y if y is None else y
    s = select_sn(fit, pve) if s_n is None else int(s_n)
    if s > fit.n_components:
        if ds is None:
            raise InvalidArgument(f"fit has only {fit.n_components} components")
        fit = fit_fpca(ds, k=s)
    return ksm_from_scores(fit.scores[:, :s], y)
