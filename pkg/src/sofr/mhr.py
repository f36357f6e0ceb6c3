"""Penalized-spline mixed models: REML/ML fitting, RLRT for linearity, LRT for nullity.

Variance ratios ``lambda_j = sigma_j^2 / sigma_e^2`` are profiled. With the
fixed effects projected out, the profile likelihood only involves the
projected Gram matrix ``W = Z' P0 Z`` and ``v = Z' P0 y``:

    y'Py     = |P0 y|^2 - v' S (I + S W S)^-1 S v,     S = diag(sqrt(lambda))
    log|V~|  = log|I + S W S|

For two ratio blocks (a small dense block ``a`` and a larger block ``b``) the
``b`` block is diagonalized once and everything reduces to ``q_a x q_a``
Schur complements, which makes thousands of refits per test affordable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import MixedDesign, fgam_design
from .datagen import RngStream
from .exceptions import InvalidArgument, NullSimulationUnstable, SingularDesign
from .funcdata import FunctionalDataset
from .results import TestResult

RATIO_GRID = np.concatenate([[0.0], np.logspace(-8, 4, 41)])
COARSE_GRID = np.concatenate([[0.0], np.logspace(-8, 4, 13)])
CONSTRAINTS = ("none", "tie_23", "linear", "null_model")
STAT_SNAP = 1e-6
GOLDEN = (np.sqrt(5) - 1) / 2
LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class MixedFit:
    """Fitted mixed model.

    ``sigma2`` holds the three random-effect variances (zero for components
    absent under the constraint) and ``ratios`` the same divided by
    ``sigma2_e``.
    """

    beta: np.ndarray
    sigma2: tuple
    sigma2_e: float
    ratios: tuple
    log_reml: float
    log_ml: float
    converged: bool
    constraint: str
    method: str


@dataclass(frozen=True)
class NullDistribution:
    sample: np.ndarray
    size: int
    zero_mass: float
    failures: int = 0

    @classmethod
    def from_values(cls, values, failures: int = 0) -> "NullDistribution":
        s = np.sort(np.asarray(values, dtype=float))
        s.setflags(write=False)
        return cls(s, s.size, float(np.mean(s == 0)) if s.size else 0.0, failures)

    def p_value(self, stat: float) -> float:
        exceed = self.size - np.searchsorted(self.sample, stat - 1e-12 * max(stat, 1.0), "left")
        return (1 + int(exceed)) / (self.size + 1)


def _orthonormal_fixed(X):
    Q, R = np.linalg.qr(X)
    d = np.abs(np.diag(R))
    if d.size and d.min() <= 1e-10 * d.max():
        raise SingularDesign("fixed-effects design is rank deficient")
    return Q


class _BlockSchur:
    """``log|I + S W S|`` and ``(Sv)'(I + S W S)^-1 (Sv)`` for two scalar ratios.

    ``W`` is partitioned into ``a`` and ``b`` blocks; ``b`` is rotated to the
    eigenbasis of ``W_bb`` so that its contribution is diagonal.
    """

    def __init__(self, Waa, Wab, Wbb):
        lam, U = np.linalg.eigh(Wbb) if Wbb.size else (np.zeros(0), np.zeros((0, 0)))
        self.lam = np.clip(lam, 0.0, None)
        self.U = U
        self.Waa = Waa
        self.C = Wab @ U
        self.qa = Waa.shape[0]

    def _schur(self, lb):
        db = lb[:, None] / (1 + lb[:, None] * self.lam)
        Sp = self.Waa - np.einsum("ik,sk,jk->sij", self.C, db, self.C)
        return db, Sp

    def terms(self, la, lb, va=None, vb=None):
        """Evaluate at per-row ratios; ``vb`` must already be rotated."""
        la = np.asarray(la, dtype=float)
        lb = np.asarray(lb, dtype=float)
        db, Sp = self._schur(lb)
        Sc = np.eye(self.qa) + la[:, None, None] * Sp
        _, ld = np.linalg.slogdet(Sc)
        logdet = np.log1p(lb[:, None] * self.lam).sum(axis=1) + ld
        if va is None:
            return logdet, None
        ua = va - (vb * db) @ self.C.T
        sol = np.linalg.solve(Sc, ua[..., None])[..., 0]
        quad = (db * vb**2).sum(axis=1) + la * (ua * sol).sum(axis=1)
        return logdet, quad

    def grid_terms(self, grid_a, grid_b, va=None, vb=None):
        """All grid combinations: logdet ``(Gb, Ga)`` and quad ``(S, Gb, Ga)``."""
        logdet = np.empty((grid_b.size, grid_a.size))
        quad = None if va is None else np.empty((va.shape[0], grid_b.size, grid_a.size))
        for j, lb in enumerate(grid_b):
            db, Sp = self._schur(np.array([lb]))
            s, Qs = np.linalg.eigh(Sp[0])
            s = np.clip(s, 0.0, None)
            denom = 1 + grid_a[None, :] * s[:, None]
            logdet[j] = np.log1p(lb * self.lam).sum() + np.log(denom).sum(axis=0)
            if va is not None:
                ua = va - (vb * db) @ self.C.T
                ur2 = (ua @ Qs) ** 2
                quad[:, j] = (vb**2 @ db[0])[:, None] + grid_a * (ur2 @ (1 / denom))
        return logdet, quad


class _Profile:
    """Profile (restricted) log likelihood of ``y = X b + Za ua + Zb ub + e``."""

    def __init__(self, X, Za, Zb, method="REML"):
        if method not in ("REML", "ML"):
            raise InvalidArgument("method must be REML or ML")
        self.method = method
        self.X = X
        self.n, self.p = X.shape
        self.Q = _orthonormal_fixed(X)
        Zb = np.zeros((self.n, 0)) if Zb is None else Zb
        # ratio grids are defined on the scale of the average Gram diagonal
        self.scale_a = _block_scale(Za)
        self.scale_b = _block_scale(Zb)
        self.Za = Za / np.sqrt(self.scale_a)
        self.Zb = Zb / np.sqrt(self.scale_b)
        PZa, PZb = self._project(self.Za.T).T, self._project(self.Zb.T).T
        self.quad_schur = _BlockSchur(self.Za.T @ PZa, self.Za.T @ PZb, self.Zb.T @ PZb)
        if method == "REML":
            self.det_schur = self.quad_schur
            self.dof = self.n - self.p
        else:
            self.det_schur = _BlockSchur(
                self.Za.T @ self.Za, self.Za.T @ self.Zb, self.Zb.T @ self.Zb
            )
            self.dof = self.n

    @property
    def has_b(self) -> bool:
        return self.Zb.shape[1] > 0

    def _project(self, Y):
        return Y - (Y @ self.Q) @ self.Q.T

    def summaries(self, Y):
        R = self._project(np.atleast_2d(Y))
        return (R * R).sum(axis=1), R @ self.Za, (R @ self.Zb) @ self.quad_schur.U

    def _ell(self, yy, logdet, quad):
        ypy = np.maximum(yy - quad, 1e-14 * yy + 1e-300)
        return -0.5 * (self.dof * (np.log(ypy / self.dof) + LOG2PI + 1) + logdet), ypy

    def evaluate(self, la, lb, summ):
        yy, va, vb = summ
        logdet, quad = self.quad_schur.terms(la, lb, va, vb)
        if self.det_schur is not self.quad_schur:
            logdet, _ = self.det_schur.terms(la, lb)
        return self._ell(yy, logdet, quad)[0]

    def _grid(self, summ, grid_a, grid_b):
        yy, va, vb = summ
        logdet, quad = self.quad_schur.grid_terms(grid_a, grid_b, va, vb)
        if self.det_schur is not self.quad_schur:
            logdet, _ = self.det_schur.grid_terms(grid_a, grid_b)
        return self._ell(yy[:, None, None], logdet[None], quad)[0]

    def _golden(self, f, x, best, grid, rows, iters=40):
        """Refine ``x`` in log space between neighbouring grid values."""
        k = np.searchsorted(grid, x)
        k = np.clip(k, 0, grid.size - 1)
        active = rows & (x > 0)
        lo = np.log(grid[np.maximum(k - 1, 1)])
        hi = np.log(grid[np.minimum(k + 1, grid.size - 1)])
        lo = np.where(k <= 1, np.log(grid[1]) - (np.log(grid[2]) - np.log(grid[1])), lo)
        c = hi - GOLDEN * (hi - lo)
        d = lo + GOLDEN * (hi - lo)
        fc, fd = f(np.exp(c)), f(np.exp(d))
        for _ in range(iters):
            left = fc > fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            c_new = np.where(left, hi - GOLDEN * (hi - lo), d)
            d_new = np.where(left, c, lo + GOLDEN * (hi - lo))
            f_new = f(np.exp(np.where(left, c_new, d_new)))
            fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
            c, d = c_new, d_new
        xm = np.exp((lo + hi) / 2)
        fm = f(xm)
        better = active & (fm > best)
        converged = (hi - lo) < 1e-6
        return np.where(better, xm, x), np.where(better, fm, best), converged | ~active

    def maximize(self, Y, free_b: bool, grid=RATIO_GRID):
        """Maximize over ``la`` (and ``lb`` when ``free_b``) for each row of ``Y``.

        Returns effective ratios, the maximum and a convergence flag per row.
        """
        summ = self.summaries(Y)
        S = summ[0].size
        grid_b = grid if (free_b and self.has_b) else np.zeros(1)
        ell = self._grid(summ, grid, grid_b)
        flat = ell.reshape(S, -1).argmax(axis=1)
        jb, ja = np.unravel_index(flat, ell.shape[1:])
        la, lb = grid[ja], grid_b[jb]
        best = ell.reshape(S, -1)[np.arange(S), flat]
        rows = np.ones(S, bool)
        conv = np.ones(S, bool)
        sweeps = 2 if grid_b.size > 1 else 1
        for _ in range(sweeps):
            la, best, ca = self._golden(lambda x: self.evaluate(x, lb, summ), la, best, grid, rows)
            conv &= ca
            if grid_b.size > 1:
                lb, best, cb = self._golden(
                    lambda x: self.evaluate(la, x, summ), lb, best, grid, rows
                )
                conv &= cb
        return la, lb, best, conv

    def actual_ratios(self, la, lb):
        return la / self.scale_a, lb / self.scale_b

    def gls(self, y, la, lb):
        """Fixed effects and ``y'Py`` at given effective ratios."""
        Zs = np.hstack([self.Za * np.sqrt(la), self.Zb * np.sqrt(lb)])
        M = np.eye(Zs.shape[1]) + Zs.T @ Zs

        def vinv(A):
            return A - Zs @ np.linalg.solve(M, Zs.T @ A)

        ViX = vinv(self.X)
        beta = np.linalg.solve(self.X.T @ ViX, ViX.T @ y)
        r = y - self.X @ beta
        return beta, float(r @ vinv(r[:, None])[:, 0])


def _block_scale(Z):
    if Z.shape[1] == 0:
        return 1.0
    s = float(np.sum(Z * Z)) / Z.shape[1]
    return s if s > 0 else 1.0


def _blocks(design: MixedDesign, constraint: str):
    if constraint == "tie_23":
        return design.X, design.Z1, np.hstack([design.Z2, design.Z3])
    if constraint == "linear":
        return design.X, design.Z1, None
    raise InvalidArgument(f"unknown constraint {constraint!r}")


def profile_loglik_dense(design: MixedDesign, y, ratios, constraint="none", method="REML"):
    """Profile log likelihood computed directly from the ``n x n`` covariance.

    Independent of the structured evaluator and therefore used as its oracle.
    ``ratios`` gives one variance ratio per random-effect block in use.
    """
    y = np.asarray(y, dtype=float)
    if constraint == "null_model":
        X, Zs = np.ones((y.size, 1)), []
    elif constraint == "linear":
        X, Zs = design.X, [design.Z1]
    elif constraint == "tie_23":
        X, Zs = design.X, [design.Z1, np.hstack([design.Z2, design.Z3])]
    else:
        X, Zs = design.X, [design.Z1, design.Z2, design.Z3]
    n, p = X.shape
    V = np.eye(n)
    for lam, Z in zip(ratios, Zs):
        V += lam * Z @ Z.T
    L = np.linalg.cholesky(V)
    logdet_v = 2 * np.log(np.diag(L)).sum()
    ViX = np.linalg.solve(V, X)
    Viy = np.linalg.solve(V, y)
    XtViX = X.T @ ViX
    beta = np.linalg.solve(XtViX, X.T @ Viy)
    r = y - X @ beta
    ypy = float(r @ np.linalg.solve(V, r))
    if method == "ML":
        return -0.5 * (n * (np.log(ypy / n) + LOG2PI + 1) + logdet_v)
    dof = n - p
    logdet = logdet_v + np.linalg.slogdet(XtViX)[1] - np.linalg.slogdet(X.T @ X)[1]
    return -0.5 * (dof * (np.log(ypy / dof) + LOG2PI + 1) + logdet)


class _GenericProfile:
    """Dense-Gram profile for any number of ratio blocks (used for ``none``)."""

    def __init__(self, X, Zs, method):
        self.X, self.method = X, method
        n, p = X.shape
        Q = _orthonormal_fixed(X)
        self.scales = [_block_scale(Z) for Z in Zs]
        Z = np.hstack([Zj / np.sqrt(s) for Zj, s in zip(Zs, self.scales)])
        self.Z = Z
        self.cols = np.concatenate([np.full(Zj.shape[1], j) for j, Zj in enumerate(Zs)])
        PZ = Z - Q @ (Q.T @ Z)
        self.W = Z.T @ PZ
        self.G = self.W if method == "REML" else Z.T @ Z
        self.Q = Q
        self.dof = n - p if method == "REML" else n

    def __call__(self, lams, y):
        R = y - self.Q @ (self.Q.T @ y)
        v = self.Z.T @ R
        s = np.sqrt(np.asarray(lams)[self.cols])
        M = np.eye(s.size) + s[:, None] * self.W * s[None, :]
        L = np.linalg.cholesky(M)
        w = np.linalg.solve(L, s * v)
        ypy = max(float(R @ R - w @ w), 1e-300)
        if self.G is self.W:
            logdet = 2 * np.log(np.diag(L)).sum()
        else:
            logdet = np.linalg.slogdet(np.eye(s.size) + s[:, None] * self.G * s[None, :])[1]
        return -0.5 * (self.dof * (np.log(ypy / self.dof) + LOG2PI + 1) + logdet)

    def maximize(self, y):
        k = len(self.scales)
        mesh = np.array(np.meshgrid(*[COARSE_GRID] * k, indexing="ij")).reshape(k, -1).T
        vals = np.array([self(m, y) for m in mesh])
        x = mesh[vals.argmax()].copy()
        best = vals.max()
        for _ in range(3):
            for j in range(k):

                def f(t, j=j):
                    z = x.copy()
                    z[j] = t
                    return self(z, y)

                t, val = _golden_scalar(f, x[j])
                if val > best:
                    x[j], best = t, val
        return x, best, True


def _golden_scalar(f, x0, iters=60):
    grid = RATIO_GRID
    if x0 <= 0:
        lo, hi = np.log(grid[1]) - 1.0, np.log(grid[2])
    else:
        lo, hi = np.log(x0) - 1.5, min(np.log(x0) + 1.5, np.log(grid[-1]))
    c, d = hi - GOLDEN * (hi - lo), lo + GOLDEN * (hi - lo)
    fc, fd = f(np.exp(c)), f(np.exp(d))
    for _ in range(iters):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = f(np.exp(c))
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = f(np.exp(d))
    t = np.exp((lo + hi) / 2)
    return t, f(t)


def fit_mixed(design: MixedDesign, y, constraint: str = "tie_23", method: str = "REML") -> MixedFit:
    """Fit the mixed model under a variance-component constraint.

    ``none`` estimates three ratios, ``tie_23`` forces the second and third
    variances to be equal, ``linear`` drops the second and third components
    and ``null_model`` keeps only an intercept.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (design.n,):
        raise InvalidArgument("y length must match the design rows")
    if constraint not in CONSTRAINTS:
        raise InvalidArgument(f"constraint must be one of {CONSTRAINTS}")
    n = y.size

    if constraint == "null_model":
        beta = np.array([y.mean()])
        rss = float(np.sum((y - beta[0]) ** 2))
        dof = n - 1 if method == "REML" else n
        zero = (0.0, 0.0, 0.0)
        return MixedFit(
            beta,
            zero,
            rss / dof,
            zero,
            _null_loglik(rss, n - 1),
            _null_loglik(rss, n),
            True,
            constraint,
            method,
        )

    if constraint == "none":
        gp = _GenericProfile(design.X, [design.Z1, design.Z2, design.Z3], method)
        eff, _, conv = gp.maximize(y)
        lams = tuple(float(e / s) for e, s in zip(eff, gp.scales))
    else:
        X, Za, Zb = _blocks(design, constraint)
        prof = _Profile(X, Za, Zb, method)
        la, lb, _, conv = prof.maximize(y[None, :], free_b=Zb is not None)
        ra, rb = prof.actual_ratios(la[0], lb[0])
        lams = (float(ra), float(rb), float(rb)) if Zb is not None else (float(ra), 0.0, 0.0)
        conv = bool(conv[0])

    reml = _loglik_at(design, y, lams, "REML")
    ml = _loglik_at(design, y, lams, "ML")
    beta, ypy = reml["beta"], reml["ypy"]
    s2e = ypy / (n - design.X.shape[1] if method == "REML" else n)
    return MixedFit(
        beta,
        tuple(lam * s2e for lam in lams),
        s2e,
        lams,
        reml["ell"],
        ml["ell"],
        conv,
        constraint,
        method,
    )


def _null_loglik(rss, dof):
    return -0.5 * dof * (np.log(rss / dof) + LOG2PI + 1)


def _loglik_at(design: MixedDesign, y, lams, method):
    """Profile likelihood, GLS coefficients and ``y'Py`` at given ratios."""
    X = design.X
    n, p = X.shape
    Zs = np.hstack([Z * np.sqrt(lam) for Z, lam in zip((design.Z1, design.Z2, design.Z3), lams)])
    M = np.eye(Zs.shape[1]) + Zs.T @ Zs
    logdet_v = np.linalg.slogdet(M)[1]

    def vinv(A):
        return A - Zs @ np.linalg.solve(M, Zs.T @ A)

    ViX = vinv(X)
    XtViX = X.T @ ViX
    beta = np.linalg.solve(XtViX, ViX.T @ y)
    r = y - X @ beta
    ypy = float(r @ vinv(r))
    if method == "ML":
        ell = -0.5 * (n * (np.log(ypy / n) + LOG2PI + 1) + logdet_v)
    else:
        dof = n - p
        logdet = logdet_v + np.linalg.slogdet(XtViX)[1] - np.linalg.slogdet(X.T @ X)[1]
        ell = -0.5 * (dof * (np.log(ypy / dof) + LOG2PI + 1) + logdet)
    return {"ell": float(ell), "beta": beta, "ypy": ypy}


def _snap(stats):
    return np.where(stats < STAT_SNAP, 0.0, stats)


def _null_distribution(stats, n_null):
    ok = np.isfinite(stats)
    failures = int(n_null - ok.sum())
    if failures > 0.01 * n_null:
        raise NullSimulationUnstable(f"{failures} of {n_null} null refits failed")
    return NullDistribution.from_values(stats[ok], failures)


def rlrt_statistics(prof: _Profile, Y) -> tuple[np.ndarray, dict]:
    """RLRT for zero ``b`` variance, one value per row of ``Y``."""
    la0, _, ell0, c0 = prof.maximize(Y, free_b=False)
    la1, lb1, ell1, c1 = prof.maximize(Y, free_b=True)
    ell1 = np.maximum(ell1, ell0)
    stats = _snap(2 * (ell1 - ell0))
    return stats, {"la0": la0, "la1": la1, "lb1": lb1, "converged": c0 & c1}


def _check_n_null(n_null):
    if n_null < 1000:
        raise InvalidArgument("n_null must be at least 1000")


def mhr_linearity(
    ds: FunctionalDataset,
    n_null: int = 2000,
    rng: RngStream | None = None,
    K_x: int = 7,
    K_t: int = 7,
    design: MixedDesign | None = None,
) -> TestResult:
    """Restricted likelihood ratio test of a linear covariate effect.

    The alternative is the additive model with the two nonlinear components
    sharing one variance; the null keeps only the linear-model random effect.
    Its finite-sample distribution is simulated from the fitted null model.
    """
    _check_n_null(n_null)
    rng = rng or RngStream(0)
    design = design or fgam_design(ds, K_x, K_t)
    prof = _Profile(design.X, design.Z1, np.hstack([design.Z2, design.Z3]), "REML")
    stat, info = rlrt_statistics(prof, ds.y[None, :])
    stat = float(stat[0])

    la0 = float(info["la0"][0])
    beta, ypy = prof.gls(ds.y, la0, 0.0)
    s2e = ypy / prof.dof
    gen = rng.substream(0).generator()
    b = gen.standard_normal((n_null, prof.Za.shape[1])) * np.sqrt(la0 * s2e)
    Y = design.X @ beta + b @ prof.Za.T + gen.standard_normal((n_null, ds.n)) * np.sqrt(s2e)
    null_stats, _ = rlrt_statistics(prof, Y)
    null = _null_distribution(null_stats, n_null)
    ra, rb = prof.actual_ratios(la0, 0.0)
    return TestResult(
        "MHR",
        "H01",
        stat,
        null.p_value(stat),
        None,
        {
            "n_null": n_null,
            "null_zero_mass": null.zero_mass,
            "null_failures": null.failures,
            "sigma2_e": s2e,
            "sigma2_1": float(ra * s2e),
            "ratio_alt": prof.actual_ratios(info["la1"][0], info["lb1"][0]),
            "null": null,
        },
    )


def lrt_statistics(prof: _Profile, Y) -> np.ndarray:
    """ML likelihood ratio of the linear mixed model against an intercept-only model."""
    Y = np.atleast_2d(Y)
    n = Y.shape[1]
    Yc = Y - Y.mean(axis=1, keepdims=True)
    rss0 = (Yc * Yc).sum(axis=1)
    _, _, ell1, _ = prof.maximize(Y, free_b=False)
    ell0 = _null_loglik(rss0, n)
    return _snap(2 * np.maximum(ell1 - ell0, 0.0))


def mhr_nullity(
    ds: FunctionalDataset,
    n_null: int = 2000,
    rng: RngStream | None = None,
    K_x: int = 7,
    K_t: int = 7,
    design: MixedDesign | None = None,
) -> TestResult:
    """Likelihood ratio test of no covariate effect.

    The alternative is the functional linear model in mixed-model form
    (linear fixed effects plus one random-effect block), fitted by ML.
    """
    _check_n_null(n_null)
    rng = rng or RngStream(0)
    if design is None:
        design = fgam_design(ds, K_x, K_t)
    prof = _Profile(design.X, design.Z1, None, "ML")
    stat = float(lrt_statistics(prof, ds.y)[0])
    mu = ds.y.mean()
    s2 = float(np.mean((ds.y - mu) ** 2))
    gen = rng.substream(0).generator()
    Y = mu + np.sqrt(s2) * gen.standard_normal((n_null, ds.n))
    null = _null_distribution(lrt_statistics(prof, Y), n_null)
    return TestResult(
        "MHR",
        "H02",
        stat,
        null.p_value(stat),
        None,
        {
            "n_null": n_null,
            "null_zero_mass": null.zero_mass,
            "null_failures": null.failures,
            "null": null,
        },
    )
