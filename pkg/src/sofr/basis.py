"""B-spline bases, roughness penalties and the mixed-model form of the FGAM.

The additive surface ``F(x, t)`` is expanded in a tensor product of cubic
B-splines. Each marginal penalty is split into an unpenalized null space and
a penalized part whose coefficients get an identity covariance, which turns
penalized fitting into a linear mixed model with three variance components:

* ``Z1`` : ``x * f(t)`` departures of the coefficient function from ``b1 + b3 t``
* ``Z2`` : ``g1(x) + t g2(x)`` with ``g`` nonlinear in ``x``
* ``Z3`` : the doubly penalized interaction ``h(x, t)``

Rows are integrated over ``t`` with the grid quadrature weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .exceptions import InvalidArgument, NumericalFailure
from .funcdata import FunctionalDataset


@dataclass(frozen=True)
class SplineBasis:
    knots: np.ndarray
    degree: int = 3

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        if np.any(np.diff(knots) < 0):
            raise InvalidArgument("knots must be nondecreasing")
        if self.K < self.degree + 1:
            raise InvalidArgument("basis dimension must be at least degree + 1")

    @property
    def K(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[self.degree]), float(self.knots[-self.degree - 1])


def bspline_basis(a: float, b: float, K: int, degree: int = 3, interior=None) -> SplineBasis:
    """Clamped B-spline basis of dimension ``K`` on ``[a, b]``.

    Interior knots are equally spaced unless given explicitly.
    """
    n_int = K - degree - 1
    if n_int < 0:
        raise InvalidArgument("K must be at least degree + 1")
    if not a < b:
        raise InvalidArgument("need a < b")
    if interior is None:
        interior = np.linspace(a, b, n_int + 2)[1:-1]
    interior = np.asarray(interior, dtype=float)
    if interior.size != n_int:
        raise InvalidArgument(f"expected {n_int} interior knots")
    knots = np.concatenate([np.full(degree + 1, a), interior, np.full(degree + 1, b)])
    return SplineBasis(knots, degree)


def quantile_basis(x, K: int, degree: int = 3) -> SplineBasis:
    """Basis whose interior knots sit at empirical quantiles of ``x``."""
    x = np.asarray(x, dtype=float).ravel()
    lo, hi = x.min(), x.max()
    if hi - lo < 1e-12:
        raise InvalidArgument("degenerate range of values for the basis")
    n_int = K - degree - 1
    interior = np.quantile(x, np.linspace(0, 1, n_int + 2)[1:-1])
    return bspline_basis(lo, hi, K, degree, interior)


def eval_bspline(basis: SplineBasis, x) -> np.ndarray:
    """Evaluate all basis functions at ``x``; values outside the domain are clamped."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise InvalidArgument("no evaluation points")
    lo, hi = basis.domain
    x = np.clip(x, lo, hi)
    return BSpline.design_matrix(x, basis.knots, basis.degree).toarray()


def penalty_matrix(K: int, order: int = 2) -> np.ndarray:
    """Difference penalty ``D'D`` on ``K`` coefficients."""
    if order < 1 or K <= order:
        raise InvalidArgument("need K > order >= 1")
    D = np.diff(np.eye(K), n=order, axis=0)
    return D.T @ D


def derivative_penalty(basis: SplineBasis, order: int = 2) -> np.ndarray:
    """Integrated squared ``order``-th derivative, exact by Gauss-Legendre quadrature.

    Unlike a difference penalty its null space is exactly the polynomials of
    degree ``< order`` for any knot placement.
    """
    if order > basis.degree:
        raise InvalidArgument("order exceeds the spline degree")
    nodes, wts = np.polynomial.legendre.leggauss(basis.degree - order + 1)
    breaks = np.unique(basis.knots)
    lo, hi = breaks[:-1], breaks[1:]
    half = (hi - lo)[:, None] / 2
    x = ((lo + hi)[:, None] / 2 + half * nodes).ravel()
    qw = (half * wts).ravel()
    K = basis.K
    D = np.empty((x.size, K))
    for k in range(K):
        c = np.zeros(K)
        c[k] = 1.0
        D[:, k] = BSpline(basis.knots, c, basis.degree).derivative(order)(x)
    return D.T @ (qw[:, None] * D)


def reparameterize(B: np.ndarray, P: np.ndarray, tol: float = 1e-10):
    """Split ``B`` into unpenalized and unit-variance penalized columns.

    With ``P = U diag(d) U'``, returns ``X_part = B U_0`` (null space) and
    ``Z_part = B U_+ diag(d_+)^{-1/2}`` so that the penalty on the new
    penalized coefficients is the identity.
    """
    B = np.asarray(B, dtype=float)
    P = np.asarray(P, dtype=float)
    if P.shape != (B.shape[1], B.shape[1]):
        raise InvalidArgument("penalty must be K x K with K = number of basis columns")
    P = (P + P.T) / 2
    d, U = np.linalg.eigh(P)
    if d.size and d.min() < -1e-8:
        raise NumericalFailure("penalty matrix is not positive semi-definite")
    scale = max(d.max(initial=0.0), 0.0)
    pos = d > tol * scale if scale > 0 else np.zeros(d.size, bool)
    X_part = B @ U[:, ~pos]
    Z_part = B @ (U[:, pos] / np.sqrt(d[pos]))
    return X_part, Z_part


@dataclass(frozen=True)
class MixedDesign:
    X: np.ndarray
    Z1: np.ndarray
    Z2: np.ndarray
    Z3: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.Z1.shape[1], self.Z2.shape[1], self.Z3.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]


def fgam_design(ds: FunctionalDataset, K_x: int = 7, K_t: int = 7) -> MixedDesign:
    """Quadrature-integrated mixed-model design of the functional additive model.

    Fixed effects are ``[1, int x, int x t]``. The x-axis knots are placed at
    quantiles of the pooled curve values and penalized by the exact integrated
    second derivative; the t-axis uses equally spaced knots and a second-order
    difference penalty.
    """
    if K_x < 4 or K_t < 4:
        raise InvalidArgument("K_x and K_t must be at least 4")
    X = ds.curves
    n, J = X.shape
    t = ds.grid.points
    w = ds.grid.weights
    if np.ptp(X) < 1e-12:
        raise InvalidArgument("degenerate range of curve values")

    bx = quantile_basis(X, K_x)
    _, Zx = reparameterize(eval_bspline(bx, X), derivative_penalty(bx, 2))
    Zx = Zx.reshape(n, J, -1)

    bt = bspline_basis(t[0], t[-1], K_t)
    Xt, Zt = reparameterize(eval_bspline(bt, t), penalty_matrix(K_t, 2))

    Xw = X * w
    fixed = np.column_stack([np.ones(n), Xw.sum(axis=1), Xw @ t])
    Z1 = Xw @ Zt
    Z2 = np.einsum("j,ija,jb->iab", w, Zx, Xt).reshape(n, -1)
    Z3 = np.einsum("j,ija,jb->iab", w, Zx, Zt).reshape(n, -1)
    return MixedDesign(fixed, Z1, Z2, Z3)
