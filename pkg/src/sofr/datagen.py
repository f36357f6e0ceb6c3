"""Synthetic scalar-on-function datasets for the seven benchmark settings.

Nullity settings (``delta = 0`` means no covariate effect): ``G0``, ``M0``.
Linearity settings (``delta = 0`` means a linear effect): ``G1``, ``G2``,
``M1``, ``H1``, ``Y1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgument
from .funcdata import FunctionalDataset, SparseFunctionalDataset, make_uniform_grid

NULLITY_SETTINGS = ("G0", "M0")
LINEARITY_SETTINGS = ("G1", "G2", "M1", "H1", "Y1")
DESIGNS = ("dense", "moderate", "sparse", "sparse_plus")

# (grid length, domain, error sd, delta range)
_DEFAULTS = {
    "G0": (201, (0.0, 1.0), 0.1, (0.02, 0.9)),
    "G1": (201, (0.0, 1.0), 0.1, (0.01, 0.2)),
    "G2": (201, (0.0, 1.0), 0.1, (0.01, 0.2)),
    "M0": (30, (0.0, 1.0), 1.0, (0.005, 0.04)),
    "M1": (30, (0.0, 1.0), 1.0, (0.05, 0.4)),
    "H1": (100, (0.0, 1.0), 1.0, (0.1, 1.8)),
    "Y1": (101, (0.0, 10.0), np.sqrt(0.1), (0.005, 0.14)),
}

# discrete uniform bounds on the number of retained points per curve
SPARSE_BOUNDS = {
    "G": {"moderate": (100, 120), "sparse": (25, 30)},
    "M": {"moderate": (15, 20), "sparse": (5, 10), "sparse_plus": (9, 12)},
    "H": {"moderate": (50, 60), "sparse": (15, 20)},
    "Y": {"moderate": (15, 20), "sparse": (5, 10)},
}


def default_deltas(setting_id: str, n_values: int = 8) -> np.ndarray:
    """Equispaced departure values over the published range for a setting."""
    lo, hi = _DEFAULTS[_check_id(setting_id)][3]
    return np.linspace(lo, hi, n_values)


def _check_id(setting_id):
    if setting_id not in _DEFAULTS:
        raise InvalidArgument(f"unknown setting {setting_id!r}")
    return setting_id


@dataclass(frozen=True)
class SimulationSetting:
    id: str
    delta: float = 0.0
    n: int = 100
    design: str = "dense"
    n_points: int | None = None
    sigma_eps: float | None = None
    noisy_curves: bool = True  # Y1 only: expose curves with measurement error

    def __post_init__(self):
        _check_id(self.id)
        if self.delta < 0:
            raise InvalidArgument("delta must be nonnegative")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidArgument("n must be a positive integer")
        if self.design not in DESIGNS:
            raise InvalidArgument(f"unknown design {self.design!r}")
        if self.design != "dense":
            sparse_bounds(self.id, self.design)
        J, _, sd, _ = _DEFAULTS[self.id]
        if self.n_points is None:
            object.__setattr__(self, "n_points", J)
        if self.sigma_eps is None:
            object.__setattr__(self, "sigma_eps", float(sd))

    @property
    def domain(self):
        return _DEFAULTS[self.id][1]

    @property
    def hypothesis(self) -> str:
        return "H02" if self.id in NULLITY_SETTINGS else "H01"


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by ``(seed, stream, *path)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    the numbers drawn for replicate ``r`` never depend on which worker or in
    which order replicates are produced.
    """

    seed: int
    stream: int = 0
    path: tuple = field(default=())

    def substream(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,) + self.path)
        return np.random.Generator(np.random.PCG64(ss))


def ou_covariance(s, t, theta: float = 1 / 3, sigma: float = 1.0):
    """Covariance of an Ornstein-Uhlenbeck process started at zero."""
    if theta <= 0:
        raise InvalidArgument("theta must be positive")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise InvalidArgument("time arguments must be nonnegative")
    m = np.minimum(s, t)
    return sigma**2 / (2 * theta) * np.exp(-theta * (s + t)) * np.expm1(2 * theta * m)


def _gaussian_process(points, n, gen):
    C = ou_covariance(points[:, None], points[None, :])
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        L = np.linalg.cholesky(C + 1e-10 * np.eye(points.size))
    return gen.standard_normal((n, points.size)) @ L.T


def _m_basis(t):
    return np.vstack(
        [np.sin(np.pi * t), np.cos(np.pi * t), np.sin(2 * np.pi * t), np.cos(2 * np.pi * t)]
    )


def _brownian_motion(points, n, gen):
    dt = np.diff(points)
    steps = gen.standard_normal((n, dt.size)) * np.sqrt(dt)
    start = np.zeros((n, 1))
    if points[0] > 0:
        start = gen.standard_normal((n, 1)) * np.sqrt(points[0])
    return np.hstack([start, start + np.cumsum(steps, axis=1)])


def generate(setting: SimulationSetting, rng: RngStream) -> FunctionalDataset:
    """Draw ``setting.n`` curves and responses from the setting's generating law."""
    gen = rng.generator()
    a, b = setting.domain
    grid = make_uniform_grid(setting.n_points, a, b)
    t, w = grid.points, grid.weights
    n, d = setting.n, setting.delta
    sid = setting.id

    if sid in ("G0", "G1", "G2"):
        X = _gaussian_process(t, n, gen)
        if sid == "G2":
            beta = t - (t - 0.75) ** 2
        else:
            beta = np.sin(2 * np.pi * t) - np.cos(2 * np.pi * t)
        lin = X @ (w * beta)
        if sid == "G0":
            mean = d * lin
        else:
            mean = lin + d * (X**2) @ w
    elif sid in ("M0", "M1"):
        phi = _m_basis(t)
        sd = np.sqrt(8.0 / np.arange(1, 5) ** 2)
        xi = gen.standard_normal((n, 4)) * sd
        X = xi @ phi
        f1 = (2 * X * np.sin(np.pi * t)) @ w
        if sid == "M0":
            mean = 1.0 + d * f1
        else:
            f2 = (10 * np.cos(-0.125 * X + 0.25 * t - 5)) @ w
            mean = (1 - d) * f1 + d * f2
    elif sid == "H1":
        X = _brownian_motion(t, n, gen)
        integral = X @ w
        mean = 4.0 + integral + d * integral**2
    else:  # Y1
        phi = np.vstack([-np.cos(np.pi * t / 10), np.sin(np.pi * t / 10)]) / np.sqrt(5)
        xi = gen.standard_normal((n, 2)) * np.sqrt([4.0, 1.0])
        X = (t + np.sin(t)) + xi @ phi
        if setting.noisy_curves:
            X = X + 0.5 * gen.standard_normal(X.shape)
        mean = xi.sum(axis=1) + d * (xi[:, 0] ** 2 + xi[:, 1] ** 2 + xi[:, 0] * xi[:, 1])

    y = mean + setting.sigma_eps * gen.standard_normal(n)
    return FunctionalDataset(y, X, grid)


def sparse_bounds(setting_id: str, design: str) -> tuple[int, int]:
    family = _check_id(setting_id)[0]
    if design == "dense":
        raise InvalidArgument("dense designs are never sparsified")
    bounds = SPARSE_BOUNDS[family]
    if design not in bounds or (design == "sparse_plus" and setting_id not in ("M0", "M1")):
        raise InvalidArgument(f"design {design!r} is not defined for setting {setting_id}")
    return bounds[design]


def sparsify(
    ds: FunctionalDataset, setting_id: str, design: str, rng: RngStream
) -> SparseFunctionalDataset:
    """Keep a random subset of grid points per curve, sampled without replacement."""
    lo, hi = sparse_bounds(setting_id, design)
    J = len(ds.grid)
    if J < hi:
        raise InvalidArgument(f"grid of length {J} is shorter than the upper bound {hi}")
    gen = rng.generator()
    m = gen.integers(lo, hi + 1, size=ds.n)
    points, values = [], []
    for i, mi in enumerate(m):
        idx = np.sort(gen.choice(J, size=mi, replace=False))
        points.append(ds.grid.points[idx])
        values.append(ds.curves[i, idx])
    return SparseFunctionalDataset(ds.y, tuple(points), tuple(values), ds.grid.domain)
