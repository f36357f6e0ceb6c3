"""Containers for functional data on a shared grid, plus quadrature helpers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgument, ParseError


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Trapezoid-rule quadrature weights for an increasing grid."""
    points = np.asarray(points, dtype=float)
    h = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


@dataclass(frozen=True)
class Grid:
    """Ordered evaluation points with nonnegative quadrature weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        w = _frozen(self.weights)
        if pts.ndim != 1 or pts.size < 2:
            raise InvalidArgument("grid needs at least two points")
        if w.shape != pts.shape:
            raise InvalidArgument("weights and points must have the same length")
        if not np.all(np.diff(pts) > 0):
            raise InvalidArgument("grid points must be strictly increasing")
        if np.any(w < 0):
            raise InvalidArgument("quadrature weights must be nonnegative")
        length = pts[-1] - pts[0]
        if abs(w.sum() - length) > 1e-12 * max(1.0, length):
            raise InvalidArgument("quadrature weights must sum to the domain length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.points.size

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.points[0]), float(self.points[-1])

    @property
    def length(self) -> float:
        return float(self.points[-1] - self.points[0])

    @classmethod
    def from_points(cls, points) -> "Grid":
        return cls(points, trapezoid_weights(points))


def make_uniform_grid(n_points: int, a: float, b: float) -> Grid:
    """Equispaced grid on ``[a, b]`` (endpoints included) with trapezoid weights.

    >>> make_uniform_grid(3, 0, 1).weights
    array([0.25, 0.5 , 0.25])
    """
    if int(n_points) != n_points or n_points < 2:
        raise InvalidArgument("n_points must be an integer >= 2")
    if not a < b:
        raise InvalidArgument("need a < b")
    return Grid.from_points(np.linspace(a, b, int(n_points)))


def inner_product(f, g, grid: Grid):
    """Quadrature approximation of the L2 inner product.

    Works row-wise when ``f`` or ``g`` are 2-D (curves stored as rows).
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    J = len(grid)
    if f.shape[-1] != J or g.shape[-1] != J:
        raise InvalidArgument(f"curve length must match grid length {J}")
    return np.sum(grid.weights * f * g, axis=-1)


@dataclass(frozen=True)
class FunctionalDataset:
    """Scalar responses ``y`` paired with curves observed on a common grid."""

    y: np.ndarray
    curves: np.ndarray
    grid: Grid

    def __post_init__(self):
        y = _frozen(self.y)
        X = _frozen(self.curves)
        if y.ndim != 1 or y.size < 1:
            raise InvalidArgument("y must be a nonempty vector")
        if X.ndim != 2 or X.shape[0] != y.size:
            raise InvalidArgument("curves must be an n x J matrix with n == len(y)")
        if X.shape[1] != len(self.grid):
            raise InvalidArgument("curve columns must match the grid length")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise InvalidArgument("dataset contains non-finite values")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "curves", X)

    @property
    def n(self) -> int:
        return self.y.size

    def replace(self, y=None, curves=None) -> "FunctionalDataset":
        return FunctionalDataset(
            self.y if y is None else y,
            self.curves if curves is None else curves,
            self.grid,
        )

    def to_csv(self, path) -> None:
        write_csv(self, path)

    @classmethod
    def from_csv(cls, path) -> "FunctionalDataset":
        return read_csv(path)


@dataclass(frozen=True)
class SparseFunctionalDataset:
    """Per-subject irregular observations.

    ``points[i]`` and ``values[i]`` hold the ``m_i`` observation locations and
    values of subject ``i``.
    """

    y: np.ndarray
    points: tuple
    values: tuple
    domain: tuple[float, float]
    _counts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = _frozen(self.y)
        a, b = map(float, self.domain)
        if not a < b:
            raise InvalidArgument("domain must satisfy a < b")
        if len(self.points) != y.size or len(self.values) != y.size:
            raise InvalidArgument("one observation list per response is required")
        pts, vals = [], []
        for t, v in zip(self.points, self.values):
            t = _frozen(t)
            v = _frozen(v)
            if t.shape != v.shape or t.ndim != 1:
                raise InvalidArgument("points and values must be matching vectors")
            if t.size < 2:
                raise InvalidArgument("every subject needs at least two observations")
            if np.any(np.diff(t) <= 0):
                raise InvalidArgument("observation points must be strictly increasing")
            if t[0] < a or t[-1] > b:
                raise InvalidArgument("observation points must lie inside the domain")
            if not (np.all(np.isfinite(v)) and np.all(np.isfinite(y))):
                raise InvalidArgument("non-finite observation")
            pts.append(t)
            vals.append(v)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "points", tuple(pts))
        object.__setattr__(self, "values", tuple(vals))
        object.__setattr__(self, "domain", (a, b))
        object.__setattr__(self, "_counts", _frozen([t.size for t in pts], int))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def counts(self) -> np.ndarray:
        return self._counts


def center_curves(ds: FunctionalDataset) -> tuple[FunctionalDataset, np.ndarray]:
    """Subtract the pointwise sample mean curve."""
    mean = ds.curves.mean(axis=0)
    centered = ds.curves - mean
    # second pass removes the rounding residue of the first subtraction
    residue = centered.mean(axis=0)
    centered -= residue
    mean = mean + residue
    return ds.replace(curves=centered), mean


def write_csv(ds: FunctionalDataset, path) -> None:
    """Write ``y`` then the J curve values per row; the header holds grid points."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [repr(float(t)) for t in ds.grid.points])
        for yi, row in zip(ds.y, ds.curves):
            w.writerow([repr(float(yi))] + [repr(float(v)) for v in row])


def read_csv(path) -> FunctionalDataset:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ParseError(f"{path}: need a header and at least one data row")
    header = rows[0]
    try:
        points = np.array([float(h) for h in header[1:]])
    except ValueError:
        raise ParseError(f"{path}: header must hold numeric grid points", row=0) from None
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=1):
        if len(row) != len(header):
            raise ParseError(f"{path}: expected {len(header)} fields", row=i)
        for j, cell in enumerate(row):
            try:
                data[i - 1, j] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell {cell!r}", row=i, column=j) from None
    return FunctionalDataset(data[:, 0], data[:, 1:], Grid.from_points(points))
