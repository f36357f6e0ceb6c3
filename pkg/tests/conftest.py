import numpy as np
import pytest

from sofr.bench import run_replicates, summarize
from sofr.datagen import RngStream, SimulationSetting, generate
from sofr.funcdata import FunctionalDataset, make_uniform_grid

_OUTCOMES = {}


def cached_outcomes(spec):
    """Raw per-replicate p-values, computed once per session."""
    key = repr(spec)
    if key not in _OUTCOMES:
        _OUTCOMES[key] = run_replicates(spec)
    return _OUTCOMES[key]


def cached_study(spec):
    return summarize(spec, cached_outcomes(spec))


def p_values(spec, method, delta_index=0):
    """Successful p-values of one method at one departure value."""
    return [o[method] for o in cached_outcomes(spec)[delta_index] if o[method] is not None]


def rate_of(rows, method, delta=0.0, alpha=0.05):
    for r in rows:
        if r.method == method and r.delta == delta and r.alpha == alpha:
            return r
    raise KeyError((method, delta, alpha))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def grid101():
    return make_uniform_grid(101, 0.0, 1.0)


@pytest.fixture
def g0_small():
    return generate(SimulationSetting("G0", 0.0, 60), RngStream(5))


@pytest.fixture
def m0_small():
    return generate(SimulationSetting("M0", 0.5, 80), RngStream(6))


def linear_dataset(n=50, J=101, seed=0, noise=0.0):
    """Curves from a few smooth components; y exactly linear in the curves."""
    gen = np.random.default_rng(seed)
    grid = make_uniform_grid(J, 0.0, 1.0)
    t = grid.points
    basis = np.vstack([np.ones_like(t), t, t**2] + [np.sin(k * np.pi * t) for k in range(1, 6)])
    curves = gen.standard_normal((n, basis.shape[0])) @ basis
    beta = 1 + t**2
    y = 0.7 + curves @ (grid.weights * beta) + noise * gen.standard_normal(n)
    return FunctionalDataset(y, curves, grid)
