"""Shared fixtures and independent oracles used across the test suite."""

import numpy as np
import pytest

from zonecast.series import Channel, Schema, SeriesSet


@pytest.fixture
def schema5():
    return Schema([
        Channel("P_heat", "u", "W", -1.0, 10000.0),
        Channel("P_cool", "u", "W", -1.0, 10000.0),
        Channel("T_amb", "w", "degC", -30.0, 45.0),
        Channel("I_sol", "w", "W/m2", -1.0, 1500.0),
        Channel("T_zone", "y", "degC", 5.0, 40.0),
    ])


def make_series(schema, n, seed=0, t0=0.0, dt=900.0):
    """Random in-range series without gaps."""
    rng = np.random.default_rng(seed)
    lo, hi = schema.bounds()
    lo = np.maximum(lo, -50)
    hi = np.minimum(hi, 50)
    vals = lo[:, None] + (hi - lo)[:, None] * rng.uniform(0.2, 0.8, (len(schema), n))
    return SeriesSet(schema, t0, dt, vals)


def random_stable_lti(order, n_in, n_out, seed, radius=0.85):
    """Random discrete LTI system with spectral radius scaled to `radius`."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(order, order))
    a *= radius / max(abs(np.linalg.eigvals(a)))
    b = rng.normal(size=(order, n_in))
    c = rng.normal(size=(n_out, order))
    d = np.zeros((n_out, n_in))
    return a, b, c, d


def simulate_lti(a, b, c, d, u, x0=None):
    """Plain state-space simulation oracle; u is (T, n_in)."""
    order = a.shape[0]
    x = np.zeros(order) if x0 is None else np.asarray(x0, dtype=float)
    ys = []
    for k in range(len(u)):
        ys.append(c @ x + d @ u[k])
        x = a @ x + b @ u[k]
    return np.array(ys)


def row_reduction_rank(mat, tol=1e-10):
    """Rank via Gaussian elimination with partial pivoting (oracle,
    independent of the SVD used by the implementation)."""
    m = np.array(mat, dtype=float)
    rows, cols = m.shape
    rank = 0
    for col in range(cols):
        if rank >= rows:
            break
        piv = rank + np.argmax(np.abs(m[rank:, col]))
        if abs(m[piv, col]) <= tol:
            continue
        m[[rank, piv]] = m[[piv, rank]]
        m[rank] = m[rank] / m[rank, col]
        for r in range(rows):
            if r != rank:
                m[r] -= m[r, col] * m[rank]
        rank += 1
    return rank
