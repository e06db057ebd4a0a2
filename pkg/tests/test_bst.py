import numpy as np
import pytest

from zonecast.bst import (BstConfig, build_rhs, cost, init_weight_matrix,
                          predict, solve_g)
from zonecast.errors import ConfigError, ShapeError
from zonecast.series import Trajectory
from zonecast.trajmat import stack_blocks


def gradient_descent_oracle(h, v, w, lam, iters=200000, tol=1e-12):
    """Independent minimizer of the weighted ridge cost (steepest descent
    with a fixed stable step)."""
    g = np.zeros(h.shape[1])
    lip = 2 * (np.linalg.norm(h * np.sqrt(w)[:, None], 2) ** 2 + lam)
    step = 1.0 / lip
    for _ in range(iters):
        grad = 2 * h.T @ (w * (h @ g - v)) + 2 * lam * g
        g_next = g - step * grad
        if np.linalg.norm(g_next - g) < tol:
            return g_next
        g = g_next
    return g


class TestInitWeightMatrix:
    def test_standard_block_counts(self):
        w = init_weight_matrix(12, 96, (2, 2, 1))
        assert w.shape == (444,)
        assert (w == 100.0).sum() == 60
        assert (w == 1.0).sum() == 384
        # initialization rows come first
        assert (w[:60] == 100.0).all()

    def test_unit_weight_is_identity(self):
        w = init_weight_matrix(3, 4, (1, 1, 1), init_weight=1.0)
        assert (w == 1.0).all()

    def test_degenerate_no_init(self):
        w = init_weight_matrix(0, 5, (2, 1, 1))
        assert w.shape == (15,)
        assert (w == 1.0).all()


class TestSolveG:
    def test_membership_in_column_span(self):
        rng = np.random.default_rng(0)
        h = rng.normal(size=(20, 8))
        w = np.ones(20)
        g = solve_g(h, h[:, 3], w, 1e-8)
        assert np.linalg.norm(h @ g - h[:, 3]) <= 1e-6

    def test_ridge_limit(self):
        rng = np.random.default_rng(1)
        h = rng.normal(size=(15, 6))
        v = rng.normal(size=15)
        w = np.ones(15)
        lam = 1e12
        g = solve_g(h, v, w, lam)
        assert np.linalg.norm(g) <= np.linalg.norm(h.T @ (w * v)) / lam
        assert np.linalg.norm(g) < 1e-9

    def test_matches_gradient_descent_oracle(self):
        rng = np.random.default_rng(7)
        h = rng.normal(size=(20, 8))
        v = rng.normal(size=20)
        w = rng.uniform(0.5, 100.0, size=20)
        lam = 10.0
        g = solve_g(h, v, w, lam)
        g_oracle = gradient_descent_oracle(h, v, w, lam)
        assert np.linalg.norm(g - g_oracle) <= 1e-6

    def test_first_order_optimality(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            rows = int(rng.integers(5, 40))
            cols = int(rng.integers(2, 50))
            h = rng.normal(size=(rows, cols))
            v = rng.normal(size=rows)
            w = rng.uniform(0.1, 100.0, size=rows)
            lam = float(10.0 ** rng.uniform(-6, 4))
            g = solve_g(h, v, w, lam)
            grad = 2 * h.T @ (w * (h @ g - v)) + 2 * lam * g
            bound = 1e-8 * (1 + np.linalg.norm(h.T @ (w * v)))
            assert np.linalg.norm(grad) <= bound

    def test_local_minimum_against_perturbations(self):
        rng = np.random.default_rng(4)
        h = rng.normal(size=(25, 10))
        v = rng.normal(size=25)
        w = rng.uniform(0.5, 2.0, size=25)
        lam = 3.0
        g = solve_g(h, v, w, lam)
        j0 = cost(h, v, w, lam, g)
        for _ in range(100):
            delta = rng.normal(size=10)
            delta *= 1e-3 / np.linalg.norm(delta)
            assert j0 <= cost(h, v, w, lam, g + delta) + 1e-15

    def test_shrinkage_monotonicity(self):
        rng = np.random.default_rng(5)
        h = rng.normal(size=(30, 12))
        v = rng.normal(size=30)
        w = np.ones(30)
        lams = [1e-2, 1e0, 1e2, 1e4]
        norms = [np.linalg.norm(solve_g(h, v, w, lam)) for lam in lams]
        assert all(a >= b - 1e-12 for a, b in zip(norms, norms[1:]))

    def test_dual_equals_primal(self):
        rng = np.random.default_rng(6)
        h = rng.normal(size=(10, 40))  # wide: dual path
        v = rng.normal(size=10)
        w = rng.uniform(0.5, 2.0, size=10)
        g_dual = solve_g(h, v, w, 2.0)
        gram = h.T @ (w[:, None] * h) + 2.0 * np.eye(40)
        g_primal = np.linalg.solve(gram, h.T @ (w * v))
        np.testing.assert_allclose(g_dual, g_primal, atol=1e-10)

    def test_rejects_bad_lambda_and_shapes(self):
        h = np.ones((4, 2))
        with pytest.raises(ConfigError):
            solve_g(h, np.ones(4), np.ones(4), 0.0)
        with pytest.raises(ShapeError):
            solve_g(h, np.ones(3), np.ones(4), 1.0)
        with pytest.raises(ShapeError):
            solve_g(h, np.ones(4), np.ones(3), 1.0)


def _traj_from_window(vals, start, t_ini, t_f, counts):
    m_u, m_w, p = counts
    win = vals[:, start:start + t_ini + t_f]
    return Trajectory(
        start=start,
        u_block=win[:m_u],
        w_block=win[m_u:m_u + m_w],
        y_block=win[m_u + m_w:],
        end_time=float(start + t_ini + t_f - 1),
    )


class TestPredict:
    def test_self_consistency_column_reproduced(self):
        rng = np.random.default_rng(8)
        t_ini, t_f, counts = 4, 6, (1, 2, 1)
        vals = rng.normal(size=(4, 60))
        trs = [_traj_from_window(vals, s, t_ini, t_f, counts) for s in range(30)]
        stack = stack_blocks(trs, t_ini, t_f)
        j = 11
        v_hat = stack.h_hat[:, j]
        cfg = BstConfig(lam=1e-8, t_ini=t_ini, t_f=t_f)
        y_star = predict(stack, v_hat, cfg)
        np.testing.assert_allclose(y_star, stack.h_y[:, j], atol=1e-6)

    def test_build_rhs_layout_matches_stack(self):
        rng = np.random.default_rng(9)
        t_ini, t_f, counts = 3, 5, (2, 2, 1)
        vals = rng.normal(size=(5, 40))
        tr = _traj_from_window(vals, 4, t_ini, t_f, counts)
        stack = stack_blocks([tr], t_ini, t_f)
        v = build_rhs(
            tr.u_block[:, :t_ini], tr.w_block[:, :t_ini], tr.y_block[:, :t_ini],
            tr.u_block[:, t_ini:], tr.w_block[:, t_ini:],
        )
        np.testing.assert_array_equal(v, stack.h_hat[:, 0])

    def test_rhs_rejects_gaps(self):
        with pytest.raises(ShapeError):
            build_rhs(np.array([[1.0, np.nan]]), np.ones((1, 2)),
                      np.ones((1, 2)), np.ones((1, 3)), np.ones((1, 3)))

    def test_exact_data_consistency_lambda_to_zero(self):
        # data from an autonomous low-order generator: the fresh window lies
        # in the span of past windows, so prediction error vanishes as
        # lambda -> 0
        t_ini, t_f = 4, 8
        length = t_ini + t_f
        n = 400
        t = np.arange(n, dtype=float)
        u1 = np.sin(0.21 * t) + 0.4 * np.sin(0.53 * t + 1.0)
        w1 = np.cos(0.13 * t) + 0.2
        w2 = np.sin(0.08 * t + 0.5)
        # simple stable filter of the inputs as output
        y = np.zeros(n)
        for k in range(1, n):
            y[k] = 0.8 * y[k - 1] + 0.1 * u1[k - 1] + 0.2 * w1[k - 1] - 0.15 * w2[k - 1]
        vals = np.vstack([u1, w1, w2, y])
        trs = [_traj_from_window(vals, s, t_ini, t_f, (1, 2, 1))
               for s in range(0, 300)]
        stack = stack_blocks(trs, t_ini, t_f)
        probe = _traj_from_window(vals, 350, t_ini, t_f, (1, 2, 1))
        v_hat = stack_blocks([probe], t_ini, t_f).h_hat[:, 0]
        truth = probe.y_block[0, t_ini:]
        errs = []
        for lam in (1e-2, 1e-6, 1e-10):
            y_star = predict(stack, v_hat, BstConfig(lam=lam, t_ini=t_ini, t_f=t_f))
            errs.append(np.max(np.abs(y_star - truth)))
        assert errs[-1] <= 1e-6
        assert errs[0] >= errs[-1]
