"""Parity of the JIT kernels against their pure-numpy twins."""

import numpy as np

from zonecast import accel


def test_flag_reporting():
    assert isinstance(accel.using_numba(), bool)


def test_rls_chain_parity():
    rng = np.random.default_rng(0)
    n_a, n_b, n_k, m = 3, 2, 1, 2
    dim = n_a + m * n_b
    n = 400
    y = rng.normal(size=n)
    u = rng.normal(size=(m, n))
    valid = rng.uniform(size=n) > 0.05

    th1, p1 = np.zeros(dim), 10000.0 * np.eye(dim)
    th2, p2 = np.zeros(dim), 10000.0 * np.eye(dim)
    out1 = accel.rls_chain(th1, p1, y, u, valid, 0, n, n_a, n_b, n_k, 0.99, 0)
    out2 = accel.rls_chain_numpy(th2, p2, y, u, valid, 0, n, n_a, n_b, n_k, 0.99, 0)
    assert out1 == out2
    np.testing.assert_allclose(th1, th2, atol=1e-12)
    np.testing.assert_allclose(p1, p2, atol=1e-12)


def test_arx_horizon_parity():
    rng = np.random.default_rng(1)
    n_a, n_b, n_k, m, t_f = 4, 3, 1, 3, 24
    theta = rng.normal(size=n_a + m * n_b) * 0.2
    y_hist = rng.normal(size=n_a)
    u_all = rng.normal(size=(m, n_b + n_k + t_f))
    out1 = np.empty(t_f)
    out2 = np.empty(t_f)
    accel.arx_horizon(theta, n_a, n_b, n_k, y_hist, u_all, t_f, out1)
    accel.arx_horizon_numpy(theta, n_a, n_b, n_k, y_hist, u_all, t_f, out2)
    np.testing.assert_allclose(out1, out2, atol=1e-12)


def test_plant_loop_parity():
    rng = np.random.default_rng(2)
    n = 200
    a = np.eye(2) * 0.95 + rng.normal(scale=0.01, size=(2, 2))
    a_seq = np.broadcast_to(a, (n, 2, 2)).copy()
    b_seq = np.broadcast_to(rng.normal(scale=0.1, size=(2, 4)), (n, 2, 4)).copy()
    u = rng.normal(size=(n, 4))
    w = rng.normal(scale=0.01, size=(n, 2))
    x0 = np.array([1.0, -1.0])
    s1 = np.empty((n, 2))
    s2 = np.empty((n, 2))
    accel.plant_loop(a_seq, b_seq, u, x0, w, s1)
    accel.plant_loop_numpy(a_seq, b_seq, u, x0, w, s2)
    np.testing.assert_allclose(s1, s2, atol=1e-12)


def test_thermostat_loop_parity():
    rng = np.random.default_rng(3)
    n = 300
    a = np.array([[0.9, 0.05], [0.02, 0.97]])
    a_seq = np.broadcast_to(a, (n, 2, 2)).copy()
    b = np.array([[1e-4, -1e-4, 5e-3, 1e-4], [0.0, 0.0, 0.0, 0.0]])
    b_seq = np.broadcast_to(b, (n, 2, 4)).copy()
    t_amb = rng.normal(10, 5, n)
    i_sol = rng.uniform(0, 400, n)
    w_noise = rng.normal(scale=0.01, size=(n, 2))
    v_noise = rng.normal(scale=0.05, size=n)
    heat_set = np.full(n, 21.0)
    cool_set = np.full(n, 26.0)
    x0 = np.array([20.0, 20.0])
    s1, u1 = np.empty((n, 2)), np.empty((n, 2))
    s2, u2 = np.empty((n, 2)), np.empty((n, 2))
    accel.thermostat_loop(a_seq, b_seq, x0, t_amb, i_sol, w_noise, v_noise,
                          heat_set, cool_set, 500.0, 500.0, 3000.0, 3000.0,
                          s1, u1)
    accel.thermostat_loop_numpy(a_seq, b_seq, x0, t_amb, i_sol, w_noise,
                                v_noise, heat_set, cool_set, 500.0, 500.0,
                                3000.0, 3000.0, s2, u2)
    np.testing.assert_allclose(s1, s2, atol=1e-12)
    np.testing.assert_allclose(u1, u2, atol=1e-12)
