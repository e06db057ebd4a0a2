"""Hot inner loops, JIT-compiled with numba when available.

The rolling evaluation spends most of its sequential (non-BLAS) time in
three kernels: the forgetting-factor RLS parameter update, the chained
multi-step ARX prediction, and the plant state recursion.  Each kernel has
a single implementation below, written so that it is efficient both as
plain numpy and under ``@njit``; when numba is importable and not
disabled, the compiled variant is used.

Set ``ZONECAST_DISABLE_NUMBA=1`` to force the pure-numpy path (used by the
kernel benchmark in ``benchmarks/kernel_bench.py`` and by environments
without a working LLVM).
"""

from __future__ import annotations

import os

import numpy as np


def _disabled_by_env() -> bool:
    flag = os.environ.get("ZONECAST_DISABLE_NUMBA", "")
    return flag.strip().lower() not in ("", "0", "false", "no")


_HAVE_NUMBA = False
if not _disabled_by_env():
    try:
        import numba

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - depends on environment
        _HAVE_NUMBA = False


def using_numba() -> bool:
    """True when the compiled kernels are in use."""
    return _HAVE_NUMBA


def required_history(n_a: int, n_b: int, n_k: int) -> int:
    """Number of past steps a regression row reaches back over."""
    return max(n_a, n_b + n_k - 1)


def _rls_chain(theta, P, y, u, valid, start, stop, n_a, n_b, n_k, alpha, run_in):
    """Forgetting-factor RLS over steps [start, stop), halting at gaps.

    theta (dim,) and P (dim, dim) are updated in place.  ``valid`` marks
    steps where every channel is measured; the update at step k is applied
    only when the last ``required_history + 1`` steps are all valid, so no
    regression row ever straddles a gap.  ``run_in`` carries the current
    clean-run length across chunked calls.

    Returns (run_out, n_updates, n_faults).  A fault is a non-positive
    innovation denominator; that step is skipped and counted.
    """
    m = u.shape[0]
    dim = n_a + m * n_b
    depth = max(n_a, n_b + n_k - 1)
    psi = np.empty(dim)
    run = run_in
    updates = 0
    faults = 0
    for k in range(start, stop):
        if valid[k]:
            run += 1
        else:
            run = 0
            continue
        if run < depth + 1:
            continue
        psi[:n_a] = y[k - n_a:k][::-1]
        pos = n_a
        for j in range(m):
            psi[pos:pos + n_b] = u[j, k - n_k - n_b + 1:k - n_k + 1][::-1]
            pos += n_b
        p_psi = P @ psi
        denom = alpha + psi @ p_psi
        if denom <= 0.0:
            faults += 1
            continue
        err = y[k] - psi @ theta
        theta += (err / denom) * p_psi
        upd = (P - np.outer(p_psi, p_psi) / denom) / alpha
        P[:, :] = 0.5 * (upd + upd.T)
        updates += 1
    return run, updates, faults


def _arx_horizon(theta, n_a, n_b, n_k, y_hist, u_all, horizon, out):
    """Chained multi-step ARX prediction.

    y_hist (n_a,) holds the measured outputs ending at the prediction
    instant, oldest first.  u_all (m, n_b + n_k + horizon) holds the input
    channels from n_b + n_k - 1 steps before the instant through the
    horizon, so u_all[:, n_b + n_k - 1] is the input at the instant
    itself.  Step h (1-based) of the chain regresses on predicted outputs
    for the steps before it.
    """
    m = u_all.shape[0]
    hist = n_b + n_k
    a_rev = theta[:n_a][::-1].copy()
    b_rev = theta[n_a:].reshape(m, n_b)[:, ::-1].copy()
    yy = np.empty(n_a + horizon)
    yy[:n_a] = y_hist
    for h in range(1, horizon + 1):
        acc = a_rev @ yy[h - 1:n_a + h - 1]
        acc += (b_rev * u_all[:, hist + h - n_k - n_b:hist + h - n_k]).sum()
        yy[n_a + h - 1] = acc
    out[:] = yy[n_a:]
    return out


def _plant_loop(a_seq, b_seq, u, x0, w_noise, out_states):
    """Linear two-state recursion x[k+1] = A[k] x[k] + B[k] u[k] + w[k].

    out_states[k] is the state at step k (out_states[0] = x0); the inputs
    and noise at step k act during the step that produces state k+1.
    """
    n = u.shape[0]
    x0c = x0[0]
    x1c = x0[1]
    out_states[0, 0] = x0c
    out_states[0, 1] = x1c
    for k in range(n - 1):
        a = a_seq[k]
        b = b_seq[k]
        bu0 = 0.0
        bu1 = 0.0
        for j in range(u.shape[1]):
            bu0 += b[0, j] * u[k, j]
            bu1 += b[1, j] * u[k, j]
        nx0 = a[0, 0] * x0c + a[0, 1] * x1c + bu0 + w_noise[k, 0]
        nx1 = a[1, 0] * x0c + a[1, 1] * x1c + bu1 + w_noise[k, 1]
        x0c = nx0
        x1c = nx1
        out_states[k + 1, 0] = x0c
        out_states[k + 1, 1] = x1c
    return out_states


def _thermostat_loop(a_seq, b_seq, x0, t_amb, i_sol, w_noise, v_noise,
                     heat_set, cool_set, gain_heat, gain_cool,
                     p_heat_max, p_cool_max, out_states, out_u):
    """Plant recursion under proportional thermostat heating/cooling.

    The controller acts on the measured zone temperature at the current
    step (state plus measurement noise), clipped to actuator limits.
    """
    n = t_amb.shape[0]
    x0c = x0[0]
    x1c = x0[1]
    out_states[0, 0] = x0c
    out_states[0, 1] = x1c
    for k in range(n):
        meas = x0c + v_noise[k]
        ph = gain_heat * (heat_set[k] - meas)
        if ph < 0.0:
            ph = 0.0
        elif ph > p_heat_max:
            ph = p_heat_max
        pc = gain_cool * (meas - cool_set[k])
        if pc < 0.0:
            pc = 0.0
        elif pc > p_cool_max:
            pc = p_cool_max
        out_u[k, 0] = ph
        out_u[k, 1] = pc
        if k == n - 1:
            break
        a = a_seq[k]
        b = b_seq[k]
        bu0 = b[0, 0] * ph + b[0, 1] * pc + b[0, 2] * t_amb[k] + b[0, 3] * i_sol[k]
        bu1 = b[1, 0] * ph + b[1, 1] * pc + b[1, 2] * t_amb[k] + b[1, 3] * i_sol[k]
        nx0 = a[0, 0] * x0c + a[0, 1] * x1c + bu0 + w_noise[k, 0]
        nx1 = a[1, 0] * x0c + a[1, 1] * x1c + bu1 + w_noise[k, 1]
        x0c = nx0
        x1c = nx1
        out_states[k + 1, 0] = x0c
        out_states[k + 1, 1] = x1c
    return out_states


if _HAVE_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)
    rls_chain = _jit(_rls_chain)
    arx_horizon = _jit(_arx_horizon)
    plant_loop = _jit(_plant_loop)
    thermostat_loop = _jit(_thermostat_loop)
else:
    rls_chain = _rls_chain
    arx_horizon = _arx_horizon
    plant_loop = _plant_loop
    thermostat_loop = _thermostat_loop

# Uncompiled references, kept for the parity tests and the benchmark.
rls_chain_numpy = _rls_chain
arx_horizon_numpy = _arx_horizon
plant_loop_numpy = _plant_loop
thermostat_loop_numpy = _thermostat_loop
