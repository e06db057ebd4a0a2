"""Behavioral trajectory predictor.

At each prediction instant the stacked matrix's first five blocks are fit
to the known data (initialization window plus planned inputs and weather
forecast) by weighted ridge regression; the prediction is the same
combination applied to the stack's horizon-output block:

    g* minimizes (H g - v)' W (H g - v) + lambda g'g
    y* = H_y g*

W puts extra weight (100 by default) on the initialization rows, which
matter most for the early prediction steps.  The solve goes through a
symmetric positive-definite factorization, never an explicit inverse; when
the stack is wider than H's row count the equivalent dual system is
factorized instead, which is smaller and gives the identical minimizer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, ShapeError
from .trajmat import StackedTrajectoryMatrix

SELECTION_STRATEGIES = ("most_recent", "most_correlated", "smallest_rmse", "closest_mean")

DEFAULT_LAMBDAS = (1e0, 1e1, 1e2, 1e3, 1e4)
DEFAULT_WIDTHS = (181, 373, 661)
DEFAULT_INIT_WEIGHT = 100.0


@dataclass(frozen=True)
class BstConfig:
    """Parameters of one behavioral predictor variant.

    width None means "all identification data" (non-adaptive mode);
    otherwise the stack is rebuilt every step from the selected width.
    """

    lam: float
    t_ini: int = 12
    t_f: int = 96
    width: int | None = None
    selection: str = "most_recent"
    init_weight: float = DEFAULT_INIT_WEIGHT

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError("regularization weight must be positive")
        if self.t_ini < 1 or self.t_f < 1:
            raise ConfigError("t_ini and t_f must be at least 1")
        if self.width is not None and self.width < 1:
            raise ConfigError("stack width must be at least 1")
        if self.selection not in SELECTION_STRATEGIES:
            raise ConfigError(f"unknown selection strategy {self.selection!r}")


def init_weight_matrix(t_ini: int, t_f: int, channel_counts,
                       init_weight: float = DEFAULT_INIT_WEIGHT) -> np.ndarray:
    """Diagonal of W as a vector over the rows of the five-block matrix.

    Initialization rows (all channels over t_ini steps) carry init_weight;
    the prediction-step input and disturbance rows carry 1.
    """
    m_u, m_w, p = channel_counts
    if t_ini < 0 or t_f < 0 or min(m_u, m_w, p) < 0:
        raise ConfigError("dimensions must be non-negative")
    if init_weight <= 0:
        raise ConfigError("init_weight must be positive")
    n_ini = t_ini * (m_u + m_w + p)
    n_pred = t_f * (m_u + m_w)
    w = np.ones(n_ini + n_pred)
    w[:n_ini] = init_weight
    return w


def build_rhs(u_ini, w_ini, y_ini, u_plan, w_forecast) -> np.ndarray:
    """Stack the five known blocks into the right-hand vector.

    Blocks are (n_channels, steps); layout matches the stacked matrix
    rows (time-major, channels within each step).
    """
    parts = []
    for block in (u_ini, w_ini, y_ini, u_plan, w_forecast):
        block = np.atleast_2d(np.asarray(block, dtype=float))
        parts.append(block.T.ravel())
    v = np.concatenate(parts)
    if not np.isfinite(v).all():
        raise ShapeError("right-hand vector contains gaps")
    return v


def shifted_gram_solver(gram: np.ndarray, lam: float):
    """Factor (gram + lam I) once; returns a solver callable rhs -> x,
    or None when rounding makes the shifted gram numerically indefinite
    (lam below the gram's float noise floor)."""
    shifted = gram.copy()
    shifted[np.diag_indices_from(shifted)] += lam
    try:
        factor = cho_factor(shifted, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None
    return lambda rhs: cho_solve(factor, rhs, check_finite=False)


def ridge_via_svd(a: np.ndarray, b: np.ndarray, lam: float) -> np.ndarray:
    """Ridge coefficients g = V diag(s/(s^2+lam)) U' b from the SVD of a.

    Stable down to lam of order (machine epsilon * sigma_max)^2: the
    null-space component of b never enters, unlike the gram route whose
    precision is limited to the gram's own rounding floor.
    """
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return vt.T @ ((s / (s * s + lam)) * (u.T @ b))


def solve_g(h_hat: np.ndarray, v_hat: np.ndarray, weights: np.ndarray,
            lam: float) -> np.ndarray:
    """Minimizer of the weighted ridge cost; unique for lam > 0.

    Factorizes whichever of (A'A + lam I) or (AA' + lam I) is smaller,
    with A the row-weighted matrix; both are symmetric positive definite
    and give the same g*.
    """
    if lam <= 0:
        raise ConfigError("regularization weight must be positive")
    h_hat = np.asarray(h_hat, dtype=float)
    v_hat = np.asarray(v_hat, dtype=float)
    weights = np.asarray(weights, dtype=float)
    rows, cols = h_hat.shape
    if v_hat.shape != (rows,):
        raise ShapeError(f"right-hand vector must have {rows} entries, got {v_hat.shape}")
    if weights.shape != (rows,):
        raise ShapeError(f"weight diagonal must have {rows} entries, got {weights.shape}")
    sqw = np.sqrt(weights)
    a = h_hat * sqw[:, None]
    b = v_hat * sqw
    if cols <= rows:
        solver = shifted_gram_solver(a.T @ a, lam)
        if solver is not None:
            return solver(a.T @ b)
    else:
        solver = shifted_gram_solver(a @ a.T, lam)
        if solver is not None:
            return a.T @ solver(b)
    return ridge_via_svd(a, b, lam)


def cost(h_hat: np.ndarray, v_hat: np.ndarray, weights: np.ndarray,
         lam: float, g: np.ndarray) -> float:
    """The weighted ridge objective at g (used by tests and diagnostics)."""
    resid = h_hat @ g - v_hat
    return float(resid @ (weights * resid) + lam * (g @ g))


def predict(stack: StackedTrajectoryMatrix, v_hat: np.ndarray,
            cfg: BstConfig) -> np.ndarray:
    """Horizon prediction y* = H_y g* for one instant.

    Deterministic for fixed inputs; the caller supplies the stack (already
    selected/limited to the configured width) and the stacked right-hand
    vector.
    """
    if stack.t_ini != cfg.t_ini or stack.t_f != cfg.t_f:
        raise ShapeError("stack horizon does not match the configuration")
    weights = init_weight_matrix(
        cfg.t_ini, cfg.t_f, (stack.m_u, stack.m_w, stack.p), cfg.init_weight
    )
    g = solve_g(stack.h_hat, v_hat, weights, cfg.lam)
    return stack.h_y @ g
