"""ARX reference predictor: batch identification, forgetting-factor
recursion, and chained multi-step prediction.

The model regresses the output on n_a output lags and, for every input
channel (controls and disturbances alike), n_b input lags behind a delay
of n_k steps:

    y(k) = a_1 y(k-1) + ... + a_na y(k-n_a)
         + sum_j [ b_j1 u_j(k-n_k) + ... + b_jnb u_j(k-n_b-n_k+1) ]

Batch fitting pools regression rows from gap-free segments (rows never
straddle a gap).  The adaptive variant applies the classic forgetting-
factor recursion: gain K = P psi / (alpha + psi' P psi), covariance
P <- (P - P psi psi' P / (alpha + psi' P psi)) / alpha, with P(0) =
10000 I.  Updates halt at gaps and resume once the regressor history is
clean again.  Horizon prediction chains the one-step model, feeding
predicted outputs back in as regressors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lstsq

from . import accel
from .errors import ConfigError, IdentifiabilityError, ShapeError
from .series import Segment, SeriesSet

P0_SCALE = 10000.0


@dataclass(frozen=True)
class ArxOrders:
    n_a: int = 12
    n_b: int = 12
    n_k: int = 1

    def __post_init__(self):
        if self.n_a < 1 or self.n_b < 1 or self.n_k < 0:
            raise ConfigError("orders must satisfy n_a >= 1, n_b >= 1, n_k >= 0")

    @property
    def depth(self) -> int:
        """Past steps a regression row reaches over."""
        return accel.required_history(self.n_a, self.n_b, self.n_k)

    def dim(self, n_inputs: int) -> int:
        return self.n_a + n_inputs * self.n_b


def memory_alpha(days: float, dt: float = 900.0) -> float:
    """Forgetting factor for a memory time constant of `days` (alpha = 1 - 1/T)."""
    steps = days * 86400.0 / dt
    if steps <= 1:
        raise ConfigError("memory must exceed one step")
    return 1.0 - 1.0 / steps


class ArxModel:
    """Coefficients plus recursion state for one ARX predictor.

    Mutable with a single owner during adaptation; clone() before handing
    to another evolution path.
    """

    def __init__(self, orders: ArxOrders, n_inputs: int, alpha: float = 1.0,
                 theta: np.ndarray | None = None, P: np.ndarray | None = None):
        if not 0 < alpha <= 1:
            raise ConfigError("forgetting factor must lie in (0, 1]")
        dim = orders.dim(n_inputs)
        if theta is None:
            theta = np.zeros(dim)
        theta = np.asarray(theta, dtype=float).copy()
        if theta.shape != (dim,):
            raise ShapeError(f"theta must have {dim} entries")
        if P is None:
            P = P0_SCALE * np.eye(dim)
        P = np.asarray(P, dtype=float).copy()
        if P.shape != (dim, dim):
            raise ShapeError(f"P must be {dim}x{dim}")
        self.orders = orders
        self.n_inputs = n_inputs
        self.alpha = float(alpha)
        self.theta = theta
        self.P = P
        self.updates = 0
        self.faults = 0
        self._run = 0  # clean-step counter for gap halting

    @property
    def dim(self) -> int:
        return self.theta.shape[0]

    def clone(self, alpha: float | None = None) -> "ArxModel":
        out = ArxModel(self.orders, self.n_inputs,
                       self.alpha if alpha is None else alpha,
                       self.theta, self.P)
        return out

    def to_json(self) -> str:
        return json.dumps({
            "orders": {"n_a": self.orders.n_a, "n_b": self.orders.n_b,
                       "n_k": self.orders.n_k},
            "n_inputs": self.n_inputs,
            "alpha": self.alpha,
            "theta": self.theta.tolist(),
            "P": self.P.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "ArxModel":
        d = json.loads(text)
        orders = ArxOrders(**d["orders"])
        return cls(orders, d["n_inputs"], d["alpha"],
                   np.array(d["theta"]), np.array(d["P"]))


def _input_matrix(series: SeriesSet) -> np.ndarray:
    """All u channels then all w channels, schema order within each kind."""
    idx = list(series.schema.u_indices) + list(series.schema.w_indices)
    return series.values[idx]


def build_regression(series: SeriesSet, segments: list[Segment],
                     orders: ArxOrders):
    """Pooled regression rows over gap-free segments.

    Returns (Phi, y_target).  Rows are taken per segment so none
    straddles a gap.
    """
    y = series.values[series.schema.y_index]
    u = _input_matrix(series)
    m = u.shape[0]
    depth = orders.depth
    rows = []
    targets = []
    for seg in segments:
        for k in range(seg.start + depth, seg.stop):
            row = np.empty(orders.dim(m))
            row[:orders.n_a] = y[k - orders.n_a:k][::-1]
            pos = orders.n_a
            for j in range(m):
                row[pos:pos + orders.n_b] = \
                    u[j, k - orders.n_k - orders.n_b + 1:k - orders.n_k + 1][::-1]
                pos += orders.n_b
            rows.append(row)
            targets.append(y[k])
    if not rows:
        return np.empty((0, orders.dim(m))), np.empty(0)
    return np.array(rows), np.array(targets)


def coefficient_names(orders: ArxOrders, n_inputs: int) -> list[str]:
    names = [f"a{i + 1}" for i in range(orders.n_a)]
    for j in range(n_inputs):
        names += [f"b[{j}]{i + 1}" for i in range(orders.n_b)]
    return names


def fit_batch(segments: list[Segment], series: SeriesSet,
              orders: ArxOrders = ArxOrders()) -> ArxModel:
    """One-shot least-squares identification over pooled segment rows."""
    m = len(series.schema.u_indices) + len(series.schema.w_indices)
    dim = orders.dim(m)
    phi, target = build_regression(series, segments, orders)
    if phi.shape[0] < dim:
        raise IdentifiabilityError(
            f"{phi.shape[0]} regression rows cannot identify {dim} parameters"
        )
    svals = np.linalg.svd(phi, compute_uv=False)
    tol = svals[0] * max(phi.shape) * np.finfo(float).eps
    rank = int((svals > tol).sum())
    if rank < dim:
        _, _, vt = np.linalg.svd(phi, full_matrices=True)
        names = coefficient_names(orders, m)
        deficient = []
        for null_vec in vt[rank:]:
            worst = np.argsort(-np.abs(null_vec))[:3]
            deficient.append(" + ".join(f"{null_vec[i]:+.2f}*{names[i]}" for i in worst))
        raise IdentifiabilityError(
            f"regressor matrix rank {rank} < {dim}; deficient directions: "
            + "; ".join(deficient)
        )
    theta, *_ = lstsq(phi, target)
    model = ArxModel(orders, m, alpha=1.0, theta=theta)
    return model


def update_recursive(model: ArxModel, y_recent: np.ndarray,
                     u_recent: np.ndarray) -> ArxModel:
    """One forgetting-factor update from the latest sample.

    y_recent and u_recent cover the last depth + 1 steps ending at the
    new sample (ascending time; u_recent is (n_inputs, depth + 1)).  Any
    NaN among the touched samples halts the update (gap rule) and the
    model is returned unchanged.
    """
    o = model.orders
    depth = o.depth
    y_recent = np.asarray(y_recent, dtype=float)
    u_recent = np.atleast_2d(np.asarray(u_recent, dtype=float))
    if y_recent.shape[0] < depth + 1 or u_recent.shape[1] < depth + 1:
        raise ShapeError("history shorter than the regressor depth")
    if u_recent.shape[0] != model.n_inputs:
        raise ShapeError(f"expected {model.n_inputs} input channels")
    n = depth + 1
    y_win = y_recent[-n:]
    u_win = u_recent[:, -n:]
    valid = np.isfinite(y_win) & np.isfinite(u_win).all(axis=0)
    run, ups, faults = accel.rls_chain(
        model.theta, model.P, y_win, u_win, valid,
        n - 1, n, o.n_a, o.n_b, o.n_k, model.alpha,
        depth if valid[:-1].all() else 0,
    )
    model.updates += ups
    model.faults += faults
    return model


def run_updates(model: ArxModel, series: SeriesSet, start: int, stop: int) -> ArxModel:
    """Apply the recursion over series steps [start, stop), halting at gaps.

    The clean-history counter persists across calls, so chunked
    invocations behave exactly like one long pass.
    """
    y = series.values[series.schema.y_index]
    u = _input_matrix(series)
    valid = series.valid_mask
    o = model.orders
    run, ups, faults = accel.rls_chain(
        model.theta, model.P, y, u, valid, start, stop,
        o.n_a, o.n_b, o.n_k, model.alpha, model._run,
    )
    model._run = run
    model.updates += ups
    model.faults += faults
    return model


def reset_run(model: ArxModel, series: SeriesSet, start: int) -> None:
    """Initialize the clean-history counter as if updates had run up to `start`."""
    valid = series.valid_mask
    run = 0
    k = start - 1
    while k >= 0 and valid[k]:
        run += 1
        k -= 1
    model._run = run


def predict_horizon(model: ArxModel, y_hist: np.ndarray, u_hist: np.ndarray,
                    u_future: np.ndarray, t_f: int = 96) -> np.ndarray:
    """Chained t_f-step prediction.

    y_hist: last n_a measured outputs (ascending, ending at the instant).
    u_hist: input channels over the last n_b + n_k - 1 steps up to and
    including the instant, shape (n_inputs, n_b + n_k - 1); pass an empty
    second axis when n_b + n_k == 1.  u_future: inputs over the horizon,
    shape (n_inputs, t_f).
    """
    o = model.orders
    y_hist = np.asarray(y_hist, dtype=float)
    u_hist = np.atleast_2d(np.asarray(u_hist, dtype=float))
    u_future = np.atleast_2d(np.asarray(u_future, dtype=float))
    hist = o.n_b + o.n_k
    if y_hist.shape != (o.n_a,):
        raise ShapeError(f"need exactly {o.n_a} output lags, got {y_hist.shape}")
    if u_hist.shape != (model.n_inputs, hist - 1):
        raise ShapeError(
            f"need input history ({model.n_inputs}, {hist - 1}), got {u_hist.shape}"
        )
    if u_future.shape != (model.n_inputs, t_f):
        raise ShapeError(
            f"need future inputs ({model.n_inputs}, {t_f}), got {u_future.shape}"
        )
    if not (np.isfinite(y_hist).all() and np.isfinite(u_hist).all()
            and np.isfinite(u_future).all()):
        raise ShapeError("prediction history contains gaps")
    u_all = np.empty((model.n_inputs, hist + t_f))
    u_all[:, 0] = 0.0  # oldest slot, outside every referenced lag
    u_all[:, 1:hist] = u_hist
    u_all[:, hist:] = u_future
    out = np.empty(t_f)
    accel.arx_horizon(model.theta, o.n_a, o.n_b, o.n_k, y_hist, u_all, t_f, out)
    return out
