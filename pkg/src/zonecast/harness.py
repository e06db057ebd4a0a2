"""Rolling evaluation of all predictor variants over one data set.

Every variant is scored at the same prediction instants: a step qualifies
when the full window from t_ini steps of history through t_f steps of
future actuals is gap-free, so one missing point removes many instants
and the skip set is identical across variants (paired comparisons).

The grid shares work aggressively without changing any result: the
selection scores are computed once per strategy and instant, the stack
widths are nested prefixes of the same ranking, and one symmetric
eigendecomposition per (strategy, width) serves the whole grid of
regularization weights.  Predictions use the ideal (actual) weather; the
distorted forecast is used only to rank candidate trajectories for the
weather-similarity selection strategies.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__, accel, arx, bst, selection as sel
from .errors import (ConfigError, MetricError, NotApplicableError,
                     SelectionError)
from .plant import distort_forecast
from .series import Segment, SeriesSet
from .trajmat import min_singular_value

FAMILIES = ("arx_static", "arx_adaptive", "bst_static", "bst_adaptive")
DEFAULT_MEMORY_DAYS = (3.0, 5.0, 8.0)


@dataclass(frozen=True)
class VariantSpec:
    """One modeling method of the comparison grid."""

    family: str
    memory_days: float | None = None      # arx_adaptive
    lam: float | None = None              # bst families
    width: int | None = None              # bst_adaptive
    strategy: str | None = None           # bst_adaptive

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.family == "arx_adaptive" and not self.memory_days:
            raise ConfigError("arx_adaptive needs memory_days")
        if self.family.startswith("bst") and not self.lam:
            raise ConfigError("bst variants need lam")
        if self.family == "bst_adaptive" and (not self.width or not self.strategy):
            raise ConfigError("bst_adaptive needs width and strategy")

    @property
    def name(self) -> str:
        if self.family == "arx_static":
            return "arx_static"
        if self.family == "arx_adaptive":
            return f"arx_adaptive/{self.memory_days:g}d"
        if self.family == "bst_static":
            return f"bst_static/lam{self.lam:g}"
        return f"bst_adaptive/{self.strategy}/w{self.width}/lam{self.lam:g}"

    @property
    def file_name(self) -> str:
        return self.name.replace("/", "__")


def full_grid(widths=bst.DEFAULT_WIDTHS, lambdas=bst.DEFAULT_LAMBDAS,
              strategies=bst.SELECTION_STRATEGIES,
              memories=DEFAULT_MEMORY_DAYS) -> list[VariantSpec]:
    """The complete comparison grid: 1 + 3 + 5 + |W||lam||sel| variants."""
    out = [VariantSpec("arx_static")]
    out += [VariantSpec("arx_adaptive", memory_days=m) for m in memories]
    out += [VariantSpec("bst_static", lam=l) for l in lambdas]
    out += [
        VariantSpec("bst_adaptive", lam=l, width=w, strategy=s)
        for s in strategies for w in widths for l in lambdas
    ]
    return out


def filter_grid(specs: list[VariantSpec], pattern: str) -> list[VariantSpec]:
    """Keep variants whose name contains any comma-separated token."""
    tokens = [t.strip() for t in pattern.split(",") if t.strip()]
    if not tokens:
        return list(specs)
    return [s for s in specs if any(t in s.name for t in tokens)]


@dataclass(frozen=True)
class PhaseConfig:
    """Step-index windows for identification, initialization, evaluation.

    ident_windows may list several disjoint spans (e.g. one heating and
    one cooling period); they must precede init_start.  Evaluation
    instants run from eval_start to eval_stop with the given stride.
    """

    ident_windows: tuple
    init_start: int
    eval_start: int
    eval_stop: int
    stride: int = 1

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError("stride must be at least 1")
        if not self.ident_windows:
            raise ConfigError("need at least one identification window")
        last_ident = 0
        for a, b in self.ident_windows:
            if a >= b:
                raise ConfigError(f"empty identification window ({a}, {b})")
            last_ident = max(last_ident, b)
        if not (self.init_start <= self.eval_start <= self.eval_stop):
            raise ConfigError("phases must be ordered: init <= eval start <= stop")
        if last_ident > self.eval_start:
            raise ConfigError("identification windows must precede evaluation")

    @classmethod
    def from_days(cls, ident_days, init_days: float, eval_days: float,
                  dt: float = 900.0, stride: int = 1,
                  ident_windows_days=None) -> "PhaseConfig":
        """Contiguous layout: identification, then initialization, then
        evaluation; ident_windows_days may instead give explicit
        (start_day, stop_day) pairs."""
        spd = 86400.0 / dt
        if ident_windows_days is not None:
            wins = tuple((int(round(a * spd)), int(round(b * spd)))
                         for a, b in ident_windows_days)
            init_start = max(b for _, b in wins)
        else:
            wins = ((0, int(round(ident_days * spd))),)
            init_start = wins[0][1]
        eval_start = init_start + int(round(init_days * spd))
        eval_stop = eval_start + int(round(eval_days * spd))
        return cls(wins, init_start, eval_start, eval_stop, stride)


@dataclass(frozen=True)
class HarnessConfig:
    """Shared evaluation settings (identical across variants)."""

    t_ini: int = 12
    t_f: int = 96
    init_weight: float = bst.DEFAULT_INIT_WEIGHT
    window_days: float = 365.0
    temp_offset: float = sel.TEMP_OFFSET
    temp_scale: float = sel.TEMP_SCALE
    solar_scale: float = sel.SOLAR_SCALE_IRRADIANCE
    arx_orders: arx.ArxOrders = field(default_factory=arx.ArxOrders)
    arx_init: str = "batch"     # "batch": identify first; "zero": theta(0)=0,
                                # P(0)=10000 I, recursion from the data start
    sigma_min_every: int = 16   # instants between sigma_min probes, 0 disables
    static_cap: int | None = None
    distort_selection: bool = True
    seed: int = 0
    tz_offset_hours: float = 0.0
    selection_trace: bool = False     # log (time, strategy, end_times, scores)
    dump_predictions: tuple = ()      # variant names whose (y*, actual) stream
                                      # is kept and written to the bundle

    def __post_init__(self):
        if self.arx_init not in ("batch", "zero"):
            raise ConfigError(f"unknown arx_init {self.arx_init!r}")

    @property
    def window_len(self) -> int:
        return self.t_ini + self.t_f


@dataclass
class EvaluationReport:
    """Per-instant error trajectories and diagnostics for one variant."""

    spec: VariantSpec
    instants: np.ndarray          # step indices evaluated
    times: np.ndarray             # epoch seconds per instant
    abs_errors: np.ndarray        # (n_instants, t_f)
    sigma_min: np.ndarray         # per instant, NaN where not probed
    predict_seconds: np.ndarray   # attributed prediction wall time
    skipped: np.ndarray           # step indices skipped (shared)
    predictions: np.ndarray | None = None  # y* stream (dump_predictions only)
    actuals: np.ndarray | None = None      # matching measured horizons

    def rmse(self) -> float:
        if self.abs_errors.size == 0:
            raise MetricError("no evaluated instants")
        return float(np.sqrt(np.mean(self.abs_errors ** 2)))

    def per_step_mean(self) -> np.ndarray:
        return self.abs_errors.mean(axis=0)

    def per_step_std(self) -> np.ndarray:
        return self.abs_errors.std(axis=0)  # population denominator

    def per_instant_mean(self) -> np.ndarray:
        return self.abs_errors.mean(axis=1)


def rmse(pred, actual) -> float:
    """Root mean square prediction error."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or pred.size == 0:
        raise MetricError("rmse needs equal-length non-empty inputs")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def per_step_stats(errors: np.ndarray):
    """Mean and population STD of the absolute error at each horizon step."""
    errors = np.asarray(errors, dtype=float)
    if errors.ndim != 2 or errors.size == 0:
        raise MetricError("per-step stats need a non-empty (instants, steps) array")
    a = np.abs(errors)
    return a.mean(axis=0), a.std(axis=0)


def seasonal_fit(day_of_year: np.ndarray, errors: np.ndarray):
    """Least-squares cubic of error against fractional day-of-year.

    Returns (coefficients ascending degree, fitted values).  Fitted on a
    rescaled abscissa for conditioning; coefficients are reported in raw
    day units.
    """
    day_of_year = np.asarray(day_of_year, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if day_of_year.shape != errors.shape:
        raise MetricError("day/error lengths differ")
    if len(np.unique(np.floor(day_of_year))) < 4:
        raise MetricError("need at least 4 distinct days for a cubic fit")
    s = day_of_year / 365.0
    basis = np.vander(s, 4, increasing=True)
    coef_scaled, *_ = np.linalg.lstsq(basis, errors, rcond=None)
    fitted = basis @ coef_scaled
    coeffs = coef_scaled / (365.0 ** np.arange(4))
    return coeffs, fitted


def day_of_year(times: np.ndarray, tz_offset_hours: float = 0.0) -> np.ndarray:
    """Fractional day-of-year (0-based) of each epoch timestamp."""
    out = np.empty(len(times))
    off = tz_offset_hours * 3600.0
    for i, t in enumerate(np.asarray(times, dtype=float)):
        d = datetime.fromtimestamp(t + off, tz=timezone.utc)
        frac = (d.hour * 3600 + d.minute * 60 + d.second) / 86400.0
        out[i] = d.timetuple().tm_yday - 1 + frac
    return out


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson r with the zero-variance convention (returns 0)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return 0.0
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc @ xc) * (yc @ yc))
    if denom == 0:
        return 0.0
    return float(xc @ yc / denom)


def sigma_min_correlation(report: EvaluationReport):
    """Correlation between the stack's smallest singular value and the
    per-instant mean absolute error.  Diagnostic only; returns (r, n)."""
    if not report.spec.family.startswith("bst"):
        raise NotApplicableError("sigma_min is only logged for bst variants")
    mask = np.isfinite(report.sigma_min)
    n = int(mask.sum())
    if n < 2:
        raise NotApplicableError("not enough sigma_min probes")
    r = pearson(report.sigma_min[mask], report.per_instant_mean()[mask])
    return r, n


def _segments_in_range(series: SeriesSet, start: int, stop: int,
                       min_len: int) -> list[Segment]:
    mask = series.valid_mask[start:stop]
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [
        Segment(int(a) + start, int(b - a))
        for a, b in zip(edges[::2], edges[1::2])
        if b - a >= min_len
    ]


class _EvalContext:
    """Precomputed, immutable view of one data set for the whole grid."""

    def __init__(self, series: SeriesSet, phases: PhaseConfig, hc: HarnessConfig):
        sch = series.schema
        m_u, m_w, p = sch.channel_counts
        if m_w < 2:
            raise ConfigError(
                "the selection strategies compare an ambient-temperature and"
                " a solar channel; need two disturbance channels"
            )
        L = hc.window_len
        self.series = series
        self.phases = phases
        self.hc = hc
        self.m_u, self.m_w, self.p = m_u, m_w, p
        self.L = L
        self.n_hat_rows = hc.t_ini * (m_u + m_w + p) + hc.t_f * (m_u + m_w)
        self.n_rows = (hc.t_ini + hc.t_f) * (m_u + m_w + p)

        vals = series.values
        mask = series.valid_mask.astype(np.int64)
        csum = np.concatenate(([0], np.cumsum(mask)))
        n = series.n_steps
        if n < L:
            raise ConfigError("series shorter than one trajectory window")
        ok = (csum[L:] - csum[:-L]) == L
        self.ok_start = ok
        self.valid_starts = np.flatnonzero(ok)
        if len(self.valid_starts) == 0:
            raise ConfigError("no admissible trajectory window in the data")
        self.start_pos = {int(s): i for i, s in enumerate(self.valid_starts)}

        # Six-block column matrix over every admissible start.
        chan_per_row = np.empty(self.n_rows, dtype=np.int64)
        off_per_row = np.empty(self.n_rows, dtype=np.int64)
        r = 0
        blocks = (
            (sch.u_indices, 0, hc.t_ini),
            (sch.w_indices, 0, hc.t_ini),
            ((sch.y_index,), 0, hc.t_ini),
            (sch.u_indices, hc.t_ini, hc.t_f),
            (sch.w_indices, hc.t_ini, hc.t_f),
            ((sch.y_index,), hc.t_ini, hc.t_f),
        )
        for idx, t0b, span in blocks:
            for t in range(t0b, t0b + span):
                for c in idx:
                    chan_per_row[r] = c
                    off_per_row[r] = t
                    r += 1
        cols = np.empty((self.n_rows, len(self.valid_starts)))
        for r in range(self.n_rows):
            cols[r] = vals[chan_per_row[r], self.valid_starts + off_per_row[r]]
        self.col_matrix = cols

        # Normalized weather windows for selection scoring.
        t_amb = vals[sch.w_indices[0]]
        solar = vals[sch.w_indices[1]]
        self.norm_temp_series = (t_amb - hc.temp_offset) / hc.temp_scale
        self.norm_solar_series = solar / hc.solar_scale
        tw = np.lib.stride_tricks.sliding_window_view(self.norm_temp_series, L)
        sw = np.lib.stride_tricks.sliding_window_view(self.norm_solar_series, L)
        self.temp_windows = np.ascontiguousarray(tw[self.valid_starts])
        self.solar_windows = np.ascontiguousarray(sw[self.valid_starts])

        self.weights = bst.init_weight_matrix(hc.t_ini, hc.t_f, (m_u, m_w, p),
                                              hc.init_weight)
        self.sqw = np.sqrt(self.weights)
        self.steps_back = hc.window_days * 86400.0 / series.dt

        # Shared evaluation instants.
        grid = np.arange(phases.eval_start, phases.eval_stop, phases.stride)
        ok_instants = []
        skipped = []
        for k in grid:
            s0 = k - hc.t_ini + 1
            if s0 < 0 or k + hc.t_f >= n or not ok[s0]:
                skipped.append(k)
            else:
                ok_instants.append(k)
        self.instants = np.array(ok_instants, dtype=np.int64)
        self.skipped = np.array(skipped, dtype=np.int64)
        self.times = series.t0 + self.instants * series.dt

    # -- per-instant pieces -------------------------------------------------

    def column_of(self, start: int) -> np.ndarray:
        return self.col_matrix[:, self.start_pos[int(start)]]

    def rhs_and_actual(self, k: int):
        """v_hat (five known blocks) and the actual horizon outputs at k."""
        col = self.column_of(k - self.hc.t_ini + 1)
        return col[:self.n_hat_rows], col[self.n_hat_rows:]

    def candidate_range(self, k: int):
        """Pool positions whose windows end before instant k, within the
        selection window."""
        lo_start = int(np.ceil(k - self.steps_back)) - (self.L - 1)
        hi = np.searchsorted(self.valid_starts, k - self.L, side="right")
        lo = np.searchsorted(self.valid_starts, lo_start, side="left")
        return int(lo), int(hi)

    def selection_forecast(self, k: int):
        """Normalized comparison window: measured past, forecast future.

        The future part is the ideal weather distorted per the harness
        seed (independent draws per channel and instant)."""
        sch = self.series.schema
        s0 = k - self.hc.t_ini + 1
        t_amb = self.series.values[sch.w_indices[0], s0:k + self.hc.t_f + 1].copy()
        solar = self.series.values[sch.w_indices[1], s0:k + self.hc.t_f + 1].copy()
        if self.hc.distort_selection:
            fut_t, fut_s = distort_forecast(
                t_amb[self.hc.t_ini:], solar[self.hc.t_ini:],
                seed=[self.hc.seed, int(k)], dt=self.series.dt,
            )
            t_amb[self.hc.t_ini:] = fut_t
            solar[self.hc.t_ini:] = fut_s
        return ((t_amb - self.hc.temp_offset) / self.hc.temp_scale,
                solar / self.hc.solar_scale)

    def arx_inputs(self) -> np.ndarray:
        sch = self.series.schema
        idx = list(sch.u_indices) + list(sch.w_indices)
        return self.series.values[idx]


def _ridge_predictions(a_w, hy_w, b, lambdas):
    """Horizon predictions of the weighted ridge fit for every lambda.

    One symmetric eigendecomposition in the smaller orientation serves
    the whole lambda grid (a shift only moves the spectrum).  Weights
    below the gram's float noise floor fall back to an SVD of the design
    matrix, which resolves sqrt(lambda) instead of lambda.
    """
    rows, take = a_w.shape
    dual = take > rows
    gram = (a_w @ a_w.T) if dual else (a_w.T @ a_w)
    eigval, eigvec = np.linalg.eigh(gram)
    floor = max(eigval[-1], 0.0) * gram.shape[0] * np.finfo(float).eps
    eigval = np.clip(eigval, 0.0, None)
    proj = eigvec.T @ (b if dual else a_w.T @ b)
    svd_cache = None
    preds = {}
    for lam in lambdas:
        if lam > floor:
            z = eigvec @ (proj / (eigval + lam))
            g = a_w.T @ z if dual else z
        else:
            if svd_cache is None:
                svd_cache = np.linalg.svd(a_w, full_matrices=False)
            u_, s_, vt_ = svd_cache
            g = vt_.T @ ((s_ / (s_ * s_ + lam)) * (u_.T @ b))
        preds[lam] = hy_w @ g
    return preds


def _evaluate_bst_adaptive(ctx: _EvalContext, strategies, widths, lambdas,
                           instant_slice=None):
    """Grouped evaluation of all (strategy, width, lambda) variants.

    Returns nested dict [strategy][width][lam] -> (abs_errors, sigma, secs)
    aligned with ctx.instants[instant_slice].
    """
    hc = ctx.hc
    instants = ctx.instants if instant_slice is None else ctx.instants[instant_slice]
    widths = sorted(widths)
    n_inst = len(instants)

    def _dumped(strat, w, lam):
        name = f"bst_adaptive/{strat}/w{w}/lam{lam:g}"
        return name in hc.dump_predictions

    out = {
        s: {w: {l: [np.empty((n_inst, hc.t_f)), np.full(n_inst, np.nan),
                    np.zeros(n_inst),
                    np.empty((n_inst, hc.t_f)) if _dumped(s, w, l) else None]
                for l in lambdas} for w in widths}
        for s in strategies
    }
    trace = []
    w_max = widths[-1]
    n_lam = len(lambdas)
    n_share = n_lam * len(widths)  # variants sharing per-strategy work
    for i, k in enumerate(instants):
        v_hat, y_actual = ctx.rhs_and_actual(int(k))
        b = ctx.sqw * v_hat
        lo, hi = ctx.candidate_range(int(k))
        if hi <= lo:
            raise SelectionError(f"no candidate trajectories before step {k}")
        fc = None
        probe_sigma = hc.sigma_min_every and (i % hc.sigma_min_every == 0)
        for strat in strategies:
            t_sel0 = time.perf_counter()
            if strat == "most_recent":
                pos = np.arange(hi - 1, max(lo - 1, hi - 1 - w_max), -1)
                chosen_scores = None
            else:
                if fc is None:
                    fc = ctx.selection_forecast(int(k))
                scores = sel.score_windows(
                    ctx.temp_windows[lo:hi], ctx.solar_windows[lo:hi],
                    fc[0], fc[1], strat,
                )
                ascending = strat != "most_correlated"
                ends = ctx.valid_starts[lo:hi]
                order = sel.rank_candidates(scores, ends.astype(float),
                                            ascending, w_max)
                pos = lo + order
                chosen_scores = scores[order]
            if hc.selection_trace:
                end_times = ctx.series.t0 + (ctx.valid_starts[pos]
                                             + ctx.L - 1) * ctx.series.dt
                trace.append({
                    "time": ctx.series.t0 + k * ctx.series.dt,
                    "strategy": strat,
                    "end_times": ";".join(f"{t:.0f}" for t in end_times),
                    "scores": "" if chosen_scores is None else
                              ";".join(f"{s:.6g}" for s in chosen_scores),
                })
            cols = ctx.col_matrix[:, pos]
            a_full = cols[:ctx.n_hat_rows] * ctx.sqw[:, None]
            hy_full = cols[ctx.n_hat_rows:]
            t_shared = time.perf_counter() - t_sel0
            for w in widths:
                take = min(w, cols.shape[1])
                sigma = np.nan
                if probe_sigma:
                    sigma = min_singular_value(cols[:, :take])
                t_g0 = time.perf_counter()
                preds = _ridge_predictions(a_full[:, :take], hy_full[:, :take],
                                           b, lambdas)
                t_width = time.perf_counter() - t_g0
                for lam in lambdas:
                    err, sig_arr, secs, pred_store = out[strat][w][lam]
                    err[i] = np.abs(preds[lam] - y_actual)
                    sig_arr[i] = sigma
                    secs[i] = t_width / n_lam + t_shared / n_share
                    if pred_store is not None:
                        pred_store[i] = preds[lam]
    return out, instants, trace


def _bst_adaptive_worker(args):
    lo, hi, strategies, widths, lambdas = args
    ctx = _WORKER_CTX["ctx"]
    res, _, _ = _evaluate_bst_adaptive(ctx, strategies, widths, lambdas,
                                       instant_slice=slice(lo, hi))
    return lo, hi, res


_WORKER_CTX: dict = {}


def _limit_worker_threads():
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=1)
    except Exception:
        pass


def _evaluate_bst_static(ctx: _EvalContext, lambdas):
    """Non-adaptive predictor: one stack from the identification windows."""
    hc = ctx.hc
    spd = int(round(86400.0 / ctx.series.dt))
    starts = []
    for a, bnd in ctx.phases.ident_windows:
        lo = np.searchsorted(ctx.valid_starts, a, side="left")
        hi = np.searchsorted(ctx.valid_starts, bnd - ctx.L, side="right")
        starts.append(ctx.valid_starts[lo:hi])
    starts = np.concatenate(starts) if starts else np.empty(0, dtype=np.int64)
    if len(starts) == 0:
        raise SelectionError("identification windows hold no admissible window")
    if hc.static_cap is not None and len(starts) > hc.static_cap:
        starts = starts[-hc.static_cap:]
    pos = np.array([ctx.start_pos[int(s)] for s in starts])
    cols = ctx.col_matrix[:, pos]
    a0 = cols[:ctx.n_hat_rows] * ctx.sqw[:, None]
    hy0 = cols[ctx.n_hat_rows:]
    gram = a0 @ a0.T
    hyat = hy0 @ a0.T
    sigma_const = min_singular_value(cols) if hc.sigma_min_every else np.nan

    n_inst = len(ctx.instants)
    out = {}
    svd_cache = None
    for lam in lambdas:
        solver = bst.shifted_gram_solver(gram, lam)
        if solver is not None:
            def predictor(b, _s=solver):
                return hyat @ _s(b)
        else:
            if svd_cache is None:
                svd_cache = np.linalg.svd(a0, full_matrices=False)
            u_, s_, vt_ = svd_cache
            m2 = hy0 @ vt_.T
            gain = s_ / (s_ * s_ + lam)

            def predictor(b, _m2=m2, _u=u_, _gain=gain):
                return _m2 @ (_gain * (_u.T @ b))
        errs = np.empty((n_inst, hc.t_f))
        sig = np.full(n_inst, np.nan)
        secs = np.zeros(n_inst)
        keep = f"bst_static/lam{lam:g}" in hc.dump_predictions
        preds = np.empty((n_inst, hc.t_f)) if keep else None
        for i, k in enumerate(ctx.instants):
            t0 = time.perf_counter()
            v_hat, y_actual = ctx.rhs_and_actual(int(k))
            y_pred = predictor(ctx.sqw * v_hat)
            secs[i] = time.perf_counter() - t0
            errs[i] = np.abs(y_pred - y_actual)
            if preds is not None:
                preds[i] = y_pred
            if hc.sigma_min_every and i % hc.sigma_min_every == 0:
                sig[i] = sigma_const
        out[lam] = (errs, sig, secs, preds)
    return out


def _evaluate_arx(ctx: _EvalContext, memories, need_static: bool):
    """Static ARX plus one adaptive clone per forgetting-factor memory.

    With arx_init == "batch" the adaptive clones start from the batch fit
    over the identification windows and update from the initialization
    phase on; with "zero" they start from theta = 0, P = 10000 I and
    update from the very first sample.
    """
    hc = ctx.hc
    orders = hc.arx_orders
    if orders.depth > hc.t_ini:
        raise ConfigError(
            "ARX orders reach beyond the shared initialization window;"
            " instants would no longer be paired across variants"
        )
    n_inputs = ctx.m_u + ctx.m_w
    base = None
    if need_static or hc.arx_init == "batch":
        min_len = orders.depth + 1
        segs = []
        for a, bnd in ctx.phases.ident_windows:
            segs += _segments_in_range(ctx.series, a, bnd, min_len)
        base = arx.fit_batch(segs, ctx.series, orders)

    y = ctx.series.values[ctx.series.schema.y_index]
    u = ctx.arx_inputs()
    models = {}
    update_start = ctx.phases.init_start if hc.arx_init == "batch" else 0
    for m in memories:
        alpha = arx.memory_alpha(m, ctx.series.dt)
        if hc.arx_init == "batch":
            mm = base.clone(alpha=alpha)
        else:
            mm = arx.ArxModel(orders, n_inputs, alpha=alpha)
        arx.reset_run(mm, ctx.series, update_start)
        models[m] = mm

    n_inst = len(ctx.instants)

    def slots(name):
        keep = name in hc.dump_predictions
        return [np.empty((n_inst, hc.t_f)), np.full(n_inst, np.nan),
                np.zeros(n_inst),
                np.empty((n_inst, hc.t_f)) if keep else None]

    res_static = slots("arx_static")
    res_adaptive = {m: slots(f"arx_adaptive/{m:g}d") for m in memories}

    hist = orders.n_b + orders.n_k
    cursor = update_start
    for i, k in enumerate(ctx.instants):
        k = int(k)
        for m, mm in models.items():
            arx.run_updates(mm, ctx.series, cursor, k + 1)
        cursor = k + 1
        y_hist = y[k - orders.n_a + 1:k + 1]
        u_hist = u[:, k - hist + 2:k + 1]
        u_future = u[:, k + 1:k + 1 + hc.t_f]
        actual = y[k + 1:k + 1 + hc.t_f]
        if need_static:
            t0 = time.perf_counter()
            pred = arx.predict_horizon(base, y_hist, u_hist, u_future, hc.t_f)
            res_static[2][i] = time.perf_counter() - t0
            res_static[0][i] = np.abs(pred - actual)
            if res_static[3] is not None:
                res_static[3][i] = pred
        for m, mm in models.items():
            t0 = time.perf_counter()
            pred = arx.predict_horizon(mm, y_hist, u_hist, u_future, hc.t_f)
            res_adaptive[m][2][i] = time.perf_counter() - t0
            res_adaptive[m][0][i] = np.abs(pred - actual)
            if res_adaptive[m][3] is not None:
                res_adaptive[m][3][i] = pred
    return res_static, res_adaptive


@dataclass
class GridResult:
    reports: list
    failures: dict          # variant name -> error message
    instants: np.ndarray
    skipped: np.ndarray
    times: np.ndarray
    meta: dict
    selection_trace: list = field(default_factory=list)


def run_grid(series: SeriesSet, specs: list[VariantSpec], phases: PhaseConfig,
             hc: HarnessConfig = HarnessConfig(), jobs: int = 1) -> GridResult:
    """Evaluate every variant at the shared instants; failures of one
    variant (or family group) never stop the rest of the grid."""
    ctx = _EvalContext(series, phases, hc)
    reports: list[EvaluationReport] = []
    failures: dict[str, str] = {}
    trace_rows: list = []

    def make_report(spec, errs, sig, secs, preds=None):
        actuals = None
        if preds is not None:
            actuals = np.empty_like(preds)
            for i, k in enumerate(ctx.instants):
                _, actuals[i] = ctx.rhs_and_actual(int(k))
        return EvaluationReport(
            spec=spec,
            instants=ctx.instants.copy(),
            times=ctx.times.copy(),
            abs_errors=errs,
            sigma_min=sig,
            predict_seconds=secs,
            skipped=ctx.skipped.copy(),
            predictions=preds,
            actuals=actuals,
        )

    arx_specs = [s for s in specs if s.family.startswith("arx")]
    if arx_specs:
        memories = sorted({s.memory_days for s in arx_specs
                           if s.family == "arx_adaptive"})
        need_static = any(s.family == "arx_static" for s in arx_specs)
        try:
            res_static, res_adaptive = _evaluate_arx(ctx, memories, need_static)
            for spec in arx_specs:
                if spec.family == "arx_static":
                    reports.append(make_report(spec, *res_static))
                else:
                    reports.append(make_report(spec, *res_adaptive[spec.memory_days]))
        except Exception as exc:  # grid continues on family failure
            for spec in arx_specs:
                failures[spec.name] = f"{type(exc).__name__}: {exc}"

    static_specs = [s for s in specs if s.family == "bst_static"]
    if static_specs:
        try:
            res = _evaluate_bst_static(ctx, [s.lam for s in static_specs])
            for spec in static_specs:
                reports.append(make_report(spec, *res[spec.lam]))
        except Exception as exc:
            for spec in static_specs:
                failures[spec.name] = f"{type(exc).__name__}: {exc}"

    adaptive_specs = [s for s in specs if s.family == "bst_adaptive"]
    if adaptive_specs:
        strategies = sorted({s.strategy for s in adaptive_specs})
        widths = sorted({s.width for s in adaptive_specs})
        lambdas = sorted({s.lam for s in adaptive_specs})
        diagnostics = hc.selection_trace or hc.dump_predictions
        try:
            if jobs > 1 and len(ctx.instants) > 1 and not diagnostics:
                res = _run_adaptive_parallel(ctx, strategies, widths, lambdas, jobs)
            else:
                res, _, trace_rows = _evaluate_bst_adaptive(
                    ctx, strategies, widths, lambdas)
            for spec in adaptive_specs:
                errs, sig, secs, preds = res[spec.strategy][spec.width][spec.lam]
                reports.append(make_report(spec, errs, sig, secs, preds))
        except Exception as exc:
            for spec in adaptive_specs:
                failures[spec.name] = f"{type(exc).__name__}: {exc}"

    by_name = {r.spec.name: r for r in reports}
    ordered = [by_name[s.name] for s in specs if s.name in by_name]
    meta = {
        "zonecast_version": __version__,
        "numpy_version": np.__version__,
        "using_numba": accel.using_numba(),
        "n_instants": int(len(ctx.instants)),
        "n_skipped": int(len(ctx.skipped)),
        "phases": {
            "ident_windows": [list(w) for w in phases.ident_windows],
            "init_start": phases.init_start,
            "eval_start": phases.eval_start,
            "eval_stop": phases.eval_stop,
            "stride": phases.stride,
        },
        "harness": {
            "t_ini": hc.t_ini, "t_f": hc.t_f, "init_weight": hc.init_weight,
            "window_days": hc.window_days, "sigma_min_every": hc.sigma_min_every,
            "seed": hc.seed, "distort_selection": hc.distort_selection,
            "selection_window": "full trajectory (initialization + horizon)",
            "solver": "Cholesky on the smaller of the primal/dual Gram;"
                      " no explicit inverse",
            "timing": "grouped evaluation; shared gram time split across"
                      " the lambda grid",
        },
    }
    return GridResult(ordered, failures, ctx.instants, ctx.skipped, ctx.times,
                      meta, trace_rows)


def _run_adaptive_parallel(ctx, strategies, widths, lambdas, jobs):
    n = len(ctx.instants)
    jobs = max(1, min(jobs, n))
    bounds = np.linspace(0, n, jobs + 1).astype(int)
    chunks = [(int(a), int(b), strategies, widths, lambdas)
              for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    _WORKER_CTX["ctx"] = ctx
    merged = None
    try:
        with ProcessPoolExecutor(max_workers=jobs,
                                 initializer=_limit_worker_threads) as pool:
            for lo, hi, res in pool.map(_bst_adaptive_worker, chunks):
                if merged is None:
                    merged = {
                        s: {w: {l: [np.empty((n, ctx.hc.t_f)), np.full(n, np.nan),
                                    np.zeros(n), None] for l in lambdas}
                            for w in widths} for s in strategies
                    }
                for s in strategies:
                    for w in widths:
                        for l in lambdas:
                            dst = merged[s][w][l]
                            src = res[s][w][l]
                            dst[0][lo:hi] = src[0]
                            dst[1][lo:hi] = src[1]
                            dst[2][lo:hi] = src[2]
    finally:
        _WORKER_CTX.pop("ctx", None)
    return merged


def run_variant(series: SeriesSet, spec: VariantSpec, phases: PhaseConfig,
                hc: HarnessConfig = HarnessConfig()) -> EvaluationReport:
    """Evaluate a single variant (same machinery as the grid)."""
    result = run_grid(series, [spec], phases, hc)
    if result.failures:
        raise RuntimeError(result.failures[spec.name])
    return result.reports[0]


# ---------------------------------------------------------------------------
# Report bundle input/output
# ---------------------------------------------------------------------------


def _iso(t: float) -> str:
    return datetime.fromtimestamp(t, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def summarize(result: GridResult):
    """Summary rows (list of dicts) sorted by ascending RMSE."""
    rows = []
    for rep in result.reports:
        mean_h = rep.per_step_mean()
        std_h = rep.per_step_std()
        rows.append({
            "variant": rep.spec.name,
            "family": rep.spec.family,
            "memory_days": rep.spec.memory_days,
            "lam": rep.spec.lam,
            "width": rep.spec.width,
            "strategy": rep.spec.strategy,
            "rmse": rep.rmse(),
            "mean_step_p10": float(np.percentile(mean_h, 10)),
            "mean_step_p50": float(np.percentile(mean_h, 50)),
            "mean_step_p90": float(np.percentile(mean_h, 90)),
            "std_step_p10": float(np.percentile(std_h, 10)),
            "std_step_p50": float(np.percentile(std_h, 50)),
            "std_step_p90": float(np.percentile(std_h, 90)),
            "n_instants": int(len(rep.instants)),
            "n_skipped": int(len(rep.skipped)),
            "mean_predict_ms": float(rep.predict_seconds.mean() * 1e3),
        })
    rows.sort(key=lambda r: r["rmse"])
    return rows


def write_bundle(result: GridResult, outdir, tz_offset_hours: float = 0.0) -> None:
    """Write the full report bundle: summary, per-variant CSVs, plot-ready
    per-step curves, seasonal scatter + cubic fits, sigma_min log."""
    import pandas as pd

    os.makedirs(outdir, exist_ok=True)
    vdir = os.path.join(outdir, "variants")
    os.makedirs(vdir, exist_ok=True)

    summary = summarize(result)
    pd.DataFrame(summary).to_csv(os.path.join(outdir, "summary.csv"),
                                 index=False, float_format="%.6g")

    step_rows = []
    seas_rows = []
    coef_rows = []
    sig_rows = []
    for rep in result.reports:
        name = rep.spec.name
        mean_h = rep.per_step_mean()
        std_h = rep.per_step_std()
        for h in range(len(mean_h)):
            step_rows.append({"variant": name, "step": h + 1,
                              "mean_abs": mean_h[h], "std_abs": std_h[h]})
        doy = day_of_year(rep.times, tz_offset_hours)
        per_inst = rep.per_instant_mean()
        try:
            coeffs, fitted = seasonal_fit(doy, per_inst)
            coef_rows.append({"variant": name,
                              **{f"c{i}": coeffs[i] for i in range(4)}})
        except MetricError:
            fitted = np.full_like(per_inst, np.nan)
        for i in range(len(doy)):
            seas_rows.append({"variant": name, "time": _iso(rep.times[i]),
                              "day_of_year": doy[i],
                              "mean_abs_err": per_inst[i], "fitted": fitted[i]})
        mask = np.isfinite(rep.sigma_min)
        for i in np.flatnonzero(mask):
            sig_rows.append({"variant": name, "time": _iso(rep.times[i]),
                             "sigma_min": rep.sigma_min[i],
                             "mean_abs_err": per_inst[i]})
        df = pd.DataFrame(rep.abs_errors,
                          columns=[f"e_{h + 1}" for h in range(rep.abs_errors.shape[1])])
        df.insert(0, "predict_ms", rep.predict_seconds * 1e3)
        df.insert(0, "sigma_min", rep.sigma_min)
        df.insert(0, "time", [_iso(t) for t in rep.times])
        df.to_csv(os.path.join(vdir, rep.spec.file_name + ".csv"),
                  index=False, float_format="%.6g")

    pd.DataFrame(step_rows).to_csv(os.path.join(outdir, "per_step.csv"),
                                   index=False, float_format="%.6g")
    pd.DataFrame(seas_rows).to_csv(os.path.join(outdir, "seasonal.csv"),
                                   index=False, float_format="%.6g")
    if coef_rows:
        pd.DataFrame(coef_rows).to_csv(os.path.join(outdir, "seasonal_coeffs.csv"),
                                       index=False, float_format="%.9g")
    if sig_rows:
        pd.DataFrame(sig_rows).to_csv(os.path.join(outdir, "sigma_min.csv"),
                                      index=False, float_format="%.6g")

    for rep in result.reports:
        if rep.predictions is None:
            continue
        n_inst, t_f = rep.predictions.shape
        stream = pd.DataFrame({
            "time": np.repeat([_iso(t) for t in rep.times], t_f),
            "horizon_step": np.tile(np.arange(1, t_f + 1), n_inst),
            "y_star": rep.predictions.ravel(),
            "y_actual": rep.actuals.ravel(),
        })
        stream.to_csv(os.path.join(outdir, f"predictions__{rep.spec.file_name}.csv"),
                      index=False, float_format="%.8g")

    if result.selection_trace:
        rows = [{**r, "time": _iso(r["time"])} for r in result.selection_trace]
        pd.DataFrame(rows).to_csv(os.path.join(outdir, "selection_trace.csv"),
                                  index=False)

    meta = dict(result.meta)
    meta["failures"] = result.failures
    meta["skipped_steps"] = result.skipped.tolist()
    with open(os.path.join(outdir, "metadata.json"), "w") as fh:
        json.dump(meta, fh, indent=2, default=str)


def load_summary(bundle_dir):
    import pandas as pd

    path = os.path.join(bundle_dir, "summary.csv")
    if not os.path.exists(path):
        raise ConfigError(f"no summary.csv in {bundle_dir}")
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if "variant" not in df.columns or "rmse" not in df.columns:
        raise ConfigError(f"{path} is not a summary table")
    return df
