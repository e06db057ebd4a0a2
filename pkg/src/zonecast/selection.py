"""Trajectory selection for the adaptive stacked-matrix predictor.

At every prediction instant the candidate pool (admissible windows from
the past 365 days, strictly before the instant) is ranked by one of four
strategies and the best W_H windows populate the stack:

* most_recent      - latest end times; a proper Hankel matrix on gap-free
                     data, a mosaic-Hankel across gaps
* most_correlated  - weather shape most correlated with the forecast
                     (sum of the two per-channel Pearson coefficients)
* smallest_rmse    - weather closest to the forecast in normalized RMSE
* closest_mean     - per-channel window means closest to the forecast's

Weather enters the comparisons normalized: ambient temperature is shifted
by 10 K and scaled by 20 K (so -10..30 C maps to -1..1); the solar channel
is scaled by a site constant (500 W/m2 irradiance, or 3 kW when a PV feed
stands in for a pyranometer).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SelectionError
from .series import Trajectory

TEMP_OFFSET = 10.0
TEMP_SCALE = 20.0
SOLAR_SCALE_IRRADIANCE = 500.0
SOLAR_SCALE_PV = 3000.0

_ASCENDING = {"most_correlated": False, "smallest_rmse": True, "closest_mean": True}


@dataclass(frozen=True)
class SelectionConfig:
    strategy: str
    width: int
    window_days: float = 365.0
    temp_offset: float = TEMP_OFFSET
    temp_scale: float = TEMP_SCALE
    solar_scale: float = SOLAR_SCALE_IRRADIANCE

    def __post_init__(self):
        if self.strategy not in ("most_recent", *_ASCENDING):
            raise ConfigError(f"unknown selection strategy {self.strategy!r}")
        if self.width < 1:
            raise ConfigError("selection width must be at least 1")
        if self.window_days <= 0:
            raise ConfigError("selection window must be positive")


@dataclass(frozen=True)
class SelectionResult:
    indices: np.ndarray  # positions into the supplied pool, best first
    shortfall: bool      # True when the pool held fewer than width candidates
    scores: np.ndarray | None = None  # per selected index, None for most_recent


def normalize_weather(t_amb, solar, cfg: SelectionConfig | None = None):
    """Normalized (temperature, solar) pair used in all comparisons."""
    if cfg is None:
        cfg = SelectionConfig("most_recent", 1)
    t_amb = np.asarray(t_amb, dtype=float)
    solar = np.asarray(solar, dtype=float)
    return (t_amb - cfg.temp_offset) / cfg.temp_scale, solar / cfg.solar_scale


def window_filter(pool: list[Trajectory], now: float,
                  window_days: float = 365.0) -> list[Trajectory]:
    """Keep candidates ending strictly before `now` and within the window."""
    horizon = now - window_days * 86400.0
    return [tr for tr in pool if horizon <= tr.end_time < now]


def _pearson_rows(cands: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Row-wise Pearson correlation against one target vector.

    Zero-variance rows or a zero-variance target contribute 0 by
    convention (the coefficient is undefined there).
    """
    if np.ptp(target) == 0.0:
        return np.zeros(len(cands))
    c_mean = cands.mean(axis=1)
    t_mean = target.mean()
    c_center = cands - c_mean[:, None]
    t_center = target - t_mean
    cov = c_center @ t_center
    c_var = np.einsum("ij,ij->i", c_center, c_center)
    t_var = float(t_center @ t_center)
    denom = np.sqrt(c_var * t_var)
    out = np.zeros(len(cands))
    ok = (denom > 0) & (cands.max(axis=1) > cands.min(axis=1))
    out[ok] = cov[ok] / denom[ok]
    return out


def score_windows(cand_temp: np.ndarray, cand_solar: np.ndarray,
                  fc_temp: np.ndarray, fc_solar: np.ndarray,
                  strategy: str) -> np.ndarray:
    """Per-candidate score; all inputs already normalized.

    cand_* are (n_candidates, L) window matrices, fc_* are length-L
    forecast vectors.  Higher is better for most_correlated, lower is
    better otherwise.
    """
    if strategy == "most_correlated":
        return _pearson_rows(cand_temp, fc_temp) + _pearson_rows(cand_solar, fc_solar)
    if strategy == "smallest_rmse":
        rmse_t = np.sqrt(((cand_temp - fc_temp) ** 2).mean(axis=1))
        rmse_s = np.sqrt(((cand_solar - fc_solar) ** 2).mean(axis=1))
        return rmse_t + rmse_s
    if strategy == "closest_mean":
        d_t = np.abs(cand_temp.mean(axis=1) - fc_temp.mean())
        d_s = np.abs(cand_solar.mean(axis=1) - fc_solar.mean())
        return d_t + d_s
    raise ConfigError(f"strategy {strategy!r} has no weather score")


def rank_candidates(scores: np.ndarray | None, end_times: np.ndarray,
                    ascending: bool, width: int) -> np.ndarray:
    """Deterministic ranking: score, then later end time, then lower index.

    scores None means pure recency (most_recent).  Returns up to `width`
    pool positions, best first.
    """
    n = len(end_times)
    idx = np.arange(n)
    if scores is None:
        order = np.lexsort((idx, -end_times))
    else:
        key = scores if ascending else -scores
        order = np.lexsort((idx, -end_times, key))
    return order[:width]


def select(pool: list[Trajectory], now: float, forecast_weather,
           cfg: SelectionConfig) -> SelectionResult:
    """Pick the stack columns for one prediction instant.

    `pool` must already be filtered to the causal window (window_filter);
    `forecast_weather` is the (t_amb, solar) pair over the full window
    length in physical units, distorted upstream if desired.  Returns pool
    positions best-first plus a shortfall flag when fewer than width
    candidates exist.
    """
    if not pool:
        raise SelectionError("empty candidate pool")
    end_times = np.array([tr.end_time for tr in pool])
    if cfg.strategy == "most_recent":
        idx = rank_candidates(None, end_times, True, cfg.width)
        return SelectionResult(idx, shortfall=len(pool) < cfg.width)
    if pool[0].w_block.shape[0] < 2:
        raise SelectionError(
            "weather-similarity strategies need an ambient-temperature and"
            " a solar channel"
        )
    fc_t, fc_s = normalize_weather(forecast_weather[0], forecast_weather[1], cfg)
    cand_t_raw = np.stack([tr.w_block[0] for tr in pool])
    cand_s_raw = np.stack([tr.w_block[1] for tr in pool])
    cand_t, cand_s = normalize_weather(cand_t_raw, cand_s_raw, cfg)
    if cand_t.shape[1] != fc_t.shape[0]:
        raise SelectionError(
            f"forecast covers {fc_t.shape[0]} steps but candidates have"
            f" {cand_t.shape[1]}"
        )
    scores = score_windows(cand_t, cand_s, fc_t, fc_s, cfg.strategy)
    idx = rank_candidates(scores, end_times, _ASCENDING[cfg.strategy], cfg.width)
    return SelectionResult(idx, shortfall=len(pool) < cfg.width, scores=scores[idx])
