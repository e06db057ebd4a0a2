"""Telemetry ingestion, validation, resampling and trajectory enumeration.

A measurement record is a uniformly sampled multichannel series with
explicit gap marks.  Gaps are stored as NaN; a time step is usable for
identification only when every channel is measured, so one missing sensor
invalidates the whole step.  No imputation is ever performed: gaps are
skipped, never filled.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import ConfigError, GridError, ParseError, ShapeError

GAP = float("nan")

KIND_CONTROL = "u"
KIND_DISTURBANCE = "w"
KIND_OUTPUT = "y"
_KINDS = (KIND_CONTROL, KIND_DISTURBANCE, KIND_OUTPUT)

DEFAULT_DT = 900.0  # 15 min in seconds


@dataclass(frozen=True)
class Channel:
    """One measured channel and its plausibility bounds."""

    name: str
    kind: str  # "u" control, "w" disturbance, "y" output
    unit: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown channel kind {self.kind!r} for {self.name!r}")
        if not self.lo < self.hi:
            raise ConfigError(f"channel {self.name!r}: lo must be < hi")


class Schema:
    """Ordered channel list: at least one u, at least one w, exactly one y."""

    def __init__(self, channels):
        channels = tuple(channels)
        names = [c.name for c in channels]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate channel names")
        kinds = [c.kind for c in channels]
        if kinds.count(KIND_OUTPUT) != 1:
            raise ConfigError("schema needs exactly one output (y) channel")
        if kinds.count(KIND_CONTROL) < 1 or kinds.count(KIND_DISTURBANCE) < 1:
            raise ConfigError("schema needs at least one u and one w channel")
        self.channels = channels
        self.u_indices = tuple(i for i, c in enumerate(channels) if c.kind == KIND_CONTROL)
        self.w_indices = tuple(i for i, c in enumerate(channels) if c.kind == KIND_DISTURBANCE)
        self.y_index = kinds.index(KIND_OUTPUT)

    def __len__(self):
        return len(self.channels)

    def __eq__(self, other):
        return isinstance(other, Schema) and self.channels == other.channels

    @property
    def names(self):
        return tuple(c.name for c in self.channels)

    @property
    def channel_counts(self):
        """(m_u, m_w, p) in stacking order."""
        return (len(self.u_indices), len(self.w_indices), 1)

    def bounds(self):
        lo = np.array([c.lo for c in self.channels])
        hi = np.array([c.hi for c in self.channels])
        return lo, hi

    @classmethod
    def from_config(cls, cfg: dict) -> "Schema":
        try:
            chans = [
                Channel(c["name"], c["kind"], c.get("unit", ""), float(c["min"]), float(c["max"]))
                for c in cfg["channels"]
            ]
        except KeyError as exc:
            raise ConfigError(f"channel config missing key {exc}") from exc
        return cls(chans)

    def to_config(self) -> dict:
        return {
            "channels": [
                {"name": c.name, "kind": c.kind, "unit": c.unit, "min": c.lo, "max": c.hi}
                for c in self.channels
            ]
        }


def load_schema_config(path):
    """Read a schema + sampling config file (JSON key-value, versioned).

    Documented keys: schema_version, dt_minutes, channels[].name/kind/unit/min/max.
    Returns (Schema, dt_seconds).
    """
    with open(path) as fh:
        cfg = json.load(fh)
    if "schema_version" not in cfg:
        raise ConfigError("config missing schema_version")
    dt = float(cfg.get("dt_minutes", 15)) * 60.0
    return Schema.from_config(cfg), dt


class SeriesSet:
    """Uniformly sampled multichannel record with NaN gap marks.

    values has shape (n_channels, n_steps) following schema order; every
    finite value lies inside its channel's plausible range.  Instances are
    immutable after construction and safe to share across workers.
    """

    def __init__(self, schema: Schema, t0: float, dt: float, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != len(schema):
            raise ShapeError(
                f"values must be ({len(schema)}, n_steps), got {values.shape}"
            )
        if dt <= 0:
            raise ConfigError("dt must be positive")
        lo, hi = schema.bounds()
        finite = np.isfinite(values)
        bad = finite & ((values < lo[:, None]) | (values > hi[:, None]))
        if bad.any():
            ch, st = np.argwhere(bad)[0]
            raise ShapeError(
                f"value out of plausible range: channel {schema.names[ch]!r}"
                f" step {st} = {values[ch, st]}"
            )
        values = values.copy()
        values.setflags(write=False)
        self.schema = schema
        self.t0 = float(t0)
        self.dt = float(dt)
        self.values = values
        self._valid = np.isfinite(values).all(axis=0)
        self._valid.setflags(write=False)

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    @property
    def valid_mask(self) -> np.ndarray:
        """True where every channel is measured."""
        return self._valid

    def time_at(self, step: int) -> float:
        return self.t0 + step * self.dt

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps) * self.dt

    def channel(self, name: str) -> np.ndarray:
        return self.values[self.schema.names.index(name)]

    def replace_values(self, values: np.ndarray) -> "SeriesSet":
        return SeriesSet(self.schema, self.t0, self.dt, values)

    def gap_fraction(self) -> float:
        return float(np.isnan(self.values).any(axis=0).mean())


@dataclass(frozen=True)
class Segment:
    """Maximal run of consecutive gap-free steps."""

    start: int
    length: int

    @property
    def stop(self) -> int:
        return self.start + self.length


@dataclass(frozen=True)
class Trajectory:
    """One contiguous gap-free window across all channels.

    Blocks have shape (n_kind_channels, L); end_time is the timestamp of
    the window's last sample, used for recency ordering and causality.
    """

    start: int
    u_block: np.ndarray
    w_block: np.ndarray
    y_block: np.ndarray
    end_time: float

    @property
    def length(self) -> int:
        return self.u_block.shape[1]


def _parse_timestamp(text: str, line: int) -> float:
    try:
        stamp = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    except ValueError as exc:
        raise ParseError(f"bad timestamp {text!r}", line=line) from exc
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp.timestamp()


def _parse_cell(text: str, line: int) -> float:
    text = text.strip()
    if text == "" or text.lower() == "nan":
        return GAP
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"bad numeric value {text!r}", line=line) from exc


def ingest_csv(path, schema: Schema, dt: float = DEFAULT_DT,
               bounds_mode: str = "mark") -> SeriesSet:
    """Read a telemetry CSV onto the uniform grid.

    First column is an ISO-8601 timestamp; remaining columns are named per
    the schema.  Gaps are empty cells or "NaN".  Rows are sorted by time
    before gridding; grid slots with no row become gaps.  Out-of-range
    values become gaps when bounds_mode == "mark" (default) or raise when
    bounds_mode == "error".
    """
    if bounds_mode not in ("mark", "error"):
        raise ConfigError(f"unknown bounds_mode {bounds_mode!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        missing = set(schema.names) - set(header[1:])
        if missing:
            raise ParseError(f"header missing channels {sorted(missing)}", line=1)
        col_of = {name: header.index(name) for name in schema.names}
        stamps = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(cell.strip() == "" for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} cells, got {len(row)}", line=lineno
                )
            stamps.append(_parse_timestamp(row[0], lineno))
            rows.append([_parse_cell(row[col_of[n]], lineno) for n in schema.names])
    if not rows:
        raise ParseError("no data rows", line=2)

    stamps = np.array(stamps)
    data = np.array(rows, dtype=float).T  # (n_chan, n_rows)
    order = np.argsort(stamps, kind="stable")
    stamps = stamps[order]
    data = data[:, order]

    t0 = stamps[0]
    slots = np.round((stamps - t0) / dt).astype(int)
    off = np.abs(stamps - (t0 + slots * dt))
    if (off > dt / 2 + 1e-6).any():
        bad = int(np.argmax(off > dt / 2 + 1e-6))
        raise GridError(
            f"timestamp {stamps[bad]} does not snap to the {dt} s grid"
        )
    if (np.diff(slots) <= 0).any():
        raise GridError("duplicate or non-increasing timestamps after snapping")

    n_steps = slots[-1] + 1
    values = np.full((len(schema), n_steps), GAP)
    values[:, slots] = data

    lo, hi = schema.bounds()
    finite = np.isfinite(values)
    out = finite & ((values < lo[:, None]) | (values > hi[:, None]))
    if out.any():
        if bounds_mode == "error":
            ch, st = np.argwhere(out)[0]
            raise ParseError(
                f"channel {schema.names[ch]!r} step {st}: value"
                f" {values[ch, st]} outside [{lo[ch]}, {hi[ch]}]"
            )
        values[out] = GAP
    return SeriesSet(schema, t0, dt, values)


def resample(raw: SeriesSet, dt_target: float) -> SeriesSet:
    """Block-average a higher-rate record down to dt_target.

    Each target step is the arithmetic mean of its source steps; any gap
    among the sources makes the target step a gap (conservative).  A
    trailing partial block is dropped.
    """
    ratio = dt_target / raw.dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigError(
            f"dt_target {dt_target} is not an integer multiple of dt {raw.dt}"
        )
    r = int(round(ratio))
    if r == 1:
        return raw
    n_out = raw.n_steps // r
    blocks = raw.values[:, :n_out * r].reshape(len(raw.schema), n_out, r)
    means = blocks.mean(axis=2)  # NaN propagates: conservative gap rule
    return SeriesSet(raw.schema, raw.t0, dt_target, means)


def admissible_segments(series: SeriesSet, min_len: int) -> list[Segment]:
    """Maximal gap-free runs of at least min_len steps, by start index."""
    if min_len < 1:
        raise ConfigError("min_len must be >= 1")
    mask = series.valid_mask
    if not mask.any():
        return []
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    starts, stops = edges[::2], edges[1::2]
    return [
        Segment(int(a), int(b - a))
        for a, b in zip(starts, stops)
        if b - a >= min_len
    ]


def extract_trajectories(segment: Segment, series: SeriesSet, length: int) -> list[Trajectory]:
    """All sliding windows of the given length inside one segment (stride 1)."""
    if segment.length < length:
        raise ShapeError(
            f"segment of {segment.length} steps cannot hold a {length}-step window"
        )
    sch = series.schema
    u_idx = np.array(sch.u_indices)
    w_idx = np.array(sch.w_indices)
    out = []
    for s in range(segment.start, segment.stop - length + 1):
        win = series.values[:, s:s + length]
        out.append(
            Trajectory(
                start=s,
                u_block=win[u_idx],
                w_block=win[w_idx],
                y_block=win[sch.y_index:sch.y_index + 1],
                end_time=series.time_at(s + length - 1),
            )
        )
    return out


def window_start_ok(series: SeriesSet, length: int) -> np.ndarray:
    """Boolean array: True at s when the window [s, s+length) is gap-free.

    Shared by segment enumeration, the evaluation harness and the
    selection pool; computed with a prefix sum so each query is O(1).
    """
    mask = series.valid_mask.astype(np.int64)
    csum = np.concatenate(([0], np.cumsum(mask)))
    n = series.n_steps
    if n < length:
        return np.zeros(0, dtype=bool)
    return (csum[length:] - csum[:-length]) == length


def write_csv(series: SeriesSet, path) -> None:
    """Write the standard CSV layout (ISO timestamps, gaps as empty cells)."""
    times = series.times()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", *series.schema.names])
        for i in range(series.n_steps):
            stamp = datetime.fromtimestamp(times[i], tz=timezone.utc)
            row = [stamp.strftime("%Y-%m-%dT%H:%M:%SZ")]
            for ch in range(len(series.schema)):
                v = series.values[ch, i]
                row.append("" if np.isnan(v) else repr(float(v)))
            writer.writerow(row)
