"""Trajectory matrices (Hankel, mosaic-Hankel, Page), excitation checks,
and the six-block stacked matrix used by the behavioral predictor.

Multichannel sequences are stacked time-major: each column lists the full
channel vector at the window's first step, then the second step, and so
on.  This matches the stacked right-hand vector the predictor consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .series import Trajectory

STRUCTURE_HANKEL = "hankel"
STRUCTURE_MOSAIC = "mosaic_hankel"
STRUCTURE_PAGE = "page"


def _as_channels(z) -> np.ndarray:
    """Coerce to (n_channels, T)."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2:
        raise ShapeError(f"sequence must be 1-D or 2-D, got shape {z.shape}")
    return z


def build_hankel(z, depth: int) -> np.ndarray:
    """Hankel matrix of the given depth: column j holds the window z_j..z_{j+L-1}.

    For an (n_chan, T) input the result has depth*n_chan rows and T-L+1
    columns, channel vectors stacked per time step.
    """
    z = _as_channels(z)
    n_chan, total = z.shape
    if total < depth:
        raise ShapeError(f"need at least {depth} samples, got {total}")
    cols = total - depth + 1
    out = np.empty((depth * n_chan, cols))
    for t in range(depth):
        out[t * n_chan:(t + 1) * n_chan, :] = z[:, t:t + cols]
    return out


def build_mosaic_hankel(segments, depth: int) -> np.ndarray:
    """Horizontal concatenation of per-segment Hankel matrices.

    Segments shorter than the depth are skipped; raises when nothing
    usable remains.
    """
    parts = []
    for seg in segments:
        seg = _as_channels(seg)
        if seg.shape[1] >= depth:
            parts.append(build_hankel(seg, depth))
    if not parts:
        raise ShapeError(f"no segment of length >= {depth}; empty mosaic")
    return np.hstack(parts)


def build_page(z, depth: int) -> np.ndarray:
    """Page matrix: non-overlapping consecutive windows, tail samples dropped."""
    z = _as_channels(z)
    n_chan, total = z.shape
    if total < depth:
        raise ShapeError(f"need at least {depth} samples, got {total}")
    cols = total // depth
    trimmed = z[:, :cols * depth]
    # (n_chan, cols, depth) -> column-major windows, time-major rows
    out = trimmed.reshape(n_chan, cols, depth).transpose(2, 0, 1).reshape(depth * n_chan, cols)
    return out


def numeric_rank(mat: np.ndarray, tol: float | None = None) -> int:
    """Rank via SVD with the max(shape)*eps*sigma_max default tolerance."""
    if mat.size == 0:
        return 0
    svals = np.linalg.svd(mat, compute_uv=False)
    if tol is None:
        tol = svals[0] * max(mat.shape) * np.finfo(float).eps
    return int((svals > tol).sum())


def min_singular_value(mat: np.ndarray) -> float:
    """Smallest singular value; excitation diagnostic only."""
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        raise ShapeError("empty matrix has no singular values")
    return float(np.linalg.svd(mat, compute_uv=False)[-1])


@dataclass(frozen=True)
class PeVerdict:
    """Outcome of a persistency-of-excitation check."""

    structure: str
    rank: int
    required_rank: int
    satisfied: bool
    min_t: int
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "structure": self.structure,
            "rank": self.rank,
            "required_rank": self.required_rank,
            "satisfied": self.satisfied,
            "min_t": self.min_t,
            "note": self.note,
        }


def pe_check(u, depth: int, structure: str = STRUCTURE_HANKEL,
             page_shifts: int = 1, rank_tol: float | None = None) -> PeVerdict:
    """Check persistency of excitation of the input data at the given depth.

    structure selects the trajectory matrix whose row rank is tested:
    "hankel" expects one sequence and needs T >= L(m+1)-1 samples;
    "mosaic_hankel" expects a list of segments (each at least L long;
    necessary condition on the total sample count); "page" tests the
    stack of ``page_shifts`` shifted Page matrices against a sufficient,
    not necessary, minimum count.
    """
    if structure == STRUCTURE_HANKEL:
        z = _as_channels(u)
        m, total = z.shape
        mat = build_hankel(z, depth)
        required = depth * m
        min_t = depth * (m + 1) - 1
        note = ""
    elif structure == STRUCTURE_MOSAIC:
        if isinstance(u, np.ndarray) and u.ndim <= 2:
            raise ConfigError("mosaic_hankel expects a list of segments")
        segs = [_as_channels(s) for s in u]
        m = segs[0].shape[0]
        if any(s.shape[0] != m for s in segs):
            raise ShapeError("segments disagree on channel count")
        q = len(segs)
        mat = build_mosaic_hankel(segs, depth)
        required = depth * m
        min_t = depth * (m + q) - q
        note = "necessary condition; every segment must be at least the depth long"
    elif structure == STRUCTURE_PAGE:
        z = _as_channels(u)
        m, total = z.shape
        shifts = []
        for s in range(page_shifts):
            piece = z[:, s * depth: total - (page_shifts - 1 - s) * depth]
            if piece.shape[1] < depth:
                raise ShapeError("sequence too short for the requested page shifts")
            shifts.append(build_page(piece, depth))
        width = min(p.shape[1] for p in shifts)
        mat = np.vstack([p[:, :width] for p in shifts])
        required = depth * m * page_shifts
        min_t = depth * ((m * depth + 1) * page_shifts - 1)
        note = "sufficient, not necessary"
    else:
        raise ConfigError(f"unknown trajectory matrix structure {structure!r}")
    rank = numeric_rank(mat, tol=rank_tol)
    return PeVerdict(
        structure=structure,
        rank=rank,
        required_rank=required,
        satisfied=rank == required,
        min_t=int(min_t),
        note=note,
    )


class StackedTrajectoryMatrix:
    """Six-block stack of trajectories, one column per trajectory.

    Row blocks, in order: initialization u, w, y then prediction-horizon
    u, w, y.  ``h_hat`` exposes the first five blocks (everything the
    right-hand vector pins down); ``h_y`` exposes the final block whose
    combination is the prediction.
    """

    def __init__(self, t_ini: int, t_f: int, channel_counts, matrix: np.ndarray,
                 column_end_times: np.ndarray):
        m_u, m_w, p = channel_counts
        rows_expected = (t_ini + t_f) * (m_u + m_w + p)
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != rows_expected:
            raise ShapeError(
                f"stack must have {rows_expected} rows, got {matrix.shape}"
            )
        if matrix.shape[1] < 1:
            raise ShapeError("stack needs at least one column")
        column_end_times = np.asarray(column_end_times, dtype=float)
        if column_end_times.shape != (matrix.shape[1],):
            raise ShapeError("one end time per column required")
        self.t_ini = t_ini
        self.t_f = t_f
        self.m_u = m_u
        self.m_w = m_w
        self.p = p
        self.matrix = matrix
        self.column_end_times = column_end_times

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    def block_slices(self) -> dict:
        sizes = [
            ("u_ini", self.t_ini * self.m_u),
            ("w_ini", self.t_ini * self.m_w),
            ("y_ini", self.t_ini * self.p),
            ("u_pred", self.t_f * self.m_u),
            ("w_pred", self.t_f * self.m_w),
            ("y_pred", self.t_f * self.p),
        ]
        out = {}
        at = 0
        for name, size in sizes:
            out[name] = slice(at, at + size)
            at += size
        return out

    @property
    def h_hat(self) -> np.ndarray:
        """First five blocks (all rows except the prediction-horizon outputs)."""
        return self.matrix[:-self.t_f * self.p, :]

    @property
    def h_y(self) -> np.ndarray:
        """Prediction-horizon output block."""
        return self.matrix[-self.t_f * self.p:, :]

    def split_column(self, j: int):
        """Re-split column j into its (u, w, y) blocks over the full window.

        Returns arrays shaped (m_u, L), (m_w, L), (p, L); inverse of the
        stacking used by stack_blocks.
        """
        sl = self.block_slices()
        col = self.matrix[:, j]

        def unstack(part, n_chan, steps):
            return part.reshape(steps, n_chan).T

        u = np.hstack([
            unstack(col[sl["u_ini"]], self.m_u, self.t_ini),
            unstack(col[sl["u_pred"]], self.m_u, self.t_f),
        ])
        w = np.hstack([
            unstack(col[sl["w_ini"]], self.m_w, self.t_ini),
            unstack(col[sl["w_pred"]], self.m_w, self.t_f),
        ])
        y = np.hstack([
            unstack(col[sl["y_ini"]], self.p, self.t_ini),
            unstack(col[sl["y_pred"]], self.p, self.t_f),
        ])
        return u, w, y

    def to_csv(self, path) -> None:
        np.savetxt(path, self.matrix, delimiter=",")


def stack_column(u_block: np.ndarray, w_block: np.ndarray, y_block: np.ndarray,
                 t_ini: int) -> np.ndarray:
    """Stack one trajectory's blocks into the six-block column layout."""
    parts = [
        u_block[:, :t_ini].T.ravel(),
        w_block[:, :t_ini].T.ravel(),
        y_block[:, :t_ini].T.ravel(),
        u_block[:, t_ini:].T.ravel(),
        w_block[:, t_ini:].T.ravel(),
        y_block[:, t_ini:].T.ravel(),
    ]
    return np.concatenate(parts)


def stack_blocks(trajectories: list[Trajectory], t_ini: int, t_f: int,
                 channel_counts=None) -> StackedTrajectoryMatrix:
    """Arrange trajectories as columns of the six-block stacked matrix."""
    if not trajectories:
        raise ShapeError("cannot stack zero trajectories")
    length = t_ini + t_f
    first = trajectories[0]
    counts = (first.u_block.shape[0], first.w_block.shape[0], first.y_block.shape[0])
    if channel_counts is not None and tuple(channel_counts) != counts:
        raise ShapeError(
            f"channel counts {tuple(channel_counts)} do not match trajectories {counts}"
        )
    cols = []
    ends = []
    for tr in trajectories:
        if tr.length != length:
            raise ShapeError(
                f"trajectory length {tr.length} != t_ini + t_f = {length}"
            )
        if (tr.u_block.shape[0], tr.w_block.shape[0], tr.y_block.shape[0]) != counts:
            raise ShapeError("trajectories disagree on channel counts")
        cols.append(stack_column(tr.u_block, tr.w_block, tr.y_block, t_ini))
        ends.append(tr.end_time)
    return StackedTrajectoryMatrix(
        t_ini, t_f, counts, np.column_stack(cols), np.array(ends)
    )
