"""Group the interval axis into solution-quality frames.

Frames are driven by the activity profile (total neighborhood applications
per interval).  A threshold slightly above the average frame mass is swept
from left to right: an interval at or above the threshold forms a frame on
its own, otherwise the frame is extended as far as its mass stays below the
threshold.  Too few frames lower the threshold and retry; too many are
merged pairwise from the front.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

R_START = 0.05
R_STEP = 0.01
R_FLOOR = -0.95


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class FrameSpec:
    """``ends[f]`` is the 1-based index of the last interval of frame ``f + 1``."""

    ends: tuple[int, ...]

    def __post_init__(self):
        ends = tuple(int(e) for e in self.ends)
        if not ends or ends[0] < 1 or any(b <= a for a, b in zip(ends, ends[1:])):
            raise FrameError(f"frame ends must be strictly increasing positive indices, got {ends}")
        object.__setattr__(self, "ends", ends)

    @property
    def n_frames(self) -> int:
        return len(self.ends)

    @property
    def n_intervals(self) -> int:
        return self.ends[-1]

    def bounds(self, frame: int) -> tuple[int, int]:
        """Inclusive 1-based interval range of ``frame`` (1-based)."""
        lo = self.ends[frame - 2] + 1 if frame > 1 else 1
        return lo, self.ends[frame - 1]

    def labels(self) -> np.ndarray:
        """Frame index (1-based) of every interval 1..n_intervals."""
        out = np.empty(self.n_intervals, dtype=np.int64)
        lo = 0
        for f, e in enumerate(self.ends, start=1):
            out[lo:e] = f
            lo = e
        return out


def trim_empty_tail(A: Sequence[float]) -> np.ndarray:
    A = np.asarray(A)
    nz = np.flatnonzero(A)
    if nz.size == 0:
        raise FrameError("activity profile is all zero")
    return A[: nz[-1] + 1]


def _sweep(A: list[float], limit: float) -> list[int]:
    ends = []
    n = len(A)
    i = 0
    while i < n:
        if A[i] >= limit:
            ends.append(i + 1)
            i += 1
            continue
        # A[i] < limit, so at least interval i itself fits
        total = A[i]
        k = i
        while k + 1 < n and total + A[k + 1] <= limit:
            k += 1
            total += A[k]
        ends.append(k + 1)
        i = k + 1
    return ends


def _merge_pairs(ends: list[int], n_frames: int) -> list[int]:
    while len(ends) > n_frames:
        excess = len(ends) - n_frames
        merged, j = [], 0
        while j < len(ends):
            if excess > 0 and j + 1 < len(ends):
                merged.append(ends[j + 1])
                excess -= 1
                j += 2
            else:
                merged.append(ends[j])
                j += 1
        ends = merged
    return ends


def group_frames(A: Sequence[float], n_frames: int = 5) -> FrameSpec:
    """Split a (tail-trimmed) activity profile into exactly ``n_frames`` frames.

    Raises :class:`FrameError` when the threshold reaches its floor without
    producing enough frames, which happens for profiles dominated by fewer
    heavy intervals than requested frames.
    """
    A = np.asarray(A, dtype=float)
    n = len(A)
    if n == 0:
        raise FrameError("empty activity profile")
    if np.any(A < 0) or not np.all(np.isfinite(A)):
        raise FrameError("activity profile must be finite and nonnegative")
    if not 1 <= n_frames <= n:
        raise FrameError(f"n_frames={n_frames} must lie in [1, {n}]")
    if A[-1] <= 0:
        raise FrameError("profile must end with a nonzero interval; trim it first")
    avg = float(A.sum()) / n_frames
    values = A.tolist()
    step = 0
    while True:
        r = R_START - R_STEP * step
        if r < R_FLOOR - 1e-12:
            raise FrameError(f"could not form {n_frames} frames before r reached its floor {R_FLOOR}")
        ends = _sweep(values, avg * (1.0 + r))
        if len(ends) >= n_frames:
            return FrameSpec(tuple(_merge_pairs(ends, n_frames)))
        step += 1


def frame_of(spec: FrameSpec, interval: int) -> int:
    if not 1 <= interval <= spec.n_intervals:
        raise FrameError(f"interval {interval} outside 1..{spec.n_intervals}")
    return int(np.searchsorted(spec.ends, interval, side="left")) + 1
