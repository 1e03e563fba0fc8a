"""Per-frame observables from a run log.

Improve/worsen/nothing counts are summed over the intervals of a frame and
turned into ratios.  Magnitudes are not comparable across intervals, so
each interval ranks the neighborhoods by mean magnitude per application
(mean operator time breaks ties, cheaper first) and the per-interval ranked
lists of a frame are combined with a robust rank aggregation score.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .frames import FrameSpec
from .runlog import RunLog

KINDS = ("improve", "worsen")


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class FrameRatios:
    """Arrays of shape (n_neighborhoods, n_frames); NaN marks frames where a
    neighborhood was never applied.  ``n_iters`` holds the frame totals."""

    r_improve: np.ndarray
    r_worsen: np.ndarray
    r_nothing: np.ndarray
    n_iters: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return self.n_iters == 0

    def composition(self, k: int, f: int) -> tuple[float, float, float]:
        return (float(self.r_improve[k, f]), float(self.r_worsen[k, f]), float(self.r_nothing[k, f]))


@dataclass(frozen=True)
class RankList:
    """Neighborhood positions ordered best first for one interval."""

    interval: int
    kind: str
    order: tuple[int, ...]
    m: int

    def normalized_ranks(self) -> dict[int, float]:
        return {k: (pos + 1) / self.m for pos, k in enumerate(self.order)}


def _check_axis(log: RunLog, spec: FrameSpec) -> None:
    n = spec.n_intervals
    if n > log.n_intervals:
        raise AggregationError(f"frames cover {n} intervals but the log has {log.n_intervals}")
    if np.any(log.n_iters[:, n:]):
        raise AggregationError("log has activity beyond the last frame; frames must be built on the trimmed axis")


def _frame_sums(a: np.ndarray, spec: FrameSpec) -> np.ndarray:
    starts = np.array((0,) + spec.ends[:-1], dtype=np.intp)
    return np.add.reduceat(a[:, : spec.n_intervals], starts, axis=1)


def frame_ratios(log: RunLog, spec: FrameSpec) -> FrameRatios:
    _check_axis(log, spec)
    it = _frame_sums(log.n_iters, spec)
    with np.errstate(invalid="ignore", divide="ignore"):
        ri = np.where(it > 0, _frame_sums(log.n_I, spec) / it, np.nan)
        rw = np.where(it > 0, _frame_sums(log.n_W, spec) / it, np.nan)
        rn = np.where(it > 0, _frame_sums(log.n_SN, spec) / it, np.nan)
    return FrameRatios(ri, rw, rn, it)


def interval_rank_lists(log: RunLog, kind: str, n_intervals: int | None = None) -> list[RankList]:
    """One ranked list per interval (possibly empty).

    Neighborhoods applied at least once in the interval are ranked by
    descending mean magnitude per application, then ascending mean time,
    then position in the log.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    s = log.s_I if kind == "improve" else log.s_W
    m = log.n_neighborhoods
    n = log.n_intervals if n_intervals is None else n_intervals
    lists = []
    for j in range(n):
        it = log.n_iters[:, j]
        present = np.flatnonzero(it > 0)
        avg = s[present, j] / it[present]
        tm = log.s_time[present, j] / it[present]
        # lexsort: last key is primary
        order = present[np.lexsort((present, tm, -avg))]
        lists.append(RankList(j + 1, kind, tuple(int(k) for k in order), m))
    return lists


def rra_score(ranks: Sequence[float], n_lists: int | None = None) -> float:
    """Minimum over k of P(k-th smallest of L uniforms <= r_(k)).

    ``ranks`` are normalised ranks in (0, 1]; entries missing from the
    ``n_lists`` lists count as 1.0.
    """
    r = np.sort(np.asarray(ranks, dtype=float))
    L = len(r) if n_lists is None else int(n_lists)
    if L < 1:
        raise ValueError("need at least one list")
    if len(r) > L:
        raise ValueError(f"{len(r)} ranks for {L} lists")
    if np.any(~(r > 0)) or np.any(r > 1):
        raise ValueError("normalised ranks must lie in (0, 1]")
    if len(r) < L:
        r = np.r_[r, np.ones(L - len(r))]
    k = np.arange(1, L + 1)
    # P(U_(k) <= x) for L uniforms is the regularised incomplete beta I_x(k, L-k+1)
    beta = special.betainc(k, L - k + 1, r)
    return float(min(beta.min(), 1.0))


def aggregate_magnitudes(lists: Sequence[RankList], m: int | None = None) -> np.ndarray:
    """Aggregation score per neighborhood over the nonempty lists of a frame.

    Returns an array of length ``m``; neighborhoods absent from every list
    get 1.0.
    """
    lists = [lst for lst in lists if lst.order]
    if not lists:
        raise AggregationError("no ranked list in this frame")
    m = lists[0].m if m is None else m
    L = len(lists)
    ranks = np.ones((m, L))
    for col, lst in enumerate(lists):
        for k, r in lst.normalized_ranks().items():
            ranks[k, col] = r
    return np.array([rra_score(ranks[k], L) for k in range(m)])


@dataclass(frozen=True)
class FrameScores:
    """Aggregation scores, shape (n_neighborhoods, n_frames) per kind.
    ``empty_frames`` flags frames without any ranked list (scored 1.0)."""

    rho_improve: np.ndarray
    rho_worsen: np.ndarray
    empty_frames: np.ndarray


def frame_scores(log: RunLog, spec: FrameSpec) -> FrameScores:
    _check_axis(log, spec)
    m, F = log.n_neighborhoods, spec.n_frames
    out = {}
    empty = np.zeros(F, dtype=bool)
    for kind in KINDS:
        lists = interval_rank_lists(log, kind, spec.n_intervals)
        rho = np.ones((m, F))
        for f in range(1, F + 1):
            lo, hi = spec.bounds(f)
            sub = [lst for lst in lists[lo - 1: hi] if lst.order]
            if sub:
                rho[:, f - 1] = aggregate_magnitudes(sub, m)
            else:
                empty[f - 1] = True
        out[kind] = rho
    return FrameScores(out["improve"], out["worsen"], empty)
