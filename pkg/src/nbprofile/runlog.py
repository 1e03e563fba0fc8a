"""Interval geometry, per-cell counters and the run-log text format.

The cost range ``[lower_bound, upper_bound]`` is cut into ``n_intervals``
intervals whose widths shrink geometrically towards the lower bound.
Interval 1 sits at the upper bound (worst quality), interval ``n`` at the
lower bound.  Every neighborhood application is recorded in the cell
addressed by (neighborhood, interval of the solution it was applied to).

Log file layout (UTF-8, LF, ``#`` lines are comments)::

    instance=<id>
    upper_bound=<float>
    lower_bound=<float>
    n_intervals=<int>
    decay=<float>
    run_count=<int>
    neighborhoods=<id>,<id>,...
    <nbh_id>,<interval>,n_iters,n_I,n_SN,n_W,s_I,s_W,s_time_ns
    ...

Only nonzero cells are written; intervals are 1-based.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

HEADER_KEYS = (
    "instance",
    "upper_bound",
    "lower_bound",
    "n_intervals",
    "decay",
    "run_count",
    "neighborhoods",
)
COUNT_FIELDS = ("n_iters", "n_I", "n_SN", "n_W")


class LogFormatError(ValueError):
    """Raised for malformed or inconsistent run-log files."""


class LogMismatchError(ValueError):
    """Raised when logs with different metadata are merged."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class QualityBounds:
    upper_bound: float
    lower_bound: float

    def __post_init__(self):
        ub, lb = float(self.upper_bound), float(self.lower_bound)
        if not (math.isfinite(ub) and math.isfinite(lb)):
            raise ValueError(f"bounds must be finite, got ({ub}, {lb})")
        if not ub > lb:
            raise ValueError(f"upper_bound {ub} must exceed lower_bound {lb}")
        object.__setattr__(self, "upper_bound", ub)
        object.__setattr__(self, "lower_bound", lb)

    @property
    def span(self) -> float:
        return self.upper_bound - self.lower_bound


@dataclass(frozen=True, eq=False)
class IntervalGrid:
    """Geometric partition of the cost range.

    ``boundaries[0]`` is the upper bound and ``boundaries[n]`` the lower
    bound; interval ``i`` (1-based) is ``(boundaries[i], boundaries[i-1]]``.
    """

    bounds: QualityBounds
    n_intervals: int
    decay: float
    boundaries: np.ndarray = field(repr=False)

    def __post_init__(self):
        # ascending copy for bisect lookups
        object.__setattr__(self, "_ascending", self.boundaries[::-1].tolist())

    def __eq__(self, other):
        if not isinstance(other, IntervalGrid):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def key(self) -> tuple:
        return (
            self.bounds.upper_bound,
            self.bounds.lower_bound,
            self.n_intervals,
            self.decay,
        )

    @property
    def widths(self) -> np.ndarray:
        return self.boundaries[:-1] - self.boundaries[1:]

    @property
    def first_width(self) -> float:
        q, n = self.decay, self.n_intervals
        if q == 1.0:
            return self.bounds.span / n
        return self.bounds.span * (1.0 - q) / (1.0 - q**n)

    def interval_of(self, cost: float) -> int:
        return interval_of(self, cost)


def build_grid(bounds: QualityBounds, n_intervals: int = 1000, decay: float = 0.99) -> IntervalGrid:
    """Partition ``bounds`` into ``n_intervals`` intervals, each ``decay``
    times the width of the previous one (finer near the lower bound)."""
    n_intervals = int(n_intervals)
    decay = float(decay)
    if n_intervals < 1:
        raise ValueError(f"n_intervals must be >= 1, got {n_intervals}")
    if not (0.0 < decay <= 1.0) or not math.isfinite(decay):
        raise ValueError(f"decay must lie in (0, 1], got {decay}")
    lb, span = bounds.lower_bound, bounds.span
    i = np.arange(n_intervals + 1, dtype=float)
    if decay == 1.0:
        remaining = span * (n_intervals - i) / n_intervals
    else:
        # measured from the lower bound so the tiny widths there stay accurate
        logq = math.log(decay)
        remaining = span * (np.exp(i * logq) - math.exp(n_intervals * logq)) / -math.expm1(n_intervals * logq)
    b = lb + remaining
    b[0] = bounds.upper_bound
    b[-1] = bounds.lower_bound
    if not np.all(np.diff(b) < 0):
        raise ValueError("decay too small for this many intervals: boundaries collapse in float precision")
    return IntervalGrid(bounds, n_intervals, decay, b)


def interval_of(grid: IntervalGrid, cost: float) -> int:
    """1-based interval containing ``cost``; costs outside the bounds clamp
    to the end intervals."""
    cost = float(cost)
    if not math.isfinite(cost):
        raise ValueError(f"cost must be finite, got {cost}")
    j = bisect.bisect_left(grid._ascending, cost)
    i = grid.n_intervals - j + 1
    return min(max(i, 1), grid.n_intervals)


def interval_of_closed_form(grid: IntervalGrid, cost: float) -> int:
    """Same lookup through the inverse of the geometric sum; kept as a
    cross-check for :func:`interval_of` (may differ only within a few ulps
    of a boundary)."""
    cost = float(cost)
    if not math.isfinite(cost):
        raise ValueError(f"cost must be finite, got {cost}")
    n, q = grid.n_intervals, grid.decay
    dist = grid.bounds.upper_bound - cost
    if dist <= 0:
        return 1
    w1 = grid.first_width
    if q == 1.0:
        i = math.ceil(dist / w1)
    else:
        arg = 1.0 - dist * (1.0 - q) / w1
        if arg <= 0:
            return n
        i = math.ceil(math.log(arg) / math.log(q))
    return min(max(i, 1), n)


@dataclass(frozen=True)
class CellStats:
    n_iters: int = 0
    n_I: int = 0
    n_SN: int = 0
    n_W: int = 0
    s_I: float = 0.0
    s_W: float = 0.0
    s_time: int = 0

    def check(self) -> None:
        _check_counters(self.n_iters, self.n_I, self.n_SN, self.n_W, self.s_I, self.s_W, self.s_time)


def _check_counters(n_iters, n_I, n_SN, n_W, s_I, s_W, s_time) -> None:
    if min(n_iters, n_I, n_SN, n_W, s_time) < 0 or s_I < 0 or s_W < 0:
        raise LogFormatError("counters must be nonnegative")
    if n_iters != n_I + n_SN + n_W:
        raise LogFormatError(f"n_iters={n_iters} != n_I+n_SN+n_W={n_I + n_SN + n_W}")
    if n_I == 0 and s_I != 0:
        raise LogFormatError("s_I must be 0 when n_I is 0")
    if n_W == 0 and s_W != 0:
        raise LogFormatError("s_W must be 0 when n_W is 0")


@dataclass(eq=False)
class RunLog:
    """Dense (neighborhood x interval) table of counters for one instance.

    Arrays are indexed ``[k, i - 1]`` for neighborhood position ``k`` and
    1-based interval ``i``.  Treat instances as immutable once built.
    """

    instance_id: str
    grid: IntervalGrid
    neighborhood_ids: tuple[str, ...]
    n_iters: np.ndarray
    n_I: np.ndarray
    n_SN: np.ndarray
    n_W: np.ndarray
    s_I: np.ndarray
    s_W: np.ndarray
    s_time: np.ndarray
    run_count: int = 1

    def __post_init__(self):
        self.neighborhood_ids = tuple(str(x) for x in self.neighborhood_ids)
        shape = (len(self.neighborhood_ids), self.grid.n_intervals)
        for name in ("n_iters", "n_I", "n_SN", "n_W", "s_time"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        for name in ("s_I", "s_W"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        for name in ("n_iters", "n_I", "n_SN", "n_W", "s_I", "s_W", "s_time"):
            if getattr(self, name).shape != shape:
                raise LogFormatError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if len(set(self.neighborhood_ids)) != len(self.neighborhood_ids):
            raise LogFormatError("duplicate neighborhood ids")
        for nid in self.neighborhood_ids:
            if not nid or any(c in nid for c in ",\n\r=#") or nid != nid.strip():
                raise LogFormatError(f"invalid neighborhood id {nid!r}")

    @classmethod
    def empty(cls, instance_id: str, grid: IntervalGrid, neighborhood_ids: Sequence[str], run_count: int = 0) -> "RunLog":
        shape = (len(neighborhood_ids), grid.n_intervals)
        zi = lambda: np.zeros(shape, dtype=np.int64)  # noqa: E731
        zf = lambda: np.zeros(shape, dtype=np.float64)  # noqa: E731
        return cls(instance_id, grid, tuple(neighborhood_ids), zi(), zi(), zi(), zi(), zf(), zf(), zi(), run_count)

    @property
    def n_neighborhoods(self) -> int:
        return len(self.neighborhood_ids)

    @property
    def n_intervals(self) -> int:
        return self.grid.n_intervals

    def cell(self, k: int, interval: int) -> CellStats:
        j = interval - 1
        return CellStats(
            int(self.n_iters[k, j]), int(self.n_I[k, j]), int(self.n_SN[k, j]), int(self.n_W[k, j]),
            float(self.s_I[k, j]), float(self.s_W[k, j]), int(self.s_time[k, j]),
        )

    def sum_n_iters(self) -> np.ndarray:
        """Activity profile: total applications per interval."""
        return self.n_iters.sum(axis=0)

    def validate(self) -> None:
        for a in (self.n_iters, self.n_I, self.n_SN, self.n_W, self.s_time, self.s_I, self.s_W):
            if np.any(a < 0):
                raise LogFormatError("counters must be nonnegative")
        bad = self.n_iters != self.n_I + self.n_SN + self.n_W
        if np.any(bad):
            k, j = np.argwhere(bad)[0]
            raise LogFormatError(f"counter invariant violated at ({self.neighborhood_ids[k]}, {j + 1})")
        if np.any((self.n_I == 0) & (self.s_I != 0)) or np.any((self.n_W == 0) & (self.s_W != 0)):
            raise LogFormatError("nonzero magnitude sum with zero count")

    def metadata(self) -> tuple:
        return (self.instance_id, self.grid.key(), self.neighborhood_ids)

    def same_as(self, other: "RunLog") -> bool:
        """Exact equality of metadata and every counter."""
        if self.metadata() != other.metadata() or self.run_count != other.run_count:
            return False
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("n_iters", "n_I", "n_SN", "n_W", "s_I", "s_W", "s_time")
        )


def merge_logs(logs: Iterable[RunLog]) -> RunLog:
    """Field-wise sum of logs sharing instance, grid and neighborhoods.

    Magnitude sums use ``math.fsum`` per cell, so the result is the
    correctly rounded total and does not depend on the order of ``logs``.
    """
    logs = list(logs)
    if not logs:
        raise ValueError("merge_logs needs at least one log")
    first = logs[0]
    for lg in logs[1:]:
        if lg.metadata() != first.metadata():
            raise LogMismatchError(
                f"cannot merge {lg.instance_id!r} into {first.instance_id!r}: metadata differ"
            )
    out = {f: sum(getattr(lg, f) for lg in logs) for f in ("n_iters", "n_I", "n_SN", "n_W", "s_time")}
    for f in ("s_I", "s_W"):
        stack = np.stack([getattr(lg, f) for lg in logs])
        total = stack.sum(axis=0)
        multi = np.count_nonzero(stack, axis=0) > 1
        for k, j in zip(*np.nonzero(multi)):
            total[k, j] = math.fsum(stack[:, k, j])
        out[f] = total
    return RunLog(
        first.instance_id, first.grid, first.neighborhood_ids,
        out["n_iters"], out["n_I"], out["n_SN"], out["n_W"], out["s_I"], out["s_W"], out["s_time"],
        run_count=sum(lg.run_count for lg in logs),
    )


def format_log(log: RunLog, comments: Sequence[str] = ()) -> str:
    lines = [f"# {c}" for c in comments]
    lines += [
        f"instance={log.instance_id}",
        f"upper_bound={_fmt(log.grid.bounds.upper_bound)}",
        f"lower_bound={_fmt(log.grid.bounds.lower_bound)}",
        f"n_intervals={log.grid.n_intervals}",
        f"decay={_fmt(log.grid.decay)}",
        f"run_count={log.run_count}",
        "neighborhoods=" + ",".join(log.neighborhood_ids),
    ]
    for k, nid in enumerate(log.neighborhood_ids):
        for j in np.nonzero(log.n_iters[k])[0]:
            lines.append(
                f"{nid},{j + 1},{log.n_iters[k, j]},{log.n_I[k, j]},{log.n_SN[k, j]},{log.n_W[k, j]},"
                f"{_fmt(log.s_I[k, j])},{_fmt(log.s_W[k, j])},{log.s_time[k, j]}"
            )
    return "\n".join(lines) + "\n"


def write_log(log: RunLog, path, comments: Sequence[str] = ()) -> None:
    log.validate()
    Path(path).write_text(format_log(log, comments), encoding="utf-8", newline="\n")


def parse_log(text: str) -> RunLog:
    header: dict[str, str] = {}
    rows: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "=" in line and len(header) < len(HEADER_KEYS):
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in HEADER_KEYS or key in header:
                raise LogFormatError(f"line {lineno}: unexpected header key {key!r}")
            header[key] = value.strip()
            continue
        if len(header) < len(HEADER_KEYS):
            missing = [k for k in HEADER_KEYS if k not in header]
            raise LogFormatError(f"line {lineno}: cell row before complete header (missing {missing})")
        rows.append((lineno, line.split(",")))
    if len(header) < len(HEADER_KEYS):
        raise LogFormatError(f"incomplete header, missing {[k for k in HEADER_KEYS if k not in header]}")
    try:
        bounds = QualityBounds(float(header["upper_bound"]), float(header["lower_bound"]))
        grid = build_grid(bounds, int(header["n_intervals"]), float(header["decay"]))
        run_count = int(header["run_count"])
    except ValueError as exc:
        raise LogFormatError(f"bad header: {exc}") from exc
    nids = tuple(header["neighborhoods"].split(",")) if header["neighborhoods"] else ()
    log = RunLog.empty(header["instance"], grid, nids, run_count)
    index = {nid: k for k, nid in enumerate(nids)}
    seen = set()
    for lineno, parts in rows:
        if len(parts) != 9:
            raise LogFormatError(f"line {lineno}: expected 9 fields, got {len(parts)}")
        nid = parts[0]
        if nid not in index:
            raise LogFormatError(f"line {lineno}: unknown neighborhood {nid!r}")
        try:
            interval = int(parts[1])
            n_iters, n_I, n_SN, n_W = (int(x) for x in parts[2:6])
            s_I, s_W = float(parts[6]), float(parts[7])
            s_time = int(parts[8])
        except ValueError as exc:
            raise LogFormatError(f"line {lineno}: {exc}") from exc
        if not 1 <= interval <= grid.n_intervals:
            raise LogFormatError(f"line {lineno}: interval {interval} outside 1..{grid.n_intervals}")
        if (nid, interval) in seen:
            raise LogFormatError(f"line {lineno}: duplicate cell ({nid}, {interval})")
        seen.add((nid, interval))
        if not (math.isfinite(s_I) and math.isfinite(s_W)):
            raise LogFormatError(f"line {lineno}: non-finite magnitude")
        try:
            _check_counters(n_iters, n_I, n_SN, n_W, s_I, s_W, s_time)
        except LogFormatError as exc:
            raise LogFormatError(f"line {lineno}: {exc}") from None
        k, j = index[nid], interval - 1
        log.n_iters[k, j], log.n_I[k, j], log.n_SN[k, j], log.n_W[k, j] = n_iters, n_I, n_SN, n_W
        log.s_I[k, j], log.s_W[k, j], log.s_time[k, j] = s_I, s_W, s_time
    return log


def read_log(path) -> RunLog:
    return parse_log(Path(path).read_text(encoding="utf-8"))
