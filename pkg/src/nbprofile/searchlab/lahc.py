"""Iterated local search with a late-acceptance hill-climbing inner loop.

Each iteration picks one neighborhood with probability proportional to its
weight, applies it to the current solution and records the outcome in the
run log cell addressed by the interval of the cost *before* the move.
Rejected candidates are recorded too: the statistics describe operators,
not the acceptance rule.
"""

from __future__ import annotations

import bisect
import enum
import itertools
import math
import random
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..runlog import IntervalGrid, QualityBounds, RunLog, build_grid
from .instance import RoutingInstance, Solution, initial_solution
from .neighborhoods import PERTURBATION, Neighborhood, build_roster

# nominal nanoseconds per elementary evaluation for the deterministic clock
NS_PER_OP = 20


class MoveKind(enum.IntEnum):
    IMPROVE = 0
    NOTHING = 1
    WORSEN = 2


@dataclass(frozen=True)
class MoveOutcome:
    kind: MoveKind
    delta: float
    elapsed: int

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta is a magnitude")
        if self.kind is MoveKind.NOTHING and self.delta != 0:
            raise ValueError("a no-op move has zero delta")


def classify_move(old_cost: float, new_cost: float, epsilon: float = 0.0) -> MoveKind:
    if new_cost < old_cost - epsilon:
        return MoveKind.IMPROVE
    if new_cost > old_cost + epsilon:
        return MoveKind.WORSEN
    return MoveKind.NOTHING


def select_neighborhood(weights: Sequence[float], rng: random.Random) -> int:
    """Index drawn with probability ``w_k / sum(w)``."""
    cum = list(itertools.accumulate(float(w) for w in weights))
    if any(w < 0 for w in weights) or not cum or cum[-1] <= 0:
        raise ValueError("weights must be nonnegative and not all zero")
    return _draw(cum, rng)


def _draw(cum: list[float], rng: random.Random) -> int:
    k = bisect.bisect_right(cum, rng.random() * cum[-1])
    # guard the u*total == total rounding edge and zero-weight tails
    k = min(k, len(cum) - 1)
    while k > 0 and cum[k] == cum[k - 1]:
        k -= 1
    return k


@dataclass
class SearchConfig:
    weights: Sequence[float]
    la_list: int = 50
    it_wi: int = 2000
    budget: int = 10_000  # neighborhood applications
    seed: int = 0
    time_limit: float | None = None  # optional wall-clock cap in seconds

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) == 0 or np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
            raise ValueError("weights must be a nonnegative, not all-zero vector")
        self.weights = tuple((w / w.sum()).tolist())
        self.la_list, self.it_wi, self.budget = int(self.la_list), int(self.it_wi), int(self.budget)
        if self.la_list < 1 or self.it_wi < 1:
            raise ValueError("la_list and it_wi must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be positive")


@dataclass
class RunResult:
    best: Solution
    log: RunLog
    initial_cost: float
    iterations: int
    restarts: int
    trace: list = field(default_factory=list, repr=False)


def lahc_run(
    inst: RoutingInstance,
    config: SearchConfig,
    grid: IntervalGrid | None = None,
    roster: Sequence[Neighborhood] | None = None,
    *,
    clock: str = "model",
    debug: bool = False,
    collect: bool = True,
) -> RunResult:
    """One ILS run.

    Costs go into ``grid`` (built from the initial cost down to zero when not
    given).  ``clock="model"`` records operator time from evaluation counts so
    that a run is fully reproducible from its seed; ``clock="wall"`` uses
    ``perf_counter_ns``.
    """
    roster = list(roster) if roster is not None else build_roster()
    if len(config.weights) != len(roster):
        raise ValueError(f"{len(config.weights)} weights for {len(roster)} neighborhoods")
    if clock not in ("model", "wall"):
        raise ValueError(f"unknown clock {clock!r}")
    rng = random.Random(config.seed)
    current = initial_solution(inst)
    if grid is None:
        grid = build_grid(QualityBounds(current.cost, 0.0))
    m, n = len(roster), grid.n_intervals
    moves = [nb.move for nb in roster]
    cum = list(itertools.accumulate(config.weights))
    perturb_k = next((k for k, nb in enumerate(roster) if nb.nid == PERTURBATION.nid), None)

    size = m * n
    c_it, c_I, c_SN, c_W = [0] * size, [0] * size, [0] * size, [0] * size
    s_I, s_W, s_t = [0.0] * size, [0.0] * size, [0] * size
    interval_of = grid.interval_of
    wall = clock == "wall"
    deadline = None if config.time_limit is None else time.monotonic() + config.time_limit

    def record(k: int, before: float, after: float, ops: int, ns: int) -> MoveKind:
        kind = classify_move(before, after, 1e-9 * abs(before))
        if collect and k is not None:
            cell = k * n + interval_of(before) - 1
            c_it[cell] += 1
            if kind is MoveKind.IMPROVE:
                c_I[cell] += 1
                s_I[cell] += before - after
            elif kind is MoveKind.WORSEN:
                c_W[cell] += 1
                s_W[cell] += after - before
            else:
                c_SN[cell] += 1
            s_t[cell] += ns if wall else ops * NS_PER_OP
        return kind

    best = current
    initial_cost = current.cost
    iters = restarts = 0
    budget, la_list, it_wi = config.budget, config.la_list, config.it_wi
    trace = []
    while iters < budget:
        memory = [current.cost] * la_list
        idle = 0
        v = 0
        while idle < it_wi and iters < budget:
            k = _draw(cum, rng)
            before = current.cost
            t0 = time.perf_counter_ns() if wall else 0
            cand, ops = moves[k](inst, current, rng)
            ns = time.perf_counter_ns() - t0 if wall else 0
            after = before if cand is None else cand.cost
            kind = record(k, before, after, ops, ns)
            iters += 1
            if cand is not None and (after <= memory[v] or after <= before):
                current = cand
            idle = 0 if kind is MoveKind.IMPROVE else idle + 1
            memory[v] = current.cost
            v = v + 1 if v + 1 < la_list else 0
            if current.cost < best.cost:
                best = current
            if debug and iters % 1000 == 0:
                current.check(inst)
            if deadline is not None and time.monotonic() >= deadline:
                budget = iters
        trace.append((iters, best.cost))
        if iters >= budget:
            break
        # ILS perturbation of the best solution, restart the inner search
        t0 = time.perf_counter_ns() if wall else 0
        cand, ops = PERTURBATION(inst, best, rng)
        ns = time.perf_counter_ns() - t0 if wall else 0
        record(perturb_k, best.cost, best.cost if cand is None else cand.cost, ops, ns)
        iters += 1
        current = cand if cand is not None else best
        if current.cost < best.cost:
            best = current
        restarts += 1
    if debug:
        best.check(inst)

    def arr(xs, dtype):
        return np.asarray(xs, dtype=dtype).reshape(m, n)

    log = RunLog(
        inst.instance_id, grid, tuple(nb.nid for nb in roster),
        arr(c_it, np.int64), arr(c_I, np.int64), arr(c_SN, np.int64), arr(c_W, np.int64),
        arr(s_I, np.float64), arr(s_W, np.float64), arr(s_t, np.int64), run_count=1,
    )
    return RunResult(best, log, initial_cost, iters, restarts, trace)


def reference_lower_bound(inst: RoutingInstance, budget: int = 200_000, seeds: Sequence[int] = (0, 1, 2)) -> float:
    """Best cost from long identical-weight runs; stands in for a true bound."""
    m = len(build_roster())
    best = math.inf
    for s in seeds:
        cfg = SearchConfig([1.0] * m, la_list=100, it_wi=5000, budget=budget, seed=s)
        best = min(best, lahc_run(inst, cfg, collect=False).best.cost)
    return best
