"""Move operators for the routing search.

Every operator takes ``(inst, sol, rng)`` and returns ``(candidate, ops)``
where ``candidate`` is a new feasible :class:`Solution` (``None`` when no
feasible move was found within the retry limit) and ``ops`` counts the
elementary evaluations performed, used as a deterministic cost model for
operator running time.  Operators never mutate their input solution; route
lists are shared between solutions and must be treated as immutable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .instance import RoutingInstance, Solution

MAX_RETRIES = 10
_CAP_EPS = 1e-9


def _locate(sol: Solution) -> dict[int, tuple[int, int]]:
    return {c: (ri, pos) for ri, r in enumerate(sol.routes) for pos, c in enumerate(r)}


def _rebuild(inst: RoutingInstance, sol: Solution, changed: dict[int, list], added=()) -> Solution:
    """New solution with routes ``changed`` replaced and ``added`` appended;
    emptied routes are dropped."""
    routes, loads, costs = [], [], []
    for ri, r in enumerate(sol.routes):
        if ri in changed:
            r = changed[ri]
            if not r:
                continue
            routes.append(r)
            loads.append(sum(inst.demand[c] for c in r))
            costs.append(inst.route_cost(r))
        else:
            routes.append(r)
            loads.append(sol.loads[ri])
            costs.append(sol.costs[ri])
    for r in added:
        if r:
            routes.append(r)
            loads.append(sum(inst.demand[c] for c in r))
            costs.append(inst.route_cost(r))
    return Solution(routes, loads, costs)


def _without(inst: RoutingInstance, sol: Solution, customers) -> tuple[list, list]:
    """Routes and loads with ``customers`` removed (empty routes dropped)."""
    drop = set(customers)
    routes, loads = [], []
    for ri, r in enumerate(sol.routes):
        if drop.isdisjoint(r):
            routes.append(r)
            loads.append(sol.loads[ri])
        else:
            nr = [c for c in r if c not in drop]
            if nr:
                routes.append(nr)
                loads.append(sum(inst.demand[c] for c in nr))
    return routes, loads


def _insert_cheapest(inst: RoutingInstance, routes: list, loads: list, c: int, new_route: str = "cheaper") -> int:
    """Insert ``c`` at its cheapest feasible position, in place on the
    working lists.  ``new_route`` is ``"cheaper"`` (open a route only when
    strictly cheaper) or ``"fallback"`` (only when nothing fits)."""
    d = inst.dist
    q = inst.demand[c]
    cap = inst.capacity + _CAP_EPS
    dc = d[c]
    best, best_r, best_p = math.inf, -1, -1
    ops = 0
    for ri, r in enumerate(routes):
        if loads[ri] + q > cap:
            continue
        prev = 0
        dp = d[0]
        for pos, nxt in enumerate(r):
            delta = dp[c] + dc[nxt] - dp[nxt]
            if delta < best:
                best, best_r, best_p = delta, ri, pos
            prev = nxt
            dp = d[prev]
        delta = dp[c] + dc[0] - dp[0]
        if delta < best:
            best, best_r, best_p = delta, ri, len(r)
        ops += len(r) + 1
    if best_r < 0 or (new_route == "cheaper" and 2.0 * d[0][c] < best):
        routes.append([c])
        loads.append(q)
    else:
        r = routes[best_r]
        routes[best_r] = r[:best_p] + [c] + r[best_p:]
        loads[best_r] += q
    return ops + 1


def _reinsert(inst: RoutingInstance, routes: list, loads: list, customers, new_route: str = "cheaper") -> tuple[Solution, int]:
    ops = 0
    for c in customers:
        ops += _insert_cheapest(inst, routes, loads, c, new_route)
    costs = [inst.route_cost(r) for r in routes]
    ops += sum(len(r) + 1 for r in routes)
    return Solution(routes, loads, costs), ops


def cheapest_insertion(size: int) -> Callable:
    def move(inst: RoutingInstance, sol: Solution, rng) -> tuple[Solution | None, int]:
        n = inst.n_customers
        removed = rng.sample(range(1, n + 1), min(size, n))
        routes, loads = _without(inst, sol, removed)
        return _reinsert(inst, routes, loads, removed)

    return move


def ruin_recreate(size: int) -> Callable:
    """Remove a random customer and its ``size - 1`` nearest customers, then
    reinsert them in random order."""

    def move(inst: RoutingInstance, sol: Solution, rng) -> tuple[Solution | None, int]:
        n = inst.n_customers
        seed = rng.randint(1, n)
        removed = [seed] + inst.near[seed][: min(size, n) - 1]
        rng.shuffle(removed)
        routes, loads = _without(inst, sol, removed)
        return _reinsert(inst, routes, loads, removed)

    return move


def swap(inst: RoutingInstance, sol: Solution, rng) -> tuple[Solution | None, int]:
    n = inst.n_customers
    loc = _locate(sol)
    cap = inst.capacity + _CAP_EPS
    ops = n
    for _ in range(MAX_RETRIES):
        a, b = rng.sample(range(1, n + 1), 2)
        (ra, pa), (rb, pb) = loc[a], loc[b]
        ops += 1
        if ra == rb:
            r = sol.routes[ra][:]
            r[pa], r[pb] = b, a
            return _rebuild(inst, sol, {ra: r}), ops + len(r)
        qa, qb = inst.demand[a], inst.demand[b]
        if sol.loads[ra] - qa + qb > cap or sol.loads[rb] - qb + qa > cap:
            continue
        A, B = sol.routes[ra][:], sol.routes[rb][:]
        A[pa], B[pb] = b, a
        return _rebuild(inst, sol, {ra: A, rb: B}), ops + len(A) + len(B)
    return None, ops


def relocate(inst: RoutingInstance, sol: Solution, rng) -> tuple[Solution | None, int]:
    n = inst.n_customers
    loc = _locate(sol)
    cap = inst.capacity + _CAP_EPS
    ops = n
    for _ in range(MAX_RETRIES):
        c = rng.randint(1, n)
        ra, pa = loc[c]
        rt = rng.randrange(len(sol.routes))
        ops += 1
        src = sol.routes[ra][:pa] + sol.routes[ra][pa + 1:]
        if rt == ra:
            if not src:
                continue
            pos = rng.randint(0, len(src))
            r = src[:pos] + [c] + src[pos:]
            return _rebuild(inst, sol, {ra: r}), ops + len(r)
        if sol.loads[rt] + inst.demand[c] > cap:
            continue
        dst = sol.routes[rt]
        pos = rng.randint(0, len(dst))
        dst = dst[:pos] + [c] + dst[pos:]
        return _rebuild(inst, sol, {ra: src, rt: dst}), ops + len(src) + len(dst)
    return None, ops


def intra_route_two_opt(inst: RoutingInstance, sol: Solution, rng) -> tuple[Solution | None, int]:
    eligible = [ri for ri, r in enumerate(sol.routes) if len(r) >= 2]
    if not eligible:
        return None, 1
    ri = eligible[rng.randrange(len(eligible))]
    r = sol.routes[ri]
    i, j = sorted(rng.sample(range(len(r)), 2))
    nr = r[:i] + r[i:j + 1][::-1] + r[j + 1:]
    return _rebuild(inst, sol, {ri: nr}), len(r) + 1


def inter_route_two_opt(inst: RoutingInstance, sol: Solution, rng) -> tuple[Solution | None, int]:
    """Exchange the tails of two routes (2-opt*)."""
    if len(sol.routes) < 2:
        return None, 1
    cap = inst.capacity + _CAP_EPS
    ops = 0
    for _ in range(MAX_RETRIES):
        ra, rb = rng.sample(range(len(sol.routes)), 2)
        A, B = sol.routes[ra], sol.routes[rb]
        i, j = rng.randint(0, len(A)), rng.randint(0, len(B))
        ops += 1
        if (i == 0 and j == 0) or (i == len(A) and j == len(B)):
            continue
        nA, nB = A[:i] + B[j:], B[:j] + A[i:]
        ops += len(A) + len(B)
        if sum(inst.demand[c] for c in nA) > cap or sum(inst.demand[c] for c in nB) > cap:
            continue
        return _rebuild(inst, sol, {ra: nA, rb: nB}), ops
    return None, ops


def remove_route(inst: RoutingInstance, sol: Solution, rng) -> tuple[Solution | None, int]:
    """Dissolve a random route and insert its customers into the others,
    opening a new route only when a customer fits nowhere."""
    if len(sol.routes) < 2:
        return None, 1
    ri = rng.randrange(len(sol.routes))
    customers = sol.routes[ri][:]
    rng.shuffle(customers)
    routes = [r for k, r in enumerate(sol.routes) if k != ri]
    loads = [q for k, q in enumerate(sol.loads) if k != ri]
    return _reinsert(inst, routes, loads, customers, new_route="fallback")


@dataclass(frozen=True)
class Neighborhood:
    nid: str
    kind: str
    move: Callable

    def __call__(self, inst: RoutingInstance, sol: Solution, rng):
        return self.move(inst, sol, rng)


def build_roster(duplicate_swap: bool = False) -> list[Neighborhood]:
    """The ten-operator roster; ``duplicate_swap`` appends a second, identical
    swap operator under its own id."""
    roster = [Neighborhood(f"cheapest-insertion-{s}", "cheapest-insertion", cheapest_insertion(s)) for s in (1, 2, 5, 10)]
    roster += [
        Neighborhood("swap", "swap", swap),
        Neighborhood("relocate", "relocate", relocate),
        Neighborhood("intra-route-two-opt", "intra-route-two-opt", intra_route_two_opt),
        Neighborhood("inter-route-two-opt", "inter-route-two-opt", inter_route_two_opt),
        Neighborhood("remove-route", "remove-route", remove_route),
        Neighborhood("ruin-recreate-3", "ruin-recreate", ruin_recreate(3)),
    ]
    if duplicate_swap:
        roster.append(Neighborhood("swap-b", "swap", swap))
    return roster


PERTURBATION = Neighborhood("ruin-recreate-3", "ruin-recreate", ruin_recreate(3))


def apply_neighborhood(inst: RoutingInstance, nid: str, sol: Solution, rng, roster=None) -> Solution | None:
    """Apply the operator named ``nid``; ``None`` means no feasible move."""
    for nb in roster or build_roster(duplicate_swap=True):
        if nb.nid == nid:
            return nb(inst, sol, rng)[0]
    raise KeyError(f"unknown neighborhood {nid!r}")
