"""Capacitated routing instances and solutions.

Node 0 is the depot, customers are nodes ``1..n``.  Instance files are
plain text: the first non-comment line holds the vehicle capacity, then
one ``id x y demand`` line per node, where the row with id ``0`` is the
depot (demand 0).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class InstanceError(ValueError):
    pass


@dataclass(eq=False)
class RoutingInstance:
    instance_id: str
    capacity: float
    depot: tuple[float, float]
    coords: np.ndarray  # (n, 2) customer coordinates
    demands: np.ndarray  # (n,)
    dist: list = field(init=False, repr=False)
    demand: list = field(init=False, repr=False)
    near: list = field(init=False, repr=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        self.demands = np.asarray(self.demands, dtype=float).ravel()
        self.capacity = float(self.capacity)
        n = len(self.coords)
        if n < 2:
            raise InstanceError("an instance needs at least 2 customers")
        if len(self.demands) != n:
            raise InstanceError("one demand per customer required")
        if self.capacity <= 0 or np.any(self.demands <= 0):
            raise InstanceError("capacity and demands must be positive")
        if np.any(self.demands > self.capacity):
            raise InstanceError("every demand must fit in one vehicle")
        pts = np.vstack([np.asarray(self.depot, dtype=float), self.coords])
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        # plain lists: scalar indexing is much faster than numpy in the move loop
        self.dist = d.tolist()
        self.demand = [0.0] + self.demands.tolist()
        order = np.argsort(d[1:, 1:], axis=1, kind="stable") + 1
        self.near = [[0]] + [[int(c) for c in row if c != i + 1] for i, row in enumerate(order)]

    @property
    def n_customers(self) -> int:
        return len(self.coords)

    def route_cost(self, route) -> float:
        d = self.dist
        prev, total = 0, 0.0
        for c in route:
            total += d[prev][c]
            prev = c
        return total + d[prev][0]


def generate_instance(n_customers: int, capacity: float, seed: int, instance_id: str | None = None) -> RoutingInstance:
    """Uniform customers in the unit square, depot at the centre, integer
    demands uniform in ``[1, capacity / 3]``."""
    rng = np.random.default_rng(seed)
    coords = rng.random((n_customers, 2))
    hi = max(1, int(capacity // 3))
    demands = rng.integers(1, hi + 1, size=n_customers)
    return RoutingInstance(instance_id or f"rand{n_customers}_{seed}", capacity, (0.5, 0.5), coords, demands)


def read_instance(path, instance_id: str | None = None) -> RoutingInstance:
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise InstanceError(f"{path}: empty instance file")
    try:
        capacity = float(lines[0])
        rows = [ln.split() for ln in lines[1:]]
        nodes = {}
        for r in rows:
            if len(r) != 4:
                raise InstanceError(f"{path}: expected 'id x y demand', got {' '.join(r)!r}")
            nid = int(r[0])
            if nid in nodes:
                raise InstanceError(f"{path}: duplicate node id {nid}")
            nodes[nid] = (float(r[1]), float(r[2]), float(r[3]))
    except ValueError as exc:
        raise InstanceError(f"{path}: {exc}") from exc
    if sorted(nodes) != list(range(len(nodes))):
        raise InstanceError(f"{path}: node ids must be 0..n with 0 the depot")
    dx, dy, dd = nodes[0]
    if dd != 0:
        raise InstanceError(f"{path}: depot demand must be 0")
    cust = [nodes[i] for i in range(1, len(nodes))]
    return RoutingInstance(
        instance_id or path.stem, capacity, (dx, dy),
        [(x, y) for x, y, _ in cust], [q for _, _, q in cust],
    )


def write_instance(inst: RoutingInstance, path) -> None:
    out = [f"# instance {inst.instance_id}", f"{inst.capacity:.17g}"]
    out.append(f"0 {inst.depot[0]:.17g} {inst.depot[1]:.17g} 0")
    for i, ((x, y), q) in enumerate(zip(inst.coords, inst.demands), start=1):
        out.append(f"{i} {x:.17g} {y:.17g} {q:.17g}")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def read_lower_bound(instance_path) -> float | None:
    """Cached reference lower bound stored next to the instance as ``<stem>.lb``."""
    p = Path(instance_path).with_suffix(".lb")
    if not p.exists():
        return None
    for ln in p.read_text(encoding="utf-8").splitlines():
        ln = ln.strip()
        if ln and not ln.startswith("#"):
            return float(ln)
    return None


def write_lower_bound(instance_path, value: float, note: str = "") -> None:
    p = Path(instance_path).with_suffix(".lb")
    head = f"# {note}\n" if note else ""
    p.write_text(f"{head}{value:.17g}\n", encoding="utf-8")


class Solution:
    """Routes with cached per-route loads and costs.

    Treated as a value: neighborhoods build new solutions instead of
    mutating their input.
    """

    __slots__ = ("routes", "loads", "costs", "cost")

    def __init__(self, routes, loads, costs, cost=None):
        self.routes = routes
        self.loads = loads
        self.costs = costs
        self.cost = math.fsum(costs) if cost is None else cost

    @classmethod
    def from_routes(cls, inst: RoutingInstance, routes) -> "Solution":
        routes = [list(r) for r in routes if r]
        loads = [sum(inst.demand[c] for c in r) for r in routes]
        costs = [inst.route_cost(r) for r in routes]
        return cls(routes, loads, costs)

    def copy(self) -> "Solution":
        return Solution([r[:] for r in self.routes], self.loads[:], self.costs[:], self.cost)

    def recomputed_cost(self, inst: RoutingInstance) -> float:
        return math.fsum(inst.route_cost(r) for r in self.routes)

    def check(self, inst: RoutingInstance, rel_tol: float = 1e-6) -> None:
        """Full revalidation; raises AssertionError on any violation."""
        seen = sorted(itertools.chain.from_iterable(self.routes))
        assert seen == list(range(1, inst.n_customers + 1)), "every customer exactly once"
        for r, load in zip(self.routes, self.loads):
            assert r, "no empty routes"
            true_load = sum(inst.demand[c] for c in r)
            assert abs(true_load - load) <= 1e-9 * max(1.0, true_load), "cached load"
            assert true_load <= inst.capacity + 1e-9, "capacity"
        true = self.recomputed_cost(inst)
        assert abs(true - self.cost) <= rel_tol * max(true, 1e-12), f"cached cost {self.cost} vs {true}"

    def __repr__(self):
        return f"Solution(cost={self.cost:.6g}, routes={self.routes})"


def initial_solution(inst: RoutingInstance) -> Solution:
    """One out-and-back route per customer."""
    return Solution.from_routes(inst, [[c] for c in range(1, inst.n_customers + 1)])


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def brute_force_optimum(inst: RoutingInstance) -> float:
    """Exact optimum by enumerating route partitions and orderings.

    Only meant for tiny instances (n <= 7 or so).
    """
    customers = list(range(1, inst.n_customers + 1))
    best_route: dict[tuple, float] = {}

    def route_best(block):
        key = tuple(sorted(block))
        if key not in best_route:
            best_route[key] = min(inst.route_cost(p) for p in itertools.permutations(key))
        return best_route[key]

    best = math.inf
    for part in _set_partitions(customers):
        if any(sum(inst.demand[c] for c in b) > inst.capacity for b in part):
            continue
        best = min(best, sum(route_best(b) for b in part))
    return best
