"""Configuration spaces and a seeded random-search tuner.

A *basic* space has one weight per neighborhood, a *clustered* space one
weight per behaviour cluster shared by its members.  Both carry the same
two integer parameters of the local search (late-acceptance list length
and idle-iteration limit).  Configurations are scored by the mean
optimality gap over a fixed set of (instance, seed) runs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .searchlab import RoutingInstance, SearchConfig, build_roster, lahc_run

LA_LIST_RANGE = (1, 5000)
IT_WI_RANGE = (100, 50000)
DEFAULT_LA_LIST = 50
DEFAULT_IT_WI = 2000


def optimality_gap(cost: float, lower_bound: float) -> float:
    if not lower_bound > 0:
        raise ValueError(f"lower bound must be positive, got {lower_bound}")
    return 100.0 * (cost - lower_bound) / lower_bound


@dataclass(frozen=True)
class ConfigSpace:
    groups: tuple[tuple[int, ...], ...]
    n_neighborhoods: int
    la_list_range: tuple[int, int] = LA_LIST_RANGE
    it_wi_range: tuple[int, int] = IT_WI_RANGE
    mode: str = "basic"

    def __post_init__(self):
        members = sorted(k for g in self.groups for k in g)
        if members != list(range(self.n_neighborhoods)) or any(not g for g in self.groups):
            raise ValueError("groups must partition the neighborhoods")
        for lo, hi in (self.la_list_range, self.it_wi_range):
            if not 1 <= lo <= hi:
                raise ValueError(f"bad integer range ({lo}, {hi})")

    @property
    def n_weights(self) -> int:
        return len(self.groups)

    @property
    def n_parameters(self) -> int:
        return self.n_weights + 2

    def expand(self, group_weights: Sequence[float]) -> np.ndarray:
        """Per-neighborhood weights (normalised) from one value per group."""
        w = np.zeros(self.n_neighborhoods)
        for g, gw in zip(self.groups, group_weights):
            w[list(g)] = gw
        return w / w.sum()


def build_space(
    mode: str,
    n_neighborhoods: int,
    clusters: Sequence[int] | None = None,
    la_list_range: tuple[int, int] = LA_LIST_RANGE,
    it_wi_range: tuple[int, int] = IT_WI_RANGE,
) -> ConfigSpace:
    """``clusters[k]`` is the cluster label of neighborhood ``k`` (clustered mode)."""
    if mode == "basic":
        groups = tuple((k,) for k in range(n_neighborhoods))
    elif mode == "clustered":
        if clusters is None or len(clusters) != n_neighborhoods:
            raise ValueError("clustered mode needs one cluster label per neighborhood")
        labels = list(clusters)
        order = list(dict.fromkeys(labels))
        groups = tuple(tuple(k for k, c in enumerate(labels) if c == lab) for lab in order)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ConfigSpace(groups, n_neighborhoods, tuple(la_list_range), tuple(it_wi_range), mode)


def _log_uniform_int(rng: np.random.Generator, lo: int, hi: int) -> int:
    x = math.exp(rng.uniform(math.log(lo), math.log(hi + 1)))
    return int(min(max(math.floor(x), lo), hi))


def sample_config(space: ConfigSpace, rng: np.random.Generator, budget: int = 10_000, seed: int = 0) -> SearchConfig:
    while True:
        gw = rng.uniform(0.0, 1.0, size=space.n_weights)
        if gw.sum() > 0:
            break
    la = _log_uniform_int(rng, *space.la_list_range)
    it = _log_uniform_int(rng, *space.it_wi_range)
    return SearchConfig(space.expand(gw), la_list=la, it_wi=it, budget=budget, seed=seed)


def identical_weights(config: SearchConfig) -> SearchConfig:
    m = len(config.weights)
    return replace(config, weights=[1.0 / m] * m)


def default_config(n_neighborhoods: int, budget: int = 10_000) -> SearchConfig:
    return SearchConfig([1.0] * n_neighborhoods, DEFAULT_LA_LIST, DEFAULT_IT_WI, budget=budget)


@dataclass
class TuneInstance:
    instance: RoutingInstance
    lower_bound: float


def derive_seeds(seed: int, stream: int, count: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence([seed, stream]).generate_state(count)]


def _run_gap(job):
    inst, lb, cfg, roster_dup = job
    res = lahc_run(inst, cfg, roster=build_roster(roster_dup), collect=False)
    return res.best.cost, optimality_gap(res.best.cost, lb)


def _map(jobs, n_jobs):
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            return list(ex.map(_run_gap, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))
    return [_run_gap(j) for j in jobs]


def evaluate(
    config: SearchConfig,
    instances: Sequence[TuneInstance],
    seeds: Sequence[int],
    duplicate_swap: bool = False,
    n_jobs: int = 1,
) -> list[tuple[str, int, float, float]]:
    """Run ``config`` once per (instance, seed); rows of (instance, seed, cost, gap)."""
    keys = [(ti, s) for ti in instances for s in seeds]
    jobs = [(ti.instance, ti.lower_bound, replace(config, seed=s), duplicate_swap) for ti, s in keys]
    out = _map(jobs, n_jobs)
    return [(ti.instance.instance_id, s, c, g) for (ti, s), (c, g) in zip(keys, out)]


@dataclass
class TuneResult:
    best: SearchConfig
    best_index: int
    train_mean: float
    train_means: list[float]
    train_rows: list = field(repr=False)  # (config index, instance, seed, cost, gap)
    eval_mean: float
    eval_rows: list = field(repr=False)  # (instance, seed, cost, gap)
    configs: list = field(repr=False)


def random_search(
    space: ConfigSpace,
    instances: Sequence[TuneInstance],
    budget: int,
    seed: int,
    *,
    run_budget: int = 3000,
    runs_per_instance: int = 1,
    eval_runs: int = 5,
    train_seeds: Sequence[int] | None = None,
    eval_seeds: Sequence[int] | None = None,
    duplicate_swap: bool = False,
    n_jobs: int = 1,
) -> TuneResult:
    """Seeded random search with ``budget`` algorithm runs.

    Each sampled configuration costs ``len(instances) * runs_per_instance``
    runs on a fixed set of training seeds shared by all configurations.
    The winner (lowest training mean gap, first on ties) is re-run on
    ``eval_runs`` disjoint seeds per instance.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if not instances:
        raise ValueError("no tuning instances")
    train_seeds = list(train_seeds) if train_seeds is not None else derive_seeds(seed, 1, runs_per_instance)
    eval_seeds = list(eval_seeds) if eval_seeds is not None else derive_seeds(seed, 2, eval_runs)
    if set(train_seeds) & set(eval_seeds):
        raise ValueError("training and evaluation seeds must be disjoint")
    per_config = len(instances) * len(train_seeds)
    n_configs = max(1, budget // per_config)
    rng = np.random.default_rng([seed, 3])
    configs = [sample_config(space, rng, budget=run_budget) for _ in range(n_configs)]

    keys = [(c, ti, s) for c in range(n_configs) for ti in instances for s in train_seeds]
    jobs = [(ti.instance, ti.lower_bound, replace(configs[c], seed=s), duplicate_swap) for c, ti, s in keys]
    out = _map(jobs, n_jobs)
    rows = [(c, ti.instance.instance_id, s, cost, gap) for (c, ti, s), (cost, gap) in zip(keys, out)]
    gaps = np.array([r[4] for r in rows]).reshape(n_configs, per_config)
    means = gaps.mean(axis=1)
    best = int(np.argmin(means))
    eval_rows = evaluate(configs[best], instances, eval_seeds, duplicate_swap, n_jobs)
    return TuneResult(
        configs[best], best, float(means[best]), means.tolist(), rows,
        float(np.mean([r[3] for r in eval_rows])), eval_rows, configs,
    )


@dataclass(frozen=True)
class PairedTest:
    mean_difference: float
    t_statistic: float
    p_value: float
    n: int
    degenerate: bool = False


def paired_compare(a: Sequence[float], b: Sequence[float]) -> PairedTest:
    """Two-sided paired t-test of ``a - b``.

    Zero-variance differences are flagged ``degenerate``: identical vectors
    give t = 0 and p = 1, a constant nonzero shift gives t = +/-inf, p = 0.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired vectors must have equal length")
    if len(a) < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    md = float(d.mean())
    if np.all(d == d[0]):
        if md == 0:
            return PairedTest(0.0, 0.0, 1.0, len(d), degenerate=True)
        return PairedTest(md, math.copysign(math.inf, md), 0.0, len(d), degenerate=True)
    res = stats.ttest_rel(a, b)
    return PairedTest(md, float(res.statistic), float(res.pvalue), len(d))


SERIES = ("basic", "clustered", "basic_identical", "clustered_identical")


@dataclass
class Comparison:
    """Per-trial evaluation means of the four tuned series plus the default."""

    trials: list[dict]
    default_mean: float
    eval_seeds: list[int]
    tests: dict[str, PairedTest]
    space_sizes: dict[str, int]
    gap_rows: list = field(repr=False)

    def series(self, name: str) -> np.ndarray:
        return np.array([t[name] for t in self.trials])


def compare_spaces(
    instances: Sequence[TuneInstance],
    clusters: Sequence[int],
    n_trials: int,
    budget: int,
    seed: int,
    *,
    run_budget: int = 3000,
    runs_per_instance: int = 1,
    eval_runs: int = 5,
    duplicate_swap: bool = False,
    n_jobs: int = 1,
) -> Comparison:
    """Tune the basic and clustered spaces with paired seeds for each trial.

    Every trial uses the same training and evaluation seeds for both
    spaces; the identical-weight versions of both winners and the default
    configuration are evaluated on the same evaluation seeds.
    """
    m = len(clusters)
    spaces = {"basic": build_space("basic", m), "clustered": build_space("clustered", m, clusters)}
    eval_seeds = derive_seeds(seed, 2, eval_runs)
    trials, rows = [], []
    for t in range(n_trials):
        tseed = derive_seeds(seed, 100 + t, 1)[0]
        train_seeds = derive_seeds(tseed, 1, runs_per_instance)
        rec = {"trial": t + 1, "seed": tseed}
        for name, space in spaces.items():
            res = random_search(
                space, instances, budget, tseed, run_budget=run_budget, train_seeds=train_seeds,
                eval_seeds=eval_seeds, duplicate_swap=duplicate_swap, n_jobs=n_jobs,
            )
            sr = evaluate(identical_weights(res.best), instances, eval_seeds, duplicate_swap, n_jobs)
            rec[name] = res.eval_mean
            rec[f"{name}_identical"] = float(np.mean([r[3] for r in sr]))
            rec[f"{name}_train"] = res.train_mean
            rec[f"{name}_config"] = res.best
            rows += [(t + 1, name, *r) for r in res.eval_rows]
            rows += [(t + 1, f"{name}_identical", *r) for r in sr]
        trials.append(rec)
    dflt = evaluate(default_config(m, run_budget), instances, eval_seeds, duplicate_swap, n_jobs)
    rows += [(0, "default", *r) for r in dflt]
    comp = Comparison(trials, float(np.mean([r[3] for r in dflt])), eval_seeds, {},
                      {k: s.n_parameters for k, s in spaces.items()}, rows)
    if n_trials >= 2:
        comp.tests["clustered_vs_basic"] = paired_compare(comp.series("clustered"), comp.series("basic"))
        comp.tests["basic_vs_identical"] = paired_compare(comp.series("basic"), comp.series("basic_identical"))
        comp.tests["clustered_vs_identical"] = paired_compare(
            comp.series("clustered"), comp.series("clustered_identical")
        )
    return comp
