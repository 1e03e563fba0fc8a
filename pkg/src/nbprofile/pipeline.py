"""Pipeline stages behind the command line: collect, analyze, plot, tune.

Configuration is an INI file with one section per stage::

    [general]
    seed = 0
    out = results
    jobs = 1

    [collect]
    instances = builtin          # or comma-separated instance paths
    configurations = 2
    runs = 5
    budget = 12000
    n_intervals = 1000
    decay = 0.99
    duplicate_swap = true

    [analyze]
    n_frames = 5
    k_min = 2
    k_max = 12
    cluster_seeds = 0, 1, 2
    standardize = true

    [tune]
    trials = 10
    budget = 200
    run_budget = 3000
    eval_runs = 5

Every file written embeds the seed and a hash of the effective
configuration in ``#`` comment lines.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import aggregate, cluster, features, frames, runlog, tune
from .searchlab import (
    RoutingInstance,
    SearchConfig,
    build_roster,
    initial_solution,
    lahc_run,
    read_instance,
    read_lower_bound,
    reference_lower_bound,
    write_lower_bound,
)

log = logging.getLogger(__name__)

BUILTIN = "builtin"


class ConfigError(ValueError):
    """Invalid or inconsistent pipeline configuration (usage error)."""


class PipelineError(RuntimeError):
    """A data problem in one pipeline stage; the message names the stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    seed: int = 0
    out: Path = Path("results")
    jobs: int = 1
    # collect
    instances: tuple[str, ...] = (BUILTIN,)
    configurations: int = 2
    runs: int = 5
    budget: int = 12_000
    n_intervals: int = 1000
    decay: float = 0.99
    duplicate_swap: bool = True
    clock: str = "model"
    # analyze
    n_frames: int = 5
    k_min: int = 2
    k_max: int = 12
    cluster_seeds: tuple[int, ...] = (0, 1, 2)
    standardize: bool = True
    scree_threshold: float = 0.2
    n_init: int = 10
    # plot
    bucket: int = 10
    # tune
    trials: int = 10
    tune_budget: int = 200
    run_budget: int = 3000
    eval_runs: int = 5
    runs_per_instance: int = 1
    config_path: Path | None = field(default=None, compare=False)

    def validate(self) -> None:
        if self.runs < 1:
            raise ConfigError("collect.runs must be >= 1")
        if self.configurations < 1:
            raise ConfigError("collect.configurations must be >= 1")
        if self.budget < 1 or self.run_budget < 1 or self.tune_budget < 1:
            raise ConfigError("budgets must be positive")
        if self.n_intervals < 1 or not 0 < self.decay <= 1:
            raise ConfigError("need n_intervals >= 1 and decay in (0, 1]")
        if self.n_frames < 1:
            raise ConfigError("analyze.n_frames must be >= 1")
        if self.k_min < 1 or self.k_max < self.k_min:
            raise ConfigError("need 1 <= k_min <= k_max")
        if not self.cluster_seeds:
            raise ConfigError("analyze.cluster_seeds must not be empty")
        if self.clock not in ("model", "wall"):
            raise ConfigError("collect.clock must be 'model' or 'wall'")
        if self.bucket < 1 or self.trials < 1 or self.eval_runs < 1 or self.runs_per_instance < 1:
            raise ConfigError("plot/tune counts must be >= 1")
        for p in self.instance_paths():
            if not p.exists():
                raise ConfigError(f"instance file {p} does not exist")

    def instance_paths(self) -> list[Path]:
        paths = []
        for item in self.instances:
            if item == BUILTIN:
                paths += builtin_instances()
            else:
                p = Path(item)
                if not p.is_absolute() and self.config_path is not None:
                    p = self.config_path.parent / p
                paths.append(p)
        return paths

    def canonical(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("config_path")
        d["out"] = str(self.out)
        d["instances"] = [str(p.name) if self.instances == (BUILTIN,) else str(p) for p in self.instance_paths()]
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def stamp(self, command: str) -> list[str]:
        return [f"nbprofile {command}", f"seed={self.seed} config={self.digest()}"]


_KEYS = {
    "general": {"seed": int, "out": Path, "jobs": int},
    "collect": {
        "instances": "list", "configurations": int, "runs": int, "budget": int,
        "n_intervals": int, "decay": float, "duplicate_swap": bool, "clock": str,
    },
    "analyze": {
        "n_frames": int, "k_min": int, "k_max": int, "cluster_seeds": "intlist",
        "standardize": bool, "scree_threshold": float, "n_init": int,
    },
    "plot": {"bucket": int},
    "tune": {"trials": int, "budget": int, "run_budget": int, "eval_runs": int, "runs_per_instance": int},
}
_FIELD = {("tune", "budget"): "tune_budget"}


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read an INI config (``None`` means the bundled demo config) and apply
    keyword overrides given as field names."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is None:
        cp.read_string(resources.files("nbprofile").joinpath("data/demo.ini").read_text(encoding="utf-8"))
        cfg = PipelineConfig()
    else:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            cp.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        cfg = PipelineConfig(config_path=path.resolve())
    for section in cp.sections():
        if section not in _KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in cp.items(section):
            kind = _KEYS[section].get(key)
            if kind is None:
                raise ConfigError(f"unknown key {section}.{key}")
            try:
                if kind == "list":
                    value = tuple(x.strip() for x in raw.split(",") if x.strip())
                elif kind == "intlist":
                    value = tuple(int(x) for x in raw.split(",") if x.strip())
                elif kind is bool:
                    value = cp.getboolean(section, key)
                else:
                    value = kind(raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from exc
            setattr(cfg, _FIELD.get((section, key), key), value)
    for key, value in overrides.items():
        if value is not None:
            if not hasattr(cfg, key):
                raise ConfigError(f"unknown override {key}")
            setattr(cfg, key, type(getattr(cfg, key))(value) if key != "out" else Path(value))
    cfg.validate()
    return cfg


def builtin_instances() -> list[Path]:
    root = resources.files("nbprofile").joinpath("data")
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".txt"))


def _comment_block(lines: Sequence[str]) -> str:
    return "".join(f"# {c}\n" for c in lines)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _fmt(x) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------- collect


def load_instances(cfg: PipelineConfig) -> list[tuple[RoutingInstance, float, Path]]:
    out = []
    for p in cfg.instance_paths():
        try:
            inst = read_instance(p)
        except (OSError, ValueError) as exc:
            raise PipelineError("collect", f"cannot load instance {p}: {exc}") from exc
        lb = read_lower_bound(p)
        if lb is None:
            log.info("no cached lower bound for %s, running reference search", p)
            lb = reference_lower_bound(inst)
            write_lower_bound(p, lb, "best cost of long reference runs")
        out.append((inst, lb, p))
    return out


def collection_configs(cfg: PipelineConfig, n_neighborhoods: int) -> list[SearchConfig]:
    """Configuration 1 is the identical-weight default, the others are drawn
    from the basic space."""
    configs = [tune.default_config(n_neighborhoods, cfg.budget)]
    space = tune.build_space("basic", n_neighborhoods)
    rng = np.random.default_rng([cfg.seed, 7])
    for _ in range(cfg.configurations - 1):
        configs.append(tune.sample_config(space, rng, budget=cfg.budget))
    return configs


def _collect_job(job):
    inst, grid, config, dup, clock = job
    return lahc_run(inst, config, grid, build_roster(dup), clock=clock).log


def collect(cfg: PipelineConfig) -> list[Path]:
    loaded = load_instances(cfg)
    roster = build_roster(cfg.duplicate_swap)
    configs = collection_configs(cfg, len(roster))
    jobs, keys = [], []
    for i, (inst, lb, _) in enumerate(loaded):
        ub = initial_solution(inst).cost
        if not ub > lb:
            raise PipelineError("collect", f"{inst.instance_id}: lower bound {lb} not below initial cost {ub}")
        grid = runlog.build_grid(runlog.QualityBounds(ub, lb), cfg.n_intervals, cfg.decay)
        for c, config in enumerate(configs):
            for r in range(cfg.runs):
                seed = tune.derive_seeds(cfg.seed, 1000 * i + c, cfg.runs)[r]
                jobs.append((inst, grid, dataclasses.replace(config, seed=seed), cfg.duplicate_swap, cfg.clock))
                keys.append(i)
    if cfg.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(cfg.jobs) as ex:
            logs = list(ex.map(_collect_job, jobs))
    else:
        logs = [_collect_job(j) for j in jobs]
    written = []
    header = cfg.stamp("collect") + [
        "configurations: " + "; ".join(
            f"la_list={c.la_list} it_wi={c.it_wi} weights=" + ",".join(f"{w:.6g}" for w in c.weights)
            for c in configs
        )
    ]
    for i, (inst, _, _) in enumerate(loaded):
        merged = runlog.merge_logs([lg for k, lg in zip(keys, logs) if k == i])
        path = cfg.out / "logs" / f"{inst.instance_id}.log"
        path.parent.mkdir(parents=True, exist_ok=True)
        runlog.write_log(merged, path, header)
        written.append(path)
    return written


# --------------------------------------------------------------------- analyze


@dataclass
class Analysis:
    logs: list[runlog.RunLog]
    specs: dict[str, frames.FrameSpec]
    ratios: dict[str, aggregate.FrameRatios]
    scores: dict[str, aggregate.FrameScores]
    raw: features.FeatureMatrix
    matrix: features.FeatureMatrix
    model: cluster.ClusterModel


def read_logs(cfg: PipelineConfig) -> list[runlog.RunLog]:
    paths = sorted((cfg.out / "logs").glob("*.log"))
    if not paths:
        raise PipelineError("analyze", f"no run logs under {cfg.out / 'logs'}; run collect first")
    out = []
    for p in paths:
        try:
            out.append(runlog.read_log(p))
        except (OSError, ValueError) as exc:
            raise PipelineError("analyze", f"{p}: {exc}") from exc
    return out


def analyze_logs(logs: Sequence[runlog.RunLog], cfg: PipelineConfig) -> Analysis:
    specs, ratios, scores, blocks = {}, {}, {}, []
    for lg in logs:
        iid = lg.instance_id
        try:
            A = frames.trim_empty_tail(lg.sum_n_iters())
            spec = frames.group_frames(A, cfg.n_frames)
        except frames.FrameError as exc:
            raise PipelineError("frames", f"{iid}: {exc}") from exc
        try:
            ratios[iid] = aggregate.frame_ratios(lg, spec)
            scores[iid] = aggregate.frame_scores(lg, spec)
        except ValueError as exc:
            raise PipelineError("aggregate", f"{iid}: {exc}") from exc
        specs[iid] = spec
        blocks.append((iid, lg.neighborhood_ids, ratios[iid], scores[iid]))
    try:
        raw = features.assemble(blocks)
        mat = features.standardize(raw) if cfg.standardize else raw
    except ValueError as exc:
        raise PipelineError("features", str(exc)) from exc
    n = mat.shape[0]
    k_hi = min(cfg.k_max, n - 1)
    k_lo = min(cfg.k_min, k_hi)
    try:
        model = cluster.select(
            mat.values, range(k_lo, k_hi + 1), cfg.cluster_seeds,
            threshold=cfg.scree_threshold, n_init=cfg.n_init,
        )
    except (ValueError, RuntimeError) as exc:
        raise PipelineError("cluster", str(exc)) from exc
    return Analysis(list(logs), specs, ratios, scores, raw, mat, model)


def analyze(cfg: PipelineConfig) -> Analysis:
    res = analyze_logs(read_logs(cfg), cfg)
    write_analysis(res, cfg)
    return res


def write_analysis(res: Analysis, cfg: PipelineConfig) -> list[Path]:
    d = cfg.out / "analysis"
    head = cfg.stamp("analyze")
    std_note = f"standardize={'on' if cfg.standardize else 'off'}"
    files = []
    text = _comment_block(head) + "instance\tframe_ends\n"
    text += "".join(f"{iid}\t{','.join(map(str, s.ends))}\n" for iid, s in res.specs.items())
    files.append(_write(d / "frames.tsv", text))
    files.append(_write(d / "features.tsv", res.raw.to_text(head + ["raw features"])))
    files.append(_write(d / "features_model.tsv", res.matrix.to_text(head + [f"clustering input, {std_note}"])))
    mask = io.StringIO()
    mask.write(_comment_block(head + ["1 marks an imputed cell"]))
    mask.write("neighborhood\t" + "\t".join(res.raw.labels) + "\n")
    for rid, row in zip(res.raw.row_ids, res.raw.missing):
        mask.write(rid + "\t" + "\t".join(str(int(v)) for v in row) + "\n")
    files.append(_write(d / "missing.tsv", mask.getvalue()))
    m = res.model
    post = m.resp.max(axis=1)
    text = _comment_block(head + [f"K={m.K} bic={_fmt(m.bic)} {std_note}"]) + "neighborhood\tcluster\tmax_posterior\n"
    text += "".join(f"{rid}\t{lab + 1}\t{_fmt(p)}\n" for rid, lab, p in zip(res.matrix.row_ids, m.labels, post))
    files.append(_write(d / "clusters.tsv", text))
    text = _comment_block(head + [std_note]) + "K\tbic\n"
    text += "".join(f"{k}\t{_fmt(v)}\n" for k, v in m.bic_trace.items())
    files.append(_write(d / "bic.tsv", text))
    return files


def read_clusters(path: Path) -> dict[str, int]:
    if not path.exists():
        raise PipelineError("tune", f"missing cluster report {path}; run analyze first")
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#") or line.startswith("neighborhood\t"):
            continue
        nid, lab, _ = line.split("\t")
        out[nid] = int(lab)
    return out


def read_frames(path: Path) -> dict[str, frames.FrameSpec]:
    out = {}
    if not path.exists():
        return out
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line or line.startswith("#") or line.startswith("instance\t"):
            continue
        iid, ends = line.split("\t")
        out[iid] = frames.FrameSpec(tuple(int(e) for e in ends.split(",")))
    return out


# --------------------------------------------------------------------- plot


def plot(cfg: PipelineConfig) -> list[Path]:
    from . import plots

    logs = read_logs(cfg)
    specs = read_frames(cfg.out / "analysis" / "frames.tsv")
    files = []
    d = cfg.out / "figures"
    head = cfg.stamp("plot")
    for lg in logs:
        spec = specs.get(lg.instance_id)
        if spec is None:
            try:
                A = frames.trim_empty_tail(lg.sum_n_iters())
                spec = frames.group_frames(A, cfg.n_frames)
            except frames.FrameError as exc:
                raise PipelineError("plot", f"{lg.instance_id}: {exc}") from exc
        files += plots.activity_figure(lg, spec, d, head)
    files += plots.observable_figures(logs, cfg.bucket, d, head)
    return files


# --------------------------------------------------------------------- tune


def run_tune(cfg: PipelineConfig) -> tune.Comparison:
    labels = read_clusters(cfg.out / "analysis" / "clusters.tsv")
    roster = build_roster(cfg.duplicate_swap)
    ids = [nb.nid for nb in roster]
    if sorted(labels) != sorted(ids):
        raise PipelineError("tune", "cluster report does not cover the configured neighborhood roster")
    clusters = [labels[i] for i in ids]
    inst = [tune.TuneInstance(i, lb) for i, lb, _ in load_instances(cfg)]
    comp = tune.compare_spaces(
        inst, clusters, cfg.trials, cfg.tune_budget, cfg.seed, run_budget=cfg.run_budget,
        runs_per_instance=cfg.runs_per_instance, eval_runs=cfg.eval_runs,
        duplicate_swap=cfg.duplicate_swap, n_jobs=cfg.jobs,
    )
    write_tune_report(comp, cfg)
    return comp


def format_tune_report(comp: tune.Comparison, head: Sequence[str]) -> str:
    out = io.StringIO()
    out.write(_comment_block(head))
    out.write(f"# parameters: basic={comp.space_sizes['basic']} clustered={comp.space_sizes['clustered']}\n")
    out.write("# evaluation seeds (shared by every series): " + ",".join(map(str, comp.eval_seeds)) + "\n")
    out.write("[trials]\ntrial\tseed\t" + "\t".join(tune.SERIES) + "\tbasic_train\tclustered_train\n")
    for t in comp.trials:
        cells = [str(t["trial"]), str(t["seed"])] + [_fmt(t[s]) for s in tune.SERIES]
        cells += [_fmt(t["basic_train"]), _fmt(t["clustered_train"])]
        out.write("\t".join(cells) + "\n")
    out.write("\n[series]\nseries\tmean\tmedian\tmin\tmax\n")
    for s in tune.SERIES:
        v = comp.series(s)
        out.write(f"{s}\t{_fmt(v.mean())}\t{_fmt(np.median(v))}\t{_fmt(v.min())}\t{_fmt(v.max())}\n")
    out.write(f"default\t{_fmt(comp.default_mean)}\t\t\t\n")
    out.write("\n[paired_tests]\ncomparison\tmean_difference\tt_statistic\tp_value\tn\tdegenerate\n")
    for name, pt in comp.tests.items():
        out.write(f"{name}\t{_fmt(pt.mean_difference)}\t{_fmt(pt.t_statistic)}\t{_fmt(pt.p_value)}\t{pt.n}\t{int(pt.degenerate)}\n")
    out.write("\n[configurations]\ntrial\tseries\tla_list\tit_wi\tweights\n")
    for t in comp.trials:
        for s in ("basic", "clustered"):
            c = t[f"{s}_config"]
            out.write(f"{t['trial']}\t{s}\t{c.la_list}\t{c.it_wi}\t" + ",".join(_fmt(w) for w in c.weights) + "\n")
    out.write("\n[runs]\ntrial\tseries\tinstance\tseed\tcost\tgap\n")
    for trial, series, iid, seed, cost, gap in comp.gap_rows:
        out.write(f"{trial}\t{series}\t{iid}\t{seed}\t{_fmt(cost)}\t{_fmt(gap)}\n")
    return out.getvalue()


def write_tune_report(comp: tune.Comparison, cfg: PipelineConfig) -> list[Path]:
    from . import plots

    head = cfg.stamp("tune")
    d = cfg.out / "tune"
    files = [_write(d / "report.tsv", format_tune_report(comp, head))]
    files += plots.tuning_figure(comp, d, head)
    return files
