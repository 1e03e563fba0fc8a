"""Acceptance criteria 1-9.

Each test prints one ``criterion N: PASS|FAIL`` line (also repeated in the
terminal summary).  Criteria 2-8 build a deterministic text report that
criterion 9 regenerates and compares byte for byte.
"""

import dataclasses
import math
import shutil
import time
from fractions import Fraction

import numpy as np
import pytest

from nbprofile import cluster, features, pipeline, runlog
from nbprofile.aggregate import rra_score
from nbprofile.frames import FrameError, group_frames
from nbprofile.searchlab import build_roster, lahc_run, read_instance

from conftest import CRITERIA_LINES
from helpers import planted_subspace_data
from oracles import adjusted_rand, aitchison_distance, rra_exact, rra_monte_carlo

pytestmark = pytest.mark.acceptance

REPORTS: dict[int, bytes] = {}
PIPELINE_SEEDS = range(10)


def announce(n, ok, detail, informational=False):
    tag = "PASS" if ok else ("INFO-FAIL" if informational else "FAIL")
    line = f"criterion {n}: {tag} {detail}"
    print(line)
    CRITERIA_LINES.append(line)


def fmt(x):
    return format(float(x), ".17g")


# ---------------------------------------------------------------- criteria


def criterion_1():
    t0 = time.perf_counter()
    g = runlog.build_grid(runlog.QualityBounds(100.0, 0.0), 1000, 0.99)
    elapsed = time.perf_counter() - t0
    w = g.widths
    ratio_err = float(np.max(np.abs(w[1:] / w[:-1] / 0.99 - 1.0)))
    end_err = abs(g.boundaries[-1] - 0.0)
    ok = ratio_err <= 1e-9 and end_err <= 1e-7 and elapsed < 1.0
    return ok, f"max ratio error {ratio_err:.2e}, |b_n - LB| {end_err:.1e}, {elapsed:.3f} s", None


def criterion_2():
    t0 = time.perf_counter()
    lines = []
    e1 = group_frames([5, 1, 1, 1, 100, 1, 1], 3).ends
    e2 = group_frames([30, 30, 30], 2).ends
    lines.append(f"{e1} {e2}")
    rng = np.random.default_rng(2024)
    good = failed = 0
    for _ in range(1000):
        n_int = int(rng.integers(1, 400))
        A = rng.integers(0, 200, n_int).astype(float)
        A[-1] = max(A[-1], 1.0)
        nf = int(rng.integers(1, min(n_int, 12) + 1))
        try:
            e = np.asarray(group_frames(A, nf).ends)
        except FrameError:
            failed += 1
            lines.append(f"floor {n_int} {nf}")
            continue
        good += bool(np.all(np.diff(e) > 0) and e[-1] == n_int and len(e) == nf)
        lines.append(",".join(map(str, e)))
    elapsed = time.perf_counter() - t0
    ok = e1 == (4, 5, 7) and e2 == (2, 3) and good == 1000 - failed and failed == 0 and elapsed < 5
    return ok, f"E={list(e1)} and {list(e2)}; {good}/1000 profiles valid ({failed} floor errors); {elapsed:.2f} s", "\n".join(lines)


def criterion_3():
    t0 = time.perf_counter()
    exact = rra_exact([Fraction(1, 5)] * 3)
    rho = rra_score([0.2, 0.2, 0.2])
    lines = [fmt(rho)]
    rng = np.random.default_rng(33)
    worst = 0.0
    for i in range(20):
        ranks = rng.uniform(0.02, 1.0, int(rng.integers(2, 7)))
        mc = rra_monte_carlo(ranks, 1_000_000, seed=i)
        got = rra_score(ranks)
        worst = max(worst, abs(got - mc))
        lines.append(f"{fmt(got)} {fmt(mc)}")
    elapsed = time.perf_counter() - t0
    ok = exact == Fraction(8, 1000) and abs(rho - 0.008) <= 1e-12 and worst <= 2e-3 and elapsed < 30
    return ok, f"rho={rho!r}; max |rho - MC| over 20 vectors {worst:.2e}; {elapsed:.1f} s", "\n".join(lines)


def criterion_4():
    t0 = time.perf_counter()
    rng = np.random.default_rng(44)
    worst = 0.0
    lines = []
    for _ in range(1000):
        x, y = rng.dirichlet([1, 1, 1]), rng.dirichlet([1, 1, 1])
        d = math.dist(features.ilr(x), features.ilr(y))
        a = aitchison_distance(x, y)
        worst = max(worst, abs(d - a))
        lines.append(fmt(d))
    z = features.ilr([1 / 3, 1 / 3, 1 / 3])
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and max(map(abs, z)) <= 1e-12 and elapsed < 1.0
    return ok, f"max isometry error {worst:.1e}; barycenter -> ({z[0]:.1e}, {z[1]:.1e}); {elapsed:.2f} s", "\n".join(lines)


def criterion_5():
    t0 = time.perf_counter()
    hits, lines = 0, []
    for s in range(10):
        X, y = planted_subspace_data(s, n=40, p=20, K=3, sep=10.0)
        try:
            m = cluster.select(X, range(1, 7), seeds=(0,))
        except cluster.MonotonicityError as exc:
            return False, f"EM log-likelihood decreased: {exc}", str(exc)
        ari = adjusted_rand(m.labels, y)
        hits += m.K == 3 and ari == 1.0
        lines.append(f"{s} K={m.K} ari={fmt(ari)} " + " ".join(f"{k}:{fmt(v)}" for k, v in m.bic_trace.items()))
    elapsed = time.perf_counter() - t0
    ok = hits >= 9 and elapsed < 60
    return ok, f"K=3 with ARI=1 in {hits}/10 seeds, EM monotone in every fit; {elapsed:.1f} s", "\n".join(lines)


def criterion_6():
    t0 = time.perf_counter()
    X, _ = planted_subspace_data(6, n=10, p=60, K=2, sep=10.0)
    m = cluster.select(X, cluster.default_k_range(len(X)), seeds=(0, 1, 2))
    valid = (
        np.all(np.isfinite(m.resp)) and np.allclose(m.resp.sum(axis=1), 1.0, atol=1e-9)
        and set(m.labels.tolist()) <= set(range(m.K)) and math.isfinite(m.bic)
    )
    elapsed = time.perf_counter() - t0
    report = f"K={m.K} labels={m.labels.tolist()} bic={fmt(m.bic)}"
    return bool(valid) and elapsed < 30, f"10x60 fit K={m.K}, valid assignments {bool(valid)}; {elapsed:.2f} s", report


def _snapshot(root):
    return b"".join(
        str(p.relative_to(root)).encode() + b"\n" + p.read_bytes()
        for p in sorted(root.rglob("*")) if p.is_file()
    )


def _time_runs(cfg):
    """Wall time of every collect run of one pipeline seed."""
    roster = build_roster(cfg.duplicate_swap)
    configs = pipeline.collection_configs(cfg, len(roster))
    times = []
    for p in cfg.instance_paths():
        inst = read_instance(p)
        for config in configs:
            for r in range(cfg.runs):
                t0 = time.perf_counter()
                lahc_run(inst, dataclasses.replace(config, seed=r), roster=roster)
                times.append(time.perf_counter() - t0)
    return times


def criterion_7(workdir):
    t0 = time.perf_counter()
    same, invariant_ok, outputs_ok, lines = 0, True, True, []
    for s in PIPELINE_SEEDS:
        out = workdir / f"seed{s}"
        shutil.rmtree(out, ignore_errors=True)
        cfg = pipeline.load_config(None, seed=s, out=str(out))
        logs = pipeline.collect(cfg)
        for p in logs:
            lg = runlog.read_log(p)
            invariant_ok &= bool(np.array_equal(lg.n_iters, lg.n_I + lg.n_SN + lg.n_W))
            invariant_ok &= lg.run_count == cfg.configurations * cfg.runs
        res = pipeline.analyze(cfg)
        pipeline.plot(cfg)
        outputs_ok &= all((out / "analysis" / f).exists() for f in ("clusters.tsv", "bic.tsv", "frames.tsv", "features.tsv"))
        outputs_ok &= len(list((out / "figures").glob("*.svg"))) == 3 + len(res.matrix.row_ids)
        outputs_ok &= 2 <= res.model.K <= 12
        lab = dict(zip(res.matrix.row_ids, res.model.labels))
        same += lab["swap"] == lab["swap-b"]
        lines.append(f"seed {s}: K={res.model.K} swap={lab['swap'] + 1} swap-b={lab['swap-b'] + 1}")
        lines.append(_snapshot(out).decode())
    run_times = _time_runs(pipeline.load_config(None, seed=0))
    elapsed = time.perf_counter() - t0
    ok = same >= 8 and invariant_ok and outputs_ok and max(run_times) <= 2.0 and elapsed < 600
    detail = (
        f"swap and swap-b share a cluster in {same}/10 seeds; invariant {invariant_ok}; reports {outputs_ok}; "
        f"slowest run {max(run_times):.2f} s; {elapsed:.0f} s"
    )
    return ok, detail, "\n".join(lines)


def criterion_8(workdir):
    out = workdir / "seed0"
    cfg = pipeline.load_config(None, seed=0, out=str(out))
    if not (out / "analysis" / "clusters.tsv").exists():
        pipeline.collect(cfg)
        pipeline.analyze(cfg)
    shutil.rmtree(out / "tune", ignore_errors=True)
    t0 = time.perf_counter()
    comp = pipeline.run_tune(cfg)
    elapsed = time.perf_counter() - t0
    text = (out / "tune" / "report.tsv").read_text()
    basic, clustered = comp.series("basic"), comp.series("clustered")
    cl_wins = int(np.sum(clustered <= basic))
    both_beat = int(np.sum((basic < comp.series("basic_identical")) & (clustered < comp.series("clustered_identical"))))
    t = comp.tests["clustered_vs_basic"]
    has_t = "t_statistic" in text and "clustered_vs_basic" in text and math.isfinite(t.t_statistic)
    directional = cl_wins >= 6 and both_beat >= 7
    detail = (
        f"clustered <= basic in {cl_wins}/10 trials (want >= 6); both tuned beat identical weights in "
        f"{both_beat}/10 (want >= 7); paired t={t.t_statistic:.3f} p={t.p_value:.3f}; "
        f"mean gaps basic={basic.mean():.3f} clustered={clustered.mean():.3f} default={comp.default_mean:.3f}; "
        f"{elapsed:.0f} s"
    )
    return (has_t and elapsed < 1800, directional), detail, _snapshot(out / "tune").decode()


# ---------------------------------------------------------------- tests


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _simple(n, fn):
    ok, detail, report = fn()
    if report is not None:
        REPORTS[n] = report.encode()
    announce(n, ok, detail)
    assert ok, detail


def test_criterion_1_grid_geometry():
    _simple(1, criterion_1)


def test_criterion_2_frame_grouping():
    _simple(2, criterion_2)


def test_criterion_3_rank_aggregation():
    _simple(3, criterion_3)


def test_criterion_4_ilr_isometry():
    _simple(4, criterion_4)


def test_criterion_5_cluster_recovery():
    _simple(5, criterion_5)


def test_criterion_6_high_dimension():
    _simple(6, criterion_6)


def test_criterion_7_end_to_end(workdir):
    _simple(7, lambda: criterion_7(workdir))


def test_criterion_8_tuning_analogue(workdir):
    (hard_ok, directional), detail, report = criterion_8(workdir)
    REPORTS[8] = report.encode()
    # the directional part is informational only
    announce(8, hard_ok and directional, detail, informational=hard_ok)
    assert hard_ok, detail


def test_criterion_9_determinism(workdir):
    t0 = time.perf_counter()
    runners = {2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
               7: lambda: criterion_7(workdir), 8: lambda: criterion_8(workdir)}
    first = dict(REPORTS)
    for n, fn in runners.items():
        if n not in first:
            first[n] = fn()[2].encode()
    differing = [n for n, fn in runners.items() if fn()[2].encode() != first[n]]
    ok = not differing
    announce(9, ok, f"reports of criteria 2-8 byte-identical on rerun; differing: {differing or 'none'}; "
                    f"{time.perf_counter() - t0:.0f} s")
    assert ok
