import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbprofile import runlog
from nbprofile.runlog import (
    LogFormatError,
    LogMismatchError,
    QualityBounds,
    RunLog,
    build_grid,
    interval_of,
    interval_of_closed_form,
    merge_logs,
    parse_log,
    format_log,
)


def grid(ub=100.0, lb=0.0, n=1000, q=0.99):
    return build_grid(QualityBounds(ub, lb), n, q)


def random_log(seed, nids=("a", "b", "c"), n=20, density=0.4, g=None):
    rng = np.random.default_rng(seed)
    g = g or grid(n=n)
    shape = (len(nids), n)
    n_I = rng.integers(0, 5, shape) * (rng.random(shape) < density)
    n_W = rng.integers(0, 5, shape) * (rng.random(shape) < density)
    n_SN = rng.integers(0, 5, shape) * (rng.random(shape) < density)
    s_I = np.where(n_I > 0, rng.random(shape) * n_I, 0.0)
    s_W = np.where(n_W > 0, rng.random(shape) * n_W, 0.0)
    n_it = n_I + n_W + n_SN
    s_t = n_it * rng.integers(1, 100, shape)
    return RunLog("inst", g, nids, n_it, n_I, n_SN, n_W, s_I, s_W, s_t)


class TestGrid:
    def test_width_ratio_and_end(self):
        g = grid()
        w = g.widths
        np.testing.assert_allclose(w[1:] / w[:-1], 0.99, rtol=1e-9)
        assert abs(g.boundaries[-1] - 0.0) <= 1e-7
        assert g.boundaries[0] == 100.0

    def test_first_width_closed_form(self):
        g = grid()
        assert g.widths[0] == pytest.approx(100 * 0.01 / (1 - 0.99**1000), rel=1e-12)

    def test_uniform_decay(self):
        g = grid(n=4, q=1.0)
        np.testing.assert_allclose(g.boundaries, [100, 75, 50, 25, 0])

    @pytest.mark.parametrize("cost,expected", [(100.0, 1), (150.0, 1), (0.0, 1000), (-5.0, 1000)])
    def test_clamping_and_ends(self, cost, expected):
        assert interval_of(grid(), cost) == expected

    def test_boundary_closes_the_lower_interval(self):
        # interval i is (b_i, b_{i-1}]
        g = grid(n=4, q=1.0)
        assert interval_of(g, 75.0) == 2
        assert interval_of(g, 75.001) == 1
        assert interval_of(g, 25.0) == 4
        assert interval_of(g, 25.001) == 3

    @settings(max_examples=300, deadline=None)
    @given(st.floats(min_value=-10, max_value=110, allow_nan=False))
    def test_bisect_matches_closed_form(self, cost):
        g = grid()
        i = interval_of(g, cost)
        j = interval_of_closed_form(g, cost)
        if i != j:
            # only allowed within rounding of a boundary
            b = g.boundaries[min(i, j)]
            assert abs(cost - b) <= 1e-9 * max(1.0, abs(b))

    def test_monotone(self):
        g = grid()
        costs = np.linspace(101, -1, 5000)
        idx = [interval_of(g, c) for c in costs]
        assert all(a <= b for a, b in zip(idx, idx[1:]))

    @pytest.mark.parametrize("bad", [dict(n=0), dict(q=0.0), dict(q=1.5)])
    def test_bad_grid(self, bad):
        with pytest.raises(ValueError):
            grid(**bad)

    def test_bad_bounds(self):
        with pytest.raises(ValueError):
            QualityBounds(1.0, 1.0)
        with pytest.raises(ValueError):
            QualityBounds(math.inf, 0.0)


class TestFormat:
    def test_round_trip_exact(self):
        lg = random_log(1)
        back = parse_log(format_log(lg, ["comment"]))
        assert back.same_as(lg)

    def test_sparse_omits_zero_cells(self):
        lg = RunLog.empty("x", grid(n=10), ("a", "b"), 1)
        lg.n_iters[0, 3] = lg.n_SN[0, 3] = 2
        text = format_log(lg)
        rows = [ln for ln in text.splitlines() if ln.startswith("a,") or ln.startswith("b,")]
        assert rows == ["a,4,2,0,2,0,0,0,0"]
        back = parse_log(text)
        assert back.same_as(lg)
        assert back.n_iters.sum() == 2

    def test_rejects_invariant_violation(self):
        text = format_log(random_log(2)).splitlines()
        row = next(i for i, ln in enumerate(text) if ln.startswith("a,"))
        parts = text[row].split(",")
        parts[2] = str(int(parts[2]) + 1)
        text[row] = ",".join(parts)
        with pytest.raises(LogFormatError, match="line"):
            parse_log("\n".join(text))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda t: t.replace("n_intervals=20", "n_intervals=x"),
            lambda t: t.replace("instance=inst\n", ""),
            lambda t: t + "zz,1,1,1,0,0,1,0,5\n",
            lambda t: t + "a,21,1,1,0,0,1,0,5\n",
            lambda t: t + "a,1,1,0,1,0,0.5,0,5\n",
            lambda t: t + "a,1,1,1,0\n",
        ],
        ids=["bad-int", "missing-key", "unknown-nbh", "out-of-range", "sum-without-count", "short-row"],
    )
    def test_rejects_malformed(self, mutate):
        lg = RunLog.empty("inst", grid(n=20), ("a", "b"), 1)
        with pytest.raises(LogFormatError):
            parse_log(mutate(format_log(lg)))

    def test_rejects_duplicate_cell(self):
        lg = RunLog.empty("inst", grid(n=20), ("a",), 1)
        lg.n_iters[0, 0] = lg.n_SN[0, 0] = 1
        text = format_log(lg)
        with pytest.raises(LogFormatError, match="duplicate"):
            parse_log(text + "a,1,1,0,1,0,0,0,0\n")

    def test_write_validates(self, tmp_path):
        lg = random_log(3)
        lg.n_iters[0, 0] += 1
        with pytest.raises(LogFormatError):
            runlog.write_log(lg, tmp_path / "x.log")

    def test_empty_log_round_trip(self):
        lg = RunLog.empty("e", grid(n=5), ("a",), 0)
        assert parse_log(format_log(lg)).same_as(lg)


class TestMerge:
    def test_counts_add(self):
        a, b = random_log(1), random_log(2)
        m = merge_logs([a, b])
        np.testing.assert_array_equal(m.n_iters, a.n_iters + b.n_iters)
        assert m.run_count == 2
        m.validate()

    def test_order_independent_exactly(self):
        logs = [random_log(s) for s in range(5)]
        ref = merge_logs(logs)
        for perm in itertools.islice(itertools.permutations(logs), 30):
            assert merge_logs(perm).same_as(ref)

    def test_associative_up_to_rounding(self):
        a, b, c = (random_log(s) for s in range(3))
        left = merge_logs([merge_logs([a, b]), c])
        right = merge_logs([a, merge_logs([b, c])])
        np.testing.assert_array_equal(left.n_iters, right.n_iters)
        np.testing.assert_allclose(left.s_I, right.s_I, rtol=1e-15)

    def test_empty_is_identity(self):
        a = random_log(4)
        e = RunLog.empty(a.instance_id, a.grid, a.neighborhood_ids, 0)
        assert merge_logs([a, e]).same_as(a)

    def test_mismatch(self):
        a = random_log(1)
        with pytest.raises(LogMismatchError):
            merge_logs([a, random_log(2, nids=("a", "b", "d"))])
        with pytest.raises(LogMismatchError):
            merge_logs([a, random_log(2, g=build_grid(QualityBounds(99.0, 0.0), 20))])
        with pytest.raises(ValueError):
            merge_logs([])
