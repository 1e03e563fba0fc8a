from fractions import Fraction

import numpy as np
import pytest

from nbprofile.aggregate import (
    AggregationError,
    RankList,
    aggregate_magnitudes,
    frame_ratios,
    frame_scores,
    interval_rank_lists,
    rra_score,
)
from nbprofile.frames import FrameSpec
from nbprofile.runlog import QualityBounds, RunLog, build_grid

from oracles import rra_exact, rra_monte_carlo


def make_log(cells, m=3, n=6):
    """``cells`` maps (k, interval) to (n_I, n_SN, n_W, s_I, s_W, s_time)."""
    lg = RunLog.empty("x", build_grid(QualityBounds(10.0, 0.0), n), [f"n{k}" for k in range(m)], 1)
    for (k, i), (a, b, c, si, sw, t) in cells.items():
        j = i - 1
        lg.n_I[k, j], lg.n_SN[k, j], lg.n_W[k, j] = a, b, c
        lg.n_iters[k, j] = a + b + c
        lg.s_I[k, j], lg.s_W[k, j], lg.s_time[k, j] = si, sw, t
    lg.validate()
    return lg


class TestRatios:
    def test_count_weighted(self):
        lg = make_log({(0, 1): (1, 1, 0, 1.0, 0, 5), (0, 2): (0, 0, 2, 0, 3.0, 5), (1, 3): (2, 0, 0, 2.0, 0, 1)})
        r = frame_ratios(lg, FrameSpec((2, 3)))
        assert r.composition(0, 0) == pytest.approx((0.25, 0.5, 0.25))
        assert np.isnan(r.r_improve[1, 0]) and r.n_iters[1, 0] == 0
        assert r.composition(1, 1) == (1.0, 0.0, 0.0)
        assert np.isnan(r.r_improve[2]).all()

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        cells = {(k, i): (int(rng.integers(0, 4)), int(rng.integers(1, 4)), int(rng.integers(0, 4)), 0, 0, 1)
                 for k in range(3) for i in range(1, 7)}
        cells = {key: (a, b, c, float(a), float(c), t) for key, (a, b, c, _, _, t) in cells.items()}
        r = frame_ratios(make_log(cells), FrameSpec((1, 4, 6)))
        np.testing.assert_allclose(r.r_improve + r.r_worsen + r.r_nothing, 1.0, rtol=1e-12)

    def test_activity_beyond_frames(self):
        lg = make_log({(0, 5): (1, 0, 0, 1.0, 0, 1)})
        with pytest.raises(AggregationError):
            frame_ratios(lg, FrameSpec((2, 4)))


class TestRankLists:
    def test_order_and_ties(self):
        lg = make_log({
            (0, 1): (2, 0, 0, 4.0, 0, 10),  # mean 2, time 5
            (1, 1): (1, 0, 0, 2.0, 0, 1),  # mean 2, time 1: wins the tie
            (2, 1): (1, 1, 0, 3.0, 0, 2),  # mean 1.5
        })
        lst = interval_rank_lists(lg, "improve")[0]
        assert lst.order == (1, 0, 2)
        assert lst.normalized_ranks() == {1: 1 / 3, 0: 2 / 3, 2: 1.0}
        assert interval_rank_lists(lg, "improve")[1].order == ()

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            interval_rank_lists(make_log({}), "sideways")


class TestRra:
    def test_exact_value(self):
        assert rra_exact([Fraction(1, 5)] * 3) == Fraction(1, 125)
        assert abs(rra_score([0.2, 0.2, 0.2]) - 0.008) <= 1e-12

    def test_against_rational_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            L = int(rng.integers(1, 9))
            num = rng.integers(1, 21, L)
            ranks = [Fraction(int(v), 20) for v in num]
            assert rra_score([float(v) for v in ranks]) == pytest.approx(float(rra_exact(ranks)), abs=1e-12)

    def test_against_monte_carlo(self):
        rng = np.random.default_rng(11)
        for i in range(5):
            ranks = rng.uniform(0.01, 1.0, int(rng.integers(2, 6)))
            assert abs(rra_score(ranks) - rra_monte_carlo(ranks, 200_000, seed=i)) < 5e-3

    def test_missing_ranks_count_as_one(self):
        assert rra_score([0.2], n_lists=3) == rra_score([0.2, 1.0, 1.0])

    def test_all_ones(self):
        assert rra_score([1.0, 1.0]) == 1.0

    @pytest.mark.parametrize("ranks,L", [([0.0], None), ([1.2], None), ([0.5, 0.5], 1), ([], 0)])
    def test_errors(self, ranks, L):
        with pytest.raises(ValueError):
            rra_score(ranks, L)


class TestScores:
    def test_aggregate_ignores_empty_lists(self):
        lists = [RankList(1, "improve", (0, 1), 3), RankList(2, "improve", (), 3), RankList(3, "improve", (0,), 3)]
        rho = aggregate_magnitudes(lists)
        assert rho[0] == pytest.approx(rra_score([1 / 3, 1 / 3]))
        assert rho[2] == 1.0
        with pytest.raises(AggregationError):
            aggregate_magnitudes([RankList(1, "improve", (), 3)])

    def test_empty_frames_flagged(self):
        lg = make_log({(0, 1): (1, 0, 0, 1.0, 0, 1), (1, 1): (0, 1, 0, 0, 0, 1), (0, 4): (0, 1, 0, 0, 0, 1)})
        sc = frame_scores(lg, FrameSpec((2, 4)))
        assert sc.empty_frames.tolist() == [False, False]
        assert sc.rho_improve[0, 0] < sc.rho_improve[1, 0] <= 1.0
        assert sc.rho_improve[2].tolist() == [1.0, 1.0]

    def test_all_empty_frame(self):
        lg = make_log({(0, 1): (1, 0, 0, 1.0, 0, 1), (0, 4): (1, 0, 0, 1.0, 0, 1)})
        sc = frame_scores(lg, FrameSpec((1, 3, 4)))
        assert sc.empty_frames.tolist() == [False, True, False]
        assert np.all(sc.rho_worsen[:, 1] == 1.0)
