import numpy as np
import pytest

from zonecast.errors import SelectionError
from zonecast.selection import (SelectionConfig, normalize_weather,
                                rank_candidates, score_windows, select,
                                window_filter)
from zonecast.series import Trajectory

DAY = 86400.0


def _traj(end_time, temp, solar, start=0):
    temp = np.asarray(temp, dtype=float)
    solar = np.asarray(solar, dtype=float)
    length = len(temp)
    return Trajectory(
        start=start,
        u_block=np.zeros((1, length)),
        w_block=np.vstack([temp, solar]),
        y_block=np.zeros((1, length)),
        end_time=end_time,
    )


class TestNormalization:
    def test_range_upper_maps_to_one(self):
        t, s = normalize_weather(np.array([30.0]), np.array([0.0]))
        assert t[0] == pytest.approx(1.0)

    def test_offset_center(self):
        t, _ = normalize_weather(np.array([10.0]), np.array([0.0]))
        assert t[0] == pytest.approx(0.0)

    def test_solar_scale(self):
        _, s = normalize_weather(np.array([0.0]), np.array([500.0]))
        assert s[0] == pytest.approx(1.0)

    def test_pv_scale(self):
        cfg = SelectionConfig("most_recent", 1, solar_scale=3000.0)
        _, s = normalize_weather(np.array([0.0]), np.array([3000.0]), cfg)
        assert s[0] == pytest.approx(1.0)


class TestWindowFilter:
    def test_past_year_excluded(self):
        pool = [_traj(now - 366 * DAY, [1], [1]) for now in [1000 * DAY]]
        assert window_filter(pool, 1000 * DAY) == []

    def test_at_now_excluded(self):
        now = 500 * DAY
        pool = [_traj(now, [1], [1])]
        assert window_filter(pool, now) == []

    def test_one_step_before_included(self):
        now = 500 * DAY
        pool = [_traj(now - 900.0, [1], [1])]
        assert window_filter(pool, now) == pool


class TestScoring:
    def test_perfect_match_ranked_first(self):
        rng = np.random.default_rng(0)
        length = 20
        fc_temp = 10 + 5 * np.sin(np.arange(length) / 3.0)
        fc_solar = 200 + 100 * np.cos(np.arange(length) / 4.0)
        pool = [
            _traj(1000.0 + i, fc_temp + rng.normal(0, 3, length),
                  fc_solar + rng.normal(0, 50, length), start=i)
            for i in range(10)
        ]
        pool.append(_traj(990.0, fc_temp, fc_solar, start=42))
        for strategy in ("most_correlated", "smallest_rmse"):
            cfg = SelectionConfig(strategy, 3)
            res = select(pool, 2000.0, (fc_temp, fc_solar), cfg)
            assert res.indices[0] == 10

    def test_most_recent_consecutive_windows(self):
        length = 6
        pool = [_traj(100.0 + 9 * i, np.full(length, i), np.ones(length), start=i)
                for i in range(30)]
        cfg = SelectionConfig("most_recent", 5)
        res = select(pool, 1e6, None, cfg)
        np.testing.assert_array_equal(res.indices, [29, 28, 27, 26, 25])
        assert not res.shortfall

    def test_closest_mean_brute_force_oracle(self):
        # 10 days with linearly drifting mean temperature; forecast at the
        # median mean must pick the median-adjacent days
        length = 16
        means = np.linspace(0.0, 18.0, 10)
        pool = [
            _traj(100.0 * i, np.full(length, m), np.full(length, 100.0), start=i)
            for i, m in enumerate(means)
        ]
        fc_temp = np.full(length, np.median(means))
        fc_solar = np.full(length, 100.0)
        cfg = SelectionConfig("closest_mean", 4)
        res = select(pool, 1e9, (fc_temp, fc_solar), cfg)

        # oracle: per-candidate scalar scoring, one at a time
        t_fc, s_fc = normalize_weather(fc_temp, fc_solar, cfg)
        oracle_scores = []
        for tr in pool:
            t_c, s_c = normalize_weather(tr.w_block[0], tr.w_block[1], cfg)
            oracle_scores.append(
                abs(t_c.mean() - t_fc.mean()) + abs(s_c.mean() - s_fc.mean())
            )
        oracle_order = np.lexsort(
            (np.arange(10), -np.array([t.end_time for t in pool]),
             np.array(oracle_scores))
        )[:4]
        np.testing.assert_array_equal(res.indices, oracle_order)
        assert set(res.indices) <= {3, 4, 5, 6}

    def test_zero_variance_contributes_zero(self):
        length = 8
        flat = np.full(length, 5.0)
        wavy = np.sin(np.arange(length, dtype=float))
        scores = score_windows(
            flat[None, :], wavy[None, :], wavy, wavy, "most_correlated"
        )
        assert scores[0] == pytest.approx(1.0)  # 0 (flat temp) + 1 (solar)

    def test_correlation_affine_invariant_rmse_not(self):
        length = 12
        base_t = np.sin(np.arange(length) / 2.0)
        base_s = np.cos(np.arange(length) / 2.0)
        cand_t = np.vstack([base_t, 3.0 * base_t + 7.0])
        cand_s = np.vstack([base_s, base_s])
        corr = score_windows(cand_t, cand_s, base_t, base_s, "most_correlated")
        assert corr[0] == pytest.approx(corr[1])
        rmse = score_windows(cand_t, cand_s, base_t, base_s, "smallest_rmse")
        assert rmse[1] > rmse[0]

    def test_permutation_filter_property(self):
        rng = np.random.default_rng(3)
        length = 10
        pool = [
            _traj(float(i), rng.normal(10, 5, length), rng.uniform(0, 400, length),
                  start=i)
            for i in range(25)
        ]
        fc = (rng.normal(10, 5, length), rng.uniform(0, 400, length))
        for strategy in ("most_recent", "most_correlated", "smallest_rmse",
                         "closest_mean"):
            for width in (5, 25, 40):
                res = select(pool, 1e9, fc, SelectionConfig(strategy, width))
                assert len(res.indices) == min(width, len(pool))
                assert len(set(res.indices.tolist())) == len(res.indices)
                assert res.shortfall == (len(pool) < width)

    def test_deterministic_tie_break_by_recency(self):
        length = 4
        same = np.ones(length)
        pool = [_traj(10.0, same, same, start=0),
                _traj(30.0, same, same, start=1),
                _traj(20.0, same, same, start=2)]
        cfg = SelectionConfig("closest_mean", 2)
        res = select(pool, 1e9, (same, same), cfg)
        np.testing.assert_array_equal(res.indices, [1, 2])

    def test_empty_pool(self):
        with pytest.raises(SelectionError):
            select([], 0.0, None, SelectionConfig("most_recent", 3))

    def test_repeated_runs_identical(self):
        rng = np.random.default_rng(4)
        length = 10
        pool = [
            _traj(float(i), rng.normal(10, 5, length),
                  rng.uniform(0, 400, length), start=i)
            for i in range(50)
        ]
        fc = (rng.normal(10, 5, length), rng.uniform(0, 400, length))
        cfg = SelectionConfig("smallest_rmse", 7)
        a = select(pool, 1e9, fc, cfg)
        b = select(pool, 1e9, fc, cfg)
        np.testing.assert_array_equal(a.indices, b.indices)


class TestStackEquivalence:
    def test_most_recent_stack_is_row_permuted_hankel(self):
        # on a gap-free record the most-recent selection gives consecutive
        # overlapping windows: the stacked matrix equals the Hankel matrix
        # up to the fixed block-layout row permutation (column order aside)
        from zonecast.series import Channel, Schema, SeriesSet, Segment
        from zonecast.series import extract_trajectories
        from zonecast.trajmat import build_hankel, stack_blocks

        rng = np.random.default_rng(8)
        schema = Schema([
            Channel("u1", "u", "", -99, 99),
            Channel("w1", "w", "", -99, 99),
            Channel("w2", "w", "", -99, 99),
            Channel("y", "y", "", -99, 99),
        ])
        n, t_ini, t_f, width = 60, 3, 5, 10
        length = t_ini + t_f
        vals = rng.uniform(-5, 5, size=(4, n))
        ss = SeriesSet(schema, 0.0, 900.0, vals)
        pool = extract_trajectories(Segment(0, n), ss, length)
        res = select(pool, now=ss.time_at(n), forecast_weather=None,
                     cfg=SelectionConfig("most_recent", width))
        chosen = [pool[i] for i in sorted(res.indices, key=lambda j: pool[j].start)]
        stack = stack_blocks(chosen, t_ini, t_f)
        hank = build_hankel(vals[:, n - length - width + 1:], length)
        # row permutation: hankel rows are time-major over all channels;
        # the stack groups them into the six (u, w, y) x (ini, pred) blocks
        perm = []
        for lo_t, hi_t in ((0, t_ini), (t_ini, length)):
            for idx in ((0,), (1, 2), (3,)):
                for t in range(lo_t, hi_t):
                    for c in idx:
                        perm.append(t * 4 + c)
        np.testing.assert_array_equal(stack.matrix, hank[perm])


class TestRankCandidates:
    def test_descending_for_correlation(self):
        scores = np.array([0.1, 0.9, 0.5])
        ends = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(
            rank_candidates(scores, ends, ascending=False, width=3), [1, 2, 0]
        )

    def test_recency_without_scores(self):
        ends = np.array([5.0, 9.0, 7.0])
        np.testing.assert_array_equal(
            rank_candidates(None, ends, True, 2), [1, 2]
        )
