"""Ingestion pipeline checks against brute-force group-by/count oracles."""

import collections
import math

import numpy as np
import pytest

from slatesim.core import KUAIRAND_SCHEMA, ML1M_SCHEMA
from slatesim.data import (
    ColumnSpec, KUAIRAND_COLUMNS, ML1M_COLUMNS, SyntheticConfig, build_dataset,
    datasets_equal, empirical_mean_return_day, kcore_filter, load_dataset,
    merge_user_logs, parse_log, sample_behavior_bits, save_dataset,
    segment_sessions, split_train_test, summarize_distributions, synth_generate,
    true_probability,
)


def random_log(n_records=1000, n_users=40, n_items=60, n_days=12, seed=0):
    rng = np.random.default_rng(seed)
    users = rng.integers(0, n_users, n_records)
    items = rng.integers(0, n_items, n_records)
    dates = rng.integers(0, n_days, n_records)
    times = dates * 86_400_000 + rng.integers(0, 86_400_000, n_records)
    bits = (rng.random((n_records, 7)) < 0.2).astype(np.int8)
    return build_dataset(users, items, times, dates, bits, KUAIRAND_SCHEMA)


class TestBuildAndParse:
    def test_small_file(self, tmp_path):
        content = (
            "user_id,video_id,time_ms,date,is_click,long_view,is_like,is_comment,"
            "is_follow,is_forward,is_hate\n"
            "7,100,2000,1,1,0,0,0,0,0,0\n"
            "7,101,1000,1,0,1,0,0,0,0,0\n"
            "3,100,500,1,0,0,0,0,0,0,1\n"
        )
        path = tmp_path / "log.csv"
        path.write_text(content)
        result = parse_log(path, KUAIRAND_COLUMNS)
        ds = result.dataset
        assert result.skipped_rows == 0
        assert ds.n_records == 3
        # sorted by (user, timestamp): user 3 first, then user 7's two rows by time
        assert ds.record(0).user_id == 3
        assert ds.record(1).user_id == 7 and ds.record(1).timestamp == 1000
        assert ds.record(2).timestamp == 2000
        assert ds.record(1).behaviors[1] == 1

    def test_malformed_row_skipped(self, tmp_path):
        content = (
            "user_id,video_id,time_ms,date,is_click,long_view,is_like,is_comment,"
            "is_follow,is_forward,is_hate\n"
            "7,100,2000,1,1,0,0,0,0,0,0\n"
            "7,101,not_a_number,1,0,1,0,0,0,0,0\n"
        )
        path = tmp_path / "log.csv"
        path.write_text(content)
        result = parse_log(path, KUAIRAND_COLUMNS)
        assert result.skipped_rows == 1
        assert result.dataset.n_records == 1

    def test_missing_column_raises(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text("user_id,video_id\n1,2\n")
        with pytest.raises(ValueError, match="missing mandatory columns"):
            parse_log(path, KUAIRAND_COLUMNS)

    def test_empty_file_raises(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text("")
        with pytest.raises(ValueError):
            parse_log(path, KUAIRAND_COLUMNS)

    def test_rating_threshold_mapping(self, tmp_path):
        path = tmp_path / "ratings.csv"
        path.write_text(
            "user_id,movie_id,rating,timestamp\n"
            "1,10,4,86400000\n"
            "1,11,2,86400500\n"
        )
        ds = parse_log(path, ML1M_COLUMNS).dataset
        assert ds.schema == ML1M_SCHEMA
        like, hate = ds.schema.index("like"), ds.schema.index("hate")
        assert ds.behaviors[0, like] == 1 and ds.behaviors[0, hate] == 0
        assert ds.behaviors[1, like] == 0 and ds.behaviors[1, hate] == 1
        # date derived from timestamp when no date column
        assert ds.dates[0] == 1


class TestKcore:
    def test_k1_is_identity(self):
        ds = random_log(seed=1)
        out = kcore_filter(ds, 1)
        assert out.n_records == ds.n_records
        assert out.items.n_items == ds.items.n_items

    def test_threshold_semantics(self):
        users = [0, 0, 1, 1, 1, 2, 2]
        items = [5, 5, 9, 9, 9, 9, 9]  # item 5 twice, item 9 five times
        times = list(range(7))
        dates = [0] * 7
        bits = np.zeros((7, 7), dtype=np.int8)
        ds = build_dataset(users, items, times, dates, bits, KUAIRAND_SCHEMA)
        out = kcore_filter(ds, 3)
        assert out.items.n_items == 1
        assert int(out.items.ids[0]) == 9
        assert out.n_records == 5

    def test_matches_count_then_drop_oracle(self):
        ds = random_log(n_records=1000, seed=2)
        k = 10
        out = kcore_filter(ds, k)
        # oracle: count occurrences per original item id, drop rare ones
        counts = collections.Counter(int(ds.items.ids[i]) for i in ds.item_idx)
        surviving = {item for item, c in counts.items() if c >= k}
        expected_records = sum(c for item, c in counts.items() if c >= k)
        assert out.n_records == expected_records
        assert set(int(x) for x in out.items.ids) == surviving
        for i in range(out.n_records):
            assert int(out.items.ids[out.item_idx[i]]) in surviving

    def test_every_survivor_has_k_occurrences(self):
        ds = random_log(n_records=2000, seed=3)
        out = kcore_filter(ds, 25)
        counts = np.bincount(out.item_idx, minlength=out.items.n_items)
        assert np.all(counts >= 25)

    def test_filter_all_raises(self):
        ds = random_log(n_records=50, seed=4)
        with pytest.raises(ValueError):
            kcore_filter(ds, 10_000)

    def test_iterative_mode_reaches_fixpoint(self):
        ds = random_log(n_records=3000, n_users=60, n_items=50, seed=5)
        out = kcore_filter(ds, 5, iterate=True)
        u_counts = np.bincount(out.user_idx, minlength=out.users.n_users)
        i_counts = np.bincount(out.item_idx, minlength=out.items.n_items)
        assert np.all(u_counts >= 5) and np.all(i_counts >= 5)


class TestSessions:
    def test_day_grouping(self):
        users = [0, 0, 0]
        items = [1, 2, 3]
        dates = [4, 4, 6]
        times = [d * 86_400_000 + i for i, d in enumerate(dates)]
        bits = np.zeros((3, 7), dtype=np.int8)
        ds = segment_sessions(build_dataset(users, items, times, dates, bits, KUAIRAND_SCHEMA))
        assert ds.sessions.n_sessions == 2
        np.testing.assert_array_equal(ds.sessions.sizes(), [2, 1])

    def test_daily_user_has_one_session_per_day(self):
        users = [0] * 7
        dates = list(range(7))
        times = [d * 86_400_000 for d in dates]
        bits = np.zeros((7, 7), dtype=np.int8)
        ds = segment_sessions(build_dataset(users, [1] * 7, times, dates, bits, KUAIRAND_SCHEMA))
        assert ds.sessions.n_sessions == 7

    def test_matches_group_by_oracle(self):
        ds = segment_sessions(random_log(n_records=3000, seed=6))
        oracle = collections.Counter()
        for i in range(ds.n_records):
            oracle[(int(ds.user_idx[i]), int(ds.dates[i]))] += 1
        assert ds.sessions.n_sessions == len(oracle)
        got = {(int(u), int(d)): int(n) for u, d, n in
               zip(ds.sessions.user, ds.sessions.date, ds.sessions.sizes())}
        assert got == dict(oracle)

    def test_sessions_partition_records(self):
        ds = segment_sessions(random_log(n_records=2500, seed=7))
        s = ds.sessions
        assert int(s.sizes().sum()) == ds.n_records
        # ranges disjoint and contiguous in order
        assert s.start[0] == 0
        np.testing.assert_array_equal(s.start[1:], s.end[:-1])
        for j in range(s.n_sessions):
            seg_dates = ds.dates[s.start[j]:s.end[j]]
            assert np.all(seg_dates == s.date[j])


class TestSplit:
    def test_ten_record_user(self):
        users = [0] * 10
        times = list(range(10))
        bits = np.zeros((10, 7), dtype=np.int8)
        ds = build_dataset(users, list(range(10)), times, [0] * 10, bits, KUAIRAND_SCHEMA)
        train, test = split_train_test(ds, 0.8)
        assert train.n_records == 8 and test.n_records == 2
        assert train.timestamps.max() < test.timestamps.min()

    def test_single_record_user_goes_to_train(self):
        ds = build_dataset([0], [1], [5], [0], np.zeros((1, 7), dtype=np.int8), KUAIRAND_SCHEMA)
        train, test = split_train_test(ds, 0.8)
        assert train.n_records == 1 and test.n_records == 0

    def test_global_fraction_near_ratio(self):
        ds = random_log(n_records=10_000, n_users=300, seed=8)
        train, _ = split_train_test(ds, 0.8)
        frac = train.n_records / ds.n_records
        assert abs(frac - 0.8) < 0.02

    def test_leakage_free_and_matches_ceil_oracle(self):
        ds = random_log(n_records=10_000, n_users=250, seed=9)
        train, test = split_train_test(ds, 0.8)
        assert train.n_records + test.n_records == ds.n_records
        for u in range(ds.users.n_users):
            n_u = int(ds.user_offsets[u + 1] - ds.user_offsets[u])
            tr = int(train.user_offsets[u + 1] - train.user_offsets[u])
            te = int(test.user_offsets[u + 1] - test.user_offsets[u])
            assert tr == min(n_u, math.ceil(0.8 * n_u))
            assert tr + te == n_u
            if tr and te:
                assert train.timestamps[train.user_slice(u)].max() < \
                    test.timestamps[test.user_slice(u)].min()

    def test_invalid_ratio(self):
        ds = random_log(n_records=50, seed=10)
        with pytest.raises(ValueError):
            split_train_test(ds, 1.0)

    def test_merge_restores_record_multiset(self):
        ds = random_log(n_records=2000, seed=11)
        train, test = split_train_test(ds, 0.8)
        merged = merge_user_logs(train, test)
        assert merged.n_records == ds.n_records
        np.testing.assert_array_equal(np.sort(merged.timestamps), np.sort(ds.timestamps))


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path):
        ds = segment_sessions(random_log(n_records=1200, seed=12))
        path = tmp_path / "data.bin"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert datasets_equal(ds, back)

    def test_save_without_sessions(self, tmp_path):
        ds = random_log(n_records=100, seed=13)
        path = tmp_path / "data.bin"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back.sessions is None
        assert datasets_equal(ds, back)


class TestSynth:
    def test_same_seed_identical(self):
        cfg = SyntheticConfig(n_users=30, n_items=20, days=6, seed=42)
        a, gta = synth_generate(cfg)
        b, gtb = synth_generate(cfg)
        assert datasets_equal(a, b)
        np.testing.assert_array_equal(gta.user_vectors, gtb.user_vectors)
        np.testing.assert_array_equal(gta.p_ret, gtb.p_ret)

    def test_always_returning_user_active_every_day(self):
        cfg = SyntheticConfig(n_users=8, n_items=10, days=10, seed=1,
                              p_ret_range=(1.0, 1.0))
        ds, _ = synth_generate(cfg)
        for u in range(8):
            days = np.unique(ds.dates[ds.user_slice(u)])
            first = days.min()
            np.testing.assert_array_equal(days, np.arange(first, 10))

    def test_click_rate_matches_ground_truth(self):
        cfg = SyntheticConfig(n_users=5, n_items=5, days=2, seed=3)
        _, gt = synth_generate(cfg)
        rng = np.random.default_rng(99)
        user, item = 2, 3
        draws = np.stack([sample_behavior_bits(gt, user, [item], rng)[0]
                          for _ in range(10_000)])
        click = true_probability(gt, user, [item])[0, 0]
        assert abs(draws[:, 0].mean() - click) < 0.02

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            SyntheticConfig(n_users=0, n_items=5, days=2, seed=0)


class TestSummary:
    def test_all_click_rate_one(self):
        users = [0, 0, 1]
        bits = np.zeros((3, 7), dtype=np.int8)
        bits[:, 0] = 1
        ds = build_dataset(users, [1, 2, 3], [0, 1, 2], [0, 0, 0], bits, KUAIRAND_SCHEMA)
        report = summarize_distributions(ds)
        assert report.behavior_rates["click"] == 1.0

    def test_return_day_matches_truncated_geometric(self):
        cfg = SyntheticConfig(n_users=1500, n_items=10, days=40, seed=7,
                              session_len=1, p_ret_range=(0.5, 0.5))
        ds, _ = synth_generate(cfg)
        report = summarize_distributions(ds, max_day=10)
        # closed-form truncated geometric: pmf(d) = (1-p)^(d-1) p, tail mass at D
        p = 0.5
        pmf = {d: (1 - p) ** (d - 1) * p for d in range(1, 10)}
        pmf[10] = (1 - p) ** 9
        tv = 0.5 * sum(abs(report.return_day_pmf[d] - pmf[d]) for d in pmf)
        assert tv < 0.02

    def test_mean_return_day_of_always_returning_users(self):
        cfg = SyntheticConfig(n_users=20, n_items=5, days=8, seed=2,
                              p_ret_range=(1.0, 1.0))
        ds, _ = synth_generate(cfg)
        assert empirical_mean_return_day(ds) == 1.0

    def test_jsonl_round_trip_lines(self):
        ds = segment_sessions(random_log(n_records=500, seed=14))
        report = summarize_distributions(ds)
        lines = report.to_jsonl().strip().split("\n")
        assert len(lines) >= 7 + 10  # behaviors + return-day bins at least
