"""Feature blocks: decayed aggregates, behavior stats, context cosines,
and the stats file format."""

import io
import math

import numpy as np
import pytest

from acrank.embedding import EmbeddingTable
from acrank.features import (
    CONTEXT_QUERIES,
    DENSE_FEATURES,
    HISTORY_DAYS,
    BehaviorStats,
    ContextState,
    FeatureLayout,
    StatsStore,
    decayed_aggregate,
    dump_stats,
    featurize,
    load_stats,
)


class TestDecayedAggregate:
    def test_most_recent_day_undecayed(self):
        assert decayed_aggregate([0.0, 8.0], half_life_days=1.0) == pytest.approx(8.0)

    def test_half_life_halves_one_day_old(self):
        assert decayed_aggregate([4.0, 8.0], half_life_days=1.0) == pytest.approx(10.0)

    def test_seven_day_half_life(self):
        # a count seven days old contributes exactly half
        series = [1.0] + [0.0] * 7
        assert decayed_aggregate(series, 7.0) == pytest.approx(0.5)

    def test_empty_series_is_zero(self):
        assert decayed_aggregate([], 7.0) == 0.0

    def test_nonpositive_half_life_rejected(self):
        with pytest.raises(ValueError):
            decayed_aggregate([1.0], 0.0)

    def test_monotone_in_any_entry(self):
        base = decayed_aggregate([1, 2, 3], 7.0)
        assert decayed_aggregate([1, 5, 3], 7.0) > base


class TestBehaviorStats:
    def test_from_daily_pads_in_front(self):
        stats = BehaviorStats.from_daily([2.0, 3.0], [1.0, 0.5])
        assert stats.daily_counts == (0.0,) * 5 + (2.0, 3.0)
        assert len(stats.daily_gmv) == HISTORY_DAYS

    def test_overlong_series_keeps_recent(self):
        stats = BehaviorStats.from_daily(list(range(10)), [0.0] * 10)
        assert stats.daily_counts == tuple(float(v) for v in range(3, 10))

    def test_decayed_fields_match_aggregate(self):
        counts = [1.0, 2.0, 0.0, 4.0, 0.0, 0.0, 1.0]
        stats = BehaviorStats.from_daily(counts, [0.0] * 7)
        assert stats.decayed_popularity == pytest.approx(
            decayed_aggregate(counts, 7.0))

    def test_negative_entries_rejected(self):
        with pytest.raises(ValueError):
            BehaviorStats.from_daily([-1.0], [0.0])

    def test_zero(self):
        zero = BehaviorStats.zero()
        assert zero.decayed_popularity == 0.0
        assert zero.daily_counts == (0.0,) * HISTORY_DAYS


class TestContextState:
    def test_from_past_queries_newest_first_truncated(self):
        past = [("a", 100), ("b", 300), ("c", 200), ("d", 400)]
        ctx = ContextState.from_past_queries(past, k=3)
        assert ctx.queries == (("d", 400), ("b", 300), ("c", 200))
        assert ctx.present

    def test_empty(self):
        assert not ContextState().present
        assert not ContextState.from_past_queries([]).present


class TestFeatureLayout:
    def test_lengths(self):
        layout = FeatureLayout()
        assert layout.dense_len == len(DENSE_FEATURES) == 4
        assert layout.series_len == 7
        assert layout.context_len == CONTEXT_QUERIES + 3 == 6

    def test_round_trip(self):
        layout = FeatureLayout(embedding_dim=50)
        assert FeatureLayout.from_dict(layout.to_dict()) == layout


def small_table() -> EmbeddingTable:
    tokens = ["hangers", "closet_rod", "hat"]
    target = np.array([
        [1.0, 0.0, 0.0],
        [0.8, 0.6, 0.0],
        [0.0, 0.0, 1.0],
    ])
    return EmbeddingTable(dim=3, tokens=tokens, target=target,
                         context=np.zeros_like(target))


class TestFeaturize:
    def test_dense_block(self):
        stats = BehaviorStats.from_daily([1.0] * 7, [2.0] * 7)
        vec = featurize("Hangers", "han", stats, ContextState(), None)
        dense = dict(zip(DENSE_FEATURES, vec.dense))
        assert dense["candidate_length"] == 7.0
        assert dense["decayed_popularity"] == pytest.approx(
            stats.decayed_popularity)
        assert dense["decayed_gmv"] == pytest.approx(stats.decayed_gmv)
        assert dense["exact_match"] == 0.0

    def test_no_prefix_scalars_in_dense_block(self):
        # same candidate under two prefixes featurizes identically except
        # for the exact-match flag; within-list constants stay out
        stats = BehaviorStats.from_daily([1.0] * 7, [2.0] * 7)
        a = featurize("hangers", "h", stats, ContextState(), None)
        b = featurize("hangers", "hang", stats, ContextState(), None)
        np.testing.assert_array_equal(a.dense, b.dense)

    def test_exact_match_flag(self):
        vec = featurize("hat", "HAT", BehaviorStats.zero(), ContextState(), None)
        assert vec.dense[-1] == 1.0

    def test_series_is_daily_counts(self):
        stats = BehaviorStats.from_daily([5.0, 1.0], [0.0, 0.0])
        vec = featurize("hat", "h", stats, ContextState(), None)
        np.testing.assert_array_equal(vec.series, np.asarray(stats.daily_counts))

    def test_context_cosines_and_aggregates(self):
        table = small_table()
        ctx = ContextState(queries=(("closet rod", 2000), ("hat", 1000)))
        vec = featurize("hangers", "h", BehaviorStats.zero(), ctx, table)
        assert vec.context[0] == pytest.approx(0.8)   # vs closet_rod
        assert vec.context[1] == pytest.approx(0.0)   # vs hat (orthogonal)
        assert vec.context[2] == 0.0                  # no third context query
        assert vec.context[3] == pytest.approx(0.8)   # max over present
        assert vec.context[4] == pytest.approx(0.4)   # mean over present
        assert vec.context[5] == 1.0                  # presence flag

    def test_empty_context_all_zero_block(self):
        vec = featurize("hangers", "h", BehaviorStats.zero(), ContextState(),
                        small_table())
        np.testing.assert_array_equal(vec.context, np.zeros(6))

    def test_oov_candidate_contributes_zero_cosines_but_presence(self):
        ctx = ContextState(queries=(("hat", 1000),))
        vec = featurize("unseen thing", "u", BehaviorStats.zero(), ctx,
                        small_table())
        assert vec.context[0] == 0.0
        assert vec.context[5] == 1.0

    def test_no_table_means_zero_cosines(self):
        ctx = ContextState(queries=(("hat", 1000),))
        vec = featurize("hangers", "h", BehaviorStats.zero(), ctx, None)
        assert vec.context[:5].tolist() == [0.0] * 5
        assert vec.context[5] == 1.0

    def test_empty_candidate_rejected(self):
        with pytest.raises(ValueError):
            featurize("", "h", BehaviorStats.zero(), ContextState(), None)

    def test_embedding_dim_mismatch_rejected(self):
        layout = FeatureLayout(embedding_dim=5)
        ctx = ContextState(queries=(("hat", 1000),))
        with pytest.raises(ValueError) as excinfo:
            featurize("hangers", "h", BehaviorStats.zero(), ctx, small_table(),
                      layout)
        assert "dim" in str(excinfo.value)


class TestStatsStore:
    def _store(self):
        return StatsStore({
            "hangers": BehaviorStats.from_daily([1.0] * 7, [10.0] * 7),
        })

    def test_known_query(self):
        store = self._store()
        assert "  HANGERS " in store
        assert store.get("Hangers").decayed_popularity > 0

    def test_unknown_query_reads_zero(self):
        store = self._store()
        assert "hat" not in store
        assert store.get("hat").decayed_popularity == 0.0

    def test_queries_sorted(self):
        store = StatsStore({
            "b": BehaviorStats.zero(), "a": BehaviorStats.zero()})
        assert store.queries() == ["a", "b"]


class TestStatsFile:
    def test_round_trip(self):
        records = {
            "hangers": ([1.0] * 7, [5.0] * 7),
            "hat": ([0.0] * 7, [0.0] * 7),
        }
        buffer = io.StringIO()
        dump_stats(records, buffer)
        store = load_stats(io.StringIO(buffer.getvalue()))
        assert len(store) == 2
        assert store.get("hangers").daily_gmv == (5.0,) * 7

    def test_dump_sorted_and_deterministic(self):
        records = {"zz": ([1.0], [0.0]), "aa": ([2.0], [0.0])}
        first, second = io.StringIO(), io.StringIO()
        dump_stats(records, first)
        dump_stats(records, second)
        assert first.getvalue() == second.getvalue()
        assert first.getvalue().index('"aa"') < first.getvalue().index('"zz"')

    def test_bad_line_reports_number(self):
        with pytest.raises(ValueError) as excinfo:
            load_stats(io.StringIO('{"query": "a", "daily_counts": [1]}\n'))
        assert "line 1" in str(excinfo.value)

    def test_non_finite_rejected_on_dump(self):
        with pytest.raises(ValueError):
            dump_stats({"a": ([math.inf], [0.0])}, io.StringIO())
