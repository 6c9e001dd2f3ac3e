"""Session log parsing, labeling, pair extraction, and corpus splitting."""

import json
import math

import pytest

from acrank.sessions import (
    MAX_DISPLAY_DEPTH,
    ACSession,
    Impression,
    SessionLogError,
    TrainingPair,
    extract_pairs,
    label_impressions,
    normalize_match,
    pair_weight,
    parse_session_log,
    session_to_dict,
    session_unit,
    split_corpus,
)


def make_record(**overrides) -> dict:
    record = {
        "session_id": "s1",
        "user_id": "u1",
        "ts": 1_700_000_000_000,
        "past_queries": [["red shoes", 1_699_999_000_000]],
        "impressions": [
            {"prefix": "h", "candidates": ["hat", "hand", "hangers"]},
            {"prefix": "ha", "candidates": ["hand", "hangers", "hat"]},
        ],
        "submitted": "hangers",
        "gmv": 25.0,
    }
    record.update(overrides)
    return record


class TestNormalizeMatch:
    def test_lowercase_trim_collapse(self):
        assert normalize_match("  Red   Shoes ") == "red shoes"

    def test_idempotent(self):
        once = normalize_match("  A  B ")
        assert normalize_match(once) == once

    def test_plain_text_unchanged(self):
        assert normalize_match("hangers") == "hangers"


class TestParseSessionLog:
    def test_parses_valid_line(self):
        lines = [json.dumps(make_record())]
        (session,) = parse_session_log(lines)
        assert session.session_id == "s1"
        assert session.submitted_query == "hangers"
        assert session.impressions[0].candidates == ("hat", "hand", "hangers")
        assert session.past_queries == (("red shoes", 1_699_999_000_000),)

    def test_round_trip_through_dict(self):
        lines = [json.dumps(make_record())]
        (session,) = parse_session_log(lines)
        again = json.dumps(session_to_dict(session))
        (reparsed,) = parse_session_log([again])
        assert reparsed == session

    def test_skips_bad_lines_and_reports(self):
        errors = []
        lines = [
            "{not json",
            json.dumps(make_record()),
            json.dumps(make_record(gmv=-1)),
        ]
        sessions = list(parse_session_log(lines, errors=errors))
        assert len(sessions) == 1
        assert [e.line_no for e in errors] == [1, 3]
        assert errors[1].reason == "negative gmv"

    def test_strict_mode_raises(self):
        with pytest.raises(SessionLogError) as excinfo:
            list(parse_session_log(["{}"], strict=True))
        assert excinfo.value.line_no == 1

    def test_missing_field_reason_names_field(self):
        record = make_record()
        del record["submitted"]
        errors = []
        assert list(parse_session_log([json.dumps(record)], errors=errors)) == []
        assert "submitted" in errors[0].reason

    def test_duplicate_candidates_rejected(self):
        record = make_record(
            impressions=[{"prefix": "h", "candidates": ["hat", "hat"]}])
        errors = []
        assert list(parse_session_log([json.dumps(record)], errors=errors)) == []
        assert "duplicate" in errors[0].reason

    def test_display_depth_truncated(self):
        deep = [f"q{i}" for i in range(15)]
        record = make_record(impressions=[{"prefix": "q", "candidates": deep}])
        (session,) = parse_session_log([json.dumps(record)])
        assert len(session.impressions[0].candidates) == MAX_DISPLAY_DEPTH

    def test_non_finite_gmv_rejected(self):
        errors = []
        line = json.dumps(make_record()).replace("25.0", "NaN")
        assert list(parse_session_log([line], errors=errors)) == []
        assert "finite" in errors[0].reason

    def test_blank_lines_skipped(self):
        lines = ["", "   ", json.dumps(make_record())]
        assert len(list(parse_session_log(lines))) == 1


class TestLabelImpressions:
    def test_positive_located_by_normalized_equality(self):
        (session,) = parse_session_log(
            [json.dumps(make_record(submitted="  HANGERS "))])
        labeled = label_impressions(session)
        assert labeled[0].positive_rank == 3
        assert labeled[1].positive_rank == 2
        assert ("hat", 1) in labeled[0].negatives
        assert all(q != "hangers" for q, _ in labeled[0].negatives)

    def test_absent_positive_keeps_impression(self):
        (session,) = parse_session_log(
            [json.dumps(make_record(submitted="hammock"))])
        labeled = label_impressions(session)
        assert labeled[0].positive_rank is None
        assert len(labeled[0].negatives) == 3


class TestPairWeight:
    def test_modes(self):
        assert pair_weight(25.0, "gmv") == 25.0
        assert pair_weight(25.0, "unit") == 1.0
        assert pair_weight(25.0, "log1p_gmv") == pytest.approx(1 + math.log1p(25.0))

    def test_zero_gmv(self):
        assert pair_weight(0.0, "gmv") == 0.0
        assert pair_weight(0.0, "log1p_gmv") == 1.0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            pair_weight(1.0, "sqrt")


class TestExtractPairs:
    def test_pair_count_is_positives_times_co_displayed(self):
        (session,) = parse_session_log([json.dumps(make_record())])
        pairs = extract_pairs(session)
        # two impressions, both displaying the target among 3 candidates
        assert len(pairs) == 2 * 2

    def test_pair_fields(self):
        (session,) = parse_session_log([json.dumps(make_record())])
        first = extract_pairs(session, weight_mode="unit")[0]
        assert first.positive_query == "hangers"
        assert first.rank_p == 3
        assert first.negative_query in ("hat", "hand")
        assert first.weight == 1.0
        assert first.prefix == "h"
        assert first.context == session.past_queries
        assert first.session_id == "s1"

    def test_impression_without_positive_contributes_nothing(self):
        (session,) = parse_session_log(
            [json.dumps(make_record(submitted="hammock"))])
        assert extract_pairs(session) == []

    def test_pair_json_round_trip(self):
        (session,) = parse_session_log([json.dumps(make_record())])
        for pair in extract_pairs(session):
            assert TrainingPair.from_dict(
                json.loads(json.dumps(pair.to_dict()))) == pair


class TestSplitCorpus:
    def _pairs(self, n):
        return [
            TrainingPair(
                session_id=f"s{i}", positive_query="a", negative_query="b",
                rank_p=1, rank_n=2, weight=1.0, prefix="a")
            for i in range(n)
        ]

    def test_session_unit_uniform_and_deterministic(self):
        units = [session_unit(f"s{i}", 7) for i in range(4000)]
        assert units == [session_unit(f"s{i}", 7) for i in range(4000)]
        assert all(0.0 <= u < 1.0 for u in units)
        mean = sum(units) / len(units)
        assert abs(mean - 0.5) < 0.02

    def test_split_is_exhaustive_and_keyed_by_session(self):
        pairs = self._pairs(500) * 2  # two pairs per session id
        train, val = split_corpus(pairs, 0.25, seed=3)
        assert len(train) + len(val) == len(pairs)
        train_ids = {p.session_id for p in train}
        val_ids = {p.session_id for p in val}
        assert not train_ids & val_ids

    def test_fraction_roughly_honored(self):
        train, val = split_corpus(self._pairs(4000), 0.25, seed=0)
        assert 0.2 < len(val) / 4000 < 0.3

    def test_different_seed_different_split(self):
        pairs = self._pairs(200)
        _, val_a = split_corpus(pairs, 0.5, seed=1)
        _, val_b = split_corpus(pairs, 0.5, seed=2)
        assert {p.session_id for p in val_a} != {p.session_id for p in val_b}

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError):
            split_corpus([], 1.5, seed=0)
