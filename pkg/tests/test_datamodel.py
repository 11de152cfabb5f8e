"""Parsing, validation, grouping, and split behavior on hand-built fixtures."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from muse_kt import datamodel as dm

INTERACTIONS_HEADER = (
    "row_id,timestamp,user_id,content_id,content_type_id,task_container_id,"
    "user_answer,answered_correctly,prior_question_elapsed_time,"
    "prior_question_had_explanation"
)


def write(tmp_path, name, lines):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_parse_interactions_field_by_field(tmp_path):
    path = write(
        tmp_path,
        "interactions.csv",
        [
            INTERACTIONS_HEADER,
            "0,0,115,5692,0,1,3,1,,",
            "1,30000,115,7,1,2,,,,",
            "2,56000,115,128,0,3,0,0,15000,1",
        ],
    )
    rows = dm.parse_interactions(path)
    assert len(rows) == 3
    first = rows[0]
    assert first.row_id == 0 and first.timestamp == 0 and first.user_id == 115
    assert first.content_id == 5692 and first.content_type == dm.QUESTION
    assert first.task_container_id == 1 and first.user_answer == 3
    assert first.answered_correctly == 1
    assert first.prior_elapsed_ms is None and first.prior_had_explanation is None
    lecture = rows[1]
    assert lecture.content_type == dm.LECTURE
    assert lecture.user_answer is None and lecture.answered_correctly is None
    third = rows[2]
    assert third.prior_elapsed_ms == 15000.0 and third.prior_had_explanation == 1


def test_minus_one_sentinel_means_absent(tmp_path):
    path = write(
        tmp_path,
        "interactions.csv",
        [INTERACTIONS_HEADER, "0,0,1,7,1,0,-1,-1,-1,-1"],
    )
    row = dm.parse_interactions(path)[0]
    assert row.user_answer is None and row.answered_correctly is None
    assert row.prior_elapsed_ms is None and row.prior_had_explanation is None


def test_invalid_answer_enum(tmp_path):
    path = write(tmp_path, "interactions.csv", [INTERACTIONS_HEADER, "0,0,1,5,0,0,7,1,,"])
    with pytest.raises(dm.InvalidEnumError):
        dm.parse_interactions(path)


def test_missing_column_and_malformed_row(tmp_path):
    bad_header = write(tmp_path, "h.csv", ["row_id,timestamp", "0,0"])
    with pytest.raises(dm.MissingColumnError):
        dm.parse_interactions(bad_header)
    short_row = write(tmp_path, "r.csv", [INTERACTIONS_HEADER, "0,0,1,5,0"])
    with pytest.raises(dm.MalformedRowError) as err:
        dm.parse_interactions(short_row)
    assert err.value.line == 2


def test_lecture_with_answer_rejected(tmp_path):
    path = write(tmp_path, "interactions.csv", [INTERACTIONS_HEADER, "0,0,1,5,1,0,2,1,,"])
    with pytest.raises(dm.MalformedRowError):
        dm.parse_interactions(path)


def test_parse_questions_fixture(tmp_path):
    path = write(
        tmp_path,
        "questions.csv",
        ["question_id,bundle_id,correct_answer,part,tags", "5692,5692,3,5,151 168", "7,8,0,1,"],
    )
    questions = dm.parse_questions(path)
    meta = questions[5692]
    assert meta.correct_answer == 3 and meta.part == 5 and meta.tags == (151, 168)
    assert not meta.empty_tags
    assert questions[7].tags == () and questions[7].empty_tags


def test_parse_lectures_fixture_and_enum(tmp_path):
    path = write(
        tmp_path,
        "lectures.csv",
        ["lecture_id,tag,part,type_of", "89,159,5,concept", "100,70,1,solving question"],
    )
    lectures = dm.parse_lectures(path)
    assert lectures[89].type_id == dm.LECTURE_TYPES.index("concept")
    assert lectures[100].type_id == dm.LECTURE_TYPES.index("solving question")
    bad = write(tmp_path, "bad.csv", ["lecture_id,tag,part,type_of", "1,2,3,quiz"])
    with pytest.raises(dm.InvalidEnumError):
        dm.parse_lectures(bad)


def test_unknown_content_lazy_lookup():
    questions = {1: dm.QuestionMeta(1, 1, 0, 1, (5,))}
    assert dm.lookup_question(questions, 1).part == 1
    with pytest.raises(dm.UnknownContentIdError):
        dm.lookup_question(questions, 99)


def _rows_for_users(spec):
    """spec: list of (row_id, user_id, timestamp)."""
    return [
        dm.InteractionRow(
            row_id=rid, timestamp=ts, user_id=uid, content_id=0, content_type=dm.QUESTION,
            task_container_id=0, user_answer=0, answered_correctly=1,
            prior_elapsed_ms=None, prior_had_explanation=None,
        )
        for rid, uid, ts in spec
    ]


def test_group_by_user_sorts_and_breaks_ties():
    rows = _rows_for_users([(0, 1, 50), (1, 2, 10), (2, 1, 10), (4, 1, 50), (3, 2, 5)])
    grouped = dm.group_by_user(rows)
    assert set(grouped) == {1, 2}
    assert [r.row_id for r in grouped[1].rows] == [2, 0, 4]  # tie at ts=50 -> row_id order
    assert [r.row_id for r in grouped[2].rows] == [3, 1]
    assert sum(len(h.rows) for h in grouped.values()) == len(rows)


def test_group_by_user_preserves_multiset():
    rng = np.random.default_rng(0)
    spec = [(rid, int(rng.integers(0, 7)), int(rng.integers(0, 100))) for rid in range(500)]
    rows = _rows_for_users(spec)
    grouped = dm.group_by_user(rows)
    flattened = sorted(
        (r for h in grouped.values() for r in h.rows), key=lambda r: r.row_id
    )
    assert flattened == sorted(rows, key=lambda r: r.row_id)


def test_split_tail_sizes():
    rows = _rows_for_users([(i, 0, i) for i in range(100)])
    train, blend = dm.split_tail(rows, 0.1)
    assert len(blend) == 10 and len(train) == 90
    assert [r.row_id for r in blend] == list(range(90, 100))
    train, blend = dm.split_tail(_rows_for_users([(i, 0, i) for i in range(101)]), 0.1)
    assert len(blend) == 11  # ceiling rule


def test_split_tail_bad_fraction():
    rows = _rows_for_users([(0, 0, 0)])
    for fraction in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            dm.split_tail(rows, fraction)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.floats(0.01, 0.99))
def test_split_tail_partitions(n, fraction):
    rows = _rows_for_users([(i, 0, i) for i in range(n)])
    train, blend = dm.split_tail(rows, fraction)
    assert train + blend == rows
    assert len(blend) == math.ceil(fraction * n)


def test_roundtrip_serialization(tmp_path, small_dataset):
    rows = small_dataset["rows"]
    path = tmp_path / "roundtrip.csv"
    dm.write_interactions(rows, path)
    assert dm.parse_interactions(path) == rows


def test_holdout_users_deterministic():
    users = list(range(50))
    a = dm.holdout_users(users, 0.2, seed=3)
    b = dm.holdout_users(users, 0.2, seed=3)
    c = dm.holdout_users(users, 0.2, seed=4)
    assert a == b and len(a) == 10
    assert a != c  # different seed, different subset (overwhelmingly likely)
