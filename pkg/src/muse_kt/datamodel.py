"""Parsing, validation, and grouping of student interaction logs.

File formats (headers are mandatory):

- interactions: ``row_id,timestamp,user_id,content_id,content_type_id,
  task_container_id,user_answer,answered_correctly,
  prior_question_elapsed_time,prior_question_had_explanation``
  with content_type_id 0 = question, 1 = lecture.
- questions: ``question_id,bundle_id,correct_answer,part,tags``
  (tags whitespace-separated).
- lectures: ``lecture_id,tag,part,type_of``.

Absent numeric fields appear as an empty string or a ``-1`` sentinel; both
map to ``None``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INTERACTION_COLUMNS = [
    "row_id",
    "timestamp",
    "user_id",
    "content_id",
    "content_type_id",
    "task_container_id",
    "user_answer",
    "answered_correctly",
    "prior_question_elapsed_time",
    "prior_question_had_explanation",
]
QUESTION_COLUMNS = ["question_id", "bundle_id", "correct_answer", "part", "tags"]
LECTURE_COLUMNS = ["lecture_id", "tag", "part", "type_of"]

LECTURE_TYPES = ["concept", "solving question", "intention", "starter"]

QUESTION = 0
LECTURE = 1


class DataError(ValueError):
    """Base class for log/metadata validation failures."""


class MissingColumnError(DataError):
    def __init__(self, path, expected, found):
        super().__init__(f"{path}: expected header {expected}, found {found}")


class MalformedRowError(DataError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.line = line


class InvalidEnumError(DataError):
    def __init__(self, path, line: int, column: str, value):
        super().__init__(f"{path}:{line}: invalid value {value!r} for {column}")
        self.line = line
        self.value = value


class UnknownContentIdError(DataError):
    def __init__(self, kind: str, content_id: int):
        super().__init__(f"unknown {kind} id {content_id}")
        self.content_id = content_id


@dataclass(frozen=True, slots=True)
class InteractionRow:
    """One log event: a question answered or a lecture watched."""

    row_id: int
    timestamp: int  # ms since the user's first event
    user_id: int
    content_id: int
    content_type: int  # QUESTION or LECTURE
    task_container_id: int
    user_answer: int | None
    answered_correctly: int | None
    prior_elapsed_ms: float | None
    prior_had_explanation: int | None

    @property
    def is_question(self) -> bool:
        return self.content_type == QUESTION


@dataclass(frozen=True, slots=True)
class QuestionMeta:
    question_id: int
    bundle_id: int
    correct_answer: int
    part: int
    tags: tuple[int, ...]
    empty_tags: bool = False


@dataclass(frozen=True, slots=True)
class LectureMeta:
    lecture_id: int
    tag: int
    part: int
    type_id: int  # index into LECTURE_TYPES


@dataclass(slots=True)
class UserHistory:
    """All rows of one user, sorted by (timestamp, row_id)."""

    user_id: int
    rows: list[InteractionRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)


def _absent(text: str) -> bool:
    return text == "" or text == "-1" or text == "-1.0"


def _parse_int(text: str, path, line: int, column: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise MalformedRowError(path, line, f"non-integer {column}: {text!r}") from None


def _parse_optional_float(text: str, path, line: int, column: str) -> float | None:
    if _absent(text):
        return None
    try:
        value = float(text)
    except ValueError:
        raise MalformedRowError(path, line, f"non-numeric {column}: {text!r}") from None
    if not math.isfinite(value) or value < 0:
        raise MalformedRowError(path, line, f"{column} must be a finite non-negative number")
    return value


def _parse_flag(text: str, path, line: int, column: str) -> int | None:
    if _absent(text):
        return None
    lowered = text.strip().lower()
    if lowered in ("0", "false"):
        return 0
    if lowered in ("1", "true"):
        return 1
    raise InvalidEnumError(path, line, column, text)


def _open_reader(path, expected_columns):
    handle = open(path, "r", encoding="utf-8", newline="")
    reader = csv.reader(handle)
    try:
        header = next(reader)
    except StopIteration:
        handle.close()
        raise MissingColumnError(path, expected_columns, []) from None
    if header != expected_columns:
        handle.close()
        raise MissingColumnError(path, expected_columns, header)
    return handle, reader


def parse_interactions(path: str | Path) -> list[InteractionRow]:
    """Read and validate an interactions file, preserving file order."""
    path = Path(path)
    handle, reader = _open_reader(path, INTERACTION_COLUMNS)
    rows: list[InteractionRow] = []
    with handle:
        for line, record in enumerate(reader, start=2):
            if len(record) != len(INTERACTION_COLUMNS):
                raise MalformedRowError(
                    path, line, f"expected {len(INTERACTION_COLUMNS)} fields, got {len(record)}"
                )
            row_id = _parse_int(record[0], path, line, "row_id")
            timestamp = _parse_int(record[1], path, line, "timestamp")
            user_id = _parse_int(record[2], path, line, "user_id")
            content_id = _parse_int(record[3], path, line, "content_id")
            content_type = _parse_int(record[4], path, line, "content_type_id")
            container = _parse_int(record[5], path, line, "task_container_id")
            if row_id < 0 or timestamp < 0:
                raise MalformedRowError(path, line, "row_id and timestamp must be non-negative")
            if content_type not in (QUESTION, LECTURE):
                raise InvalidEnumError(path, line, "content_type_id", record[4])

            answer: int | None = None
            if not _absent(record[6]):
                answer = _parse_int(record[6], path, line, "user_answer")
                if answer not in (0, 1, 2, 3):
                    raise InvalidEnumError(path, line, "user_answer", record[6])
            correct: int | None = None
            if not _absent(record[7]):
                correct = _parse_int(record[7], path, line, "answered_correctly")
                if correct not in (0, 1):
                    raise InvalidEnumError(path, line, "answered_correctly", record[7])
            if content_type == LECTURE and (answer is not None or correct is not None):
                raise MalformedRowError(path, line, "lecture rows cannot carry answers")
            if content_type == QUESTION and correct is None:
                raise MalformedRowError(path, line, "question rows need answered_correctly")

            elapsed = _parse_optional_float(record[8], path, line, "prior_question_elapsed_time")
            explained = _parse_flag(record[9], path, line, "prior_question_had_explanation")
            rows.append(
                InteractionRow(
                    row_id=row_id,
                    timestamp=timestamp,
                    user_id=user_id,
                    content_id=content_id,
                    content_type=content_type,
                    task_container_id=container,
                    user_answer=answer,
                    answered_correctly=correct,
                    prior_elapsed_ms=elapsed,
                    prior_had_explanation=explained,
                )
            )
    return rows


def _format_optional(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def write_interactions(rows: list[InteractionRow], path: str | Path) -> None:
    """Serialize rows back to the interactions text format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(INTERACTION_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.row_id,
                    r.timestamp,
                    r.user_id,
                    r.content_id,
                    r.content_type,
                    r.task_container_id,
                    _format_optional(r.user_answer),
                    _format_optional(r.answered_correctly),
                    _format_optional(r.prior_elapsed_ms),
                    _format_optional(r.prior_had_explanation),
                ]
            )


def parse_questions(path: str | Path) -> dict[int, QuestionMeta]:
    path = Path(path)
    handle, reader = _open_reader(path, QUESTION_COLUMNS)
    out: dict[int, QuestionMeta] = {}
    with handle:
        for line, record in enumerate(reader, start=2):
            if len(record) != len(QUESTION_COLUMNS):
                raise MalformedRowError(path, line, f"expected {len(QUESTION_COLUMNS)} fields")
            qid = _parse_int(record[0], path, line, "question_id")
            bundle = _parse_int(record[1], path, line, "bundle_id")
            answer = _parse_int(record[2], path, line, "correct_answer")
            part = _parse_int(record[3], path, line, "part")
            if answer not in (0, 1, 2, 3):
                raise InvalidEnumError(path, line, "correct_answer", record[2])
            if not 1 <= part <= 7:
                raise InvalidEnumError(path, line, "part", record[3])
            tag_text = record[4].strip()
            tags = tuple(_parse_int(t, path, line, "tags") for t in tag_text.split()) if tag_text else ()
            out[qid] = QuestionMeta(
                question_id=qid,
                bundle_id=bundle,
                correct_answer=answer,
                part=part,
                tags=tags,
                empty_tags=not tags,
            )
    return out


def parse_lectures(path: str | Path) -> dict[int, LectureMeta]:
    path = Path(path)
    handle, reader = _open_reader(path, LECTURE_COLUMNS)
    out: dict[int, LectureMeta] = {}
    with handle:
        for line, record in enumerate(reader, start=2):
            if len(record) != len(LECTURE_COLUMNS):
                raise MalformedRowError(path, line, f"expected {len(LECTURE_COLUMNS)} fields")
            lid = _parse_int(record[0], path, line, "lecture_id")
            tag = _parse_int(record[1], path, line, "tag")
            part = _parse_int(record[2], path, line, "part")
            if not 1 <= part <= 7:
                raise InvalidEnumError(path, line, "part", record[2])
            type_name = record[3].strip()
            if type_name not in LECTURE_TYPES:
                raise InvalidEnumError(path, line, "type_of", record[3])
            out[lid] = LectureMeta(
                lecture_id=lid, tag=tag, part=part, type_id=LECTURE_TYPES.index(type_name)
            )
    return out


def lookup_question(questions: dict[int, QuestionMeta], content_id: int) -> QuestionMeta:
    try:
        return questions[content_id]
    except KeyError:
        raise UnknownContentIdError("question", content_id) from None


def lookup_lecture(lectures: dict[int, LectureMeta], content_id: int) -> LectureMeta:
    try:
        return lectures[content_id]
    except KeyError:
        raise UnknownContentIdError("lecture", content_id) from None


def group_by_user(rows: list[InteractionRow]) -> dict[int, UserHistory]:
    """Split rows into per-user histories sorted by (timestamp, row_id)."""
    grouped: dict[int, UserHistory] = {}
    for row in rows:
        history = grouped.get(row.user_id)
        if history is None:
            history = grouped[row.user_id] = UserHistory(user_id=row.user_id)
        history.rows.append(row)
    for history in grouped.values():
        history.rows.sort(key=lambda r: (r.timestamp, r.row_id))
    return grouped


def split_tail(
    rows: list[InteractionRow], holdout_fraction: float
) -> tuple[list[InteractionRow], list[InteractionRow]]:
    """Cut the final ceil(fraction * N) rows (by position) into a blend set.

    The split follows global row order only; one user's rows may straddle the
    boundary. That is documented behavior, not an invariant.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError(f"holdout_fraction must lie in (0, 1), got {holdout_fraction}")
    blend_size = math.ceil(holdout_fraction * len(rows))
    cut = len(rows) - blend_size
    return rows[:cut], rows[cut:]


def holdout_users(user_ids: list[int], fraction: float, seed: int) -> set[int]:
    """A seeded, deterministic user subset for held-out evaluation."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    ordered = sorted(user_ids)
    rng = np.random.default_rng([seed, 907])
    picked = rng.permutation(len(ordered))[: max(1, math.ceil(fraction * len(ordered)))]
    return {ordered[i] for i in picked}
