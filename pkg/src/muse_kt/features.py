"""Causal feature extraction over user histories.

Each user history is replayed once into a per-question-step feature table.
Response-side features at step k are built strictly from rows before k (the
previous question's response, its elapsed time, the lag to the current
exercise, running user statistics); exercise-side features come from the
step-k row itself. Windowed frames for the attention model and padded
sequences for the recurrent model are both slices of the same tables.

Content-level statistics (hotness, hardness, part hardness) are computed
once over the training split and frozen, so no label information leaks
across the split boundary.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numcore
from .datamodel import (
    InteractionRow,
    LectureMeta,
    QuestionMeta,
    UserHistory,
    lookup_lecture,
    lookup_question,
)

# Response-token vocabulary: observed 0/1, a training-time MASK, and START for
# "no previous response" (also used on padding steps).
RESP_WRONG = 0
RESP_RIGHT = 1
RESP_MASK = 2
RESP_START = 3
RESP_VOCAB = 4

EXPL_MISSING = 2  # prior_had_explanation: {0, 1, missing}
EXPL_VOCAB = 3

LAG_CAP_S = 300.0
ELAPSED_CAP_S = 300.0
HOTNESS_CAP = 22000.0
N_GLOBAL_FEATURES = 9

LECTURE_TOP_TAGS = 14
LECTURE_TAG_OTHER = 15  # bucket for everything outside the frequent head
LECTURE_TAG_VOCAB = 16  # 0 = none yet
LECTURE_PART_VOCAB = 8  # 0 = none yet, 1..7
LECTURE_TYPE_VOCAB = 5  # 0 = none yet, 4 types


def lag_time(prev_exercise_start_ms: int, cur_exercise_start_ms: int) -> float:
    """Seconds between the beginnings of two exercises, capped at 300."""
    if cur_exercise_start_ms < prev_exercise_start_ms:
        raise ValueError("exercise timestamps out of order")
    return min((cur_exercise_start_ms - prev_exercise_start_ms) / 1000.0, LAG_CAP_S)


def attempt_feature_local(count: int) -> int:
    """0/1 indicator of whether the exercise was attempted before."""
    return 1 if count > 0 else 0


def attempt_feature_global(count: int) -> float:
    """Saturating 1 - exp(-count) form of the cumulative attempt count."""
    return 1.0 - math.exp(-float(count))


class LectureTagTable:
    """Maps raw lecture tags to buckets 1..14 (frequency rank) or 15 (other)."""

    def __init__(self, bucket_by_tag: dict[int, int]):
        self.bucket_by_tag = bucket_by_tag

    @classmethod
    def from_rows(
        cls, rows: list[InteractionRow], lectures: dict[int, LectureMeta]
    ) -> "LectureTagTable":
        counts: Counter[int] = Counter()
        for row in rows:
            if not row.is_question:
                counts[lookup_lecture(lectures, row.content_id).tag] += 1
        ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
        return cls({tag: rank + 1 for rank, (tag, _) in enumerate(ranked[:LECTURE_TOP_TAGS])})

    def bucket(self, tag: int) -> int:
        return self.bucket_by_tag.get(tag, LECTURE_TAG_OTHER)


@dataclass(slots=True)
class RunningUserStats:
    """Cumulative per-user state; every count is non-decreasing in time."""

    answer_counts: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))
    correct_count: int = 0
    answered_count: int = 0
    lecture_watch_count: int = 0
    attempt_counts: dict[int, int] = field(default_factory=dict)
    last_lecture: tuple[int, int, int] | None = None  # (part, type 1..4, tag bucket)
    last_timestamp: int = -1

    def copy(self) -> "RunningUserStats":
        return RunningUserStats(
            answer_counts=self.answer_counts.copy(),
            correct_count=self.correct_count,
            answered_count=self.answered_count,
            lecture_watch_count=self.lecture_watch_count,
            attempt_counts=dict(self.attempt_counts),
            last_lecture=self.last_lecture,
            last_timestamp=self.last_timestamp,
        )

    def update(
        self,
        row: InteractionRow,
        lectures: dict[int, LectureMeta],
        tag_table: LectureTagTable,
    ) -> None:
        """Fold one row in; call only after the row's features were emitted."""
        if row.timestamp < self.last_timestamp:
            raise ValueError("rows must be applied in chronological order")
        self.last_timestamp = row.timestamp
        if row.is_question:
            self.attempt_counts[row.content_id] = self.attempt_counts.get(row.content_id, 0) + 1
            if row.user_answer is not None:
                self.answer_counts[row.user_answer] += 1
            self.answered_count += 1
            self.correct_count += int(row.answered_correctly or 0)
        else:
            meta = lookup_lecture(lectures, row.content_id)
            self.lecture_watch_count += 1
            self.last_lecture = (meta.part, meta.type_id + 1, tag_table.bucket(meta.tag))


def stream_update(
    stats: RunningUserStats,
    row: InteractionRow,
    lectures: dict[int, LectureMeta],
    tag_table: LectureTagTable,
) -> RunningUserStats:
    """Pure form of :meth:`RunningUserStats.update` (returns a new value)."""
    updated = stats.copy()
    updated.update(row, lectures, tag_table)
    return updated


def lecture_state(stats: RunningUserStats) -> tuple[int, int, int]:
    """Categorical (last_part, last_type, last_tag) with 0 = nothing watched."""
    if stats.last_lecture is None:
        return (0, 0, 0)
    return stats.last_lecture


class ContentStats:
    """Frozen content-level attempt/correct tallies from the training split."""

    def __init__(self, n_content: int, n_parts: int = 7):
        self.content_attempts = np.zeros(n_content, dtype=np.int64)
        self.content_correct = np.zeros(n_content, dtype=np.int64)
        self.part_attempts = np.zeros(n_parts + 1, dtype=np.int64)
        self.part_correct = np.zeros(n_parts + 1, dtype=np.int64)

    @classmethod
    def from_rows(
        cls, rows: list[InteractionRow], questions: dict[int, QuestionMeta]
    ) -> "ContentStats":
        n_content = max(questions) + 1 if questions else 1
        stats = cls(n_content)
        for row in rows:
            if not row.is_question:
                continue
            meta = lookup_question(questions, row.content_id)
            correct = int(row.answered_correctly or 0)
            stats.content_attempts[row.content_id] += 1
            stats.content_correct[row.content_id] += correct
            stats.part_attempts[meta.part] += 1
            stats.part_correct[meta.part] += correct
        return stats


@dataclass(frozen=True, slots=True)
class GlobalFeatureVector:
    """The six statistics appended to each step without any embedding."""

    hotness: float
    hardness: float
    part_hardness: float
    response_ratio: tuple[float, float, float, float]
    cumulative_correct_rate: float
    lecture_watch_feature: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.hotness, self.hardness, self.part_hardness]
            + list(self.response_ratio)
            + [self.cumulative_correct_rate, self.lecture_watch_feature],
            dtype=np.float64,
        )


def global_features(
    user: RunningUserStats, content: ContentStats, question: QuestionMeta
) -> GlobalFeatureVector:
    """Assemble the 9-value global vector for one upcoming question.

    Hardness uses add-one smoothing so unseen content sits at 0.5 instead of
    0/0; cold-start users get the uniform answer ratio and a 0.5 correct rate.
    """
    qid = question.question_id
    if qid >= len(content.content_attempts):
        raise ValueError(f"question id {qid} outside content statistics")
    attempts = float(content.content_attempts[qid])
    correct = float(content.content_correct[qid])
    part_att = float(content.part_attempts[question.part])
    part_cor = float(content.part_correct[question.part])
    if user.answered_count > 0:
        ratio = tuple(user.answer_counts / user.answered_count)
        rate = user.correct_count / user.answered_count
    else:
        ratio = (0.25, 0.25, 0.25, 0.25)
        rate = 0.5
    return GlobalFeatureVector(
        hotness=min(attempts, HOTNESS_CAP) / HOTNESS_CAP,
        hardness=(correct + 1.0) / (attempts + 2.0),
        part_hardness=(part_cor + 1.0) / (part_att + 2.0),
        response_ratio=ratio,
        cumulative_correct_rate=rate,
        lecture_watch_feature=attempt_feature_global(user.lecture_watch_count),
    )


@dataclass(slots=True)
class StepFeatures:
    """All features for one upcoming question, before its outcome is known."""

    row_id: int
    content: int
    bundle: int
    part: int
    tags: tuple[int, ...]
    tag_count: int
    content_answer: int
    container: int
    resp_token: int
    elapsed: float
    elapsed_missing: int
    lag: float
    had_expl: int
    attempt_count: int
    lect_part: int
    lect_type: int
    lect_tag: int
    glob: np.ndarray
    label: int


def compute_step(
    row: InteractionRow,
    stats: RunningUserStats,
    prev_correct: int | None,
    prev_q_start: int | None,
    questions: dict[int, QuestionMeta],
    content_stats: ContentStats,
    max_tag_slots: int,
) -> StepFeatures:
    """Features for a question row given everything known just before it.

    Shared by table building and streaming inference so both paths emit
    identical values.
    """
    meta = lookup_question(questions, row.content_id)
    lect_part, lect_type, lect_tag = lecture_state(stats)
    return StepFeatures(
        row_id=row.row_id,
        content=row.content_id + 1,
        bundle=meta.bundle_id + 1,
        part=meta.part,
        tags=tuple(t + 1 for t in meta.tags[:max_tag_slots]),
        tag_count=min(len(meta.tags), max_tag_slots),
        content_answer=meta.correct_answer + 1,
        container=row.task_container_id + 1,
        resp_token=RESP_START if prev_correct is None else prev_correct,
        elapsed=(
            0.0
            if row.prior_elapsed_ms is None
            else min(row.prior_elapsed_ms / 1000.0, ELAPSED_CAP_S) / ELAPSED_CAP_S
        ),
        elapsed_missing=1 if row.prior_elapsed_ms is None else 0,
        lag=0.0 if prev_q_start is None else lag_time(prev_q_start, row.timestamp) / LAG_CAP_S,
        had_expl=EXPL_MISSING if row.prior_had_explanation is None else row.prior_had_explanation,
        attempt_count=stats.attempt_counts.get(row.content_id, 0),
        lect_part=lect_part,
        lect_type=lect_type,
        lect_tag=lect_tag,
        glob=global_features(stats, content_stats, meta).as_array(),
        label=int(row.answered_correctly or 0),
    )


@dataclass(slots=True)
class UserFeatureTable:
    """Per-question-step features for one user, in chronological order."""

    user_id: int
    row_ids: np.ndarray  # int64 [n]
    content: np.ndarray  # int32 [n], question id + 1 (0 reserved)
    bundle: np.ndarray
    part: np.ndarray
    tags: np.ndarray  # int32 [n, T], tag id + 1, zero-padded
    tag_counts: np.ndarray
    content_answer: np.ndarray  # correct answer + 1
    container: np.ndarray  # task container + 1
    resp_token: np.ndarray  # previous response, or START
    elapsed: np.ndarray  # previous elapsed, seconds / 300, in [0, 1]
    elapsed_missing: np.ndarray
    lag: np.ndarray  # lag seconds / 300, in [0, 1]
    had_expl: np.ndarray
    attempt_count: np.ndarray  # prior attempts of this content
    lect_part: np.ndarray
    lect_type: np.ndarray
    lect_tag: np.ndarray
    glob: np.ndarray  # float64 [n, 9]
    label: np.ndarray  # int32 [n]
    step_of_row_index: dict[int, int]  # raw history index -> step index

    def __len__(self) -> int:
        return len(self.row_ids)


@dataclass(slots=True)
class LocalFeatureFrame:
    """A fixed-width, right-aligned window ending at the target question.

    All per-step arrays have length ``window``; steps before the user's first
    question are padding (valid = 0) carrying the START response token.
    """

    window: int
    content: np.ndarray
    bundle: np.ndarray
    part: np.ndarray
    tags: np.ndarray
    tag_counts: np.ndarray
    content_answer: np.ndarray
    container: np.ndarray
    resp_token: np.ndarray
    elapsed: np.ndarray
    elapsed_missing: np.ndarray
    lag: np.ndarray
    had_expl: np.ndarray
    attempted: np.ndarray  # 0/1 local form
    lect_part: np.ndarray
    lect_type: np.ndarray
    lect_tag: np.ndarray
    glob: np.ndarray
    label: np.ndarray  # -1 on padding steps
    valid: np.ndarray


_FRAME_INT_FIELDS = [
    "content",
    "bundle",
    "part",
    "tag_counts",
    "content_answer",
    "container",
    "resp_token",
    "elapsed_missing",
    "had_expl",
    "attempted",
    "lect_part",
    "lect_type",
    "lect_tag",
    "label",
    "valid",
]
_FRAME_FLOAT_FIELDS = ["elapsed", "lag"]


class FrameBuilder:
    """Turns histories into feature tables, frames, and padded sequences."""

    def __init__(
        self,
        questions: dict[int, QuestionMeta],
        lectures: dict[int, LectureMeta],
        content_stats: ContentStats,
        tag_table: LectureTagTable,
        max_tag_slots: int | None = None,
    ):
        self.questions = questions
        self.lectures = lectures
        self.content_stats = content_stats
        self.tag_table = tag_table
        if max_tag_slots is None:
            max_tag_slots = max((len(q.tags) for q in questions.values()), default=1)
        self.max_tag_slots = max(1, max_tag_slots)

    # ------------------------------------------------------------------ tables

    def user_table(self, history: UserHistory) -> UserFeatureTable:
        """Replay one history into per-step features (strictly causal)."""
        n = sum(1 for r in history.rows if r.is_question)
        T = self.max_tag_slots
        cols = {
            "row_ids": np.zeros(n, dtype=np.int64),
            "content": np.zeros(n, dtype=np.int32),
            "bundle": np.zeros(n, dtype=np.int32),
            "part": np.zeros(n, dtype=np.int32),
            "tags": np.zeros((n, T), dtype=np.int32),
            "tag_counts": np.zeros(n, dtype=np.int32),
            "content_answer": np.zeros(n, dtype=np.int32),
            "container": np.zeros(n, dtype=np.int32),
            "resp_token": np.full(n, RESP_START, dtype=np.int32),
            "elapsed": np.zeros(n, dtype=np.float64),
            "elapsed_missing": np.zeros(n, dtype=np.int32),
            "lag": np.zeros(n, dtype=np.float64),
            "had_expl": np.zeros(n, dtype=np.int32),
            "attempt_count": np.zeros(n, dtype=np.int32),
            "lect_part": np.zeros(n, dtype=np.int32),
            "lect_type": np.zeros(n, dtype=np.int32),
            "lect_tag": np.zeros(n, dtype=np.int32),
            "glob": np.zeros((n, N_GLOBAL_FEATURES), dtype=np.float64),
            "label": np.zeros(n, dtype=np.int32),
        }
        step_of_row_index: dict[int, int] = {}
        stats = RunningUserStats()
        prev_correct: int | None = None
        prev_q_start: int | None = None
        step = 0
        for raw_index, row in enumerate(history.rows):
            if not row.is_question:
                stats.update(row, self.lectures, self.tag_table)
                continue
            sf = compute_step(
                row, stats, prev_correct, prev_q_start,
                self.questions, self.content_stats, self.max_tag_slots,
            )
            step_of_row_index[raw_index] = step
            cols["row_ids"][step] = sf.row_id
            cols["content"][step] = sf.content
            cols["bundle"][step] = sf.bundle
            cols["part"][step] = sf.part
            for slot, tag in enumerate(sf.tags):
                cols["tags"][step, slot] = tag
            cols["tag_counts"][step] = sf.tag_count
            cols["content_answer"][step] = sf.content_answer
            cols["container"][step] = sf.container
            cols["resp_token"][step] = sf.resp_token
            cols["elapsed"][step] = sf.elapsed
            cols["elapsed_missing"][step] = sf.elapsed_missing
            cols["lag"][step] = sf.lag
            cols["had_expl"][step] = sf.had_expl
            cols["attempt_count"][step] = sf.attempt_count
            cols["lect_part"][step] = sf.lect_part
            cols["lect_type"][step] = sf.lect_type
            cols["lect_tag"][step] = sf.lect_tag
            cols["glob"][step] = sf.glob
            cols["label"][step] = sf.label

            stats.update(row, self.lectures, self.tag_table)
            prev_correct = int(row.answered_correctly or 0)
            prev_q_start = row.timestamp
            step += 1
        return UserFeatureTable(user_id=history.user_id, step_of_row_index=step_of_row_index, **cols)

    # ------------------------------------------------------------------ frames

    def frame_from_table(self, table: UserFeatureTable, target_step: int, window: int) -> LocalFeatureFrame:
        """Slice the window of steps ending at ``target_step`` (inclusive)."""
        if not 0 <= target_step < len(table):
            raise IndexError(f"target step {target_step} outside table of {len(table)} steps")
        if window < 1:
            raise ValueError("window must be at least 1")
        lo = target_step - window + 1
        pad = max(0, -lo)
        lo = max(lo, 0)
        hi = target_step + 1
        n_real = hi - lo

        def pad_int(src: np.ndarray, fill: int = 0) -> np.ndarray:
            out = np.full((window,) + src.shape[1:], fill, dtype=src.dtype)
            out[pad:] = src[lo:hi]
            return out

        glob = np.zeros((window, N_GLOBAL_FEATURES), dtype=np.float64)
        glob[pad:] = table.glob[lo:hi]
        tags = np.zeros((window, table.tags.shape[1]), dtype=np.int32)
        tags[pad:] = table.tags[lo:hi]
        valid = np.zeros(window, dtype=np.int32)
        valid[pad:] = 1
        label = np.full(window, -1, dtype=np.int32)
        label[pad:] = table.label[lo:hi]
        return LocalFeatureFrame(
            window=window,
            content=pad_int(table.content),
            bundle=pad_int(table.bundle),
            part=pad_int(table.part),
            tags=tags,
            tag_counts=pad_int(table.tag_counts),
            content_answer=pad_int(table.content_answer),
            container=pad_int(table.container),
            resp_token=pad_int(table.resp_token, fill=RESP_START),
            elapsed=pad_int(table.elapsed),
            elapsed_missing=pad_int(table.elapsed_missing),
            lag=pad_int(table.lag),
            had_expl=pad_int(table.had_expl, fill=EXPL_MISSING),
            attempted=(pad_int(table.attempt_count) > 0).astype(np.int32),
            lect_part=pad_int(table.lect_part),
            lect_type=pad_int(table.lect_type),
            lect_tag=pad_int(table.lect_tag),
            glob=glob,
            label=label,
            valid=valid,
        )

    def build_frame(self, history: UserHistory, target_index: int, window: int) -> LocalFeatureFrame:
        """Frame for the question at raw history position ``target_index``."""
        if not 0 <= target_index < len(history.rows):
            raise IndexError(f"target index {target_index} outside history")
        if not history.rows[target_index].is_question:
            raise ValueError("frame targets must be question rows, not lectures")
        table = self.user_table(history)
        return self.frame_from_table(table, table.step_of_row_index[target_index], window)


# ------------------------------------------------------------------- batches


@dataclass(slots=True)
class FrameBatch:
    """Stacked frames: every per-step array gains a leading batch axis."""

    window: int
    content: np.ndarray
    bundle: np.ndarray
    part: np.ndarray
    tags: np.ndarray
    tag_counts: np.ndarray
    content_answer: np.ndarray
    container: np.ndarray
    resp_token: np.ndarray
    elapsed: np.ndarray
    elapsed_missing: np.ndarray
    lag: np.ndarray
    had_expl: np.ndarray
    attempted: np.ndarray
    lect_part: np.ndarray
    lect_type: np.ndarray
    lect_tag: np.ndarray
    glob: np.ndarray
    label: np.ndarray
    valid: np.ndarray

    @property
    def size(self) -> int:
        return self.content.shape[0]


def stack_frames(frames: list[LocalFeatureFrame]) -> FrameBatch:
    if not frames:
        raise ValueError("cannot stack an empty frame list")
    window = frames[0].window
    if any(f.window != window for f in frames):
        raise ValueError("all frames in a batch must share the window size")
    fields = _FRAME_INT_FIELDS + _FRAME_FLOAT_FIELDS + ["tags", "glob"]
    stacked = {name: np.stack([getattr(f, name) for f in frames]) for name in fields}
    return FrameBatch(window=window, **stacked)


@dataclass(slots=True)
class SequenceBatch:
    """Right-padded full user sequences for the recurrent model."""

    length: int
    content: np.ndarray
    bundle: np.ndarray
    part: np.ndarray
    tags: np.ndarray
    tag_counts: np.ndarray
    content_answer: np.ndarray
    container: np.ndarray
    resp_token: np.ndarray
    elapsed: np.ndarray
    elapsed_missing: np.ndarray
    lag: np.ndarray
    had_expl: np.ndarray
    attempt_count: np.ndarray
    lect_part: np.ndarray
    lect_type: np.ndarray
    lect_tag: np.ndarray
    glob: np.ndarray
    label: np.ndarray
    valid: np.ndarray
    row_ids: np.ndarray

    @property
    def size(self) -> int:
        return self.content.shape[0]


def stack_tables(tables: list[UserFeatureTable], max_steps: int | None = None) -> SequenceBatch:
    """Stack whole user tables, right-padding to the longest (or truncating)."""
    if not tables:
        raise ValueError("cannot stack an empty table list")
    length = max(len(t) for t in tables)
    if max_steps is not None:
        length = min(length, max_steps)
    length = max(length, 1)
    T = max(t.tags.shape[1] for t in tables)
    size = len(tables)

    def alloc(dtype, *extra, fill=0):
        return np.full((size, length) + extra, fill, dtype=dtype)

    batch = SequenceBatch(
        length=length,
        content=alloc(np.int32),
        bundle=alloc(np.int32),
        part=alloc(np.int32),
        tags=alloc(np.int32, T),
        tag_counts=alloc(np.int32),
        content_answer=alloc(np.int32),
        container=alloc(np.int32),
        resp_token=alloc(np.int32, fill=RESP_START),
        elapsed=alloc(np.float64),
        elapsed_missing=alloc(np.int32),
        lag=alloc(np.float64),
        had_expl=alloc(np.int32, fill=EXPL_MISSING),
        attempt_count=alloc(np.int32),
        lect_part=alloc(np.int32),
        lect_type=alloc(np.int32),
        lect_tag=alloc(np.int32),
        glob=alloc(np.float64, N_GLOBAL_FEATURES),
        label=alloc(np.int32, fill=-1),
        valid=alloc(np.int32),
        row_ids=alloc(np.int64, fill=-1),
    )
    for i, t in enumerate(tables):
        n = min(len(t), length)
        for name in (
            "content",
            "bundle",
            "part",
            "tag_counts",
            "content_answer",
            "container",
            "resp_token",
            "elapsed",
            "elapsed_missing",
            "lag",
            "had_expl",
            "attempt_count",
            "lect_part",
            "lect_type",
            "lect_tag",
            "label",
        ):
            getattr(batch, name)[i, :n] = getattr(t, name)[:n]
        batch.tags[i, :n, : t.tags.shape[1]] = t.tags[:n]
        batch.glob[i, :n] = t.glob[:n]
        batch.row_ids[i, :n] = t.row_ids[:n]
        batch.valid[i, :n] = 1
    return batch


# ---------------------------------------------------------------- frame cache

_CACHE_SCHEMA = (
    "record-per-frame layout; arrays stacked over frames: "
    "int32 fields " + ",".join(_FRAME_INT_FIELDS) + " [N,W]; tags int32 [N,W,T]; "
    "float64 fields " + ",".join(_FRAME_FLOAT_FIELDS) + " [N,W]; glob float64 [N,W,9]; "
    "little-endian buffers, see manifest"
)


def save_frames(frames: list[LocalFeatureFrame], path: str | Path) -> None:
    """Persist frames bit-exactly (little-endian buffers + schema header)."""
    batch = stack_frames(frames)
    arrays: dict[str, np.ndarray] = {}
    for name in _FRAME_INT_FIELDS:
        arrays[name] = getattr(batch, name).astype(np.int32)
    for name in _FRAME_FLOAT_FIELDS:
        arrays[name] = getattr(batch, name).astype(np.float64)
    arrays["tags"] = batch.tags.astype(np.int32)
    arrays["glob"] = batch.glob.astype(np.float64)
    numcore.save_arrays(
        path, arrays, meta={"kind": "frame-cache", "window": str(batch.window), "schema": _CACHE_SCHEMA}
    )


def load_frames(path: str | Path) -> list[LocalFeatureFrame]:
    arrays, meta = numcore.load_arrays(path)
    if meta.get("kind") != "frame-cache":
        raise ValueError(f"{path} is not a frame cache")
    window = int(meta["window"])
    n = arrays["content"].shape[0]
    frames = []
    for i in range(n):
        frames.append(
            LocalFeatureFrame(window=window, **{name: arrays[name][i] for name in arrays})
        )
    return frames
