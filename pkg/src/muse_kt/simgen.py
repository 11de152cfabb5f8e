"""Seeded synthetic student-log generator with known ground-truth
probabilities.

Students carry a per-part latent skill; each question has a latent
difficulty. The true correctness probability is

    p* = sigmoid(skill[part] - difficulty + bonus * attempted_before)

where lectures raise the watched part's skill and every answered question
nudges its part's skill by a small drift. Because p* is emitted alongside the
log, the generator's own AUC is a Bayes ceiling no model can beat in
expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .datamodel import (
    LECTURE,
    LECTURE_TYPES,
    QUESTION,
    InteractionRow,
    parse_interactions,
    write_interactions,
)

INTERACTIONS_FILE = "interactions.csv"
QUESTIONS_FILE = "questions.csv"
LECTURES_FILE = "lectures.csv"
TRUTH_FILE = "truth.csv"


@dataclass(slots=True)
class SimConfig:
    n_users: int = 2000
    n_questions: int = 800
    n_lectures: int = 60
    n_parts: int = 7
    n_tags: int = 100
    mean_interactions: float = 80.0
    lecture_prob: float = 0.06
    lecture_gain: float = 0.25
    attempt_bonus: float = 0.4
    drift_per_step: float = 0.002
    noise_scale: float = 0.0
    skill_scale: float = 1.0
    difficulty_scale: float = 1.0
    median_gap_s: float = 20.0
    median_elapsed_s: float = 15.0
    seed: int = 42

    def validate(self) -> None:
        if min(self.n_users, self.n_questions, self.n_lectures, self.n_parts, self.n_tags) <= 0:
            raise ValueError("all counts must be positive")
        if not 0.0 <= self.lecture_prob <= 1.0:
            raise ValueError("lecture_prob must lie in [0, 1]")


@dataclass(slots=True)
class LatentStudent:
    skill: np.ndarray  # one entry per part
    drift: float

    def answer_logit(self, part: int, difficulty: float, attempted: bool, bonus: float) -> float:
        return float(self.skill[part - 1] - difficulty + (bonus if attempted else 0.0))


@dataclass(slots=True)
class _QuestionBank:
    parts: np.ndarray
    difficulty: np.ndarray
    correct_answer: np.ndarray
    tags: list[tuple[int, ...]]


def _build_questions(cfg: SimConfig) -> _QuestionBank:
    rng = np.random.default_rng([cfg.seed, 1])
    parts = rng.integers(1, cfg.n_parts + 1, size=cfg.n_questions)
    difficulty = rng.standard_normal(cfg.n_questions) * cfg.difficulty_scale
    correct = rng.integers(0, 4, size=cfg.n_questions)
    tags = []
    for _ in range(cfg.n_questions):
        k = int(rng.integers(1, 4))
        tags.append(tuple(sorted(int(t) for t in rng.choice(cfg.n_tags, size=k, replace=False))))
    return _QuestionBank(parts=parts, difficulty=difficulty, correct_answer=correct, tags=tags)


def _build_lectures(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, 2])
    # Skewed tag usage so that a meaningful "frequent tags" head exists.
    weights = 1.0 / (1.0 + np.arange(cfg.n_tags))
    weights /= weights.sum()
    tags = rng.choice(cfg.n_tags, size=cfg.n_lectures, p=weights)
    parts = rng.integers(1, cfg.n_parts + 1, size=cfg.n_lectures)
    types = rng.integers(0, len(LECTURE_TYPES), size=cfg.n_lectures)
    return tags, parts, types


@dataclass(slots=True)
class _Event:
    abs_time_ms: int
    user_id: int
    seq: int
    content_id: int
    content_type: int
    container: int
    answer: int | None
    correct: int | None
    prior_elapsed: float | None
    prior_explained: int | None
    p_star: float | None


def _simulate_user(
    cfg: SimConfig, user_id: int, bank: _QuestionBank, lecture_parts: np.ndarray
) -> list[_Event]:
    rng = np.random.default_rng([cfg.seed, 3, user_id])
    n_events = max(4, int(rng.poisson(cfg.mean_interactions)))
    student = LatentStudent(
        skill=rng.standard_normal(cfg.n_parts) * cfg.skill_scale,
        drift=cfg.drift_per_step,
    )
    start_ms = int(rng.integers(0, 90 * 24 * 3600 * 1000))
    gap_sigma = 1.0
    abs_time = start_ms
    attempts: dict[int, int] = {}
    prev_elapsed: float | None = None
    prev_explained: int | None = None
    events: list[_Event] = []
    for seq in range(n_events):
        if seq > 0:
            gap = rng.lognormal(math.log(cfg.median_gap_s), gap_sigma)
            abs_time += max(1, int(round(gap * 1000.0)))
        if rng.random() < cfg.lecture_prob:
            lecture_id = int(rng.integers(0, len(lecture_parts)))
            student.skill[lecture_parts[lecture_id] - 1] += cfg.lecture_gain
            events.append(
                _Event(
                    abs_time_ms=abs_time,
                    user_id=user_id,
                    seq=seq,
                    content_id=lecture_id,
                    content_type=LECTURE,
                    container=seq,
                    answer=None,
                    correct=None,
                    prior_elapsed=None,
                    prior_explained=None,
                    p_star=None,
                )
            )
            continue
        qid = int(rng.integers(0, cfg.n_questions))
        part = int(bank.parts[qid])
        attempted = attempts.get(qid, 0) > 0
        logit = student.answer_logit(part, float(bank.difficulty[qid]), attempted, cfg.attempt_bonus)
        if cfg.noise_scale > 0:
            logit += float(rng.standard_normal()) * cfg.noise_scale
        p_star = float(expit(logit))
        correct = int(rng.random() < p_star)
        if correct:
            answer = int(bank.correct_answer[qid])
        else:
            wrong = [a for a in range(4) if a != int(bank.correct_answer[qid])]
            answer = wrong[int(rng.integers(0, 3))]
        events.append(
            _Event(
                abs_time_ms=abs_time,
                user_id=user_id,
                seq=seq,
                content_id=qid,
                content_type=QUESTION,
                container=seq,
                answer=answer,
                correct=correct,
                prior_elapsed=prev_elapsed,
                prior_explained=prev_explained,
                p_star=p_star,
            )
        )
        attempts[qid] = attempts.get(qid, 0) + 1
        student.skill[part - 1] += student.drift
        prev_elapsed = float(round(rng.lognormal(math.log(cfg.median_elapsed_s), 0.6) * 1000.0))
        prev_explained = int(rng.random() < 0.7)
    return events


def generate(cfg: SimConfig, out_dir: str | Path) -> dict[str, Path]:
    """Write interactions/questions/lectures/truth files; fully seed-determined."""
    cfg.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bank = _build_questions(cfg)
    lect_tags, lect_parts, lect_types = _build_lectures(cfg)

    events: list[_Event] = []
    for user_id in range(cfg.n_users):
        events.extend(_simulate_user(cfg, user_id, bank, lect_parts))
    events.sort(key=lambda e: (e.abs_time_ms, e.user_id, e.seq))

    first_time: dict[int, int] = {}
    rows: list[InteractionRow] = []
    truth: list[tuple[int, float]] = []
    for row_id, ev in enumerate(events):
        base = first_time.setdefault(ev.user_id, ev.abs_time_ms)
        rows.append(
            InteractionRow(
                row_id=row_id,
                timestamp=ev.abs_time_ms - base,
                user_id=ev.user_id,
                content_id=ev.content_id,
                content_type=ev.content_type,
                task_container_id=ev.container,
                user_answer=ev.answer,
                answered_correctly=ev.correct,
                prior_elapsed_ms=ev.prior_elapsed,
                prior_had_explanation=ev.prior_explained,
            )
        )
        if ev.p_star is not None:
            truth.append((row_id, ev.p_star))

    paths = {
        "interactions": out / INTERACTIONS_FILE,
        "questions": out / QUESTIONS_FILE,
        "lectures": out / LECTURES_FILE,
        "truth": out / TRUTH_FILE,
    }
    write_interactions(rows, paths["interactions"])
    with open(paths["questions"], "w", encoding="utf-8", newline="") as handle:
        handle.write("question_id,bundle_id,correct_answer,part,tags\n")
        for qid in range(cfg.n_questions):
            tag_text = " ".join(str(t) for t in bank.tags[qid])
            handle.write(
                f"{qid},{qid},{int(bank.correct_answer[qid])},{int(bank.parts[qid])},{tag_text}\n"
            )
    with open(paths["lectures"], "w", encoding="utf-8", newline="") as handle:
        handle.write("lecture_id,tag,part,type_of\n")
        for lid in range(cfg.n_lectures):
            handle.write(
                f"{lid},{int(lect_tags[lid])},{int(lect_parts[lid])},{LECTURE_TYPES[int(lect_types[lid])]}\n"
            )
    with open(paths["truth"], "w", encoding="utf-8", newline="") as handle:
        handle.write("row_id,p_star\n")
        for row_id, p_star in truth:
            handle.write(f"{row_id},{p_star!r}\n")
    return paths


def load_truth(path: str | Path) -> dict[int, float]:
    truth: dict[int, float] = {}
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip()
        if header != "row_id,p_star":
            raise ValueError(f"{path}: unexpected truth header {header!r}")
        for line in handle:
            row_text, _, p_text = line.strip().partition(",")
            truth[int(row_text)] = float(p_text)
    return truth


def oracle_auc(truth_path: str | Path, interactions_path: str | Path) -> float:
    """AUC of the generator's own probabilities against realized labels."""
    from .metrics import roc_auc

    truth = load_truth(truth_path)
    rows = parse_interactions(interactions_path)
    questions = [r for r in rows if r.is_question]
    if len(questions) != len(truth):
        raise ValueError(
            f"row count mismatch: {len(truth)} truth rows vs {len(questions)} question rows"
        )
    scores = np.array([truth[r.row_id] for r in questions])
    labels = np.array([r.answered_correctly for r in questions])
    return roc_auc(scores, labels)
