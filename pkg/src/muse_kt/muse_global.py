"""The unlimited-window recurrent model.

A stack of unidirectional GRU layers folds per-question-step feature vectors
into a fixed-size per-user state, so inference streams with O(1) memory per
user and an arbitrarily long effective context. Lecture rows never advance
the recurrence; their effect arrives through the lecture-state and
watch-count features.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import numcore as nc
from .datamodel import InteractionRow, LectureMeta, QuestionMeta
from .features import (
    ContentStats,
    LectureTagTable,
    N_GLOBAL_FEATURES,
    RunningUserStats,
    SequenceBatch,
    StepFeatures,
    UserFeatureTable,
    compute_step,
    stack_tables,
)
from .muse_local import LocalVocab
from .numcore import GRUParams, ParamStore, Tensor


@dataclass(slots=True)
class GlobalConfig:
    hidden: int = 256
    layers: int = 2
    dropout: float = 0.1  # between GRU layers only
    emb_dim: int = 64
    bptt: int = 512  # truncated-backprop segment length during training
    dtype: str = "float32"

    def validate(self) -> None:
        if self.layers < 1:
            raise ValueError("at least one recurrent layer is required")
        if self.hidden < 1 or self.emb_dim < 1 or self.bptt < 1:
            raise ValueError("hidden, emb_dim, and bptt must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def desk_scale(cls) -> "GlobalConfig":
        return cls(hidden=64, emb_dim=16)


# Categorical feature -> batch field, in projection order.
_CATEGORICAL = [
    ("emb.content", "content"),
    ("emb.content", "bundle"),
    ("emb.part", "part"),
    ("emb.answer", "content_answer"),
    ("emb.container", "container"),
    ("emb.response", "resp_token"),
    ("emb.explanation", "had_expl"),
    ("emb.elapsed_missing", "elapsed_missing"),
    ("emb.lect_part", "lect_part"),
    ("emb.lect_type", "lect_type"),
    ("emb.lect_tag", "lect_tag"),
]


@dataclass(slots=True)
class UserStreamState:
    """Carried recurrent state plus the running statistics for one user."""

    hidden: list[np.ndarray]
    stats: RunningUserStats = field(default_factory=RunningUserStats)
    prev_correct: int | None = None
    prev_q_start: int | None = None

    @classmethod
    def fresh(cls, cfg: GlobalConfig) -> "UserStreamState":
        dtype = np.dtype(cfg.dtype)
        return cls(hidden=[np.zeros(cfg.hidden, dtype=dtype) for _ in range(cfg.layers)])

    def save(self, path) -> None:
        arrays = {f"hidden.{i}": h for i, h in enumerate(self.hidden)}
        stats_payload = {
            "answer_counts": self.stats.answer_counts.tolist(),
            "correct_count": self.stats.correct_count,
            "answered_count": self.stats.answered_count,
            "lecture_watch_count": self.stats.lecture_watch_count,
            "attempt_counts": {str(k): v for k, v in self.stats.attempt_counts.items()},
            "last_lecture": self.stats.last_lecture,
            "last_timestamp": self.stats.last_timestamp,
        }
        meta = {
            "kind": "stream-state",
            "layers": str(len(self.hidden)),
            "stats": json.dumps(stats_payload, sort_keys=True),
            "prev_correct": "" if self.prev_correct is None else str(self.prev_correct),
            "prev_q_start": "" if self.prev_q_start is None else str(self.prev_q_start),
        }
        nc.save_arrays(path, arrays, meta)

    @classmethod
    def load(cls, path) -> "UserStreamState":
        arrays, meta = nc.load_arrays(path)
        if meta.get("kind") != "stream-state":
            raise ValueError(f"{path} is not a stream-state snapshot")
        layers = int(meta["layers"])
        payload = json.loads(meta["stats"])
        stats = RunningUserStats(
            answer_counts=np.array(payload["answer_counts"], dtype=np.int64),
            correct_count=payload["correct_count"],
            answered_count=payload["answered_count"],
            lecture_watch_count=payload["lecture_watch_count"],
            attempt_counts={int(k): v for k, v in payload["attempt_counts"].items()},
            last_lecture=tuple(payload["last_lecture"]) if payload["last_lecture"] else None,
            last_timestamp=payload["last_timestamp"],
        )
        return cls(
            hidden=[arrays[f"hidden.{i}"] for i in range(layers)],
            stats=stats,
            prev_correct=None if meta["prev_correct"] == "" else int(meta["prev_correct"]),
            prev_q_start=None if meta["prev_q_start"] == "" else int(meta["prev_q_start"]),
        )


class GlobalModel:
    """Stacked GRU over causally built step features."""

    def __init__(
        self,
        cfg: GlobalConfig,
        vocab: LocalVocab,
        rng: np.random.Generator | None = None,
        prefix: str = "global.",
    ):
        cfg.validate()
        self.cfg = cfg
        self.vocab = vocab
        self.dtype = np.dtype(cfg.dtype)
        self.params = ParamStore(prefix)
        self._init_params(rng if rng is not None else np.random.default_rng(0))

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg, vocab = self.cfg, self.vocab
        e = cfg.emb_dim
        table_rows = {
            "emb.content": vocab.content,
            "emb.part": vocab.part,
            "emb.tag": vocab.tag,
            "emb.answer": vocab.answer,
            "emb.container": vocab.container,
            "emb.response": vocab.response,
            "emb.explanation": vocab.explanation,
            "emb.elapsed_missing": vocab.elapsed_missing,
            "emb.lect_part": vocab.lect_part,
            "emb.lect_type": vocab.lect_type,
            "emb.lect_tag": vocab.lect_tag,
        }
        for name, rows in table_rows.items():
            self.params.add(name, nc.normal_init(rng, (rows, e), 0.02, self.dtype))
        for name in ("emb.elapsed_vec", "emb.lag_vec", "emb.attempt_vec"):
            self.params.add(name, nc.normal_init(rng, (e,), 0.02, self.dtype), decay=False)
        # 12 categorical slots (content + bundle + 9 others + tag average) and
        # 3 continuous slots, plus the 9 raw global statistics.
        feat_dim = (len(_CATEGORICAL) + 1 + 3) * e + N_GLOBAL_FEATURES
        self.params.add("proj.w", nc.glorot(rng, feat_dim, cfg.hidden, self.dtype))
        self.params.add("proj.b", nc.zeros_init((cfg.hidden,), self.dtype), decay=False)
        for layer in range(cfg.layers):
            for gate in ("z", "r", "h"):
                self.params.add(f"gru.{layer}.w{gate}", nc.glorot(rng, cfg.hidden, cfg.hidden, self.dtype))
                self.params.add(f"gru.{layer}.u{gate}", nc.glorot(rng, cfg.hidden, cfg.hidden, self.dtype))
                self.params.add(f"gru.{layer}.b{gate}", nc.zeros_init((cfg.hidden,), self.dtype), decay=False)
        self.params.add("head.w", nc.normal_init(rng, (cfg.hidden, 1), 0.02, self.dtype))
        self.params.add("head.b", nc.zeros_init((1,), self.dtype), decay=False)

    def _p(self, name: str) -> Tensor:
        return self.params[f"{self.params.prefix}{name}"].t

    def _gru_params(self, layer: int) -> GRUParams:
        p = f"gru.{layer}"
        return GRUParams(
            wz=self._p(f"{p}.wz"), uz=self._p(f"{p}.uz"), bz=self._p(f"{p}.bz"),
            wr=self._p(f"{p}.wr"), ur=self._p(f"{p}.ur"), br=self._p(f"{p}.br"),
            wh=self._p(f"{p}.wh"), uh=self._p(f"{p}.uh"), bh=self._p(f"{p}.bh"),
        )

    # --------------------------------------------------------------- features

    def embed_steps(self, batch: SequenceBatch) -> Tensor:
        """Concatenate categorical/continuous embeddings and the 9 raw global
        statistics, then project to the recurrent width. Shape [B, T, hidden]."""
        parts: list[Tensor] = []
        for table, fieldname in _CATEGORICAL:
            ids = getattr(batch, fieldname)
            if fieldname == "container":
                ids = np.minimum(ids, self.vocab.container - 1)
            parts.append(nc.embedding_lookup(self._p(table), ids))
        tag_all = nc.embedding_lookup(self._p("emb.tag"), batch.tags)
        tag_mask = (batch.tags > 0).astype(self.dtype)[..., None]
        tag_denom = np.maximum(batch.tag_counts, 1).astype(self.dtype)[..., None]
        parts.append((tag_all * Tensor(tag_mask)).sum(axis=2) * Tensor(1.0 / tag_denom))
        parts.append(nc.continuous_embed(batch.elapsed.astype(self.dtype), self._p("emb.elapsed_vec")))
        parts.append(nc.continuous_embed(batch.lag.astype(self.dtype), self._p("emb.lag_vec")))
        attempt_values = 1.0 - np.exp(-batch.attempt_count.astype(np.float64))
        parts.append(nc.continuous_embed(attempt_values.astype(self.dtype), self._p("emb.attempt_vec")))
        parts.append(Tensor(batch.glob.astype(self.dtype)))
        return nc.linear(nc.concat(parts, axis=-1), self._p("proj.w"), self._p("proj.b"))

    # ---------------------------------------------------------------- forward

    def forward_batch(
        self,
        batch: SequenceBatch,
        train: bool = False,
        rng: np.random.Generator | None = None,
        h0: list[np.ndarray] | None = None,
    ) -> tuple[Tensor, list[np.ndarray]]:
        """Probabilities [B, T] plus the detached final hidden states.

        Padding steps (valid = 0) freeze the state, so final states equal the
        state after each sequence's last real step.
        """
        B, T = batch.valid.shape
        x = self.embed_steps(batch)
        hidden: list[Tensor] = []
        for layer in range(self.cfg.layers):
            if h0 is not None:
                hidden.append(Tensor(h0[layer].astype(self.dtype, copy=True)))
            else:
                hidden.append(Tensor(np.zeros((B, self.cfg.hidden), dtype=self.dtype)))
        logits_per_step: list[Tensor] = []
        for t in range(T):
            gate = Tensor(batch.valid[:, t : t + 1].astype(self.dtype))
            inp = x[:, t, :]
            for layer in range(self.cfg.layers):
                new_h = nc.gru_cell(inp, hidden[layer], self._gru_params(layer))
                hidden[layer] = gate * new_h + (1.0 - gate) * hidden[layer]
                inp = hidden[layer]
                if train and self.cfg.dropout > 0.0 and layer < self.cfg.layers - 1:
                    inp = nc.dropout(inp, self.cfg.dropout, rng)
            logits_per_step.append(nc.linear(inp, self._p("head.w"), self._p("head.b")))
        logits = nc.concat(logits_per_step, axis=-1)
        probs = nc.sigmoid(logits)
        return probs, [h.data.copy() for h in hidden]

    def forward_table(self, table: UserFeatureTable) -> np.ndarray:
        """Inference probabilities for every question step of one user."""
        if len(table) == 0:
            return np.zeros(0, dtype=np.float64)
        probs, _ = self.forward_batch(stack_tables([table]))
        return probs.data[0, : len(table)].astype(np.float64)

    def loss(
        self,
        batch: SequenceBatch,
        train: bool = False,
        rng: np.random.Generator | None = None,
        h0: list[np.ndarray] | None = None,
    ) -> tuple[Tensor, Tensor, list[np.ndarray]]:
        probs, final_h = self.forward_batch(batch, train=train, rng=rng, h0=h0)
        targets = np.where(batch.valid > 0, batch.label, 0).astype(self.dtype)
        return nc.bce_loss(probs, targets, weights=batch.valid), probs, final_h

    # -------------------------------------------------------------- streaming

    def step(self, state: UserStreamState, step_features: StepFeatures) -> tuple[UserStreamState, float]:
        """Advance one question step; returns the new state and probability.

        The caller owns ordering; statistics stay untouched here (use
        :class:`StreamingPredictor` for full row-by-row handling).
        """
        batch = _single_step_batch(step_features, self.vocab.tag_slots)
        x = self.embed_steps(batch)
        inp = x[:, 0, :]
        new_hidden: list[np.ndarray] = []
        for layer in range(self.cfg.layers):
            h_prev = Tensor(state.hidden[layer].reshape(1, -1))
            h_new = nc.gru_cell(inp, h_prev, self._gru_params(layer))
            new_hidden.append(h_new.data.reshape(-1).copy())
            inp = h_new
        prob = nc.sigmoid(nc.linear(inp, self._p("head.w"), self._p("head.b")))
        next_state = UserStreamState(
            hidden=new_hidden,
            stats=state.stats,
            prev_correct=state.prev_correct,
            prev_q_start=state.prev_q_start,
        )
        return next_state, float(prob.data[0, 0])

    # ------------------------------------------------------------ persistence

    def config_meta(self) -> dict[str, str]:
        meta = {
            "model": "global",
            "cfg.hidden": str(self.cfg.hidden),
            "cfg.layers": str(self.cfg.layers),
            "cfg.dropout": repr(self.cfg.dropout),
            "cfg.emb_dim": str(self.cfg.emb_dim),
            "cfg.bptt": str(self.cfg.bptt),
            "cfg.dtype": self.cfg.dtype,
        }
        meta.update(self.vocab.to_meta())
        return meta

    def save(self, path, extra_meta: dict[str, str] | None = None) -> None:
        meta = self.config_meta()
        if extra_meta:
            meta.update(extra_meta)
        nc.save_arrays(path, self.params.state_dict(), meta)

    @classmethod
    def load(cls, path) -> tuple["GlobalModel", dict[str, str]]:
        arrays, meta = nc.load_arrays(path)
        if meta.get("model") != "global":
            raise ValueError(f"{path} is not a global-model checkpoint")
        cfg = GlobalConfig(
            hidden=int(meta["cfg.hidden"]),
            layers=int(meta["cfg.layers"]),
            dropout=float(meta["cfg.dropout"]),
            emb_dim=int(meta["cfg.emb_dim"]),
            bptt=int(meta["cfg.bptt"]),
            dtype=meta["cfg.dtype"],
        )
        vocab = LocalVocab.from_meta(meta)
        model = cls(cfg, vocab, rng=np.random.default_rng(0))
        model.params.load_state_dict(arrays)
        return model, meta


def _single_step_batch(sf: StepFeatures, tag_slots: int) -> SequenceBatch:
    tags = np.zeros((1, 1, max(1, tag_slots)), dtype=np.int32)
    for slot, tag in enumerate(sf.tags[:tag_slots]):
        tags[0, 0, slot] = tag
    def scalar(value, dtype=np.int32):
        return np.array([[value]], dtype=dtype)
    return SequenceBatch(
        length=1,
        content=scalar(sf.content),
        bundle=scalar(sf.bundle),
        part=scalar(sf.part),
        tags=tags,
        tag_counts=scalar(sf.tag_count),
        content_answer=scalar(sf.content_answer),
        container=scalar(sf.container),
        resp_token=scalar(sf.resp_token),
        elapsed=scalar(sf.elapsed, np.float64),
        elapsed_missing=scalar(sf.elapsed_missing),
        lag=scalar(sf.lag, np.float64),
        had_expl=scalar(sf.had_expl),
        attempt_count=scalar(sf.attempt_count),
        lect_part=scalar(sf.lect_part),
        lect_type=scalar(sf.lect_type),
        lect_tag=scalar(sf.lect_tag),
        glob=sf.glob.reshape(1, 1, N_GLOBAL_FEATURES).astype(np.float64),
        label=scalar(sf.label),
        valid=scalar(1),
        row_ids=scalar(sf.row_id, np.int64),
    )


class StreamingPredictor:
    """Row-by-row inference with O(1) carried state per user."""

    def __init__(
        self,
        model: GlobalModel,
        questions: dict[int, QuestionMeta],
        lectures: dict[int, LectureMeta],
        content_stats: ContentStats,
        tag_table: LectureTagTable,
    ):
        self.model = model
        self.questions = questions
        self.lectures = lectures
        self.content_stats = content_stats
        self.tag_table = tag_table
        self.states: dict[int, UserStreamState] = {}

    def state_of(self, user_id: int) -> UserStreamState:
        if user_id not in self.states:
            self.states[user_id] = UserStreamState.fresh(self.model.cfg)
        return self.states[user_id]

    def update(self, row: InteractionRow) -> float | None:
        """Consume one row; returns a probability for question rows."""
        state = self.state_of(row.user_id)
        if row.timestamp < state.stats.last_timestamp:
            raise ValueError("rows must arrive in chronological order per user")
        if not row.is_question:
            state.stats.update(row, self.lectures, self.tag_table)
            return None
        sf = compute_step(
            row, state.stats, state.prev_correct, state.prev_q_start,
            self.questions, self.content_stats, self.model.vocab.tag_slots,
        )
        next_state, prob = self.model.step(state, sf)
        next_state.stats.update(row, self.lectures, self.tag_table)
        next_state.prev_correct = int(row.answered_correctly or 0)
        next_state.prev_q_start = row.timestamp
        self.states[row.user_id] = next_state
        return prob
