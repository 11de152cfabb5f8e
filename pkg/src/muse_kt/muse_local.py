"""The windowed attention model.

Three embedded streams (exercise, response, lecture state) feed a
user-encoder / exercise-decoder stack. Exercise and response streams pass
through a stack of learned causal window aggregators first; decoder output is
collapsed per position by query-conditioned attention pooling, concatenated
with a lecture pooling branch, a GRU summary of the response stream, the
per-position decoder state, and the raw global statistics, then mapped to a
correctness probability by three fully connected layers.

All attention masks are lower-triangular, so a prediction at step k never
sees anything after k; the response stream is already shifted one question
back by construction in :mod:`muse_kt.features`.
"""

from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields

import numpy as np

from . import numcore as nc
from .datamodel import QuestionMeta
from .features import (
    EXPL_VOCAB,
    FrameBatch,
    LECTURE_PART_VOCAB,
    LECTURE_TAG_VOCAB,
    LECTURE_TYPE_VOCAB,
    LocalFeatureFrame,
    N_GLOBAL_FEATURES,
    RESP_VOCAB,
    stack_frames,
)
from .numcore import AttentionParams, GRUParams, ParamStore, Tensor


@dataclass(slots=True)
class LocalConfig:
    d_model: int = 128
    n_user_enc: int = 3
    n_ex_dec: int = 3
    n_lect_enc: int = 2
    heads: int = 8
    window: int = 200
    dropout: float = 0.0
    agg_window: int = 3  # taps span the 2w+1 positions ending at each step
    agg_layers: int = 2
    ffn_mult: int = 4
    pool_hidden: int = 64
    head_hidden: tuple[int, int] = (256, 64)
    dtype: str = "float32"

    def validate(self) -> None:
        if self.d_model % self.heads != 0:
            raise ValueError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if min(self.n_user_enc, self.n_ex_dec, self.n_lect_enc) < 1:
            raise ValueError("all stack depths must be at least 1")
        if self.window < 1 or self.agg_window < 1 or self.agg_layers < 1:
            raise ValueError("window sizes and aggregator depth must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def desk_scale(cls) -> "LocalConfig":
        return cls(d_model=32, window=64)


@dataclass(slots=True)
class LocalVocab:
    """Embedding-table sizes; index 0 is reserved for padding/START rows."""

    content: int
    tag: int
    container: int
    tag_slots: int
    part: int = 8
    answer: int = 5
    response: int = RESP_VOCAB
    explanation: int = EXPL_VOCAB
    elapsed_missing: int = 2
    attempted: int = 2
    lect_part: int = LECTURE_PART_VOCAB
    lect_type: int = LECTURE_TYPE_VOCAB
    lect_tag: int = LECTURE_TAG_VOCAB

    @classmethod
    def from_metadata(cls, questions: dict[int, QuestionMeta], max_container: int) -> "LocalVocab":
        max_content = 0
        max_tag = 0
        max_slots = 1
        for q in questions.values():
            max_content = max(max_content, q.question_id, q.bundle_id)
            max_slots = max(max_slots, len(q.tags))
            if q.tags:
                max_tag = max(max_tag, max(q.tags))
        return cls(
            content=max_content + 2,
            tag=max_tag + 2,
            container=max_container + 2,
            tag_slots=max_slots,
        )

    def to_meta(self) -> dict[str, str]:
        return {f"vocab.{f.name}": str(getattr(self, f.name)) for f in dc_fields(self)}

    @classmethod
    def from_meta(cls, meta: dict[str, str]) -> "LocalVocab":
        kwargs = {f.name: int(meta[f"vocab.{f.name}"]) for f in dc_fields(cls)}
        return cls(**kwargs)


_BAND_CACHE: dict[tuple[int, int], list[np.ndarray]] = {}


def _band_matrices(window: int, taps: int) -> list[np.ndarray]:
    key = (window, taps)
    if key not in _BAND_CACHE:
        _BAND_CACHE[key] = [np.eye(window, k=-(taps - 1 - o)) for o in range(taps)]
    return _BAND_CACHE[key]


def multi_scale_aggregate(x: Tensor, alpha_logits: Tensor, agg_window: int) -> Tensor:
    """Learned causal window smoothing: out_i = sum_j beta * x_j over the
    2w+1 taps ending at i, with out-of-range taps dropped and the tap weights
    renormalized over the in-range ones. Sequence length is unchanged.
    """
    taps = 2 * agg_window + 1
    if alpha_logits.shape != (taps,):
        raise ValueError(f"expected {taps} aggregator logits, got {alpha_logits.shape}")
    window = x.shape[-2]
    beta = nc.softmax(alpha_logits, axis=-1)
    bands = _band_matrices(window, taps)
    mix = None
    for o in range(taps):
        term = beta[o].reshape(1, 1) * Tensor(bands[o].astype(x.dtype))
        mix = term if mix is None else mix + term
    normed = mix * (mix.sum(axis=-1, keepdims=True) ** -1.0)
    return normed @ x


class LocalModel:
    """Parameter container plus the forward graph for frame batches."""

    def __init__(
        self,
        cfg: LocalConfig,
        vocab: LocalVocab,
        rng: np.random.Generator | None = None,
        prefix: str = "local.",
    ):
        cfg.validate()
        self.cfg = cfg
        self.vocab = vocab
        self.dtype = np.dtype(cfg.dtype)
        self.params = ParamStore(prefix)
        self._init_params(rng if rng is not None else np.random.default_rng(0))

    # ---------------------------------------------------------------- params

    def _emb(self, name: str, rows: int, rng) -> None:
        self.params.add(name, nc.normal_init(rng, (rows, self.cfg.d_model), 0.02, self.dtype))

    def _linear(self, name: str, fan_in: int, fan_out: int, rng) -> None:
        self.params.add(f"{name}.w", nc.glorot(rng, fan_in, fan_out, self.dtype))
        self.params.add(f"{name}.b", nc.zeros_init((fan_out,), self.dtype), decay=False)

    def _ln(self, name: str) -> None:
        d = self.cfg.d_model
        self.params.add(f"{name}.g", nc.ones_init((d,), self.dtype), decay=False)
        self.params.add(f"{name}.b", nc.zeros_init((d,), self.dtype), decay=False)

    def _attn(self, name: str, rng) -> None:
        d = self.cfg.d_model
        for proj in ("wq", "wk", "wv", "wo"):
            self.params.add(f"{name}.{proj}", nc.glorot(rng, d, d, self.dtype))
        for bias in ("bq", "bk", "bv", "bo"):
            self.params.add(f"{name}.{bias}", nc.zeros_init((d,), self.dtype), decay=False)

    def _block(self, name: str, rng, cross: bool = False) -> None:
        d, f = self.cfg.d_model, self.cfg.ffn_mult * self.cfg.d_model
        self._attn(f"{name}.attn", rng)
        self._ln(f"{name}.ln1")
        if cross:
            self._attn(f"{name}.xattn", rng)
            self._ln(f"{name}.ln2")
        self._linear(f"{name}.ffn.l1", d, f, rng)
        self._linear(f"{name}.ffn.l2", f, d, rng)
        self._ln(f"{name}.ln3" if cross else f"{name}.ln2")

    def _init_params(self, rng: np.random.Generator) -> None:
        cfg, vocab = self.cfg, self.vocab
        d = cfg.d_model
        self._emb("emb.content", vocab.content, rng)  # shared by content and bundle ids
        self._emb("emb.part", vocab.part, rng)
        self._emb("emb.tag", vocab.tag, rng)
        self._emb("emb.answer", vocab.answer, rng)
        self._emb("emb.container", vocab.container, rng)
        self._emb("emb.response", vocab.response, rng)
        self._emb("emb.explanation", vocab.explanation, rng)
        self._emb("emb.elapsed_missing", vocab.elapsed_missing, rng)
        self._emb("emb.attempted", vocab.attempted, rng)
        self._emb("emb.lect_part", vocab.lect_part, rng)
        self._emb("emb.lect_type", vocab.lect_type, rng)
        self._emb("emb.lect_tag", vocab.lect_tag, rng)
        self.params.add("emb.elapsed_vec", nc.normal_init(rng, (d,), 0.02, self.dtype), decay=False)
        self.params.add("emb.lag_vec", nc.normal_init(rng, (d,), 0.02, self.dtype), decay=False)
        # Position tables are deliberately separate per stream.
        self._emb("pos.exercise", cfg.window, rng)
        self._emb("pos.response", cfg.window, rng)
        self._emb("pos.lecture", cfg.window, rng)
        self._linear("proj.exercise", 5 * d, d, rng)
        self._linear("proj.response", 7 * d, d, rng)
        self._linear("proj.lecture", 3 * d, d, rng)
        taps = 2 * cfg.agg_window + 1
        self.params.add("agg.alpha", nc.zeros_init((cfg.agg_layers, taps), self.dtype), decay=False)
        for i in range(cfg.n_user_enc):
            self._block(f"enc.{i}", rng)
        for i in range(cfg.n_lect_enc):
            self._block(f"lect.{i}", rng)
        for i in range(cfg.n_ex_dec):
            self._block(f"dec.{i}", rng, cross=True)
        self._linear("pool.l1", 3 * d, cfg.pool_hidden, rng)
        self.params.add("pool.l2.w", nc.normal_init(rng, (cfg.pool_hidden, 1), 0.02, self.dtype))
        self.params.add("pool.l2.b", nc.zeros_init((1,), self.dtype), decay=False)
        for gate in ("z", "r", "h"):
            self.params.add(f"sgru.w{gate}", nc.glorot(rng, d, d, self.dtype))
            self.params.add(f"sgru.u{gate}", nc.glorot(rng, d, d, self.dtype))
            self.params.add(f"sgru.b{gate}", nc.zeros_init((d,), self.dtype), decay=False)
        h1, h2 = cfg.head_hidden
        self._linear("head.l1", 4 * d + N_GLOBAL_FEATURES, h1, rng)
        self._linear("head.l2", h1, h2, rng)
        # Small final layer keeps initial outputs near 0.5.
        self.params.add("head.l3.w", nc.normal_init(rng, (h2, 1), 0.02, self.dtype))
        self.params.add("head.l3.b", nc.zeros_init((1,), self.dtype), decay=False)

    def _p(self, name: str) -> Tensor:
        return self.params[f"{self.params.prefix}{name}"].t

    def _attn_params(self, name: str) -> AttentionParams:
        return AttentionParams(
            wq=self._p(f"{name}.wq"), bq=self._p(f"{name}.bq"),
            wk=self._p(f"{name}.wk"), bk=self._p(f"{name}.bk"),
            wv=self._p(f"{name}.wv"), bv=self._p(f"{name}.bv"),
            wo=self._p(f"{name}.wo"), bo=self._p(f"{name}.bo"),
        )

    def _gru_params(self) -> GRUParams:
        return GRUParams(
            wz=self._p("sgru.wz"), uz=self._p("sgru.uz"), bz=self._p("sgru.bz"),
            wr=self._p("sgru.wr"), ur=self._p("sgru.ur"), br=self._p("sgru.br"),
            wh=self._p("sgru.wh"), uh=self._p("sgru.uh"), bh=self._p("sgru.bh"),
        )

    # ---------------------------------------------------------------- streams

    def _lookup(self, table: str, ids: np.ndarray) -> Tensor:
        return nc.embedding_lookup(self._p(table), ids)

    def embed_streams(self, batch: FrameBatch) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """Concatenate per-feature embeddings, project to d_model, add the
        stream's own position table. Returns (E, R, L, content embedding)."""
        vocab = self.vocab
        content_e = self._lookup("emb.content", batch.content)
        bundle_e = self._lookup("emb.content", batch.bundle)
        part_e = self._lookup("emb.part", batch.part)
        answer_e = self._lookup("emb.answer", batch.content_answer)
        tag_all = self._lookup("emb.tag", batch.tags)  # [B, W, T, d]
        tag_mask = (batch.tags > 0).astype(self.dtype)[..., None]
        tag_denom = np.maximum(batch.tag_counts, 1).astype(self.dtype)[..., None]
        tag_avg = (tag_all * Tensor(tag_mask)).sum(axis=2) * Tensor(1.0 / tag_denom)
        exercise = nc.concat([content_e, bundle_e, part_e, tag_avg, answer_e], axis=-1)
        E = nc.linear(exercise, self._p("proj.exercise.w"), self._p("proj.exercise.b"))
        E = E + self._p("pos.exercise")

        container = np.minimum(batch.container, vocab.container - 1)
        container_e = self._lookup("emb.container", container)
        response_e = self._lookup("emb.response", batch.resp_token)
        elapsed_ce = nc.continuous_embed(batch.elapsed.astype(self.dtype), self._p("emb.elapsed_vec"))
        emiss_e = self._lookup("emb.elapsed_missing", batch.elapsed_missing)
        lag_ce = nc.continuous_embed(batch.lag.astype(self.dtype), self._p("emb.lag_vec"))
        expl_e = self._lookup("emb.explanation", batch.had_expl)
        attempted_e = self._lookup("emb.attempted", batch.attempted)
        response = nc.concat(
            [container_e, response_e, elapsed_ce, emiss_e, lag_ce, expl_e, attempted_e], axis=-1
        )
        R = nc.linear(response, self._p("proj.response.w"), self._p("proj.response.b"))
        R = R + self._p("pos.response")

        lecture = nc.concat(
            [
                self._lookup("emb.lect_part", batch.lect_part),
                self._lookup("emb.lect_type", batch.lect_type),
                self._lookup("emb.lect_tag", batch.lect_tag),
            ],
            axis=-1,
        )
        L = nc.linear(lecture, self._p("proj.lecture.w"), self._p("proj.lecture.b"))
        L = L + self._p("pos.lecture")
        return E, R, L, content_e

    def aggregate(self, x: Tensor) -> Tensor:
        alpha = self._p("agg.alpha")
        for layer in range(self.cfg.agg_layers):
            x = multi_scale_aggregate(x, alpha[layer], self.cfg.agg_window)
        return x

    # ----------------------------------------------------------------- stacks

    def _masks(self, batch: FrameBatch) -> tuple[np.ndarray, np.ndarray]:
        valid = batch.valid.astype(bool)
        W = batch.window
        causal = np.tril(np.ones((W, W), dtype=bool))
        # Keys must be valid (or the query itself, so padding rows never go
        # all -inf and poison the softmax).
        allowed = causal[None] & (valid[:, None, :] | np.eye(W, dtype=bool)[None])
        attn = np.where(allowed, 0.0, -np.inf).astype(self.dtype)[:, None]  # [B,1,W,W]
        pool = (causal[None] & valid[:, None, :]).astype(self.dtype)  # [B,W,W]
        return attn, pool

    def _encoder_stack(self, x: Tensor, name: str, depth: int, mask, train, rng) -> Tensor:
        for i in range(depth):
            blk = f"{name}.{i}"
            attn = nc.multi_head_attention(x, x, x, mask, self.cfg.heads, self._attn_params(f"{blk}.attn"))
            attn = self._drop(attn, train, rng)
            x = nc.layer_norm(x + attn, self._p(f"{blk}.ln1.g"), self._p(f"{blk}.ln1.b"))
            ff = nc.feed_forward(
                x,
                self._p(f"{blk}.ffn.l1.w"), self._p(f"{blk}.ffn.l1.b"),
                self._p(f"{blk}.ffn.l2.w"), self._p(f"{blk}.ffn.l2.b"),
            )
            ff = self._drop(ff, train, rng)
            x = nc.layer_norm(x + ff, self._p(f"{blk}.ln2.g"), self._p(f"{blk}.ln2.b"))
        return x

    def encode_user(self, r_agg: Tensor, mask, train=False, rng=None) -> Tensor:
        return self._encoder_stack(r_agg, "enc", self.cfg.n_user_enc, mask, train, rng)

    def encode_lecture(self, l_stream: Tensor, mask, train=False, rng=None) -> Tensor:
        return self._encoder_stack(l_stream, "lect", self.cfg.n_lect_enc, mask, train, rng)

    def decode_exercise(self, e_agg: Tensor, h: Tensor, mask, train=False, rng=None) -> Tensor:
        x = e_agg
        for i in range(self.cfg.n_ex_dec):
            blk = f"dec.{i}"
            attn = nc.multi_head_attention(x, x, x, mask, self.cfg.heads, self._attn_params(f"{blk}.attn"))
            attn = self._drop(attn, train, rng)
            x = nc.layer_norm(x + attn, self._p(f"{blk}.ln1.g"), self._p(f"{blk}.ln1.b"))
            cross = nc.multi_head_attention(x, h, h, mask, self.cfg.heads, self._attn_params(f"{blk}.xattn"))
            cross = self._drop(cross, train, rng)
            x = nc.layer_norm(x + cross, self._p(f"{blk}.ln2.g"), self._p(f"{blk}.ln2.b"))
            ff = nc.feed_forward(
                x,
                self._p(f"{blk}.ffn.l1.w"), self._p(f"{blk}.ffn.l1.b"),
                self._p(f"{blk}.ffn.l2.w"), self._p(f"{blk}.ffn.l2.b"),
            )
            ff = self._drop(ff, train, rng)
            x = nc.layer_norm(x + ff, self._p(f"{blk}.ln3.g"), self._p(f"{blk}.ln3.b"))
        return x

    def _drop(self, x: Tensor, train: bool, rng) -> Tensor:
        if train and self.cfg.dropout > 0.0:
            return nc.dropout(x, self.cfg.dropout, rng)
        return x

    # ---------------------------------------------------------------- pooling

    def _pool_weights_dense(self, seq: Tensor, queries: Tensor) -> Tensor:
        """Raw (unnormalized) pooling weights for every (query i, step j)."""
        d, hidden = self.cfg.d_model, self.cfg.pool_hidden
        B, W = seq.shape[0], seq.shape[1]
        w1 = self._p("pool.l1.w")
        a_seq = seq @ w1[0:d]  # key-side term, [B,W,h]
        a_query = queries @ w1[d : 2 * d]  # query-side term, [B,W,h]
        prod = seq.reshape(B, 1, W, d) * queries.reshape(B, W, 1, d)
        cross = prod @ w1[2 * d : 3 * d]  # [B,W,W,h]
        hidden_act = nc.gelu(
            cross + a_seq.reshape(B, 1, W, hidden) + a_query.reshape(B, W, 1, hidden)
            + self._p("pool.l1.b")
        )
        scores = nc.linear(hidden_act, self._p("pool.l2.w"), self._p("pool.l2.b"))
        return scores.reshape(B, W, W)

    def pool_dense(self, seq: Tensor, queries: Tensor, pool_mask: np.ndarray) -> Tensor:
        weights = self._pool_weights_dense(seq, queries) * Tensor(pool_mask.astype(self.dtype))
        return weights @ seq

    def attention_pool(self, seq: Tensor, query: Tensor, valid: np.ndarray) -> Tensor:
        """Collapse [W, d] steps to one vector with query-conditioned weights.

        Weight_j = MLP([S_j ; q ; S_j * q]); invalid steps get weight 0 and the
        pooled vector is the plain weighted sum (no softmax normalization).
        """
        valid = np.asarray(valid).astype(self.dtype)
        if valid.sum() == 0:
            raise ValueError("attention_pool needs at least one valid step")
        W, d = seq.shape
        q_rows = query.reshape(1, d) * Tensor(np.ones((W, 1), dtype=self.dtype))
        feats = nc.concat([seq, q_rows, seq * q_rows], axis=-1)
        hidden = nc.gelu(nc.linear(feats, self._p("pool.l1.w"), self._p("pool.l1.b")))
        scores = nc.linear(hidden, self._p("pool.l2.w"), self._p("pool.l2.b"))  # [W,1]
        weights = scores * Tensor(valid[:, None])
        return (weights.swapaxes(0, 1) @ seq).reshape(d)

    # ------------------------------------------------------------------- gru

    def gru_hidden_states(self, r_agg: Tensor, valid: np.ndarray) -> Tensor:
        """Hidden state after each step; padding steps carry the state over."""
        B, W, d = r_agg.shape
        params = self._gru_params()
        h = Tensor(np.zeros((B, d), dtype=self.dtype))
        states = []
        for t in range(W):
            x_t = r_agg[:, t, :]
            gate = Tensor(valid[:, t : t + 1].astype(self.dtype))
            h = gate * nc.gru_cell(x_t, h, params) + (1.0 - gate) * h
            states.append(h)
        return nc.stack(states, axis=1)

    def gru_summary(self, r_agg: Tensor, valid: np.ndarray) -> Tensor:
        """Final hidden state of the response-stream GRU (padding skipped)."""
        return self.gru_hidden_states(r_agg, valid)[:, -1, :]

    # ---------------------------------------------------------------- forward

    def forward(
        self,
        batch: FrameBatch,
        train: bool = False,
        rng: np.random.Generator | None = None,
        stream_deltas: tuple[Tensor, Tensor, Tensor] | None = None,
    ) -> Tensor:
        """Per-position correctness probabilities, shape [B, W]."""
        E, R, L, content_e = self.embed_streams(batch)
        if stream_deltas is not None:
            dE, dR, dL = stream_deltas
            E, R, L = E + dE, R + dR, L + dL
        E = self._drop(E, train, rng)
        R = self._drop(R, train, rng)
        L = self._drop(L, train, rng)
        attn_mask, pool_mask = self._masks(batch)
        e_agg = self.aggregate(E)
        r_agg = self.aggregate(R)
        h_user = self.encode_user(r_agg, attn_mask, train, rng)
        h_lect = self.encode_lecture(L, attn_mask, train, rng)
        decoded = self.decode_exercise(e_agg, h_user, attn_mask, train, rng)
        gru_states = self.gru_hidden_states(r_agg, batch.valid)
        pooled_dec = self.pool_dense(decoded, content_e, pool_mask)
        pooled_lect = self.pool_dense(h_lect, content_e, pool_mask)
        feats = nc.concat(
            [pooled_dec, pooled_lect, gru_states, decoded, Tensor(batch.glob.astype(self.dtype))],
            axis=-1,
        )
        h1 = nc.gelu(nc.linear(feats, self._p("head.l1.w"), self._p("head.l1.b")))
        h1 = self._drop(h1, train, rng)
        h2 = nc.gelu(nc.linear(h1, self._p("head.l2.w"), self._p("head.l2.b")))
        logits = nc.linear(h2, self._p("head.l3.w"), self._p("head.l3.b"))
        B, W = batch.valid.shape
        return nc.sigmoid(logits.reshape(B, W))

    def loss(
        self,
        batch: FrameBatch,
        train: bool = False,
        rng: np.random.Generator | None = None,
        stream_deltas: tuple[Tensor, Tensor, Tensor] | None = None,
    ) -> tuple[Tensor, Tensor]:
        """Mean BCE over every valid question position."""
        probs = self.forward(batch, train=train, rng=rng, stream_deltas=stream_deltas)
        targets = np.where(batch.valid > 0, batch.label, 0).astype(self.dtype)
        loss = nc.bce_loss(probs, targets, weights=batch.valid)
        return loss, probs

    def predict(self, frame: LocalFeatureFrame) -> float:
        """Probability that the target (last valid step) is answered correctly."""
        if frame.valid[-1] != 1:
            raise ValueError("frame target must sit at the final window slot")
        return float(self.forward(stack_frames([frame])).data[0, -1])

    def predict_batch(self, frames: list[LocalFeatureFrame]) -> np.ndarray:
        batch = stack_frames(frames)
        if np.any(batch.valid[:, -1] != 1):
            raise ValueError("every frame target must sit at the final window slot")
        return self.forward(batch).data[:, -1].astype(np.float64)

    # ------------------------------------------------------------ persistence

    def config_meta(self) -> dict[str, str]:
        meta = {
            "model" : "local",
            "cfg.d_model": str(self.cfg.d_model),
            "cfg.n_user_enc": str(self.cfg.n_user_enc),
            "cfg.n_ex_dec": str(self.cfg.n_ex_dec),
            "cfg.n_lect_enc": str(self.cfg.n_lect_enc),
            "cfg.heads": str(self.cfg.heads),
            "cfg.window": str(self.cfg.window),
            "cfg.dropout": repr(self.cfg.dropout),
            "cfg.agg_window": str(self.cfg.agg_window),
            "cfg.agg_layers": str(self.cfg.agg_layers),
            "cfg.ffn_mult": str(self.cfg.ffn_mult),
            "cfg.pool_hidden": str(self.cfg.pool_hidden),
            "cfg.head_hidden": f"{self.cfg.head_hidden[0]},{self.cfg.head_hidden[1]}",
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
    def load(cls, path) -> tuple["LocalModel", dict[str, str]]:
        arrays, meta = nc.load_arrays(path)
        if meta.get("model") != "local":
            raise ValueError(f"{path} is not a local-model checkpoint")
        h1, h2 = meta["cfg.head_hidden"].split(",")
        cfg = LocalConfig(
            d_model=int(meta["cfg.d_model"]),
            n_user_enc=int(meta["cfg.n_user_enc"]),
            n_ex_dec=int(meta["cfg.n_ex_dec"]),
            n_lect_enc=int(meta["cfg.n_lect_enc"]),
            heads=int(meta["cfg.heads"]),
            window=int(meta["cfg.window"]),
            dropout=float(meta["cfg.dropout"]),
            agg_window=int(meta["cfg.agg_window"]),
            agg_layers=int(meta["cfg.agg_layers"]),
            ffn_mult=int(meta["cfg.ffn_mult"]),
            pool_hidden=int(meta["cfg.pool_hidden"]),
            head_hidden=(int(h1), int(h2)),
            dtype=meta["cfg.dtype"],
        )
        vocab = LocalVocab.from_meta(meta)
        model = cls(cfg, vocab, rng=np.random.default_rng(0))
        model.params.load_state_dict(arrays)
        return model, meta
