"""Optimization loops for both models.

The windowed model trains with AdamW under a Noam-style schedule, random
response masking, and optional adversarial fine-tuning on the embedded
streams; the recurrent model trains with plain Adam at constant rate over
truncated-backprop segments. Everything is seed-deterministic: identical
(seed, config, data) reproduce identical loss traces and checkpoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .datamodel import UserHistory
from .features import (
    FrameBatch,
    FrameBuilder,
    LocalFeatureFrame,
    RESP_MASK,
    SequenceBatch,
    UserFeatureTable,
    stack_frames,
    stack_tables,
)
from .muse_global import GlobalConfig, GlobalModel
from .muse_local import LocalConfig, LocalModel, LocalVocab
from .numcore import ParamStore, Tensor

log = logging.getLogger("muse.training")


@dataclass(slots=True)
class TrainConfig:
    lr_base: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.001  # local model; the global model trains with 0
    batch_size: int = 2048
    warmup: int = 8000
    epochs: int = 3
    max_steps: int = 0  # 0 = no cap
    ram_ratio: float = 0.25
    grad_clip: float = 1.0
    window_stride: int = 0  # 0 = window // 2
    adv_steps: int = 3
    adv_step_size: float = 0.01
    adv_epsilon: float = 0.3
    adv_extra_steps: int = 10000
    checkpoint_every: int = 0  # 0 = final checkpoint only
    seed: int = 0

    def validate(self) -> None:
        if min(self.lr_base, self.beta1, self.beta2) <= 0:
            raise ValueError("rates must be positive")
        if not 0.0 <= self.ram_ratio <= 1.0:
            raise ValueError("ram_ratio must lie in [0, 1]")
        if self.batch_size < 1 or self.warmup < 1 or self.epochs < 1:
            raise ValueError("batch_size, warmup, and epochs must be positive")

    @classmethod
    def desk_scale(cls) -> "TrainConfig":
        return cls(batch_size=64, warmup=100, adv_extra_steps=60)


def noam_lr(step: int, warmup: int, d_model: int, lr_base: float) -> float:
    """Noam schedule normalized so the peak equals lr_base at step = warmup."""
    if step < 1:
        raise ValueError("schedule steps start at 1")
    raw = d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)
    peak = d_model ** -0.5 * warmup ** -0.5
    return lr_base * raw / peak


class AdamW:
    """Bias-corrected Adam with decoupled weight decay on the decay group."""

    EPS = 1e-8

    def __init__(self, store: ParamStore, cfg: TrainConfig, weight_decay: float | None = None):
        self.store = store
        self.beta1 = cfg.beta1
        self.beta2 = cfg.beta2
        self.weight_decay = cfg.weight_decay if weight_decay is None else weight_decay
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in store}
        self.v = {p.name: np.zeros_like(p.data) for p in store}

    def step(self, lr: float, grad_scale: float = 1.0) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.store:
            g = p.grad
            if g is None:
                continue
            if grad_scale != 1.0:
                g = g * grad_scale
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.EPS)
            if self.weight_decay and p.decay:
                update = update + self.weight_decay * p.data
            p.data -= (lr * update).astype(p.data.dtype)


def adamw_update(store: ParamStore, optimizer: AdamW, lr: float, grad_scale: float = 1.0) -> None:
    """One optimizer step over ``store`` using accumulated gradients."""
    if optimizer.store is not store:
        raise ValueError("optimizer is bound to a different parameter store")
    optimizer.step(lr, grad_scale=grad_scale)


def clip_gradients(store: ParamStore, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    total = 0.0
    for p in store:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in store:
            if p.grad is not None:
                p.grad *= scale
    return norm


# ------------------------------------------------------------ response masking


def apply_ram(
    frame: LocalFeatureFrame, ratio: float, rng: np.random.Generator
) -> tuple[LocalFeatureFrame, np.ndarray]:
    """Randomly replace observed response tokens with MASK.

    Only valid historical responses (token 0/1) are candidates; exercise
    features, labels, and the validity mask are never touched. Returns the
    masked frame and the boolean mask of affected positions.
    """
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    candidates = (frame.valid > 0) & ((frame.resp_token == 0) | (frame.resp_token == 1))
    hit = candidates & (rng.random(frame.resp_token.shape) < ratio)
    masked = replace(frame, resp_token=np.where(hit, RESP_MASK, frame.resp_token).astype(np.int32))
    return masked, hit


def apply_ram_batch(
    batch: FrameBatch, ratio: float, rng: np.random.Generator
) -> tuple[FrameBatch, np.ndarray]:
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("ratio must lie in [0, 1]")
    candidates = (batch.valid > 0) & ((batch.resp_token == 0) | (batch.resp_token == 1))
    hit = candidates & (rng.random(batch.resp_token.shape) < ratio)
    masked = replace(batch, resp_token=np.where(hit, RESP_MASK, batch.resp_token).astype(np.int32))
    return masked, hit


# ------------------------------------------------------------------ local data


@dataclass(slots=True)
class LocalTrainData:
    """Frame windows over training users' feature tables."""

    builder: FrameBuilder
    tables: list[UserFeatureTable]
    window: int
    stride: int
    vocab: LocalVocab
    windows: list[tuple[int, int]] = field(default_factory=list)  # (table idx, end step)
    max_row_id: int = -1
    n_rows: int = 0

    @classmethod
    def build(
        cls,
        histories: list[UserHistory],
        builder: FrameBuilder,
        window: int,
        stride: int,
    ) -> "LocalTrainData":
        tables = [builder.user_table(h) for h in histories if len(h.rows) > 0]
        tables = [t for t in tables if len(t) > 0]
        data = cls(
            builder=builder,
            tables=tables,
            window=window,
            stride=max(1, stride),
            vocab=vocab_from_tables(builder, tables),
        )
        for ti, table in enumerate(tables):
            end = len(table) - 1
            while end >= 0:
                data.windows.append((ti, end))
                end -= data.stride
            data.max_row_id = max(data.max_row_id, int(table.row_ids.max()))
            data.n_rows += len(table)
        return data

    def batch(self, picks: list[tuple[int, int]]) -> FrameBatch:
        frames = [
            self.builder.frame_from_table(self.tables[ti], end, self.window) for ti, end in picks
        ]
        return stack_frames(frames)


@dataclass(slots=True)
class TrainRecord:
    step: int
    lr: float
    loss: float


def write_training_log(history: list[TrainRecord], path: str | Path) -> None:
    """One ``step,lr,loss`` line per optimizer step."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("step,lr,loss\n")
        for rec in history:
            handle.write(f"{rec.step},{rec.lr:.8g},{rec.loss:.8g}\n")


def _maybe_checkpoint(model, name: str, step: int, cfg: TrainConfig, out_dir) -> None:
    if out_dir is not None and cfg.checkpoint_every > 0 and step % cfg.checkpoint_every == 0:
        model.save(Path(out_dir) / f"{name}.{step}.ckpt")


# ------------------------------------------------------------- local training


def train_local(
    data: LocalTrainData,
    local_cfg: LocalConfig,
    train_cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> tuple[LocalModel, list[TrainRecord]]:
    """Train the windowed model from scratch; returns (model, loss history)."""
    train_cfg.validate()
    if not data.windows:
        raise ValueError("empty dataset: no training windows")
    model = LocalModel(local_cfg, data.vocab, rng=np.random.default_rng([train_cfg.seed, 11]))
    optimizer = AdamW(model.params, train_cfg)
    order_rng = np.random.default_rng([train_cfg.seed, 12])
    ram_rng = np.random.default_rng([train_cfg.seed, 13])
    drop_rng = np.random.default_rng([train_cfg.seed, 14])

    history: list[TrainRecord] = []
    step = 0
    for epoch in range(train_cfg.epochs):
        perm = order_rng.permutation(len(data.windows))
        for lo in range(0, len(perm), train_cfg.batch_size):
            picks = [data.windows[i] for i in perm[lo : lo + train_cfg.batch_size]]
            batch = data.batch(picks)
            if train_cfg.ram_ratio > 0:
                batch, _ = apply_ram_batch(batch, train_cfg.ram_ratio, ram_rng)
            model.params.zero_grad()
            loss, _ = model.loss(batch, train=True, rng=drop_rng)
            loss.backward()
            clip_gradients(model.params, train_cfg.grad_clip)
            step += 1
            lr = noam_lr(step, train_cfg.warmup, local_cfg.d_model, train_cfg.lr_base)
            optimizer.step(lr)
            history.append(TrainRecord(step=step, lr=lr, loss=float(loss.data)))
            _maybe_checkpoint(model, "local", step, train_cfg, checkpoint_dir)
            if train_cfg.max_steps and step >= train_cfg.max_steps:
                log.info("local training stopped at step cap %d", step)
                return model, history
        log.info("local epoch %d done, step %d, loss %.4f", epoch + 1, step, history[-1].loss)
    return model, history


@dataclass(slots=True)
class AdvBatchRecord:
    clean_loss: float
    ascent_loss: float
    max_delta_norm: float


def adversarial_finetune(
    model: LocalModel,
    data: LocalTrainData,
    train_cfg: TrainConfig,
    start_step: int = 0,
    checkpoint_dir: str | Path | None = None,
) -> tuple[list[TrainRecord], list[AdvBatchRecord]]:
    """Embedding-space adversarial fine-tuning (ascend-and-average).

    Per batch: start from a zero perturbation on the three post-projection
    streams; K times evaluate the loss at (embeddings + delta), accumulate
    parameter gradients, then ascend delta along its normalized gradient and
    project each sample's per-stream perturbation onto the epsilon ball.
    The averaged parameter gradient is applied once per batch.
    """
    train_cfg.validate()
    if not data.windows:
        raise ValueError("empty dataset: no fine-tuning windows")
    optimizer = AdamW(model.params, train_cfg)
    order_rng = np.random.default_rng([train_cfg.seed, 21])
    ram_rng = np.random.default_rng([train_cfg.seed, 22])
    drop_rng = np.random.default_rng([train_cfg.seed, 23])
    d = model.cfg.d_model
    eps = train_cfg.adv_epsilon
    history: list[TrainRecord] = []
    records: list[AdvBatchRecord] = []
    step = start_step
    done = 0
    while done < train_cfg.adv_extra_steps:
        perm = order_rng.permutation(len(data.windows))
        for lo in range(0, len(perm), train_cfg.batch_size):
            if done >= train_cfg.adv_extra_steps:
                break
            picks = [data.windows[i] for i in perm[lo : lo + train_cfg.batch_size]]
            batch = data.batch(picks)
            if train_cfg.ram_ratio > 0:
                batch, _ = apply_ram_batch(batch, train_cfg.ram_ratio, ram_rng)
            B, W = batch.valid.shape
            deltas = [np.zeros((B, W, d), dtype=model.dtype) for _ in range(3)]
            model.params.zero_grad()
            clean_loss = None
            ascent_loss = None
            max_norm = 0.0
            for k in range(train_cfg.adv_steps):
                leaves = [Tensor(dv.copy(), requires_grad=True) for dv in deltas]
                loss, _ = model.loss(
                    batch, train=True, rng=drop_rng, stream_deltas=tuple(leaves)
                )
                loss.backward()
                if k == 0:
                    clean_loss = float(loss.data)
                ascent_loss = float(loss.data)
                if k < train_cfg.adv_steps - 1:
                    for i, leaf in enumerate(leaves):
                        g = leaf.grad
                        gn = np.sqrt((g.astype(np.float64) ** 2).sum(axis=(1, 2), keepdims=True))
                        ascended = deltas[i] + train_cfg.adv_step_size * g / np.maximum(gn, 1e-12)
                        dn = np.sqrt(
                            (ascended.astype(np.float64) ** 2).sum(axis=(1, 2), keepdims=True)
                        )
                        scale = np.minimum(1.0, eps / np.maximum(dn, 1e-12))
                        deltas[i] = (ascended * scale).astype(model.dtype)
                norms = [
                    float(np.sqrt((dv.astype(np.float64) ** 2).sum(axis=(1, 2))).max())
                    for dv in deltas
                ]
                max_norm = max(max_norm, max(norms))
            clip_gradients(model.params, train_cfg.grad_clip * train_cfg.adv_steps)
            step += 1
            lr = noam_lr(step, train_cfg.warmup, model.cfg.d_model, train_cfg.lr_base)
            optimizer.step(lr, grad_scale=1.0 / train_cfg.adv_steps)
            history.append(TrainRecord(step=step, lr=lr, loss=ascent_loss))
            records.append(
                AdvBatchRecord(clean_loss=clean_loss, ascent_loss=ascent_loss, max_delta_norm=max_norm)
            )
            _maybe_checkpoint(model, "local", step, train_cfg, checkpoint_dir)
            done += 1
    return history, records


# ------------------------------------------------------------ global training


@dataclass(slots=True)
class GlobalTrainData:
    tables: list[UserFeatureTable]
    vocab: LocalVocab
    max_row_id: int = -1
    n_rows: int = 0

    @classmethod
    def build(cls, histories: list[UserHistory], builder: FrameBuilder) -> "GlobalTrainData":
        tables = [builder.user_table(h) for h in histories if len(h.rows) > 0]
        tables = [t for t in tables if len(t) > 0]
        data = cls(tables=tables, vocab=vocab_from_tables(builder, tables))
        for t in tables:
            data.max_row_id = max(data.max_row_id, int(t.row_ids.max()))
            data.n_rows += len(t)
        return data


def _slice_steps(batch: SequenceBatch, lo: int, hi: int) -> SequenceBatch:
    kwargs = {}
    for name in SequenceBatch.__dataclass_fields__:
        if name == "length":
            continue
        kwargs[name] = getattr(batch, name)[:, lo:hi]
    return SequenceBatch(length=hi - lo, **kwargs)


def train_global(
    data: GlobalTrainData,
    global_cfg: GlobalConfig,
    train_cfg: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> tuple[GlobalModel, list[TrainRecord]]:
    """Train the recurrent model: plain Adam (no decay), constant rate,
    truncated backpropagation with state carried across segments."""
    train_cfg.validate()
    if not data.tables:
        raise ValueError("empty dataset: no user sequences")
    model = GlobalModel(global_cfg, data.vocab, rng=np.random.default_rng([train_cfg.seed, 31]))
    optimizer = AdamW(model.params, train_cfg, weight_decay=0.0)
    order_rng = np.random.default_rng([train_cfg.seed, 32])
    drop_rng = np.random.default_rng([train_cfg.seed, 33])
    history: list[TrainRecord] = []
    step = 0
    for epoch in range(train_cfg.epochs):
        perm = order_rng.permutation(len(data.tables))
        for lo in range(0, len(perm), train_cfg.batch_size):
            tables = [data.tables[i] for i in perm[lo : lo + train_cfg.batch_size]]
            batch = stack_tables(tables)
            carried: list[np.ndarray] | None = None
            for seg_lo in range(0, batch.length, global_cfg.bptt):
                segment = _slice_steps(batch, seg_lo, min(batch.length, seg_lo + global_cfg.bptt))
                if segment.valid.sum() == 0:
                    break
                model.params.zero_grad()
                loss, _, carried = model.loss(segment, train=True, rng=drop_rng, h0=carried)
                loss.backward()
                clip_gradients(model.params, train_cfg.grad_clip)
                step += 1
                optimizer.step(train_cfg.lr_base)
                history.append(TrainRecord(step=step, lr=train_cfg.lr_base, loss=float(loss.data)))
                _maybe_checkpoint(model, "global", step, train_cfg, checkpoint_dir)
                if train_cfg.max_steps and step >= train_cfg.max_steps:
                    log.info("global training stopped at step cap %d", step)
                    return model, history
        log.info("global epoch %d done, step %d, loss %.4f", epoch + 1, step, history[-1].loss)
    return model, history


# ----------------------------------------------------------------- vocabulary


def vocab_from_tables(builder: FrameBuilder, tables: list[UserFeatureTable]) -> LocalVocab:
    """Embedding sizes from question metadata plus the observed containers."""
    max_container = 0
    for t in tables:
        if len(t):
            max_container = max(max_container, int(t.container.max()) - 1)
    return LocalVocab.from_metadata(builder.questions, max_container=max_container)
