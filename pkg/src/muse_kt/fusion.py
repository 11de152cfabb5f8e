"""Out-of-fold stacking of component probabilities with gradient-boosted
regression trees on logistic loss.

Trees grow leaf-wise by exact greedy splits over presorted feature values
(leaf value = -G / (H + lambda)); boosting stops early when validation AUC
has not improved for a fixed number of rounds. No row is ever scored by a
blender that saw it during tree fitting.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .metrics import SingleClassError, roc_auc


class FusionProvenanceError(RuntimeError):
    """A component model saw blend rows during its own training."""


@dataclass(slots=True)
class GBDTConfig:
    learning_rate: float = 0.1
    max_leaves: int = 31
    max_depth: int = 6
    reg_lambda: float = 1.0
    n_rounds: int = 1000
    early_stopping: int = 100
    min_leaf: int = 20

    def validate(self) -> None:
        if self.max_leaves < 2 or self.max_depth < 1:
            raise ValueError("trees need at least two leaves and depth one")
        if self.n_rounds < 1 or self.early_stopping < 1 or self.min_leaf < 1:
            raise ValueError("round counts and min_leaf must be positive")


@dataclass(slots=True)
class Tree:
    """Flattened binary tree; feature = -1 marks a leaf."""

    feature: np.ndarray  # int32 [nodes]
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray
    value: np.ndarray  # float64 leaf increments (log-odds scale)

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.flatnonzero(active)
            feats = self.feature[node[idx]]
            goes_left = x[idx, feats] < self.threshold[node[idx]]
            node[idx] = np.where(goes_left, self.left[node[idx]], self.right[node[idx]])
            active = self.feature[node] >= 0
        return self.value[node]

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def depth(self) -> int:
        depths = np.zeros(len(self.feature), dtype=np.int64)
        best = 0
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
            else:
                best = max(best, int(depths[i]))
        return best


@dataclass(slots=True)
class BlenderModel:
    """An ordered tree ensemble; only the first ``best_iteration`` trees score."""

    base_score: float
    learning_rate: float
    trees: list[Tree] = field(default_factory=list)
    best_iteration: int = 0  # number of trees actually used
    valid_history: list[float] = field(default_factory=list)

    def raw_scores(self, x: np.ndarray, n_trees: int | None = None) -> np.ndarray:
        used = self.best_iteration if n_trees is None else n_trees
        total = np.full(len(x), self.base_score, dtype=np.float64)
        for tree in self.trees[:used]:
            total += self.learning_rate * tree.predict(x)
        return total

    def predict(self, x: np.ndarray) -> np.ndarray:
        return expit(self.raw_scores(x))

    # -------------------------------------------------------------- text dump

    def save(self, path: str | Path) -> None:
        lines = [
            "blender v1",
            f"base_score {self.base_score!r}",
            f"learning_rate {self.learning_rate!r}",
            f"best_iteration {self.best_iteration}",
            f"n_trees {len(self.trees)}",
        ]
        for i, tree in enumerate(self.trees):
            lines.append(f"tree {i} {len(tree.feature)}")
            for n in range(len(tree.feature)):
                lines.append(
                    f"node {n} {int(tree.feature[n])} {float(tree.threshold[n])!r} "
                    f"{int(tree.left[n])} {int(tree.right[n])} {float(tree.value[n])!r}"
                )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "BlenderModel":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != "blender v1":
            raise ValueError(f"{path} is not a blender dump")
        header = dict(line.split(" ", 1) for line in lines[1:5])
        model = cls(
            base_score=float(header["base_score"]),
            learning_rate=float(header["learning_rate"]),
            best_iteration=int(header["best_iteration"]),
        )
        cursor = 5
        n_trees = int(header["n_trees"])
        for _ in range(n_trees):
            _, _, n_nodes_text = lines[cursor].split()
            n_nodes = int(n_nodes_text)
            cursor += 1
            feature = np.zeros(n_nodes, dtype=np.int32)
            threshold = np.zeros(n_nodes, dtype=np.float64)
            left = np.zeros(n_nodes, dtype=np.int32)
            right = np.zeros(n_nodes, dtype=np.int32)
            value = np.zeros(n_nodes, dtype=np.float64)
            for _ in range(n_nodes):
                parts = lines[cursor].split()
                n = int(parts[1])
                feature[n] = int(parts[2])
                threshold[n] = float(parts[3])
                left[n] = int(parts[4])
                right[n] = int(parts[5])
                value[n] = float(parts[6])
                cursor += 1
            model.trees.append(Tree(feature, threshold, left, right, value))
        return model


# ----------------------------------------------------------------- tree fitting


@dataclass(slots=True)
class _GrowNode:
    mask: np.ndarray
    depth: int
    value: float
    feature: int = -1
    threshold: float = 0.0
    gain: float = 0.0
    left_mask: np.ndarray | None = None


def _best_split(
    mask: np.ndarray,
    orders: list[np.ndarray],
    x: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    cfg: GBDTConfig,
) -> tuple[float, int, float, np.ndarray | None]:
    lam = cfg.reg_lambda
    total_g = float(g[mask].sum())
    total_h = float(h[mask].sum())
    parent = total_g * total_g / (total_h + lam)
    best = (0.0, -1, 0.0, None)
    for f, order in enumerate(orders):
        rows = order[mask[order]]
        if len(rows) < 2 * cfg.min_leaf:
            continue
        values = x[rows, f]
        gs = np.cumsum(g[rows])
        hs = np.cumsum(h[rows])
        counts = np.arange(1, len(rows) + 1)
        ok = (
            (values[:-1] < values[1:])
            & (counts[:-1] >= cfg.min_leaf)
            & (len(rows) - counts[:-1] >= cfg.min_leaf)
        )
        if not ok.any():
            continue
        gl, hl = gs[:-1], hs[:-1]
        gr, hr = total_g - gl, total_h - hl
        gains = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
        gains = np.where(ok, gains, -np.inf)
        pick = int(np.argmax(gains))
        if gains[pick] > best[0]:
            threshold = 0.5 * (values[pick] + values[pick + 1])
            left_mask = np.zeros_like(mask)
            left_mask[rows[: pick + 1]] = True
            best = (float(gains[pick]), f, float(threshold), left_mask)
    return best


def _fit_tree(x: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: GBDTConfig) -> Tree:
    lam = cfg.reg_lambda
    orders = [np.argsort(x[:, f], kind="mergesort") for f in range(x.shape[1])]

    def leaf_value(mask: np.ndarray) -> float:
        return float(-g[mask].sum() / (h[mask].sum() + lam))

    root = _GrowNode(mask=np.ones(len(x), dtype=bool), depth=0, value=leaf_value(np.ones(len(x), dtype=bool)))
    nodes = [root]
    children: dict[int, tuple[int, int]] = {}
    heap: list[tuple[float, int]] = []
    counter = 0

    def consider(node_id: int) -> None:
        nonlocal counter
        node = nodes[node_id]
        if node.depth >= cfg.max_depth:
            return
        gain, feat, thr, left_mask = _best_split(node.mask, orders, x, g, h, cfg)
        if feat < 0 or gain <= 0.0:
            return
        node.gain, node.feature, node.threshold, node.left_mask = gain, feat, thr, left_mask
        heapq.heappush(heap, (-gain, counter, node_id))
        counter += 1

    consider(0)
    n_leaves = 1
    while heap and n_leaves < cfg.max_leaves:
        _, _, node_id = heapq.heappop(heap)
        node = nodes[node_id]
        if node.feature < 0:
            continue
        left_mask = node.left_mask
        right_mask = node.mask & ~left_mask
        left_id, right_id = len(nodes), len(nodes) + 1
        nodes.append(_GrowNode(mask=left_mask, depth=node.depth + 1, value=leaf_value(left_mask)))
        nodes.append(_GrowNode(mask=right_mask, depth=node.depth + 1, value=leaf_value(right_mask)))
        children[node_id] = (left_id, right_id)
        node.left_mask = None
        n_leaves += 1
        consider(left_id)
        consider(right_id)

    feature = np.full(len(nodes), -1, dtype=np.int32)
    threshold = np.zeros(len(nodes), dtype=np.float64)
    left = np.zeros(len(nodes), dtype=np.int32)
    right = np.zeros(len(nodes), dtype=np.int32)
    value = np.array([n.value for n in nodes], dtype=np.float64)
    for node_id, (l, r) in children.items():
        feature[node_id] = nodes[node_id].feature
        threshold[node_id] = nodes[node_id].threshold
        left[node_id] = l
        right[node_id] = r
    return Tree(feature, threshold, left, right, value)


def _safe_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    try:
        return roc_auc(scores, labels)
    except SingleClassError:
        return 0.5


def fit_gbdt(
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_valid: np.ndarray,
    y_valid: np.ndarray,
    cfg: GBDTConfig | None = None,
) -> BlenderModel:
    """Boost regression trees on logistic loss with AUC early stopping.

    Single-class training labels yield a constant model at the label
    log-odds (clamped), with no trees.
    """
    cfg = cfg or GBDTConfig()
    cfg.validate()
    x_train = np.asarray(x_train, dtype=np.float64)
    x_valid = np.asarray(x_valid, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    y_valid = np.asarray(y_valid, dtype=np.float64)
    if len(x_train) == 0 or len(x_valid) == 0:
        raise ValueError("fit_gbdt needs at least one train row and one valid row")
    mean = float(np.clip(y_train.mean(), 1e-6, 1.0 - 1e-6))
    base = math.log(mean / (1.0 - mean))
    model = BlenderModel(base_score=base, learning_rate=cfg.learning_rate)
    if y_train.min() == y_train.max():
        return model

    train_score = np.full(len(x_train), base, dtype=np.float64)
    valid_score = np.full(len(x_valid), base, dtype=np.float64)
    best_metric = -np.inf
    best_round = -1
    for round_no in range(cfg.n_rounds):
        p = expit(train_score)
        g = p - y_train
        h = p * (1.0 - p)
        tree = _fit_tree(x_train, g, h, cfg)
        model.trees.append(tree)
        train_score += cfg.learning_rate * tree.predict(x_train)
        valid_score += cfg.learning_rate * tree.predict(x_valid)
        metric = _safe_auc(valid_score, y_valid)
        model.valid_history.append(metric)
        if metric > best_metric:
            best_metric = metric
            best_round = round_no
        if round_no - best_round >= cfg.early_stopping:
            break
    model.best_iteration = best_round + 1
    return model


def blend_predict(model: BlenderModel, p_local: np.ndarray, p_global: np.ndarray) -> np.ndarray:
    """Fused probability from the two component probabilities."""
    x = np.column_stack([np.asarray(p_local, dtype=np.float64), np.asarray(p_global, dtype=np.float64)])
    return model.predict(x)


# ------------------------------------------------------------------- stacking


@dataclass(slots=True)
class BlendRow:
    row_id: int
    p_local: float
    p_global: float
    label: int
    fold: int = -1


def make_folds(n_rows: int, k: int, seed: int) -> np.ndarray:
    """A seeded partition of 0..n-1 into k near-equal folds."""
    if k > n_rows:
        raise ValueError(f"cannot make {k} folds from {n_rows} rows")
    rng = np.random.default_rng([seed, 41])
    folds = np.empty(n_rows, dtype=np.int32)
    folds[rng.permutation(n_rows)] = np.arange(n_rows) % k
    return folds


@dataclass(slots=True)
class FusionReport:
    auc_local: float
    auc_global: float
    auc_fused: float
    n_rows: int
    k_folds: int

    def lines(self) -> list[str]:
        return [
            f"auc_local = {self.auc_local:.6f}",
            f"auc_global = {self.auc_global:.6f}",
            f"auc_fused = {self.auc_fused:.6f}",
            f"n_rows = {self.n_rows}",
            f"k_folds = {self.k_folds}",
        ]


def run_fusion(
    rows: list[BlendRow],
    k: int = 5,
    seed: int = 0,
    cfg: GBDTConfig | None = None,
    max_train_row_id: int | None = None,
) -> tuple[np.ndarray, list[BlenderModel], FusionReport]:
    """Out-of-fold stacking over blend rows.

    Each fold is scored by a blender fitted on the other k-1 folds (the held
    fold only drives early stopping). ``max_train_row_id`` is the provenance
    guard: components must have trained strictly before the blend split.
    """
    if not rows:
        raise ValueError("no blend rows")
    min_blend_row = min(r.row_id for r in rows)
    if max_train_row_id is not None and max_train_row_id >= min_blend_row:
        raise FusionProvenanceError(
            f"component training touched row {max_train_row_id}, "
            f"but the blend split starts at row {min_blend_row}"
        )
    x = np.array([[r.p_local, r.p_global] for r in rows], dtype=np.float64)
    y = np.array([r.label for r in rows], dtype=np.float64)
    folds = make_folds(len(rows), k, seed)
    for r, f in zip(rows, folds):
        r.fold = int(f)
    oof = np.full(len(rows), np.nan, dtype=np.float64)
    models: list[BlenderModel] = []
    for f in range(k):
        hold = folds == f
        model = fit_gbdt(x[~hold], y[~hold], x[hold], y[hold], cfg)
        models.append(model)
        oof[hold] = model.predict(x[hold])
    assert not np.isnan(oof).any()
    report = FusionReport(
        auc_local=_safe_auc(x[:, 0], y),
        auc_global=_safe_auc(x[:, 1], y),
        auc_fused=_safe_auc(oof, y),
        n_rows=len(rows),
        k_folds=k,
    )
    return oof, models, report


def write_blend_predictions(rows: list[BlendRow], fused: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("row_id,p_local,p_global,p_fused,label\n")
        for r, p in zip(rows, fused):
            handle.write(f"{r.row_id},{r.p_local:.8g},{r.p_global:.8g},{p:.8g},{r.label}\n")
