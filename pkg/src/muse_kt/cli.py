"""Command-line entry point: generate, train, finetune-adv, blend, evaluate,
predict.

All behavior is a pure function of (config file, input files, seed). Keys use
a flat ``section.key = value`` text format; unknown keys are rejected with
their line number. ``--threads`` pins BLAS thread pools (set before numpy
loads), and ``MUSE_LOG`` selects the log level.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


class ConfigError(ValueError):
    """A config file key or value is invalid (message carries the line)."""


@dataclass(slots=True)
class RunConfig:
    """Top-level run settings plus one section per module."""

    seed: int = 42
    threads: int = 0  # 0 = leave BLAS pools at machine default
    data_dir: str = "data"
    out_dir: str = "out"
    eval_user_fraction: float = 0.10
    blend_fraction: float = 0.10
    fusion_folds: int = 5
    sim: object = None
    local: object = None
    glob: object = None  # section name "global." in config files
    train: object = None
    gbdt: object = None

    def finalize(self) -> "RunConfig":
        self.sim.seed = self.seed
        self.train.seed = self.seed
        return self


_TOP_KEYS = {
    "seed",
    "threads",
    "data_dir",
    "out_dir",
    "eval_user_fraction",
    "blend_fraction",
    "fusion_folds",
}
_SECTION_ATTRS = {"sim": "sim", "local": "local", "global": "glob", "train": "train", "fusion": "gbdt"}
_EXCLUDED_SECTION_KEYS = {"seed"}  # single top-level seed rules them all


def default_config() -> RunConfig:
    from .muse_global import GlobalConfig
    from .muse_local import LocalConfig
    from .fusion import GBDTConfig
    from .simgen import SimConfig
    from .training import TrainConfig

    cfg = RunConfig(
        sim=SimConfig(),
        local=LocalConfig.desk_scale(),
        glob=GlobalConfig.desk_scale(),
        train=TrainConfig.desk_scale(),
        gbdt=GBDTConfig(),
    )
    return cfg.finalize()


def _convert(raw: str, current, key: str, line_no: int):
    try:
        if isinstance(current, bool):
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes"):
                return True
            if lowered in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(part) for part in raw.split(","))
        return raw
    except ValueError:
        raise ConfigError(f"line {line_no}: bad value {raw!r} for key {key}") from None


def parse_config_text(text: str, cfg: RunConfig | None = None) -> RunConfig:
    cfg = cfg or default_config()
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {raw_line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if "." in key:
            section_name, _, attr = key.partition(".")
            attr_host = _SECTION_ATTRS.get(section_name)
            if attr_host is None:
                raise ConfigError(f"line {line_no}: unknown section {section_name!r}")
            section = getattr(cfg, attr_host)
            names = {f.name for f in dc_fields(section)} - _EXCLUDED_SECTION_KEYS
            if attr not in names:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            setattr(section, attr, _convert(value, getattr(section, attr), key, line_no))
        else:
            if key not in _TOP_KEYS:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            setattr(cfg, key, _convert(value, getattr(cfg, key), key, line_no))
    return cfg.finalize()


def load_config(path: str | None, seed: int | None, threads: int | None, out: str | None) -> RunConfig:
    cfg = default_config()
    if path is not None:
        config_path = Path(path)
        if not config_path.exists():
            raise ConfigError(f"config file not found: {config_path}")
        cfg = parse_config_text(config_path.read_text(encoding="utf-8"), cfg)
    if seed is not None:
        cfg.seed = seed
    if threads is not None:
        cfg.threads = threads
    if out is not None:
        cfg.out_dir = out
    return cfg.finalize()


# ---------------------------------------------------------------------- data


@dataclass(slots=True)
class DatasetBundle:
    """Everything the commands derive from the raw files and the config."""

    rows: list
    questions: dict
    lectures: dict
    eval_users: set
    train_rows: list
    blend_rows: list
    content_stats: object
    tag_table: object
    builder: object
    train_histories: dict
    full_train_histories: dict  # train users incl. their blend-tail rows
    eval_histories: dict


def load_dataset(cfg: RunConfig) -> DatasetBundle:
    from . import datamodel
    from .features import ContentStats, FrameBuilder, LectureTagTable
    from .simgen import INTERACTIONS_FILE, LECTURES_FILE, QUESTIONS_FILE

    data_dir = Path(cfg.data_dir)
    interactions = data_dir / INTERACTIONS_FILE
    if not interactions.exists():
        raise FileNotFoundError(f"interactions file not found: {interactions}")
    rows = datamodel.parse_interactions(interactions)
    questions = datamodel.parse_questions(data_dir / QUESTIONS_FILE)
    lectures = datamodel.parse_lectures(data_dir / LECTURES_FILE)
    user_ids = sorted({r.user_id for r in rows})
    eval_users = datamodel.holdout_users(user_ids, cfg.eval_user_fraction, cfg.seed)
    train_user_rows = [r for r in rows if r.user_id not in eval_users]
    eval_rows = [r for r in rows if r.user_id in eval_users]
    train_rows, blend_rows = datamodel.split_tail(train_user_rows, cfg.blend_fraction)
    content_stats = ContentStats.from_rows(train_rows, questions)
    tag_table = LectureTagTable.from_rows(train_rows, lectures)
    builder = FrameBuilder(questions, lectures, content_stats, tag_table)
    return DatasetBundle(
        rows=rows,
        questions=questions,
        lectures=lectures,
        eval_users=eval_users,
        train_rows=train_rows,
        blend_rows=blend_rows,
        content_stats=content_stats,
        tag_table=tag_table,
        builder=builder,
        train_histories=datamodel.group_by_user(train_rows),
        full_train_histories=datamodel.group_by_user(train_user_rows),
        eval_histories=datamodel.group_by_user(eval_rows),
    )


def latest_checkpoint(out_dir: str | Path, model: str) -> Path:
    out = Path(out_dir)
    candidates = []
    for path in out.glob(f"{model}.*.ckpt"):
        stem = path.name[len(model) + 1 : -len(".ckpt")]
        if stem.isdigit():
            candidates.append((int(stem), path))
    if not candidates:
        raise FileNotFoundError(f"no {model} checkpoint under {out}")
    return max(candidates)[1]


# ------------------------------------------------------------------ commands


def cmd_generate(cfg: RunConfig) -> dict[str, Path]:
    import logging

    from .simgen import generate

    paths = generate(cfg.sim, cfg.data_dir)
    logging.getLogger("muse.cli").info(
        "generated dataset under %s (%s)", cfg.data_dir, ", ".join(p.name for p in paths.values())
    )
    return paths


def _local_predictions_for_rows(model, builder, histories, wanted_row_ids, batch_size=256):
    """Per-target-frame inference for every question row in ``wanted_row_ids``."""
    import numpy as np

    from .features import stack_frames

    frames = []
    row_ids = []
    labels = []
    for history in histories.values():
        table = builder.user_table(history)
        for step in range(len(table)):
            rid = int(table.row_ids[step])
            if rid in wanted_row_ids:
                frames.append(builder.frame_from_table(table, step, model.cfg.window))
                row_ids.append(rid)
                labels.append(int(table.label[step]))
    probs = np.zeros(len(frames), dtype=np.float64)
    for lo in range(0, len(frames), batch_size):
        chunk = frames[lo : lo + batch_size]
        probs[lo : lo + len(chunk)] = model.predict_batch(chunk)
    return np.array(row_ids), probs, np.array(labels, dtype=np.int64)


def _global_predictions_for_rows(model, builder, histories, wanted_row_ids):
    import numpy as np

    row_ids = []
    probs = []
    labels = []
    for history in histories.values():
        table = builder.user_table(history)
        if len(table) == 0:
            continue
        p = model.forward_table(table)
        for step in range(len(table)):
            rid = int(table.row_ids[step])
            if rid in wanted_row_ids:
                row_ids.append(rid)
                probs.append(float(p[step]))
                labels.append(int(table.label[step]))
    return np.array(row_ids), np.array(probs, dtype=np.float64), np.array(labels, dtype=np.int64)


def cmd_train(cfg: RunConfig, model_name: str) -> Path:
    import logging

    from .training import (
        GlobalTrainData,
        LocalTrainData,
        train_global,
        train_local,
        write_training_log,
    )

    bundle = load_dataset(cfg)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    histories = list(bundle.train_histories.values())
    logger = logging.getLogger("muse.cli")
    if model_name == "local":
        stride = cfg.train.window_stride or cfg.local.window // 2
        data = LocalTrainData.build(histories, bundle.builder, cfg.local.window, stride)
        model, history = train_local(data, cfg.local, cfg.train, checkpoint_dir=out_dir)
    elif model_name == "global":
        data = GlobalTrainData.build(histories, bundle.builder)
        model, history = train_global(data, cfg.glob, cfg.train, checkpoint_dir=out_dir)
    else:
        raise ValueError(f"unknown model {model_name!r} (expected local or global)")
    step = history[-1].step if history else 0
    ckpt = out_dir / f"{model_name}.{step}.ckpt"
    model.save(
        ckpt,
        extra_meta={
            "train.max_row_id": str(data.max_row_id),
            "train.n_rows": str(data.n_rows),
            "train.steps": str(step),
            "train.seed": str(cfg.seed),
        },
    )
    write_training_log(history, out_dir / f"{model_name}_train_log.txt")
    logger.info("trained %s model: %d steps, final loss %.4f -> %s",
                model_name, step, history[-1].loss, ckpt)
    return ckpt


def cmd_finetune_adv(cfg: RunConfig, checkpoint: str | None = None) -> Path:
    import logging

    from .muse_local import LocalModel
    from .training import LocalTrainData, adversarial_finetune, write_training_log

    out_dir = Path(cfg.out_dir)
    ckpt_path = Path(checkpoint) if checkpoint else latest_checkpoint(out_dir, "local")
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    model, meta = LocalModel.load(ckpt_path)
    bundle = load_dataset(cfg)
    stride = cfg.train.window_stride or model.cfg.window // 2
    data = LocalTrainData.build(
        list(bundle.train_histories.values()), bundle.builder, model.cfg.window, stride
    )
    start_step = int(meta.get("train.steps", "0"))
    history, _ = adversarial_finetune(model, data, cfg.train, start_step=start_step)
    step = history[-1].step if history else start_step
    ckpt = out_dir / f"local.{step}.ckpt"
    model.save(
        ckpt,
        extra_meta={
            "train.max_row_id": meta.get("train.max_row_id", str(data.max_row_id)),
            "train.n_rows": meta.get("train.n_rows", str(data.n_rows)),
            "train.steps": str(step),
            "train.seed": str(cfg.seed),
            "train.adversarial": "1",
        },
    )
    write_training_log(history, out_dir / "local_adv_train_log.txt")
    logging.getLogger("muse.cli").info("adversarially fine-tuned -> %s", ckpt)
    return ckpt


def cmd_blend(
    cfg: RunConfig, local_ckpt: str | None = None, global_ckpt: str | None = None
) -> Path:
    import logging

    import numpy as np

    from .fusion import BlendRow, run_fusion, write_blend_predictions
    from .muse_global import GlobalModel
    from .muse_local import LocalModel

    out_dir = Path(cfg.out_dir)
    local_path = Path(local_ckpt) if local_ckpt else latest_checkpoint(out_dir, "local")
    global_path = Path(global_ckpt) if global_ckpt else latest_checkpoint(out_dir, "global")
    for path in (local_path, global_path):
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
    local_model, local_meta = LocalModel.load(local_path)
    global_model, global_meta = GlobalModel.load(global_path)
    bundle = load_dataset(cfg)
    blend_ids = {r.row_id for r in bundle.blend_rows if r.is_question}
    if not blend_ids:
        raise ValueError("blend split has no question rows")
    # Context for blend-row prediction includes each user's earlier train rows.
    rid_l, p_l, y_l = _local_predictions_for_rows(
        local_model, bundle.builder, bundle.full_train_histories, blend_ids
    )
    rid_g, p_g, _ = _global_predictions_for_rows(
        global_model, bundle.builder, bundle.full_train_histories, blend_ids
    )
    order_l = np.argsort(rid_l)
    order_g = np.argsort(rid_g)
    if not np.array_equal(rid_l[order_l], rid_g[order_g]):
        raise RuntimeError("component predictions cover different blend rows")
    rows = [
        BlendRow(row_id=int(rid), p_local=float(pl), p_global=float(pg), label=int(lab))
        for rid, pl, pg, lab in zip(
            rid_l[order_l], p_l[order_l], p_g[order_g], y_l[order_l]
        )
    ]
    guards = [int(local_meta.get("train.max_row_id", -1)), int(global_meta.get("train.max_row_id", -1))]
    fused, models, report = run_fusion(
        rows, k=cfg.fusion_folds, seed=cfg.seed, cfg=cfg.gbdt, max_train_row_id=max(guards)
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    for f, model in enumerate(models):
        model.save(out_dir / f"blender.fold{f}.txt")
    write_blend_predictions(rows, fused, out_dir / "blend_predictions.csv")
    report_path = out_dir / "fusion_report.txt"
    report_path.write_text("\n".join(report.lines()) + "\n", encoding="utf-8")
    logging.getLogger("muse.cli").info(
        "fusion: local %.4f, global %.4f, fused %.4f", report.auc_local, report.auc_global, report.auc_fused
    )
    return report_path


def cmd_evaluate(cfg: RunConfig, model_name: str, checkpoint: str | None = None) -> Path:
    import logging

    from .metrics import evaluate

    out_dir = Path(cfg.out_dir)
    ckpt_path = Path(checkpoint) if checkpoint else latest_checkpoint(out_dir, model_name)
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    bundle = load_dataset(cfg)
    eval_ids = {r.row_id for r in bundle.rows if r.user_id in bundle.eval_users and r.is_question}
    if model_name == "local":
        from .muse_local import LocalModel

        model, _ = LocalModel.load(ckpt_path)
        _, probs, labels = _local_predictions_for_rows(
            model, bundle.builder, bundle.eval_histories, eval_ids
        )
    elif model_name == "global":
        from .muse_global import GlobalModel

        model, _ = GlobalModel.load(ckpt_path)
        _, probs, labels = _global_predictions_for_rows(
            model, bundle.builder, bundle.eval_histories, eval_ids
        )
    else:
        raise ValueError(f"unknown model {model_name!r} (expected local or global)")
    report = evaluate(probs, labels)
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / f"eval_{model_name}.txt"
    report.write(report_path)
    logging.getLogger("muse.cli").info(
        "evaluated %s on %d held-out rows: auc %.4f", model_name, len(labels), report.auc
    )
    return report_path


def cmd_predict(cfg: RunConfig, model_name: str, checkpoint: str, input_path: str, output: str) -> Path:
    from . import datamodel

    ckpt_path = Path(checkpoint)
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    bundle = load_dataset(cfg)
    rows = datamodel.parse_interactions(input_path)
    histories = datamodel.group_by_user(rows)
    wanted = {r.row_id for r in rows if r.is_question}
    if model_name == "local":
        from .muse_local import LocalModel

        model, _ = LocalModel.load(ckpt_path)
        row_ids, probs, _ = _local_predictions_for_rows(model, bundle.builder, histories, wanted)
    elif model_name == "global":
        from .muse_global import GlobalModel

        model, _ = GlobalModel.load(ckpt_path)
        row_ids, probs, _ = _global_predictions_for_rows(model, bundle.builder, histories, wanted)
    else:
        raise ValueError(f"unknown model {model_name!r} (expected local or global)")
    import numpy as np

    order = np.argsort(row_ids)
    out_path = Path(output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as handle:
        handle.write("row_id,probability\n")
        for i in order:
            handle.write(f"{int(row_ids[i])},{probs[i]:.8g}\n")
    return out_path


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muse",
        description="Multi-scale knowledge tracing: synthetic data, two models, fusion.",
    )
    parser.add_argument("--config", help="config file (section.key = value lines)")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--threads", type=int, help="BLAS thread count (1 = deterministic reference)")
    parser.add_argument("--out", help="override the output directory")
    sub = parser.add_subparsers(dest="command", metavar="command")

    sub.add_parser("generate", help="write a synthetic dataset into data_dir")

    p_train = sub.add_parser("train", help="train one component model")
    p_train.add_argument("model", choices=["local", "global"])

    p_adv = sub.add_parser("finetune-adv", help="adversarially fine-tune the windowed model")
    p_adv.add_argument("--checkpoint", help="starting checkpoint (default: newest local)")

    p_blend = sub.add_parser("blend", help="fit the out-of-fold blender on the blend split")
    p_blend.add_argument("--local-checkpoint")
    p_blend.add_argument("--global-checkpoint")

    p_eval = sub.add_parser("evaluate", help="score a model on held-out users")
    p_eval.add_argument("model", choices=["local", "global"])
    p_eval.add_argument("--checkpoint", help="checkpoint path (default: newest)")

    p_pred = sub.add_parser("predict", help="probabilities for an interactions file")
    p_pred.add_argument("model", choices=["local", "global"])
    p_pred.add_argument("--checkpoint", required=True)
    p_pred.add_argument("--input", required=True, help="interactions csv to score")
    p_pred.add_argument("--output", required=True, help="predictions csv to write")
    return parser


def _apply_thread_limit(threads: int) -> None:
    if threads > 0:
        for var in _THREAD_ENV_VARS:
            os.environ[var] = str(threads)


def _setup_logging() -> None:
    import logging

    level_name = os.environ.get("MUSE_LOG", "info").upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0
    # Thread pools must be pinned before numpy is first imported.
    if args.threads is not None:
        _apply_thread_limit(args.threads)
    _setup_logging()
    try:
        cfg = load_config(args.config, args.seed, args.threads, args.out)
        if args.threads is None:
            _apply_thread_limit(cfg.threads)
        if args.command == "generate":
            cmd_generate(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.model)
        elif args.command == "finetune-adv":
            cmd_finetune_adv(cfg, args.checkpoint)
        elif args.command == "blend":
            cmd_blend(cfg, args.local_checkpoint, args.global_checkpoint)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.model, args.checkpoint)
        elif args.command == "predict":
            cmd_predict(cfg, args.model, args.checkpoint, args.input, args.output)
        return 0
    except Exception as exc:  # single-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
