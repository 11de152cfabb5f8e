"""Shared fixtures: a small synthetic dataset and ready-built models."""

from __future__ import annotations

import numpy as np
import pytest

from muse_kt import datamodel as dm
from muse_kt.features import ContentStats, FrameBuilder, LectureTagTable
from muse_kt.muse_global import GlobalConfig, GlobalModel
from muse_kt.muse_local import LocalConfig, LocalModel
from muse_kt.simgen import SimConfig, generate
from muse_kt.training import vocab_from_tables

SMALL_SIM = SimConfig(
    n_users=60,
    n_questions=50,
    n_lectures=10,
    n_tags=30,
    mean_interactions=30,
    seed=7,
)

TINY_LOCAL = LocalConfig(
    d_model=16, n_user_enc=1, n_ex_dec=1, n_lect_enc=1, heads=2, window=12, dtype="float64"
)
TINY_GLOBAL = GlobalConfig(hidden=12, emb_dim=6, dtype="float64")


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("smallsim")
    paths = generate(SMALL_SIM, out)
    rows = dm.parse_interactions(paths["interactions"])
    questions = dm.parse_questions(paths["questions"])
    lectures = dm.parse_lectures(paths["lectures"])
    return {
        "paths": paths,
        "rows": rows,
        "questions": questions,
        "lectures": lectures,
        "histories": dm.group_by_user(rows),
    }


@pytest.fixture(scope="session")
def small_builder(small_dataset):
    stats = ContentStats.from_rows(small_dataset["rows"], small_dataset["questions"])
    tags = LectureTagTable.from_rows(small_dataset["rows"], small_dataset["lectures"])
    return FrameBuilder(small_dataset["questions"], small_dataset["lectures"], stats, tags)


@pytest.fixture(scope="session")
def small_tables(small_dataset, small_builder):
    return [small_builder.user_table(h) for h in small_dataset["histories"].values()]


@pytest.fixture(scope="session")
def small_vocab(small_builder, small_tables):
    return vocab_from_tables(small_builder, small_tables)


@pytest.fixture(scope="session")
def tiny_local_model(small_vocab):
    return LocalModel(TINY_LOCAL, small_vocab, rng=np.random.default_rng(5))


@pytest.fixture(scope="session")
def tiny_global_model(small_vocab):
    return GlobalModel(TINY_GLOBAL, small_vocab, rng=np.random.default_rng(6))
