"""Shared fixtures: builtin configs, a cheap low-budget config, and one
session-scoped full pipeline run (baseline -> training -> transfer) that the
acceptance tests share."""

import dataclasses
import time

import pytest

from slicetl import harness
from slicetl.scenario import Phases, load_config


@pytest.fixture(scope="session")
def smoke_cfg():
    return load_config("smoke3")


@pytest.fixture(scope="session")
def full_cfg():
    return load_config("full12")


@pytest.fixture(scope="session")
def tiny_cfg(smoke_cfg):
    """Smoke scenario with training budgets small enough for unit tests."""

    return dataclasses.replace(
        smoke_cfg,
        phases=Phases(exploration=40, training=40, evaluation=10, tl_training=20),
        similarity=dataclasses.replace(
            smoke_cfg.similarity,
            steps=60, epochs=5, target=3,
        ),
        td3=dataclasses.replace(
            smoke_cfg.td3, batch_size=8, updates_per_step=1,
        ),
    )


@pytest.fixture(scope="session")
def pipeline(smoke_cfg, tmp_path_factory):
    """Full-budget baseline, MADRL training, and transfer on the 3-cell scenario.

    Runs once per session; the acceptance tests for jumpstart, ordering and
    convergence all read from here.
    """

    start = time.perf_counter()
    root = tmp_path_factory.mktemp("pipeline")
    baseline = harness.run_baseline(smoke_cfg, seed=2, out=root / "baseline")
    train = harness.run_madrl(smoke_cfg, seed=1, out=root / "train")
    cfg_tl = dataclasses.replace(
        smoke_cfg,
        transfer=dataclasses.replace(
            smoke_cfg.transfer, artifacts=str(root / "train")
        ),
    )
    transfer = harness.run_transfer(cfg_tl, seed=1, out=root / "transfer")
    return {
        "cfg": smoke_cfg,
        "root": root,
        "baseline": baseline,
        "train": train,
        "transfer": transfer,
        "elapsed": time.perf_counter() - start,
    }
