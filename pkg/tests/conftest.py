"""Session fixtures for the acceptance suite.

The heavy artifacts (benchmark corpora, the stage-1 checkpoint, the fully
adapted model, the pose oracle, the ablation grid) are built once per session
and shared across acceptance criteria; they dominate the suite's runtime.
"""

import json
import os

import numpy as np
import pytest
import torch

from crossmotion import synthdata as sd
from crossmotion.cli import build_test_pairs
from crossmotion.evaluation import evaluate, train_pose_oracle
from crossmotion.training import Trainer, TrainingConfig

BENCH_SEED = 11
TEST_SEED = 77
ABLATION_SEEDS = (0, 1, 2)
ABLATION_ITERATIONS = 700
EVAL_PAIRS = 6
EVAL_FRAMES = 12


@pytest.fixture(scope="session")
def bench_root(tmp_path_factory):
    return tmp_path_factory.mktemp("bench")


@pytest.fixture(scope="session")
def bench_data(bench_root):
    root = str(bench_root / "data")
    sd.render_dataset(sd.DatasetConfig(
        out_dir=root, seed=BENCH_SEED,
        source_videos=20, frames_per_video=60, target_images=50,
    ))
    return root


@pytest.fixture(scope="session")
def bench_test_data(bench_root):
    root = str(bench_root / "test_data")
    sd.render_dataset(sd.DatasetConfig(
        out_dir=root, seed=TEST_SEED,
        source_videos=8, frames_per_video=30, target_images=10,
    ))
    return root


@pytest.fixture(scope="session")
def stage1(bench_root, bench_data):
    """2000-iteration stage-1 pretraining plus its loss curve and checkpoint."""
    import time

    cfg = TrainingConfig(data_root=bench_data, rng_seed=0)
    trainer = Trainer(cfg, out_dir=str(bench_root / "stage1"))
    t0 = time.time()
    losses = trainer.run_pretrain(cfg.pretrain_iterations)
    elapsed = time.time() - t0
    trainer.discover_topology()
    ck = str(bench_root / "stage1" / "checkpoint")
    trainer.save_checkpoint(ck)
    return {"trainer": trainer, "losses": losses, "checkpoint": ck,
            "elapsed": elapsed}


@pytest.fixture(scope="session")
def adapted_full(bench_root, stage1):
    """Full adaptation (all modules on) for 2000 iterations from stage 1."""
    import time

    trainer = Trainer.load_checkpoint(stage1["checkpoint"],
                                      out_dir=str(bench_root / "adapt"))
    t0 = time.time()
    rows = trainer.run_adapt(trainer.config.adapt_iterations)
    elapsed = time.time() - t0
    ck = str(bench_root / "adapt" / "checkpoint")
    trainer.save_checkpoint(ck)
    return {"trainer": trainer, "rows": rows, "checkpoint": ck,
            "elapsed": elapsed}


@pytest.fixture(scope="session")
def pose_oracle():
    oracle, train_mae, val_mae = train_pose_oracle(seed=0, iterations=1200)
    return {"oracle": oracle, "train_mae": train_mae, "val_mae": val_mae}


@pytest.fixture(scope="session")
def eval_pairs(bench_test_data):
    return build_test_pairs(bench_test_data, n_pairs=EVAL_PAIRS,
                            frames_per_pair=EVAL_FRAMES, seed=0)


def run_ablation_variant(stage1_ck, data_root, name, seed, **overrides):
    cfg_kwargs = dict(data_root=data_root, rng_seed=seed)
    cfg_kwargs.update(overrides)
    trainer = Trainer.load_checkpoint(stage1_ck)
    trainer.config = TrainingConfig(**{**trainer.config.to_dict(), **cfg_kwargs})
    trainer.sampler = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, 1]))
    )
    trainer.run_adapt(ABLATION_ITERATIONS)
    return trainer


@pytest.fixture(scope="session")
def ablation_grid(stage1, bench_data, pose_oracle, eval_pairs):
    """Seed-averaged metrics for full / no-sima / no-sgac / baseline."""
    variants = {
        "full": {},
        "no_sima": {"lambda_ma": 0.0},
        "no_sgac": {"lambda_ac": 0.0},
        "baseline": {"lambda_ma": 0.0, "lambda_ac": 0.0, "no_cyclic": True},
    }
    oracle = pose_oracle["oracle"]
    grid = {}
    for name, overrides in variants.items():
        reports = []
        for seed in ABLATION_SEEDS:
            trainer = run_ablation_variant(stage1["checkpoint"], bench_data,
                                           name, seed, **overrides)
            reports.append(evaluate(trainer.model, oracle, eval_pairs,
                                    label=f"{name}_seed{seed}"))
        grid[name] = {
            "pose": float(np.mean([r.pose_angle_mae for r in reports])),
            "palette": float(np.mean([r.appearance_palette_distance for r in reports])),
            "reports": reports,
        }
    return grid
