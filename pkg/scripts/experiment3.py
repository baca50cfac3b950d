"""Dev experiment: lambda sweep + longer adaptation, ordering check per config.

Uses the cached stage-1 checkpoint from /tmp/exp1. Each variant trains
`ITERS` adaptation steps from stage 1 and is scored on the held-out pairs.
"""

import os
import sys
import time

import numpy as np
import torch

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from crossmotion.training import Trainer, TrainingConfig
from crossmotion.evaluation import evaluate
from crossmotion.cli import build_test_pairs, load_oracle

DATA = "/tmp/exp1/data"
STAGE1 = "/tmp/exp1/stage1"
ITERS = int(os.environ.get("ITERS", "1000"))
t0 = time.time()


def log(msg):
    print(f"[{time.time()-t0:7.1f}s] {msg}", flush=True)


oracle = load_oracle("/tmp/exp1/oracle.pt")
pairs = build_test_pairs("/tmp/exp1/test_data", n_pairs=6, frames_per_pair=12, seed=0)


def run(name, seed, **overrides):
    cfg = TrainingConfig(data_root=DATA, rng_seed=seed, **overrides)
    tr = Trainer.load_checkpoint(STAGE1)
    tr.config = cfg
    tr.sampler = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    rows = tr.run_adapt(ITERS)
    rep = evaluate(tr.model, oracle, pairs, label=name)
    lc0 = float(np.mean([r["loss_c"] for r in rows[:50]]))
    lc1 = float(np.mean([r["loss_c"] for r in rows[-50:]]))
    log(f"{name} s{seed}: pose {rep.pose_angle_mae:.4f} palette {rep.appearance_palette_distance:.4f} "
        f"(L_c {lc0:.3f}->{lc1:.3f})")
    return rep.pose_angle_mae, rep.appearance_palette_distance


for lam_ma, lam_ac in [(1.0, 0.2), (2.0, 0.1), (0.5, 0.3)]:
    pose_f, pal_f = run(f"full(ma={lam_ma},ac={lam_ac})", 0,
                        lambda_ma=lam_ma, lambda_ac=lam_ac)
    pose_ns, pal_ns = run(f"no_sima(ac={lam_ac})", 0, lambda_ma=0.0, lambda_ac=lam_ac)
    pose_ng, pal_ng = run(f"no_sgac(ma={lam_ma})", 0, lambda_ma=lam_ma, lambda_ac=0.0)
    pose_b, pal_b = run("baseline", 0, lambda_ma=0.0, lambda_ac=0.0, no_cyclic=True)
    log(f"=== ma={lam_ma} ac={lam_ac}: full<no_sima(pose) {pose_f < pose_ns}; "
        f"full<no_sgac(palette) {pal_f < pal_ng}; full<baseline {pose_f < pose_b and pal_f < pal_b}")
