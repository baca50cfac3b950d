"""Dev experiment: spread-prior init + gaussian std sweep; recall at 2000 it."""

import os
import sys
import time

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from crossmotion import synthdata as sd
from crossmotion.training import Trainer, TrainingConfig

DATA = "/tmp/exp1/data"
t0 = time.time()
BONES = set(tuple(sorted(b)) for b in sd.BONES)


def log(msg):
    print(f"[{time.time()-t0:7.1f}s] {msg}", flush=True)


def recall_of(trainer):
    g = trainer.discover_topology()
    trajs = trainer.extract_trajectories()
    mean_kp = np.concatenate(trajs, 0).mean(0)
    gt = np.concatenate([np.asarray(v.meta["joints_px"]) for v in trainer.source_corpus.videos], 0).mean(0)
    gt_norm = gt / 63.0 * 2.0 - 1.0
    cost = np.linalg.norm(mean_kp[:, None, :] - gt_norm[None, :, :], axis=2)
    row, col = linear_sum_assignment(cost)
    kp2joint = dict(zip(row, col))
    mapped = {tuple(sorted((kp2joint[i], kp2joint[j]))) for (i, j) in g.edges}
    return (len(mapped & BONES) / len(BONES), len(g.structured),
            cost[row, col].mean() / 2 * 63, sorted(mapped & BONES))


for std, seed in [(0.1, 0), (0.06, 0), (0.06, 1)]:
    cfg = TrainingConfig(data_root=DATA, rng_seed=seed)
    tr = Trainer(cfg)
    tr.model.cfg.gaussian_std = std
    t1 = time.time()
    losses = tr.run_pretrain(2000)
    rec, s, md, found = recall_of(tr)
    log(f"std={std} seed={seed}: recall {rec:.2f} |S|={s} match {md:.1f}px "
        f"loss {np.mean(losses[-25:]):.4f} [{(time.time()-t1)/2000*1000:.0f} ms/it] "
        f"bones={found}")
    out = f"/tmp/exp5_std{std}_s{seed}"
    tr.save_checkpoint(out)
