"""Dev experiment: keypoint-joint alignment vs detector hyperparameters.

Measures topology edge recall (Hungarian keypoint->joint matching) at several
(temperature, gaussian_std, iterations) settings.
"""

import os
import sys
import time

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from crossmotion import synthdata as sd
from crossmotion.model import ModelConfig
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
    rec = len(mapped & BONES) / len(BONES)
    match_dist = cost[row, col].mean() / 2 * 63
    return rec, len(g.structured), len(g.edges), match_dist


def patched_trainer(seed, temp, std):
    cfg = TrainingConfig(data_root=DATA, rng_seed=seed)
    tr = Trainer(cfg)
    tr.model.cfg.temperature = temp
    tr.model.detector.cfg.temperature = temp
    tr.model.cfg.gaussian_std = std
    tr.model.dense.cfg.gaussian_std = std
    return tr


for temp, std in [(0.1, 0.1), (0.05, 0.1), (0.05, 0.06), (0.02, 0.08)]:
    tr = patched_trainer(0, temp, std)
    for stop in (2000, 4000):
        tr.run_pretrain(2000)
        rec, s, e, md = recall_of(tr)
        log(f"temp={temp} std={std} iters={stop}: recall {rec:.2f} |S|={s} edges={e} "
            f"mean-match-dist {md:.1f}px")
