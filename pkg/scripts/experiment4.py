"""Dev experiment: heatmap-32 architecture. Pretrain, measure keypoint-joint
binding + topology recall, then a small lambda grid for ablation ordering."""

import os
import sys
import time

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from crossmotion import synthdata as sd
from crossmotion.training import Trainer, TrainingConfig
from crossmotion.evaluation import evaluate
from crossmotion.cli import build_test_pairs, load_oracle

DATA = "/tmp/exp1/data"
ROOT = "/tmp/exp4"
os.makedirs(ROOT, exist_ok=True)
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
    return rec, len(g.structured), sorted(mapped), cost[row, col].mean() / 2 * 63


stage1_dir = os.path.join(ROOT, "stage1")
if os.path.exists(os.path.join(stage1_dir, "manifest.json")):
    tr = Trainer.load_checkpoint(stage1_dir)
    log("stage1 loaded")
else:
    cfg = TrainingConfig(data_root=DATA, rng_seed=0)
    tr = Trainer(cfg)
    t1 = time.time()
    losses = tr.run_pretrain(2000)
    log(f"stage1 (heatmap {tr.model.cfg.heatmap_size}): "
        f"{np.mean(losses[:25]):.4f} -> {np.mean(losses[-25:]):.4f} "
        f"drop {(1-np.mean(losses[-25:])/np.mean(losses[:25]))*100:.0f}% "
        f"[{(time.time()-t1)/2000*1000:.0f} ms/it]")
    tr.discover_topology()
    tr.save_checkpoint(stage1_dir)

rec, s, mapped, md = recall_of(tr)
log(f"recall {rec:.2f} |S|={s} match-dist {md:.1f}px mapped={mapped}")

oracle = load_oracle("/tmp/exp1/oracle.pt")
pairs = build_test_pairs("/tmp/exp1/test_data", n_pairs=6, frames_per_pair=12, seed=0)


def run(name, seed, iters=700, **overrides):
    cfg = TrainingConfig(data_root=DATA, rng_seed=seed, **overrides)
    var = Trainer.load_checkpoint(stage1_dir)
    var.config = cfg
    var.sampler = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
    t1 = time.time()
    rows = var.run_adapt(iters)
    rep = evaluate(var.model, oracle, pairs, label=name)
    lc0 = float(np.mean([r["loss_c"] for r in rows[:50]]))
    lc1 = float(np.mean([r["loss_c"] for r in rows[-50:]]))
    log(f"{name} s{seed}: pose {rep.pose_angle_mae:.4f} palette {rep.appearance_palette_distance:.4f} "
        f"(L_c {lc0:.3f}->{lc1:.3f}) [{(time.time()-t1)/iters*1000:.0f} ms/it]")
    return rep.pose_angle_mae, rep.appearance_palette_distance


LAM_MA = float(os.environ.get("LAM_MA", "1.0"))
LAM_AC = float(os.environ.get("LAM_AC", "0.2"))
for seed in (0, 1):
    pf, gf = run(f"full(ma={LAM_MA},ac={LAM_AC})", seed,
                 lambda_ma=LAM_MA, lambda_ac=LAM_AC)
    pns, gns = run("no_sima", seed, lambda_ma=0.0, lambda_ac=LAM_AC)
    png_, gng = run("no_sgac", seed, lambda_ma=LAM_MA, lambda_ac=0.0)
    pb, gb = run("baseline", seed, lambda_ma=0.0, lambda_ac=0.0, no_cyclic=True)
    log(f"=== seed {seed}: pose full<no_sima {pf<pns} ({pf:.3f}/{pns:.3f}); "
        f"palette full<no_sgac {gf<gng} ({gf:.3f}/{gng:.3f}); "
        f"full<baseline {pf<pb and gf<gb} (pose {pb:.3f} pal {gb:.3f})")
