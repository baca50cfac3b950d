"""Command-line workflow: gen-data, pretrain, discover, adapt, animate,
train-oracle, evaluate, report.

Every command is a pure function of its arguments, the config file, the seed,
and the input files; exit code 0 means full success.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import torch

from . import synthdata as sd
from .checkpoint import CheckpointError
from .datasets import load_domain
from .evaluation import (
    EvalReport,
    OracleGateError,
    PoseOracle,
    evaluate,
    train_pose_oracle,
    write_animation,
    write_report,
)
from .imutil import load_png
from .training import JsonlLogger, Trainer, TrainingConfig


def _load_config(args) -> TrainingConfig:
    if args.config:
        cfg = TrainingConfig.from_json(args.config)
    else:
        cfg = TrainingConfig()
    if args.seed is not None:
        cfg.rng_seed = args.seed
    if getattr(args, "data_root", None):
        cfg.data_root = args.data_root
    return cfg


def cmd_gen_data(args) -> int:
    cfg = sd.DatasetConfig(
        out_dir=args.out,
        seed=args.seed if args.seed is not None else 0,
        source_videos=args.source_videos,
        frames_per_video=args.frames,
        target_images=args.target_images,
    )
    root = sd.render_dataset(cfg)
    print(f"dataset written to {root}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    trainer = Trainer(cfg, out_dir=args.out)
    logger = JsonlLogger(os.path.join(args.out, "train_log.jsonl"))
    losses = trainer.run_pretrain(iterations=args.iterations, logger=logger)
    logger.close()
    trainer.save_checkpoint(os.path.join(args.out, "checkpoint"))
    print(f"pretrain done: {len(losses)} iterations, "
          f"first loss {losses[0]:.4f}, last loss {losses[-1]:.4f}")
    return 0


def cmd_discover(args) -> int:
    trainer = Trainer.load_checkpoint(args.checkpoint)
    if args.data_root:
        trainer.config.data_root = args.data_root
    graph = trainer.discover_topology()
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "topology.json")
    graph.save(out_path)
    trainer.save_checkpoint(os.path.join(args.out, "checkpoint"))
    print(f"topology: |S|={len(graph.structured)} edges={len(graph.edges)} "
          f"|U|={len(graph.unstructured)} eta={graph.eta:.5f} -> {out_path}")
    return 0


def cmd_adapt(args) -> int:
    trainer = Trainer.load_checkpoint(args.checkpoint, out_dir=args.out)
    if args.data_root:
        trainer.config.data_root = args.data_root
    if args.no_sima:
        trainer.config.lambda_ma = 0.0
    if args.no_sgac:
        trainer.config.lambda_ac = 0.0
    if args.no_cyc:
        trainer.config.no_cyclic = True
    if trainer.topology is None:
        raise SystemExit("checkpoint has no topology; run discover first")
    logger = JsonlLogger(os.path.join(args.out, "train_log.jsonl"))
    trainer.run_adapt(iterations=args.iterations, logger=logger)
    logger.close()
    trainer.save_checkpoint(os.path.join(args.out, "checkpoint"))
    print(f"adaptation done at iteration {trainer.iteration}")
    return 0


def cmd_animate(args) -> int:
    trainer = Trainer.load_checkpoint(args.checkpoint)
    source = load_png(args.source_image)
    frames = _load_video_frames(args.driving_dir)
    synth = write_animation(trainer.model, source, frames, args.out)
    print(f"wrote {synth.shape[0]} frames + grid.png to {args.out}")
    return 0


def _load_video_frames(vdir: str) -> np.ndarray:
    names = sorted(f for f in os.listdir(vdir) if f.endswith(".png"))
    if not names:
        raise SystemExit(f"no frames found in {vdir}")
    return np.stack([load_png(os.path.join(vdir, n)) for n in names])


def cmd_train_oracle(args) -> int:
    try:
        oracle, train_mae, val_mae = train_pose_oracle(
            seed=args.seed if args.seed is not None else 0,
            iterations=args.iterations,
        )
    except OracleGateError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "pose_oracle.pt")
    torch.save({"state": oracle.state_dict(), "val_mae": val_mae,
                "train_mae": train_mae}, path)
    print(f"oracle saved to {path} (train MAE {train_mae:.4f}, val MAE {val_mae:.4f})")
    return 0


def load_oracle(path: str) -> PoseOracle:
    payload = torch.load(path, weights_only=True)
    if payload["val_mae"] > 0.1:
        raise OracleGateError(f"stored oracle failed its gate: {payload['val_mae']:.4f}")
    oracle = PoseOracle()
    oracle.load_state_dict(payload["state"])
    return oracle


def build_test_pairs(data_root: str, n_pairs: int, frames_per_pair: int, seed: int):
    """Deterministic (target still, source driving clip) pairings from the
    held-out corpora."""
    source = load_domain(data_root, "source")
    target = load_domain(data_root, "target")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([0x9A12, seed])))
    pairs = []
    for n in range(n_pairs):
        tv = target.videos[int(rng.integers(len(target.videos)))]
        svid = source.videos[int(rng.integers(len(source.videos)))]
        t0 = int(rng.integers(max(1, svid.frames.shape[0] - frames_per_pair + 1)))
        frames = svid.frames[t0:t0 + frames_per_pair]
        angles = np.asarray(svid.meta["angles"])[t0:t0 + frames_per_pair]
        pairs.append((tv.frames[0], frames, angles,
                      f"{tv.video_id}|{svid.video_id}@{t0}"))
    return pairs


def cmd_evaluate(args) -> int:
    trainer = Trainer.load_checkpoint(args.checkpoint)
    oracle = load_oracle(args.oracle)
    pairs = build_test_pairs(args.data_root, args.pairs, args.frames,
                             args.seed if args.seed is not None else 0)
    report = evaluate(
        trainer.model, oracle, pairs,
        label=args.label,
        checkpoint_id=os.path.abspath(args.checkpoint),
        config=trainer.config.to_dict(),
        patch_size=trainer.config.patch_size,
    )
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, f"eval_{args.label}.json")
    report.save(out_path)
    print(f"{args.label}: pose MAE {report.pose_angle_mae:.4f} rad, "
          f"palette distance {report.appearance_palette_distance:.4f} -> {out_path}")
    return 0


def cmd_report(args) -> int:
    reports = [EvalReport.load(p) for p in args.reports]
    paths = write_report(reports, args.out)
    print(f"report written: {paths['markdown']}, {paths['csv']}, {paths['chart']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossmotion",
        description="cross-domain motion transfer: data, training, evaluation",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TrainingConfig JSON file")
    common.add_argument("--seed", type=int, default=None, help="override rng seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common],
                       help="render the synthetic two-domain corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--source-videos", type=int, default=20)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--target-images", type=int, default=50)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("pretrain", parents=[common],
                       help="stage 1: single-domain pretraining")
    p.add_argument("--data-root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=None)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("discover", parents=[common], help="stage 2: topology discovery")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-root", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_discover)

    p = sub.add_parser("adapt", parents=[common], help="stage 3: cross-domain adaptation")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-root", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--no-cyc", action="store_true", help="ablation: direct reconstruction")
    p.add_argument("--no-sima", action="store_true", help="ablation: lambda_ma = 0")
    p.add_argument("--no-sgac", action="store_true", help="ablation: lambda_ac = 0")
    p.set_defaults(fn=cmd_adapt)

    p = sub.add_parser("animate", parents=[common],
                       help="animate a still image with a driving video")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--source-image", required=True)
    p.add_argument("--driving-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_animate)

    p = sub.add_parser("train-oracle", parents=[common],
                       help="train the evaluation pose regressor")
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", type=int, default=1200)
    p.set_defaults(fn=cmd_train_oracle)

    p = sub.add_parser("evaluate", parents=[common],
                       help="oracle-based metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--oracle", required=True)
    p.add_argument("--data-root", required=True)
    p.add_argument("--label", default="run")
    p.add_argument("--pairs", type=int, default=6)
    p.add_argument("--frames", type=int, default=12)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("report", parents=[common],
                       help="ablation table + chart from eval JSONs")
    p.add_argument("--out", required=True)
    p.add_argument("reports", nargs="+")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (OracleGateError, FileNotFoundError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
