"""Trained-regime behaviors that only hold after real training; these share
the acceptance suite's session fixtures (stage-1 and adapted checkpoints)."""

import numpy as np
import pytest
import torch

from crossmotion.datasets import TrainingInstance, sample_source_pair
from crossmotion.evaluation import animate_frames
from crossmotion.model import DenseMotion, MotionTransferModel, make_coordinate_grid
from crossmotion.training import Trainer, TrainingConfig


def _pretrain_plateau(stage1):
    return float(np.mean(stage1["losses"][-100:]))


class TestStage1Regime:
    def test_identity_flow_reproduces_input(self, stage1):
        """Identity dense motion with full visibility behaves as an
        autoencoder after pretraining."""
        trainer = stage1["trainer"]
        video = trainer.source_corpus.videos[0]
        imgs = torch.from_numpy(video.frames[:4]).permute(0, 3, 1, 2)
        hs = trainer.model.cfg.heatmap_size
        grid = make_coordinate_grid(hs).unsqueeze(0).expand(4, hs, hs, 2)
        dense = DenseMotion(flow=grid, occlusion=torch.ones(4, 1, hs, hs))
        with torch.no_grad():
            out = trainer.model.synthesize(imgs, dense)
        l1 = (out - imgs).abs().mean().item()
        assert l1 < 0.05, f"identity-flow reconstruction L1 {l1:.4f}"

    def test_self_driving_below_plateau(self, stage1):
        trainer = stage1["trainer"]
        plateau = _pretrain_plateau(stage1)
        video = trainer.source_corpus.videos[1]
        imgs = torch.from_numpy(video.frames[:4]).permute(0, 3, 1, 2)
        with torch.no_grad():
            synth, _, _ = trainer.model(imgs, imgs)
            loss = trainer.perceptual(synth, imgs).item()
        assert loss < plateau, f"self-driving loss {loss:.4f} vs plateau {plateau:.4f}"

    def test_self_video_animation_below_plateau(self, stage1):
        trainer = stage1["trainer"]
        plateau = _pretrain_plateau(stage1)
        video = trainer.source_corpus.videos[2]
        synth = animate_frames(trainer.model, video.frames[0], video.frames[:6])
        with torch.no_grad():
            loss = trainer.perceptual(
                torch.from_numpy(synth).permute(0, 3, 1, 2),
                torch.from_numpy(video.frames[:6]).permute(0, 3, 1, 2),
            ).item()
        assert loss < plateau * 1.5, f"self-animation {loss:.4f} vs plateau {plateau:.4f}"


class TestCyclicRegime:
    def test_trained_cycle_beats_random_init(self, stage1, bench_data):
        """Source-domain self-cycle: the pretrained model reconstructs at
        least 10x better than a random-init model."""
        trained = stage1["trainer"]
        fresh = Trainer(TrainingConfig(data_root=bench_data, rng_seed=999))
        video = trained.source_corpus.videos[3]
        frame = torch.from_numpy(video.frames[5:6]).permute(0, 3, 1, 2)
        inst = TrainingInstance(
            source_image=frame, driving_i=frame, driving_j=frame,
            recon_pair=(frame, frame),
        )
        losses = {}
        for name, tr in (("trained", trained), ("random", fresh)):
            with torch.no_grad():
                _p, c, _m = tr.cyclic_forward(inst)
                losses[name] = tr.perceptual(c, inst.driving_i).item()
        assert losses["trained"] * 10 <= losses["random"], (
            f"trained {losses['trained']:.4f} vs random {losses['random']:.4f}"
        )
