"""Three-stage training orchestration.

Stage 1 pretrains the motion transfer model on source-domain frame pairs with
the perceptual reconstruction loss.  Stage 2 runs keypoint trajectories of the
pretrained detector through topology discovery.  Stage 3 adapts to the target
domain: a synthesized target-identity frame is fed back as a driving frame so
a second synthesis can be supervised against a real source-domain frame
(cyclic reconstruction), regularized by the angle-consistency loss over the
discovered topology and the keypoint-anchored patch-adversarial loss, with the
discriminator and generator updated alternately.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict, field

import numpy as np
import torch

from . import checkpoint as ckpt
from .angle_losses import motion_adaptation_loss
from .datasets import Corpus, TrainingInstance, load_domain, sample_instance, sample_source_pair
from .model import ModelConfig, MotionTransferModel, PerceptualLoss
from .patches import PatchDiscriminator, extract_patches
from .topology import (
    DEFAULT_ETA_PERCENTILE,
    TopologyGraph,
    build_topology,
    distance_diversity,
    select_threshold,
)

import torch.nn.functional as F


@dataclass
class TrainingConfig:
    num_keypoints: int = 10
    image_size: int = 64
    base_channels: int = 16
    eta_percentile: float = DEFAULT_ETA_PERCENTILE
    lambda_ma: float = 10.0
    lambda_ac: float = 1.0
    patch_size: int = 16
    learning_rate: float = 2e-4
    batch_size: int = 4
    pretrain_iterations: int = 2000
    adapt_iterations: int = 2000
    rng_seed: int = 0
    data_root: str = ""
    log_every: int = 25
    no_cyclic: bool = False  # ablation: direct source-pair reconstruction instead of L_c

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**d)

    @classmethod
    def from_json(cls, path: str) -> "TrainingConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            image_size=self.image_size,
            num_keypoints=self.num_keypoints,
            base_channels=self.base_channels,
        )

    def validate(self) -> None:
        for name in ("num_keypoints", "image_size", "base_channels", "patch_size",
                     "learning_rate", "batch_size", "log_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive")
        if self.lambda_ma < 0 or self.lambda_ac < 0:
            raise ValueError("lambda weights must be nonnegative")
        if not 0 < self.eta_percentile < 100:
            raise ValueError("eta_percentile must be in (0, 100)")


class TrainingAbort(RuntimeError):
    """Raised when a step produces a non-finite loss; a diagnostic dump of the
    offending batch is written next to the log."""


class JsonlLogger:
    def __init__(self, path=None):
        self.path = path
        self.rows = []
        if path:
            os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
            self._fh = open(path, "a")
        else:
            self._fh = None

    def log(self, row: dict) -> None:
        self.rows.append(row)
        if self._fh:
            self._fh.write(json.dumps(row) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


class Trainer:
    """Owns the model, discriminator, optimizers, RNG streams, and stages."""

    def __init__(self, config: TrainingConfig, out_dir=None):
        config.validate()
        self.config = config
        self.out_dir = out_dir
        torch.manual_seed(config.rng_seed)  # init stream
        self.model = MotionTransferModel(config.model_config())
        self.discriminator = PatchDiscriminator(config.patch_size, config.base_channels)
        self.perceptual = PerceptualLoss()
        self.opt_b = torch.optim.Adam(self.model.parameters(), lr=config.learning_rate,
                                      betas=(0.9, 0.999))
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(),
                                      lr=config.learning_rate, betas=(0.9, 0.999))
        # sampling stream is separate from the init stream so that resuming
        # restores the exact draw sequence
        self.sampler = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([config.rng_seed, 1]))
        )
        self.iteration = 0
        self.stage = "pretrain"
        self.history = []
        self.topology = None
        self._source = None
        self._target = None

    # ---------------------------------------------------------------- data

    @property
    def source_corpus(self) -> Corpus:
        if self._source is None:
            self._source = load_domain(self.config.data_root, "source")
        return self._source

    @property
    def target_corpus(self) -> Corpus:
        if self._target is None:
            self._target = load_domain(self.config.data_root, "target")
        return self._target

    # ------------------------------------------------------------- stage 1

    def pretrain_step(self, batch=None) -> float:
        if batch is None:
            batch = sample_source_pair(self.source_corpus, self.sampler,
                                       self.config.batch_size)
        src, drv = batch
        synth, _, _ = self.model(src, drv)
        loss = self.perceptual(synth, drv)
        self._check_finite({"loss_r": loss}, batch={"src": src, "drv": drv})
        self.opt_b.zero_grad()
        loss.backward()
        self.opt_b.step()
        self.iteration += 1
        return float(loss.item())

    def run_pretrain(self, iterations=None, logger=None) -> list:
        iterations = iterations or self.config.pretrain_iterations
        self.stage = "pretrain"
        losses = []
        for _ in range(iterations):
            loss = self.pretrain_step()
            losses.append(loss)
            row = {"stage": "pretrain", "iteration": self.iteration, "loss_r": loss}
            if logger:
                logger.log(row)
            if self.iteration % self.config.log_every == 0 or self.iteration == 1:
                self.history.append(row)
        return losses

    # ------------------------------------------------------------- stage 2

    def extract_trajectories(self) -> list:
        """Detector keypoints for every frame of every source video, without
        gradients; one (T, K, 2) array per video."""
        trajs = []
        with torch.no_grad():
            for video in self.source_corpus.videos:
                kps = []
                frames = torch.from_numpy(video.frames).permute(0, 3, 1, 2)
                for start in range(0, frames.shape[0], 32):
                    chunk = frames[start:start + 32]
                    kps.append(self.model.detect_motion(chunk).keypoints.numpy())
                trajs.append(np.concatenate(kps, axis=0).astype(np.float64))
        return trajs

    def discover_topology(self) -> TopologyGraph:
        diversity = distance_diversity(self.extract_trajectories())
        eta = select_threshold(diversity, self.config.eta_percentile)
        self.topology = build_topology(diversity, eta)
        return self.topology

    # ------------------------------------------------------------- stage 3

    def cyclic_forward(self, inst: TrainingInstance):
        """First pass animates the target identity with driving_i; the result
        drives a second pass whose source is driving_j.  Both passes share the
        one parameter set."""
        synth_p, m_src, m_di = self.model(inst.source_image, inst.driving_i)
        synth_c, m_dj, m_ip = self.model(inst.driving_j, synth_p)
        motions = {
            "source": m_src,
            "driving_i": m_di,
            "driving_j": m_dj,
            "synth_p": m_ip,
        }
        return synth_p, synth_c, motions

    def adapt_step(self, inst: TrainingInstance = None) -> dict:
        if self.topology is None:
            raise RuntimeError("topology not discovered/loaded; run discover_topology first")
        cfg = self.config
        if inst is None:
            inst = sample_instance(self.source_corpus, self.target_corpus,
                                   self.sampler, cfg.batch_size)

        synth_p, synth_c, motions = self.cyclic_forward(inst)
        self._check_finite(
            {"synth_p": synth_p, "synth_c": synth_c,
             "synth_keypoints": motions["synth_p"].keypoints},
            batch={
                "source_image": inst.source_image,
                "driving_i": inst.driving_i,
                "driving_j": inst.driving_j,
            },
        )
        if cfg.no_cyclic:
            # ablation: swap the cyclic path for plain source-domain
            # reconstruction of driving_i from driving_j
            direct, _, _ = self.model(inst.driving_j, inst.driving_i)
            loss_c = self.perceptual(direct, inst.driving_i)
        else:
            loss_c = self.perceptual(synth_c, inst.driving_i)

        recon_src, recon_drv = inst.recon_pair
        recon, _, _ = self.model(recon_src, recon_drv)
        loss_r = self.perceptual(recon, recon_drv)

        loss_ma = motion_adaptation_loss(
            self.topology,
            motions["driving_i"].keypoints.detach(),
            motions["synth_p"].keypoints,
        )

        real = extract_patches(inst.source_image, motions["source"].keypoints,
                               cfg.patch_size, "source")
        fake = extract_patches(synth_p, motions["synth_p"].keypoints,
                               cfg.patch_size, "synthesized")
        logits_real = self.discriminator(real.flat)
        logits_fake = self.discriminator(fake.flat.detach())
        loss_d = F.softplus(-logits_real).mean() + F.softplus(logits_fake).mean()

        self._check_finite(
            {"loss_r": loss_r, "loss_c": loss_c, "loss_ma": loss_ma, "loss_ac_d": loss_d},
            batch={
                "source_image": inst.source_image,
                "driving_i": inst.driving_i,
                "driving_j": inst.driving_j,
            },
        )

        # discriminator first; the generator term is then scored against the
        # updated discriminator (fresh forward, so no stale-graph aliasing)
        self.opt_d.zero_grad()
        loss_d.backward()
        self.opt_d.step()

        logits_gen = self.discriminator(fake.flat)
        loss_g = F.softplus(-logits_gen).mean()
        self._check_finite({"loss_ac_g": loss_g}, batch={"synth_p": synth_p.detach()})

        total = loss_r + loss_c
        if cfg.lambda_ma > 0:
            total = total + cfg.lambda_ma * loss_ma
        if cfg.lambda_ac > 0:
            total = total + cfg.lambda_ac * loss_g
        self.opt_b.zero_grad()
        total.backward()
        self.opt_b.step()

        self.iteration += 1
        return {
            "loss_r": float(loss_r.item()),
            "loss_c": float(loss_c.item()),
            "loss_ma": float(loss_ma.item()),
            "loss_ac_g": float(loss_g.item()),
            "loss_ac_d": float(loss_d.item()),
            "total": float(
                loss_r.item() + loss_c.item()
                + cfg.lambda_ma * loss_ma.item() + cfg.lambda_ac * loss_g.item()
            ),
        }

    def run_adapt(self, iterations=None, logger=None) -> list:
        iterations = iterations or self.config.adapt_iterations
        self.stage = "adapt"
        rows = []
        for _ in range(iterations):
            breakdown = self.adapt_step()
            rows.append(breakdown)
            row = {"stage": "adapt", "iteration": self.iteration, **breakdown}
            if logger:
                logger.log(row)
            if self.iteration % self.config.log_every == 0 or self.iteration == 1:
                self.history.append(row)
        return rows

    # ------------------------------------------------------------ plumbing

    def _check_finite(self, losses: dict, batch: dict) -> None:
        bad = {}
        for k, v in losses.items():
            if not torch.isfinite(v).all():
                bad[k] = float(v.item()) if v.numel() == 1 else float("nan")
        if not bad:
            return
        dump = None
        if self.out_dir:
            os.makedirs(self.out_dir, exist_ok=True)
            dump = os.path.join(self.out_dir, f"diagnostic_dump_iter{self.iteration}.npz")
            np.savez(
                dump,
                **{k: v.detach().cpu().numpy() for k, v in batch.items()},
                **{f"loss_{k}": np.float64(v) for k, v in bad.items()},
            )
        raise TrainingAbort(
            f"non-finite loss at stage={self.stage} iteration={self.iteration}: {bad}"
            + (f"; offending batch dumped to {dump}" if dump else "")
        )

    def parameter_checksum(self, module) -> float:
        return float(sum(p.detach().double().sum().item() for p in module.parameters()))

    # ---------------------------------------------------------- checkpoint

    def save_checkpoint(self, path: str) -> None:
        manifest = {
            "config": self.config.to_dict(),
            "stage": self.stage,
            "iteration": self.iteration,
            "seed": self.config.rng_seed,
            "history": self.history,
            "topology": self.topology.to_json_dict() if self.topology else None,
            "rng": {
                "torch": self._torch_rng_hex(),
                "sampler": _jsonify_rng_state(self.sampler.bit_generator.state),
            },
        }
        ckpt.save_checkpoint(
            path,
            model=self.model,
            discriminator=self.discriminator,
            opt_b=self.opt_b,
            opt_d=self.opt_d,
            manifest_extra=manifest,
        )

    @staticmethod
    def _torch_rng_hex() -> str:
        return torch.get_rng_state().numpy().tobytes().hex()

    @classmethod
    def load_checkpoint(cls, path: str, out_dir=None) -> "Trainer":
        manifest = ckpt.read_manifest(path)
        config = TrainingConfig.from_dict(manifest["config"])
        trainer = cls(config, out_dir=out_dir)
        tensors = ckpt.read_tensors(path, manifest)
        ckpt.load_into_module(tensors, "model", trainer.model)
        ckpt.load_into_module(tensors, "discriminator", trainer.discriminator)
        # Adam lazily creates state on first step; prime it with a zero-grad
        # step only when the checkpoint carries state
        steps = manifest.get("optimizer_steps", {})
        if any(k.startswith("opt_b.") for k in steps):
            _prime_optimizer(trainer.opt_b)
            ckpt.load_optimizer(tensors, steps, "opt_b", trainer.opt_b)
        if any(k.startswith("opt_d.") for k in steps):
            _prime_optimizer(trainer.opt_d)
            ckpt.load_optimizer(tensors, steps, "opt_d", trainer.opt_d)
        trainer.iteration = manifest["iteration"]
        trainer.stage = manifest["stage"]
        trainer.history = list(manifest.get("history", []))
        if manifest.get("topology"):
            trainer.topology = TopologyGraph.from_json_dict(manifest["topology"])
        rng = manifest.get("rng", {})
        if rng.get("torch"):
            state = np.frombuffer(bytes.fromhex(rng["torch"]), dtype=np.uint8)
            torch.set_rng_state(torch.from_numpy(state.copy()))
        if rng.get("sampler"):
            trainer.sampler.bit_generator.state = _dejsonify_rng_state(rng["sampler"])
        return trainer


def _prime_optimizer(opt: torch.optim.Optimizer) -> None:
    for group in opt.param_groups:
        for p in group["params"]:
            p.grad = torch.zeros_like(p)
    opt.step()
    opt.zero_grad(set_to_none=True)


def _jsonify_rng_state(state) -> dict:
    def conv(x):
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, (np.integer,)):
            return int(x)
        return x

    return conv(state)


def _dejsonify_rng_state(state) -> dict:
    return state
