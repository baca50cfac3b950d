"""In-memory corpus loading and training-pair sampling.

The synthetic corpora are small enough to hold fully in RAM as float arrays;
samplers draw from an explicit numpy Generator so training order is a pure
function of the seed (and can be checkpointed).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
import torch

from .imutil import load_png


@dataclass
class Video:
    frames: np.ndarray  # (T, H, W, 3) float32
    meta: dict
    video_id: str


@dataclass
class Corpus:
    videos: list

    def __len__(self):
        return len(self.videos)

    @property
    def total_frames(self) -> int:
        return sum(v.frames.shape[0] for v in self.videos)


def load_domain(root: str, domain: str) -> Corpus:
    ddir = os.path.join(root, domain)
    if not os.path.isdir(ddir):
        raise FileNotFoundError(f"missing domain directory {ddir}")
    videos = []
    for vid in sorted(os.listdir(ddir)):
        vdir = os.path.join(ddir, vid)
        frame_files = sorted(f for f in os.listdir(vdir) if f.endswith(".png"))
        frames = np.stack([load_png(os.path.join(vdir, f)) for f in frame_files])
        meta_path = os.path.join(vdir, "meta.json")
        meta = {}
        if os.path.exists(meta_path):
            with open(meta_path) as f:
                meta = json.load(f)
        videos.append(Video(frames=frames, meta=meta, video_id=vid))
    return Corpus(videos=videos)


@dataclass
class TrainingInstance:
    """One adaptation step's inputs.

    The sampler guarantees driving_i != driving_j (distinct frame indices of
    one source-domain video); diagnostic callers may construct instances with
    equal frames directly.
    """

    source_image: torch.Tensor  # (B, 3, H, W) target domain
    driving_i: torch.Tensor     # (B, 3, H, W) source domain
    driving_j: torch.Tensor     # (B, 3, H, W) same videos as driving_i
    recon_pair: tuple           # (src, drv) same-domain tensors for L_r


def _stack(frames) -> torch.Tensor:
    return torch.from_numpy(np.stack(frames)).permute(0, 3, 1, 2).contiguous()


def sample_source_pair(corpus: Corpus, rng: np.random.Generator, batch: int):
    """Two distinct frames from one uniformly chosen video, per batch item."""
    srcs, drvs = [], []
    for _ in range(batch):
        video = corpus.videos[rng.integers(len(corpus.videos))]
        t = video.frames.shape[0]
        i = int(rng.integers(t))
        j = int(rng.integers(t - 1))
        if j >= i:
            j += 1
        srcs.append(video.frames[j])
        drvs.append(video.frames[i])
    return _stack(srcs), _stack(drvs)


def sample_instance(source: Corpus, target: Corpus, rng: np.random.Generator,
                    batch: int) -> TrainingInstance:
    tgt_imgs, drv_i, drv_j = [], [], []
    for _ in range(batch):
        tgt = target.videos[rng.integers(len(target.videos))]
        tgt_imgs.append(tgt.frames[rng.integers(tgt.frames.shape[0])])
        video = source.videos[rng.integers(len(source.videos))]
        t = video.frames.shape[0]
        i = int(rng.integers(t))
        j = int(rng.integers(t - 1))
        if j >= i:
            j += 1
        drv_i.append(video.frames[i])
        drv_j.append(video.frames[j])
    recon = sample_source_pair(source, rng, batch)
    return TrainingInstance(
        source_image=_stack(tgt_imgs),
        driving_i=_stack(drv_i),
        driving_j=_stack(drv_j),
        recon_pair=recon,
    )
