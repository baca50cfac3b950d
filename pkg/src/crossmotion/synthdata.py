"""Parametric 2-D stick-figure renderer with two visually distinct domains.

Provides a desk-scale stand-in for real motion-transfer corpora: a source
domain of short articulated-figure videos and a target domain of still images
with systematically different proportions and palette.  Every render carries
ground truth (joint angles, pixel positions, kinematic adjacency), which the
evaluation stack uses as its oracle.

Figure: 10 joints, 9 bones.  The torso bone runs pelvis -> neck; two-bone
arms hang from the neck and two-bone legs from the pelvis.  The torso stays
vertical; the 8 limb bones articulate (angles relative to the parent bone).
"""

from __future__ import annotations

import colorsys
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from PIL import Image as PILImage

JOINT_NAMES = [
    "pelvis", "neck",
    "l_elbow", "l_hand", "r_elbow", "r_hand",
    "l_knee", "l_foot", "r_knee", "r_foot",
]
# (parent, child) pairs in painter's order; index into JOINT_NAMES
BONES = [
    (0, 1),          # torso
    (1, 2), (2, 3),  # left arm
    (1, 4), (4, 5),  # right arm
    (0, 6), (6, 7),  # left leg
    (0, 8), (8, 9),  # right leg
]
NUM_JOINTS = len(JOINT_NAMES)
NUM_BONES = len(BONES)
NUM_ANGLES = 8  # one per limb bone; torso is fixed vertical

# nominal source-domain bone lengths in pixels at a 64px frame
NOMINAL_LENGTHS = np.array([11.0, 6.0, 5.5, 6.0, 5.5, 7.5, 7.0, 7.5, 7.0])
TARGET_LENGTH_SCALE = 1.4

# rest direction offsets (radians) added on top of the parent direction;
# arms rest pointing down-and-outward from the neck, legs splayed
REST_OFFSETS = {
    1: +0.50, 2: +0.15,   # left upper arm (from vertical-down), left forearm
    3: -0.50, 4: -0.15,   # right arm
    5: +0.32, 6: +0.08,   # left leg
    7: -0.32, 8: -0.08,   # right leg
}
# index of the angle controlling each limb bone (bone index -> angle index)
BONE_ANGLE = {1: 0, 2: 1, 3: 2, 4: 3, 5: 4, 6: 5, 7: 6, 8: 7}

ARTICULATION_LIMIT = 0.60  # radians, symmetric per joint
ROOT_POS = (32.0, 33.0)    # pelvis rest position in pixels (x, y), y down
ROOT_DRIFT = 1.5           # pixels of slow sinusoidal drift
BACKGROUND = np.array([0.94, 0.94, 0.94])


@dataclass
class CharacterSpec:
    """Per-character geometry and palette."""

    bone_lengths: list   # 9 pixels
    bone_widths: list    # 9 capsule radii in pixels
    segment_colors: list # 9 RGB triples in [0, 1]
    domain_tag: str      # "source" | "target"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CharacterSpec":
        return cls(**d)


@dataclass
class PoseSequence:
    """Joint-angle trajectories plus root path for one video."""

    angles: np.ndarray   # (T, 8)
    roots: np.ndarray    # (T, 2) pixel coords
    seed: int

    def __len__(self) -> int:
        return self.angles.shape[0]


def make_character(domain: str, seed: int) -> CharacterSpec:
    """Sample a character; source and target domains use disjoint length and
    palette ranges so that cross-domain shape and texture gaps exist by
    construction."""
    if domain not in ("source", "target"):
        raise ValueError(f"unknown domain {domain!r}")
    domain_key = {"source": 1, "target": 2}[domain]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([domain_key, seed])))
    if domain == "source":
        lengths = NOMINAL_LENGTHS * rng.uniform(0.985, 1.015, NUM_BONES)
        widths = rng.uniform(1.7, 2.3, NUM_BONES)
        widths[0] *= 1.3  # stockier torso
        hues = rng.uniform(0.55, 0.70, NUM_BONES)
        sats = rng.uniform(0.25, 0.55, NUM_BONES)
        vals = rng.uniform(0.20, 0.40, NUM_BONES)
    else:
        lengths = NOMINAL_LENGTHS * TARGET_LENGTH_SCALE * rng.uniform(0.985, 1.015, NUM_BONES)
        widths = rng.uniform(1.0, 1.4, NUM_BONES)
        hues = rng.uniform(0.01, 0.13, NUM_BONES)
        sats = rng.uniform(0.70, 1.00, NUM_BONES)
        vals = rng.uniform(0.65, 0.95, NUM_BONES)
    colors = [list(colorsys.hsv_to_rgb(h, s, v)) for h, s, v in zip(hues, sats, vals)]
    return CharacterSpec(
        bone_lengths=[float(x) for x in lengths],
        bone_widths=[float(x) for x in widths],
        segment_colors=[[float(c) for c in rgb] for rgb in colors],
        domain_tag=domain,
    )


def sample_motion(seed: int, length: int) -> PoseSequence:
    """Smooth per-joint trajectories: two random-phase sinusoids per angle
    (golden-ratio frequency split keeps the pair incommensurate, so each joint
    sweeps most of its range) plus a slow root drift."""
    if length < 2:
        raise ValueError("length must be >= 2")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([0x5EED, seed])))
    t = np.arange(length)[:, None]  # (T, 1)
    a1 = rng.uniform(0.38, 0.44, NUM_ANGLES)
    a2 = rng.uniform(0.12, 0.16, NUM_ANGLES)
    cycles1 = rng.uniform(1.8, 2.6, NUM_ANGLES)
    cycles2 = cycles1 * 1.618
    phase1 = rng.uniform(0, 2 * np.pi, NUM_ANGLES)
    phase2 = rng.uniform(0, 2 * np.pi, NUM_ANGLES)
    base = 60.0  # frequency reference; longer clips sweep more cycles
    angles = (
        a1 * np.sin(2 * np.pi * cycles1 * t / base + phase1)
        + a2 * np.sin(2 * np.pi * cycles2 * t / base + phase2)
    )
    drift_phase = rng.uniform(0, 2 * np.pi, 2)
    roots = np.stack(
        [
            ROOT_POS[0] + ROOT_DRIFT * np.sin(2 * np.pi * 0.9 * t[:, 0] / base + drift_phase[0]),
            ROOT_POS[1] + ROOT_DRIFT * np.sin(2 * np.pi * 0.7 * t[:, 0] / base + drift_phase[1]),
        ],
        axis=1,
    )
    assert np.abs(angles).max() <= ARTICULATION_LIMIT + 1e-9
    return PoseSequence(angles=angles, roots=roots, seed=seed)


def forward_kinematics(angles: np.ndarray, root: np.ndarray, bone_lengths) -> np.ndarray:
    """Joint pixel positions (10, 2) for one frame.

    y grows downward; the torso points straight up; each limb bone's absolute
    direction is its parent direction plus a rest offset plus its angle.
    """
    angles = np.asarray(angles, dtype=np.float64)
    lengths = np.asarray(bone_lengths, dtype=np.float64)
    pos = np.zeros((NUM_JOINTS, 2))
    pos[0] = root
    directions = {}  # bone index -> absolute direction
    parent_bone = {1: None, 2: 1, 3: None, 4: 3, 5: None, 6: 5, 7: None, 8: 7}
    for b, (p, c) in enumerate(BONES):
        if b == 0:
            theta = -np.pi / 2  # up
        else:
            pb = parent_bone[b]
            base = np.pi / 2 if pb is None else directions[pb]  # limbs hang down
            theta = base + REST_OFFSETS[b] + angles[BONE_ANGLE[b]]
        directions[b] = theta
        pos[c] = pos[p] + lengths[b] * np.array([np.cos(theta), np.sin(theta)])
    return pos


def render_frame(joints: np.ndarray, character: CharacterSpec, image_size: int = 64) -> np.ndarray:
    """Anti-aliased capsule render of one pose, (H, W, 3) floats in [0, 1].

    Bones composite in tree order (later bones paint over earlier ones)."""
    ys, xs = np.mgrid[0:image_size, 0:image_size].astype(np.float64)
    img = np.ones((image_size, image_size, 3)) * BACKGROUND
    for b, (p, c) in enumerate(BONES):
        a = joints[p]
        d = joints[c] - joints[p]
        seg_len2 = (d ** 2).sum()
        px = xs - a[0]
        py = ys - a[1]
        if seg_len2 < 1e-12:
            dist = np.sqrt(px ** 2 + py ** 2)
        else:
            tpar = np.clip((px * d[0] + py * d[1]) / seg_len2, 0.0, 1.0)
            dist = np.sqrt((px - tpar * d[0]) ** 2 + (py - tpar * d[1]) ** 2)
        cov = np.clip(character.bone_widths[b] + 0.5 - dist, 0.0, 1.0)[..., None]
        img = cov * np.asarray(character.segment_colors[b]) + (1.0 - cov) * img
    return np.clip(img, 0.0, 1.0)


def render_video(character: CharacterSpec, pose: PoseSequence, image_size: int = 64):
    """All frames plus per-frame joint positions: (T,H,W,3), (T,10,2)."""
    frames = []
    joints = []
    for t in range(len(pose)):
        j = forward_kinematics(pose.angles[t], pose.roots[t], character.bone_lengths)
        joints.append(j)
        frames.append(render_frame(j, character, image_size))
    return np.stack(frames), np.stack(joints)


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def _atomic_save_png(img: np.ndarray, path: str) -> None:
    tmp = path + ".tmp"
    PILImage.fromarray(_to_uint8(img)).save(tmp, format="PNG")
    os.replace(tmp, path)


def _atomic_save_json(obj, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(obj, f)
    os.replace(tmp, path)


@dataclass
class DatasetConfig:
    out_dir: str
    seed: int = 0
    source_videos: int = 20
    frames_per_video: int = 60
    target_images: int = 50
    image_size: int = 64


def _write_video(root: str, domain: str, vid: str, character: CharacterSpec,
                 pose: PoseSequence, image_size: int) -> None:
    vdir = os.path.join(root, domain, vid)
    os.makedirs(vdir, exist_ok=True)
    frames, joints = render_video(character, pose, image_size)
    for t in range(frames.shape[0]):
        _atomic_save_png(frames[t], os.path.join(vdir, f"frame_{t:05d}.png"))
    meta = {
        "angles": pose.angles.tolist(),
        "joints_px": joints.tolist(),
        "adjacency": [list(b) for b in BONES],
        "character": character.to_dict(),
        "seed": int(pose.seed),
    }
    _atomic_save_json(meta, os.path.join(vdir, "meta.json"))


def render_dataset(config: DatasetConfig) -> str:
    """Write the two-domain corpus to disk.

    Layout: out_dir/{source,target}/{video_id}/frame_*.png + meta.json.
    Target entries are single-frame stills.  Everything is a pure function of
    (config, seed)."""
    root = config.out_dir
    os.makedirs(root, exist_ok=True)
    for i in range(config.source_videos):
        char = make_character("source", config.seed * 1000 + i)
        pose = sample_motion(config.seed * 1000 + i, config.frames_per_video)
        _write_video(root, "source", f"source_{i:03d}", char, pose, config.image_size)
    for i in range(config.target_images):
        char = make_character("target", config.seed * 1000 + i)
        pose = sample_motion(config.seed * 5000 + 17 * i + 3, 2)
        pose = PoseSequence(angles=pose.angles[:1], roots=pose.roots[:1], seed=pose.seed)
        _write_video(root, "target", f"target_{i:03d}", char, pose, config.image_size)
    _atomic_save_json(
        {
            "seed": config.seed,
            "source_videos": config.source_videos,
            "frames_per_video": config.frames_per_video,
            "target_images": config.target_images,
            "image_size": config.image_size,
        },
        os.path.join(root, "dataset.json"),
    )
    return root
