import json
import os

import numpy as np
import pytest

from crossmotion import synthdata as sd
from crossmotion.imutil import load_png


class TestCharacter:
    def test_deterministic(self):
        a = sd.make_character("source", 42)
        b = sd.make_character("source", 42)
        assert a == b
        assert a != sd.make_character("source", 43)
        assert a != sd.make_character("target", 42)

    def test_domain_length_gap(self):
        for s1 in range(10):
            src = np.array(sd.make_character("source", s1).bone_lengths)
            for s2 in range(10):
                tgt = np.array(sd.make_character("target", s2).bone_lengths)
                assert np.all(tgt / src >= 1.2)

    def test_unknown_domain(self):
        with pytest.raises(ValueError):
            sd.make_character("other", 0)

    def test_renders_stay_in_frame(self):
        for dom in ("source", "target"):
            for s in range(50):
                char = sd.make_character(dom, 1000 + s)
                pose = sd.sample_motion(2000 + s, 30)
                for t in range(0, 30, 3):
                    joints = sd.forward_kinematics(
                        pose.angles[t], pose.roots[t], char.bone_lengths
                    )
                    pad = max(char.bone_widths) + 1.0
                    assert joints[:, 0].min() >= pad
                    assert joints[:, 1].min() >= pad
                    assert joints[:, 0].max() <= 63 - pad
                    assert joints[:, 1].max() <= 63 - pad


class TestMotion:
    def test_deterministic(self):
        a = sd.sample_motion(5, 40)
        b = sd.sample_motion(5, 40)
        assert np.array_equal(a.angles, b.angles)
        assert np.array_equal(a.roots, b.roots)

    def test_length_validation(self):
        with pytest.raises(ValueError):
            sd.sample_motion(0, 1)

    def test_within_limits(self):
        for s in range(30):
            pose = sd.sample_motion(s, 60)
            assert np.abs(pose.angles).max() <= sd.ARTICULATION_LIMIT + 1e-9

    def test_smooth_frame_deltas(self):
        for s in range(30):
            pose = sd.sample_motion(s, 60)
            assert np.abs(np.diff(pose.angles, axis=0)).max() <= 0.2

    def test_angle_coverage(self):
        # every joint sweeps at least 70% of its articulation range
        for s in range(50):
            pose = sd.sample_motion(s, 60)
            attained = pose.angles.max(axis=0) - pose.angles.min(axis=0)
            coverage = attained / (2 * sd.ARTICULATION_LIMIT)
            assert coverage.min() >= 0.70


class TestKinematics:
    def test_adjacency_is_fixed_tree(self):
        assert len(sd.BONES) == 9
        assert len(sd.JOINT_NAMES) == 10
        parents = [p for p, _ in sd.BONES]
        children = [c for _, c in sd.BONES]
        assert sorted(children) == list(range(1, 10))  # every non-root joint once

    def test_bone_lengths_respected(self):
        char = sd.make_character("source", 3)
        pose = sd.sample_motion(3, 10)
        for t in range(10):
            j = sd.forward_kinematics(pose.angles[t], pose.roots[t], char.bone_lengths)
            for b, (p, c) in enumerate(sd.BONES):
                assert np.linalg.norm(j[c] - j[p]) == pytest.approx(
                    char.bone_lengths[b], abs=1e-9
                )


class TestRendering:
    def test_render_range_and_shape(self):
        char = sd.make_character("target", 0)
        pose = sd.sample_motion(0, 2)
        img = sd.render_frame(
            sd.forward_kinematics(pose.angles[0], pose.roots[0], char.bone_lengths), char
        )
        assert img.shape == (64, 64, 3)
        assert img.min() >= 0.0 and img.max() <= 1.0

    def test_figure_pixels_differ_from_background(self):
        char = sd.make_character("source", 1)
        pose = sd.sample_motion(1, 2)
        img = sd.render_frame(
            sd.forward_kinematics(pose.angles[0], pose.roots[0], char.bone_lengths), char
        )
        fg = np.abs(img - sd.BACKGROUND).sum(axis=2) > 0.05
        assert 0.02 < fg.mean() < 0.5


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    cfg = sd.DatasetConfig(
        out_dir=str(tmp_path_factory.mktemp("ds")),
        seed=7,
        source_videos=3,
        frames_per_video=8,
        target_images=4,
    )
    return cfg, sd.render_dataset(cfg)


class TestDataset:
    def test_layout(self, dataset):
        cfg, root = dataset
        assert sorted(os.listdir(os.path.join(root, "source"))) == [
            "source_000", "source_001", "source_002"
        ]
        assert len(os.listdir(os.path.join(root, "target"))) == 4
        vdir = os.path.join(root, "source", "source_000")
        frames = [f for f in os.listdir(vdir) if f.endswith(".png")]
        assert len(frames) == 8
        assert "meta.json" in os.listdir(vdir)

    def test_fk_consistency_with_meta(self, dataset):
        cfg, root = dataset
        vdir = os.path.join(root, "source", "source_001")
        with open(os.path.join(vdir, "meta.json")) as f:
            meta = json.load(f)
        char = sd.CharacterSpec.from_dict(meta["character"])
        angles = np.array(meta["angles"])
        joints = np.array(meta["joints_px"])
        assert meta["adjacency"] == [list(b) for b in sd.BONES]
        for t in range(angles.shape[0]):
            redo = sd.forward_kinematics(angles[t], joints[t][0], char.bone_lengths)
            assert np.abs(redo - joints[t]).max() < 1e-6

    def test_rerender_from_meta_is_bitwise(self, dataset):
        cfg, root = dataset
        vdir = os.path.join(root, "target", "target_002")
        with open(os.path.join(vdir, "meta.json")) as f:
            meta = json.load(f)
        char = sd.CharacterSpec.from_dict(meta["character"])
        joints = np.array(meta["joints_px"])
        redo = sd.render_frame(joints[0], char, cfg.image_size)
        stored = load_png(os.path.join(vdir, "frame_00000.png"))
        redo_q = np.clip(np.round(redo * 255), 0, 255).astype(np.uint8)
        stored_q = np.round(stored * 255).astype(np.uint8)
        assert np.array_equal(redo_q, stored_q)

    def test_regeneration_bitwise_stable(self, dataset, tmp_path):
        cfg, root = dataset
        cfg2 = sd.DatasetConfig(
            out_dir=str(tmp_path / "again"),
            seed=cfg.seed,
            source_videos=cfg.source_videos,
            frames_per_video=cfg.frames_per_video,
            target_images=cfg.target_images,
        )
        root2 = sd.render_dataset(cfg2)
        for dirpath, _dirs, files in os.walk(root):
            rel = os.path.relpath(dirpath, root)
            for name in sorted(files):
                p1 = os.path.join(dirpath, name)
                p2 = os.path.join(root2, rel, name)
                with open(p1, "rb") as f1, open(p2, "rb") as f2:
                    assert f1.read() == f2.read(), f"{rel}/{name} differs"

    def test_domain_separable_by_mean_color(self, dataset):
        cfg, root = dataset
        feats, labels = [], []
        for dom, lab in (("source", 0), ("target", 1)):
            ddir = os.path.join(root, dom)
            for vid in sorted(os.listdir(ddir)):
                img = load_png(os.path.join(ddir, vid, "frame_00000.png"))
                feats.append(img.mean(axis=(0, 1)))
                labels.append(lab)
        feats = np.array(feats)
        labels = np.array(labels)
        c0 = feats[labels == 0].mean(axis=0)
        c1 = feats[labels == 1].mean(axis=0)
        pred = (
            np.linalg.norm(feats - c1, axis=1) < np.linalg.norm(feats - c0, axis=1)
        ).astype(int)
        assert np.array_equal(pred, labels)
