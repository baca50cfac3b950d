import json
import os

import numpy as np
import pytest

from crossmotion.cli import build_test_pairs, main
from crossmotion.evaluation import EvalReport


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def data_root(workdir):
    root = str(workdir / "data")
    rc = main(["gen-data", "--out", root, "--source-videos", "3",
               "--frames", "8", "--target-images", "3", "--seed", "21"])
    assert rc == 0
    return root


@pytest.fixture(scope="module")
def pretrained(workdir, data_root):
    out = str(workdir / "stage1")
    cfg = {"batch_size": 2, "log_every": 2, "rng_seed": 5}
    cfg_path = str(workdir / "cfg.json")
    with open(cfg_path, "w") as f:
        json.dump({**cfg, "data_root": data_root}, f)
    rc = main(["pretrain", "--config", cfg_path, "--data-root", data_root,
               "--out", out, "--iterations", "6"])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def discovered(workdir, pretrained, data_root):
    out = str(workdir / "stage2")
    rc = main(["discover", "--checkpoint", os.path.join(pretrained, "checkpoint"),
               "--data-root", data_root, "--out", out])
    assert rc == 0
    return out


class TestPipelineCommands:
    def test_gen_data_layout(self, data_root):
        assert os.path.isdir(os.path.join(data_root, "source"))
        assert os.path.isdir(os.path.join(data_root, "target"))
        assert os.path.exists(os.path.join(data_root, "dataset.json"))

    def test_pretrain_outputs(self, pretrained):
        assert os.path.exists(os.path.join(pretrained, "checkpoint", "manifest.json"))
        assert os.path.exists(os.path.join(pretrained, "checkpoint", "weights.bin"))
        log = os.path.join(pretrained, "train_log.jsonl")
        rows = [json.loads(l) for l in open(log)]
        assert rows and rows[0]["stage"] == "pretrain"

    def test_discover_outputs(self, discovered):
        topo = os.path.join(discovered, "topology.json")
        with open(topo) as f:
            d = json.load(f)
        assert d["K"] == 10
        assert set(d["structured"]) | set(d["unstructured"]) == set(range(10))

    def test_adapt_then_animate(self, workdir, discovered, data_root):
        out = str(workdir / "stage3")
        rc = main(["adapt", "--checkpoint", os.path.join(discovered, "checkpoint"),
                   "--data-root", data_root, "--out", out, "--iterations", "3"])
        assert rc == 0

        anim = str(workdir / "anim")
        src_img = os.path.join(data_root, "target", "target_000", "frame_00000.png")
        drv_dir = os.path.join(data_root, "source", "source_001")
        rc = main(["animate", "--checkpoint", os.path.join(out, "checkpoint"),
                   "--source-image", src_img, "--driving-dir", drv_dir,
                   "--out", anim])
        assert rc == 0
        frames = [f for f in os.listdir(anim) if f.startswith("frame_")]
        assert len(frames) == 8
        assert os.path.exists(os.path.join(anim, "grid.png"))

    def test_adapt_ablation_flags(self, workdir, discovered, data_root):
        out = str(workdir / "ablate")
        rc = main(["adapt", "--checkpoint", os.path.join(discovered, "checkpoint"),
                   "--data-root", data_root, "--out", out, "--iterations", "2",
                   "--no-sima", "--no-sgac", "--no-cyc"])
        assert rc == 0
        with open(os.path.join(out, "checkpoint", "manifest.json")) as f:
            manifest = json.load(f)
        assert manifest["config"]["lambda_ma"] == 0.0
        assert manifest["config"]["lambda_ac"] == 0.0
        assert manifest["config"]["no_cyclic"] is True

    def test_report_command(self, workdir):
        reports = [
            EvalReport(label="full", pose_angle_mae=0.11,
                       appearance_palette_distance=0.21, per_video=[]),
            EvalReport(label="baseline", pose_angle_mae=0.4,
                       appearance_palette_distance=0.5, per_video=[]),
        ]
        paths = []
        for r in reports:
            p = str(workdir / f"eval_{r.label}.json")
            r.save(p)
            paths.append(p)
        out = str(workdir / "report")
        rc = main(["report", "--out", out] + paths)
        assert rc == 0
        assert os.path.exists(os.path.join(out, "report.csv"))

    def test_missing_input_fails_nonzero(self, workdir):
        rc = main(["animate", "--checkpoint", str(workdir / "missing"),
                   "--source-image", "nope.png", "--driving-dir", ".",
                   "--out", str(workdir / "x")])
        assert rc == 1


class TestBuildTestPairs:
    def test_deterministic(self, data_root):
        a = build_test_pairs(data_root, 3, 4, seed=1)
        b = build_test_pairs(data_root, 3, 4, seed=1)
        assert len(a) == 3
        for (ia, fa, aa, pa), (ib, fb, ab, pb) in zip(a, b):
            assert pa == pb
            assert np.array_equal(ia, ib)
            assert np.array_equal(fa, fb)
            assert np.array_equal(aa, ab)
        assert a[0][1].shape[0] == 4
        assert a[0][2].shape == (4, 8)