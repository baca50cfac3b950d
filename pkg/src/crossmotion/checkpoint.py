"""Checkpoint directory format: manifest.json + weights.bin.

weights.bin starts with an 8-byte header (magic "CMCK" + little-endian uint32
format version) followed by raw little-endian float32 tensor data.  The
manifest declares the tensor table (name, shape, element offset), echoes the
training config, and carries iteration counters, RNG states, metric history,
and the topology graph when present.  Loading restores training bit-exactly:
parameters and optimizer moments are stored at their native float32 width.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np
import torch

MAGIC = b"CMCK"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Raised when a checkpoint directory is missing, corrupt, or mismatched."""


def _flatten_state_tensors(module: torch.nn.Module, prefix: str) -> dict:
    return {f"{prefix}.{name}": t for name, t in module.state_dict().items()}


def optimizer_tensors(opt: torch.optim.Optimizer, prefix: str):
    """Split optimizer state into float tensors (for the blob) and scalar
    step counters (for the manifest)."""
    tensors = {}
    steps = {}
    for idx, state in opt.state_dict()["state"].items():
        for key, val in state.items():
            name = f"{prefix}.{idx}.{key}"
            if key == "step":
                steps[name] = float(val.item() if torch.is_tensor(val) else val)
            elif torch.is_tensor(val):
                tensors[name] = val
    return tensors, steps


def save_checkpoint(path: str, *, model, discriminator, opt_b, opt_d,
                    manifest_extra: dict) -> None:
    """Write the checkpoint directory (atomic per file)."""
    os.makedirs(path, exist_ok=True)
    tensors = {}
    tensors.update(_flatten_state_tensors(model, "model"))
    tensors.update(_flatten_state_tensors(discriminator, "discriminator"))
    ob_t, ob_steps = optimizer_tensors(opt_b, "opt_b")
    od_t, od_steps = optimizer_tensors(opt_d, "opt_d")
    tensors.update(ob_t)
    tensors.update(od_t)

    table = []
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().numpy().astype("<f4", copy=False)
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes(order="C"))
        offset += arr.size

    bin_tmp = os.path.join(path, "weights.bin.tmp")
    with open(bin_tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        for blob in blobs:
            f.write(blob)
    os.replace(bin_tmp, os.path.join(path, "weights.bin"))

    manifest = dict(manifest_extra)
    manifest["format_version"] = FORMAT_VERSION
    manifest["tensors"] = table
    manifest["optimizer_steps"] = {**ob_steps, **od_steps}
    man_tmp = os.path.join(path, "manifest.json.tmp")
    with open(man_tmp, "w") as f:
        json.dump(manifest, f, indent=1)
    os.replace(man_tmp, os.path.join(path, "manifest.json"))


def read_manifest(path: str) -> dict:
    man_path = os.path.join(path, "manifest.json")
    if not os.path.exists(man_path):
        raise CheckpointError(f"missing manifest.json in {path}")
    try:
        with open(man_path) as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt manifest.json in {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {manifest.get('format_version')!r}, "
            f"expected {FORMAT_VERSION}"
        )
    return manifest


def read_tensors(path: str, manifest: dict) -> dict:
    bin_path = os.path.join(path, "weights.bin")
    if not os.path.exists(bin_path):
        raise CheckpointError(f"missing weights.bin in {path}")
    with open(bin_path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"bad weights.bin magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"weights.bin version {version} != {FORMAT_VERSION}")
        data = np.frombuffer(f.read(), dtype="<f4")

    out = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        if start + size > data.size:
            raise CheckpointError(
                f"tensor {entry['name']} overruns weights.bin "
                f"({start}+{size} > {data.size}); manifest/blob mismatch"
            )
        arr = data[start:start + size].reshape(shape)
        out[entry["name"]] = torch.from_numpy(arr.copy())
    return out


def _select(tensors: dict, prefix: str) -> dict:
    plen = len(prefix) + 1
    return {name[plen:]: t for name, t in tensors.items() if name.startswith(prefix + ".")}


def load_into_module(tensors: dict, prefix: str, module: torch.nn.Module) -> None:
    state = _select(tensors, prefix)
    missing = set(module.state_dict()) - set(state)
    if missing:
        raise CheckpointError(f"checkpoint missing tensors for {prefix}: {sorted(missing)[:4]}")
    module.load_state_dict(state)


def load_optimizer(tensors: dict, steps: dict, prefix: str,
                   opt: torch.optim.Optimizer) -> None:
    """Restore Adam moments and step counters saved by optimizer_tensors."""
    groups = opt.state_dict()["param_groups"]
    by_index = {}
    for name, t in _select(tensors, prefix).items():
        idx, key = name.split(".", 1)
        by_index.setdefault(int(idx), {})[key] = t
    for name, val in steps.items():
        if not name.startswith(prefix + "."):
            continue
        _, idx, key = name.rsplit(".", 2)
        by_index.setdefault(int(idx), {})[key] = torch.tensor(float(val))
    opt.load_state_dict({"state": by_index, "param_groups": groups})
