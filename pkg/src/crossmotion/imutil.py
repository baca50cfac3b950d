"""Image array helpers shared by training, evaluation, and the CLI.

Images cross module boundaries as (H, W, 3) float arrays in [0, 1]; torch
code uses (B, 3, H, W) tensors.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from PIL import Image as PILImage


def to_tensor(img: np.ndarray) -> torch.Tensor:
    """(H, W, 3) [0,1] array -> (1, 3, H, W) float tensor."""
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    return torch.from_numpy(img).permute(2, 0, 1).unsqueeze(0)


def batch_to_tensor(imgs: np.ndarray) -> torch.Tensor:
    """(B, H, W, 3) array -> (B, 3, H, W) tensor."""
    imgs = np.asarray(imgs, dtype=np.float32)
    return torch.from_numpy(imgs).permute(0, 3, 1, 2)


def to_image(t: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) or (3, H, W) tensor -> (H, W, 3) float array."""
    if t.ndim == 4:
        t = t[0]
    return t.detach().permute(1, 2, 0).cpu().numpy().astype(np.float32)


def load_png(path: str) -> np.ndarray:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr


def save_png(img: np.ndarray, path: str) -> None:
    arr = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    tmp = path + ".tmp"
    PILImage.fromarray(arr).save(tmp, format="PNG")
    os.replace(tmp, path)


def image_grid(rows, pad: int = 2, pad_value: float = 1.0) -> np.ndarray:
    """Compose a list of rows (each a list of equally sized (H, W, 3) images)
    into one image with padding between cells."""
    h, w, _ = rows[0][0].shape
    ncols = max(len(r) for r in rows)
    out = np.full(
        (len(rows) * (h + pad) + pad, ncols * (w + pad) + pad, 3), pad_value, dtype=np.float32
    )
    for r, row in enumerate(rows):
        for c, img in enumerate(row):
            y = pad + r * (h + pad)
            x = pad + c * (w + pad)
            out[y:y + h, x:x + w] = img
    return out
