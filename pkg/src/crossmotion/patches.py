"""Keypoint-anchored patch extraction and the patch-level adversarial loss.

Fixed-size crops centered on the detected keypoints tie local appearance to
body parts: a shared-weight patch discriminator scores crops from the source
image against crops from the synthesized image, pushing the generator to
reproduce source appearance part-by-part without constraining global pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .model import conv_block


@dataclass
class PatchSet:
    """K crops of one batch of images plus the pixel anchors used."""

    patches: torch.Tensor  # (B, K, 3, P, P)
    anchors: torch.Tensor  # (B, K, 2) pixel coords after clamping
    source_label: str = ""

    @property
    def flat(self) -> torch.Tensor:
        b, k, c, p, _ = self.patches.shape
        return self.patches.reshape(b * k, c, p, p)


def _axis_gather(x: torch.Tensor, pos: torch.Tensor, size: int, dim: int) -> torch.Tensor:
    """Linear interpolation of x along `dim` at fractional positions `pos`.

    x: (B, K, C, ..., size, ...); pos: (B, K, P) in [0, size-1]."""
    lo = pos.floor().clamp(0, size - 1)
    frac = pos - lo
    lo = lo.long()
    hi = (lo + 1).clamp(max=size - 1)
    shape = [pos.shape[0], pos.shape[1]] + [1] * (x.ndim - 2)
    shape[dim] = pos.shape[2]
    expand = list(x.shape)
    expand[dim] = pos.shape[2]

    def take(idx):
        return x.gather(dim, idx.reshape(shape).expand(expand))

    fshape = [pos.shape[0], pos.shape[1]] + [1] * (x.ndim - 2)
    fshape[dim] = pos.shape[2]
    frac = frac.reshape(fshape)
    return take(lo) * (1.0 - frac) + take(hi) * frac


def extract_patches(images: torch.Tensor, kps: torch.Tensor, patch_size: int,
                    source_label: str = "") -> PatchSet:
    """Bilinearly crop a P x P window around each keypoint.

    Keypoints are in normalized [-1, 1] coords; windows are clamped fully
    inside the image.  Interpolation runs directly in pixel space (separable
    gathers), so integer-aligned centers crop exactly.  Gradients flow to the
    image only; anchor positions are treated as constants.
    """
    b, c, h, w = images.shape
    if patch_size > min(h, w):
        raise ValueError(f"patch size {patch_size} exceeds image side {min(h, w)}")
    kps = kps.detach()
    k = kps.shape[1]
    half = (patch_size - 1) / 2.0

    cx = (kps[..., 0] + 1.0) * 0.5 * (w - 1)
    cy = (kps[..., 1] + 1.0) * 0.5 * (h - 1)
    cx = cx.clamp(half, (w - 1) - half)
    cy = cy.clamp(half, (h - 1) - half)

    offs = torch.arange(patch_size, dtype=images.dtype, device=images.device) - half
    px = cx[..., None] + offs  # (B, K, P)
    py = cy[..., None] + offs

    x = images.unsqueeze(1).expand(b, k, c, h, w)
    x = _axis_gather(x, py, h, dim=3)           # (B, K, C, P, W)
    crops = _axis_gather(x, px, w, dim=4)       # (B, K, C, P, P)
    anchors = torch.stack([cx, cy], dim=-1)
    return PatchSet(patches=crops, anchors=anchors, source_label=source_label)


class PatchDiscriminator(nn.Module):
    """Shared-weight convolutional classifier, one realness logit per patch."""

    def __init__(self, patch_size: int = 16, base_channels: int = 16):
        super().__init__()
        c = base_channels
        if patch_size % 4 != 0:
            raise ValueError("patch size must be divisible by 4")
        self.patch_size = patch_size
        self.body = nn.Sequential(
            conv_block(3, 2 * c, stride=2),
            conv_block(2 * c, 4 * c, stride=2),
            conv_block(4 * c, 4 * c),
        )
        self.head = nn.Linear(4 * c * (patch_size // 4) ** 2, 1)

    def forward(self, patches: torch.Tensor) -> torch.Tensor:
        if patches.shape[-1] != self.patch_size or patches.shape[-2] != self.patch_size:
            raise ValueError(
                f"expected {self.patch_size}x{self.patch_size} patches, "
                f"got {patches.shape[-2]}x{patches.shape[-1]}"
            )
        z = self.body(patches)
        return self.head(z.flatten(1)).squeeze(-1)


def discriminator_score(discriminator: PatchDiscriminator, patches: PatchSet) -> torch.Tensor:
    """Logits for every patch, flattened to (B * K,)."""
    return discriminator(patches.flat)


def appearance_losses(discriminator: PatchDiscriminator,
                      src_images: torch.Tensor, synth_images: torch.Tensor,
                      src_kps: torch.Tensor, synth_kps: torch.Tensor,
                      patch_size: int):
    """Adversarial patch losses (loss_d, loss_g).

    Real patches come from the source image at its keypoints, fake patches
    from the synthesized image at its keypoints.  The discriminator loss is
    the standard real/fake cross-entropy (computed in logit space); the
    generator term is non-saturating and sends gradients only into the
    synthesized image.
    """
    real = extract_patches(src_images.detach(), src_kps, patch_size, "source")
    fake = extract_patches(synth_images, synth_kps, patch_size, "synthesized")

    logits_real = discriminator(real.flat)
    logits_fake = discriminator(fake.flat.detach())
    # -log sigmoid(x) = softplus(-x);  -log(1 - sigmoid(x)) = softplus(x)
    loss_d = F.softplus(-logits_real).mean() + F.softplus(logits_fake).mean()

    logits_gen = discriminator(fake.flat)
    loss_g = F.softplus(-logits_gen).mean()
    return loss_d, loss_g
