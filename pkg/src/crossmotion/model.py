"""Keypoint-based motion transfer model.

Pipeline: an unsupervised keypoint detector regresses K keypoints with local
2x2 affine transforms from each image; sparse per-keypoint first-order flows
are blended by predicted soft masks into a dense backward flow plus an
occlusion map; an encoder-decoder generator warps source features by the flow
and synthesizes the output frame.

Reconstruction is scored by a multi-level perceptual loss over a frozen,
seed-fixed random convolutional feature stack plus image pyramids (no
pretrained weights involved).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

JACOBIAN_DET_EPS = 1e-6
PERCEPTUAL_SEED = 0x7EA7


@dataclass
class ModelConfig:
    image_size: int = 64
    num_keypoints: int = 10
    base_channels: int = 16
    temperature: float = 0.1
    gaussian_std: float = 0.1
    # heatmap / dense-flow grid; half the image side gives each figure part
    # several bins, which keypoint-part binding needs
    scale_divisor: int = 2

    @property
    def heatmap_size(self) -> int:
        return max(4, self.image_size // self.scale_divisor)

    @property
    def detector_input(self) -> int:
        return self.image_size


@dataclass
class MotionRepresentation:
    """K keypoints in [-1, 1]^2 plus per-keypoint 2x2 local affine jacobians."""

    keypoints: torch.Tensor  # (B, K, 2)
    jacobians: torch.Tensor  # (B, K, 2, 2)

    def detach(self) -> "MotionRepresentation":
        return MotionRepresentation(self.keypoints.detach(), self.jacobians.detach())


@dataclass
class DenseMotion:
    """Backward flow field in normalized coords plus occlusion gate."""

    flow: torch.Tensor       # (B, H', W', 2)
    occlusion: torch.Tensor  # (B, 1, H', W')
    clamped_jacobians: int = 0  # count of near-singular driving jacobians
    masks: torch.Tensor = None  # (B, K+1, H', W') soft assignment, diagnostics


def make_coordinate_grid(size: int, dtype=torch.float32, device=None) -> torch.Tensor:
    """(size, size, 2) grid of (x, y) in [-1, 1], align-corners convention."""
    coords = torch.linspace(-1.0, 1.0, size, dtype=dtype, device=device)
    ys, xs = torch.meshgrid(coords, coords, indexing="ij")
    return torch.stack([xs, ys], dim=-1)


def soft_argmax(heatmaps: torch.Tensor) -> torch.Tensor:
    """Expectation of the coordinate grid under per-channel spatial
    distributions; heatmaps (B, K, H, W) must sum to 1 over (H, W)."""
    b, k, h, w = heatmaps.shape
    grid = make_coordinate_grid(h, dtype=heatmaps.dtype, device=heatmaps.device)
    return (heatmaps.unsqueeze(-1) * grid.view(1, 1, h, w, 2)).sum(dim=(2, 3))


def gaussian_heatmaps(kps: torch.Tensor, size: int, std: float) -> torch.Tensor:
    """(B, K, size, size) isotropic gaussians centered at the keypoints."""
    b, k, _ = kps.shape
    grid = make_coordinate_grid(size, dtype=kps.dtype, device=kps.device)
    d2 = ((grid.view(1, 1, size, size, 2) - kps.view(b, k, 1, 1, 2)) ** 2).sum(-1)
    return torch.exp(-d2 / (2.0 * std ** 2))


def conv_block(cin: int, cout: int, stride: int = 1, kernel: int = 3) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel, stride=stride, padding=kernel // 2),
        nn.GroupNorm(min(4, cout), cout),
        nn.SiLU(),
    )


def regularized_inverse_2x2(mats: torch.Tensor):
    """Adjugate inverse with the determinant clamped away from zero.

    Returns (inverse, number of clamped entries)."""
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    c = mats[..., 1, 0]
    d = mats[..., 1, 1]
    det = a * d - b * c
    sign = torch.where(det >= 0, torch.ones_like(det), -torch.ones_like(det))
    clamped = det.abs() < JACOBIAN_DET_EPS
    det_reg = torch.where(clamped, sign * JACOBIAN_DET_EPS, det)
    inv = torch.stack(
        [torch.stack([d, -b], dim=-1), torch.stack([-c, a], dim=-1)], dim=-2
    ) / det_reg[..., None, None]
    return inv, int(clamped.sum().item())


def _anchor_ring(k: int) -> torch.Tensor:
    """Center point plus an evenly spaced ring; breaks the initial keypoint
    symmetry (a uniform softmax puts every keypoint at the image center)."""
    pts = [(0.0, 0.0)]
    for i in range(k - 1):
        ang = 2.0 * torch.pi * i / (k - 1)
        pts.append((0.45 * float(torch.cos(torch.tensor(ang))),
                    0.45 * float(torch.sin(torch.tensor(ang)))))
    return torch.tensor(pts[:k])


class KeypointDetector(nn.Module):
    """Heatmap head with spatial softmax for keypoints; a parallel head
    regresses the per-keypoint affine, heatmap-weighted (identity at init).

    A fixed per-keypoint spatial prior is added to the heatmap logits so the
    keypoints start spread out instead of stacked at the center; the learned
    logits can override it."""

    PRIOR_WEIGHT = 0.5
    PRIOR_STD = 0.25

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c, k = cfg.base_channels, cfg.num_keypoints
        factor = cfg.detector_input // cfg.heatmap_size
        blocks = [conv_block(3, c, stride=2)]
        blocks.append(conv_block(c, 2 * c, stride=2 if factor >= 4 else 1))
        blocks.append(conv_block(2 * c, 2 * c))
        blocks.append(conv_block(2 * c, 2 * c))
        self.trunk = nn.Sequential(*blocks)
        self.kp_head = nn.Conv2d(2 * c, k, 3, padding=1)
        self.jac_head = nn.Conv2d(2 * c, 4 * k, 3, padding=1)
        nn.init.zeros_(self.jac_head.weight)
        with torch.no_grad():
            self.jac_head.bias.copy_(
                torch.tensor([1.0, 0.0, 0.0, 1.0]).repeat(k)
            )
        hs = cfg.heatmap_size
        grid = make_coordinate_grid(hs)
        anchors = _anchor_ring(k)
        d2 = ((grid.view(1, hs, hs, 2) - anchors.view(k, 1, 1, 2)) ** 2).sum(-1)
        prior = self.PRIOR_WEIGHT * torch.exp(-d2 / (2.0 * self.PRIOR_STD ** 2))
        self.register_buffer("logit_prior", prior.unsqueeze(0))

    def forward(self, images: torch.Tensor) -> MotionRepresentation:
        cfg = self.cfg
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected (B, 3, H, W) images, got {tuple(images.shape)}")
        if images.shape[2] != cfg.image_size or images.shape[3] != cfg.image_size:
            raise ValueError(
                f"expected {cfg.image_size}x{cfg.image_size} input, "
                f"got {images.shape[2]}x{images.shape[3]}"
            )
        x = images
        if images.shape[2] != cfg.detector_input:
            x = F.interpolate(images, size=(cfg.detector_input,) * 2,
                              mode="bilinear", align_corners=True)
        feats = self.trunk(x)
        logits = self.kp_head(feats) + self.logit_prior.to(images.dtype)
        b, k, h, w = logits.shape
        heat = torch.softmax(logits.reshape(b, k, -1) / cfg.temperature, dim=2)
        heat = heat.reshape(b, k, h, w)
        kps = soft_argmax(heat)
        jac_map = self.jac_head(feats).reshape(b, k, 4, h, w)
        jac = (heat.unsqueeze(2) * jac_map).sum(dim=(3, 4)).reshape(b, k, 2, 2)
        return MotionRepresentation(keypoints=kps, jacobians=jac)


class DenseMotionNetwork(nn.Module):
    """Blends per-keypoint first-order flows into a dense flow + occlusion.

    Sparse flow k maps a grid point z (in driving-frame coords) back to the
    source frame: T_k(z) = p_src_k + J_src_k J_drv_k^-1 (z - p_drv_k); flow 0
    is the identity (background)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c, k = cfg.base_channels, cfg.num_keypoints
        cin = (k + 1) * 4  # heatmap diff + rgb deformed thumb per flow
        self.body = nn.Sequential(
            conv_block(cin, 2 * c),
            conv_block(2 * c, 2 * c, stride=2),
            conv_block(2 * c, 2 * c),
            nn.Upsample(scale_factor=2, mode="bilinear", align_corners=True),
            conv_block(2 * c, 2 * c),
        )
        self.mask_head = nn.Conv2d(2 * c, k + 1, 3, padding=1)
        self.occlusion_head = nn.Conv2d(2 * c, 1, 3, padding=1)

    def sparse_flows(self, src_motion: MotionRepresentation,
                     drv_motion: MotionRepresentation):
        cfg = self.cfg
        kp_s, jac_s = src_motion.keypoints, src_motion.jacobians
        kp_d, jac_d = drv_motion.keypoints, drv_motion.jacobians
        b, k, _ = kp_s.shape
        hs = cfg.heatmap_size
        grid = make_coordinate_grid(hs, dtype=kp_s.dtype, device=kp_s.device)
        inv_d, n_clamped = regularized_inverse_2x2(jac_d)
        affine = jac_s @ inv_d  # (B, K, 2, 2)
        rel = grid.view(1, 1, hs, hs, 2) - kp_d.view(b, k, 1, 1, 2)
        flows = kp_s.view(b, k, 1, 1, 2) + torch.einsum("bkij,bkhwj->bkhwi", affine, rel)
        identity = grid.view(1, 1, hs, hs, 2).expand(b, 1, hs, hs, 2)
        return torch.cat([identity, flows], dim=1), n_clamped  # (B, K+1, hs, hs, 2)

    def forward(self, src_motion: MotionRepresentation,
                drv_motion: MotionRepresentation,
                src_images: torch.Tensor) -> DenseMotion:
        cfg = self.cfg
        b, k = src_images.shape[0], cfg.num_keypoints
        hs = cfg.heatmap_size
        flows, n_clamped = self.sparse_flows(src_motion, drv_motion)

        heat_d = gaussian_heatmaps(drv_motion.keypoints, hs, cfg.gaussian_std)
        heat_s = gaussian_heatmaps(src_motion.keypoints, hs, cfg.gaussian_std)
        heat = heat_d - heat_s
        heat = torch.cat([torch.zeros_like(heat[:, :1]), heat], dim=1)  # bg channel

        thumb = F.interpolate(src_images, size=(hs, hs), mode="bilinear", align_corners=True)
        deformed = F.grid_sample(
            thumb.repeat_interleave(k + 1, dim=0),
            flows.reshape(b * (k + 1), hs, hs, 2),
            mode="bilinear", padding_mode="border", align_corners=True,
        ).reshape(b, (k + 1) * 3, hs, hs)

        feats = self.body(torch.cat([heat, deformed], dim=1))
        masks = torch.softmax(self.mask_head(feats), dim=1)  # (B, K+1, hs, hs)
        occlusion = torch.sigmoid(self.occlusion_head(feats))
        flow = (masks.unsqueeze(-1) * flows).sum(dim=1)  # (B, hs, hs, 2)
        return DenseMotion(flow=flow, occlusion=occlusion,
                           clamped_jacobians=n_clamped, masks=masks)


class Generator(nn.Module):
    """Warps multi-level source features by the dense flow, gates them with
    the occlusion map, and decodes back to an image in [0, 1]."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.base_channels
        self.enc0 = conv_block(3, c, kernel=7)
        self.enc1 = conv_block(c, 2 * c, stride=2)
        self.enc2 = conv_block(2 * c, 4 * c, stride=2)
        self.bottleneck = nn.Sequential(conv_block(4 * c, 4 * c), conv_block(4 * c, 4 * c))
        self.dec1 = conv_block(4 * c + 2 * c, 2 * c)
        self.dec0 = conv_block(2 * c + c, c)
        self.out = nn.Conv2d(c, 3, 7, padding=3)

    @staticmethod
    def _warp(feats: torch.Tensor, motion: DenseMotion) -> torch.Tensor:
        size = feats.shape[-1]
        flow = motion.flow.permute(0, 3, 1, 2)
        if flow.shape[-1] != size:
            flow = F.interpolate(flow, size=(size, size), mode="bilinear", align_corners=True)
        occ = motion.occlusion
        if occ.shape[-1] != size:
            occ = F.interpolate(occ, size=(size, size), mode="bilinear", align_corners=True)
        warped = F.grid_sample(feats, flow.permute(0, 2, 3, 1),
                               mode="bilinear", padding_mode="border", align_corners=True)
        return warped * occ

    def forward(self, src_images: torch.Tensor, motion: DenseMotion) -> torch.Tensor:
        s0 = self.enc0(src_images)
        s1 = self.enc1(s0)
        s2 = self.enc2(s1)
        z = self.bottleneck(self._warp(s2, motion))
        z = F.interpolate(z, scale_factor=2, mode="bilinear", align_corners=True)
        z = self.dec1(torch.cat([z, self._warp(s1, motion)], dim=1))
        z = F.interpolate(z, scale_factor=2, mode="bilinear", align_corners=True)
        z = self.dec0(torch.cat([z, self._warp(s0, motion)], dim=1))
        return torch.sigmoid(self.out(z))


class PerceptualFeatures(nn.Module):
    """Frozen random strided conv stack; its three feature levels plus dyadic
    image pyramids define the reconstruction metric."""

    def __init__(self, seed: int = PERCEPTUAL_SEED):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        chans = [3, 8, 16, 32]
        layers = []
        for cin, cout in zip(chans[:-1], chans[1:]):
            conv = nn.Conv2d(cin, cout, 3, stride=2, padding=1)
            with torch.no_grad():
                w = torch.empty_like(conv.weight)
                nn.init.kaiming_uniform_(w, generator=gen)
                conv.weight.copy_(w)
                conv.bias.zero_()
            layers.append(conv)
        self.convs = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, images: torch.Tensor):
        feats = []
        x = images
        for conv in self.convs:
            x = F.silu(conv(x))
            feats.append(x)
        return feats


class MotionTransferModel(nn.Module):
    """Detector + dense motion + generator with a shared config."""

    def __init__(self, cfg: ModelConfig = None):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        self.detector = KeypointDetector(self.cfg)
        self.dense = DenseMotionNetwork(self.cfg)
        self.generator = Generator(self.cfg)

    def detect_motion(self, images: torch.Tensor) -> MotionRepresentation:
        return self.detector(images)

    def dense_motion(self, src_motion: MotionRepresentation,
                     drv_motion: MotionRepresentation,
                     src_images: torch.Tensor) -> DenseMotion:
        return self.dense(src_motion, drv_motion, src_images)

    def synthesize(self, src_images: torch.Tensor, motion: DenseMotion) -> torch.Tensor:
        if src_images.shape[-1] != self.cfg.image_size:
            raise ValueError("source image resolution does not match config")
        return self.generator(src_images, motion)

    def forward(self, src_images: torch.Tensor, drv_images: torch.Tensor):
        src_motion = self.detect_motion(src_images)
        drv_motion = self.detect_motion(drv_images)
        dense = self.dense_motion(src_motion, drv_motion, src_images)
        synth = self.synthesize(src_images, dense)
        return synth, src_motion, drv_motion


class PerceptualLoss(nn.Module):
    """Mean absolute feature difference over the frozen extractor levels plus
    pixel L1 at three dyadic scales.  Zero exactly when the images agree."""

    def __init__(self, seed: int = PERCEPTUAL_SEED):
        super().__init__()
        self.features = PerceptualFeatures(seed)

    def forward(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
        fa = self.features(a)
        fb = self.features(b)
        loss = sum((x - y).abs().mean() for x, y in zip(fa, fb))
        for scale in (1.0, 0.5, 0.25):
            if scale == 1.0:
                xa, xb = a, b
            else:
                xa = F.interpolate(a, scale_factor=scale, mode="bilinear", align_corners=True)
                xb = F.interpolate(b, scale_factor=scale, mode="bilinear", align_corners=True)
            loss = loss + (xa - xb).abs().mean()
        return loss
