"""Shape-invariant angle-consistency losses between two keypoint sets.

Pose is compared through included angles rather than positions: the angle at a
triplet's vertex depends only on arm directions, so objects with different
bone lengths but the same articulation incur zero loss.  Structured triplets
come from the discovered topology; unstructured keypoints are compared through
their angles at the object centroid.

All losses treat the driving keypoints as a fixed regression target: gradients
flow only into the synthesized-image keypoints.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import torch

ANGLE_EPS = 1e-8


@dataclass
class AngleTriplet:
    vertex: int
    arm_a: int
    arm_b: int
    weight: float = 1.0


def included_angle(vertex: torch.Tensor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Angle in [0, pi] at `vertex` between the arms toward `a` and `b`.

    Inputs are (..., 2) tensors.  Clamped arccos of the normalized dot
    product; arms shorter than the 1e-8 guard count as degenerate and give
    angle 0 with no gradient.  Normalizing by the exact product of arm norms
    (rather than an eps-padded denominator) keeps the angle invariant under
    positive rescaling of either arm to float rounding, which the invariance
    contracts require at 1e-6.
    """
    u = a - vertex
    w = b - vertex
    nu = u.norm(dim=-1)
    nw = w.norm(dim=-1)
    degenerate = (nu < ANGLE_EPS) | (nw < ANGLE_EPS)
    if degenerate.any():
        # substitute a safe arm so the masked-out branch cannot poison grads
        safe = torch.tensor([1.0, 0.0], dtype=u.dtype, device=u.device)
        u = torch.where(degenerate[..., None], safe.expand_as(u), u)
        w = torch.where(degenerate[..., None], safe.expand_as(w), w)
        nu = u.norm(dim=-1)
        nw = w.norm(dim=-1)
    cos = (u * w).sum(dim=-1) / (nu * nw)
    # stay strictly inside [-1, 1]: arccos has infinite slope at the ends and
    # exactly collinear constructed inputs would otherwise emit NaN gradients
    bound = 1.0 - 4 * torch.finfo(cos.dtype).eps
    angle = torch.arccos(cos.clamp(-bound, bound))
    if degenerate.any():
        angle = torch.where(degenerate, torch.zeros_like(angle), angle)
    return angle


def _gather_angles(kps: torch.Tensor, idx_v, idx_a, idx_b) -> torch.Tensor:
    return included_angle(kps[..., idx_v, :], kps[..., idx_a, :], kps[..., idx_b, :])


def structured_angle_loss(triplets, kp_driving: torch.Tensor, kp_synth: torch.Tensor) -> torch.Tensor:
    """Weighted mean absolute difference of structured included angles.

    `triplets` is a list of AngleTriplet or (vertex, arm_a, arm_b, weight)
    tuples.  Keypoint tensors are (..., K, 2).
    """
    if len(triplets) == 0:
        warnings.warn("structured angle loss over empty triplet list")
        return torch.zeros((), dtype=kp_synth.dtype, device=kp_synth.device)
    trips = [
        (t.vertex, t.arm_a, t.arm_b, t.weight) if isinstance(t, AngleTriplet) else tuple(t)
        for t in triplets
    ]
    idx_v = [t[0] for t in trips]
    idx_a = [t[1] for t in trips]
    idx_b = [t[2] for t in trips]
    gamma = torch.tensor([t[3] for t in trips], dtype=kp_synth.dtype, device=kp_synth.device)
    ang_d = _gather_angles(kp_driving.detach(), idx_v, idx_a, idx_b)
    ang_p = _gather_angles(kp_synth, idx_v, idx_a, idx_b)
    return (gamma * (ang_d - ang_p).abs()).mean(dim=-1).mean()


def centroid(kps: torch.Tensor) -> torch.Tensor:
    """Arithmetic mean of all keypoints, shape (..., 2)."""
    return kps.mean(dim=-2)


def unstructured_angle_loss(unstructured, kp_driving: torch.Tensor, kp_synth: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference of centroid-vertex angles over all unordered
    pairs of unstructured keypoints.

    The vertex of every pair triplet is the centroid of the full keypoint set.
    Fewer than two unstructured keypoints give zero loss.
    """
    idx = sorted(unstructured)
    if len(idx) < 2:
        return torch.zeros((), dtype=kp_synth.dtype, device=kp_synth.device)
    pairs = [(idx[i], idx[j]) for i in range(len(idx)) for j in range(i + 1, len(idx))]
    ii = [p[0] for p in pairs]
    jj = [p[1] for p in pairs]

    def angles(kps):
        c = centroid(kps)[..., None, :]
        return included_angle(c.expand(*kps.shape[:-2], len(pairs), 2),
                              kps[..., ii, :], kps[..., jj, :])

    ang_d = angles(kp_driving.detach())
    ang_p = angles(kp_synth)
    return (ang_d - ang_p).abs().mean(dim=-1).mean()


def motion_adaptation_loss(graph, kp_driving: torch.Tensor, kp_synth: torch.Tensor) -> torch.Tensor:
    """Structured plus unstructured angle-consistency loss for a topology."""
    from .topology import enumerate_structured_triplets

    triplets = enumerate_structured_triplets(graph)
    loss = unstructured_angle_loss(graph.unstructured, kp_driving, kp_synth)
    if triplets:
        loss = loss + structured_angle_loss(triplets, kp_driving, kp_synth)
    return loss
