"""Keypoint topology discovery from trajectories.

Keypoint pairs whose mutual distance stays nearly constant across frames are
treated as rigidly linked.  Pooling the per-frame distance fluctuations over a
corpus of videos gives a diversity score per pair; thresholding the scores
yields a weighted graph whose largest connected component is the structured
skeleton, everything else being unstructured.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

# Percentile of the empirical diversity distribution used for the edge
# threshold.  With K=10 keypoints (45 pairs) and 9 rigid links, 20 lands the
# threshold strictly between the rigid block and the smallest articulated
# diversity; 25 would always admit two spurious pairs (rank arithmetic:
# 0.25 * 44 = 11 > 9).
DEFAULT_ETA_PERCENTILE = 20.0


class TopologyError(ValueError):
    """Raised for invalid trajectory or diversity-matrix inputs."""


@dataclass
class KeypointTrajectory:
    """Per-frame keypoints of one video, shape (T, K, 2)."""

    frames: np.ndarray
    video_id: str = ""

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 2:
            raise TopologyError(
                f"trajectory must have shape (T, K, 2), got {self.frames.shape}"
            )
        if self.frames.shape[1] < 2:
            raise TopologyError("need at least 2 keypoints")
        if not np.isfinite(self.frames).all():
            raise TopologyError(f"non-finite coordinates in trajectory {self.video_id!r}")

    @property
    def num_keypoints(self) -> int:
        return self.frames.shape[1]


@dataclass
class DiversityMatrix:
    """Symmetric K x K matrix of per-pair distance diversities."""

    v: np.ndarray
    frame_count: int

    def upper_values(self) -> np.ndarray:
        iu = np.triu_indices(self.v.shape[0], k=1)
        return self.v[iu]


@dataclass
class TopologyGraph:
    """Partition of keypoints into a structured component with weighted edges
    and the remaining unstructured set."""

    structured: frozenset
    edges: dict  # (i, j) with i < j -> edge value in (0, 1]
    unstructured: frozenset
    eta: float
    num_keypoints: int

    def neighbors(self, i: int) -> list:
        out = [b if a == i else a for (a, b) in self.edges if i in (a, b)]
        return sorted(out)

    def to_json_dict(self) -> dict:
        return {
            "eta": float(self.eta),
            "structured": sorted(self.structured),
            "edges": [[int(i), int(j), float(e)] for (i, j), e in sorted(self.edges.items())],
            "unstructured": sorted(self.unstructured),
            "K": int(self.num_keypoints),
        }

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json_dict(), f, indent=2)

    @classmethod
    def from_json_dict(cls, d: dict) -> "TopologyGraph":
        edges = {(int(i), int(j)): float(e) for i, j, e in d["edges"]}
        return cls(
            structured=frozenset(int(i) for i in d["structured"]),
            edges=edges,
            unstructured=frozenset(int(i) for i in d["unstructured"]),
            eta=float(d["eta"]),
            num_keypoints=int(d["K"]),
        )

    @classmethod
    def load(cls, path) -> "TopologyGraph":
        with open(path) as f:
            return cls.from_json_dict(json.load(f))


def distance_diversity(trajectories) -> DiversityMatrix:
    """Mean absolute deviation of pairwise keypoint distances, pooled over all
    frames of all trajectories.

    v[i, j] = (1/T) * sum_t |d_t(i, j) - mean_t d_t(i, j)| with T the total
    number of frames in the corpus.  Near-zero values mark rigid links.
    """
    trajectories = [
        t if isinstance(t, KeypointTrajectory) else KeypointTrajectory(t)
        for t in trajectories
    ]
    if not trajectories:
        raise TopologyError("need at least one trajectory")
    k = trajectories[0].num_keypoints
    for t in trajectories:
        if t.num_keypoints != k:
            raise TopologyError(
                f"keypoint count mismatch: {t.num_keypoints} vs {k} in {t.video_id!r}"
            )
        if t.frames.shape[0] < 2:
            raise TopologyError("each trajectory needs at least 2 frames")

    frames = np.concatenate([t.frames for t in trajectories], axis=0)  # (T, K, 2)
    diff = frames[:, :, None, :] - frames[:, None, :, :]
    dists = np.sqrt((diff ** 2).sum(axis=-1))  # (T, K, K)
    mean = dists.mean(axis=0)
    v = np.abs(dists - mean[None]).mean(axis=0)
    np.fill_diagonal(v, 0.0)
    v = 0.5 * (v + v.T)  # kill asymmetric float noise
    return DiversityMatrix(v=v, frame_count=frames.shape[0])


def select_threshold(v: DiversityMatrix, percentile: float = DEFAULT_ETA_PERCENTILE) -> float:
    """Edge threshold: the given percentile (linear interpolation) of the
    upper-triangle diversity values.

    Degenerate corpora (all diversities zero, or a percentile landing inside a
    block of zeros) fall back to the smallest positive value that still
    separates rigid pairs, with a warning.
    """
    if not 0 < percentile < 100:
        raise TopologyError(f"percentile must be in (0, 100), got {percentile}")
    values = v.upper_values()
    if values.size < 1:
        raise TopologyError("need at least 2 keypoints")
    eta = float(np.percentile(values, percentile))
    if eta <= 0.0:
        positive = values[values > 0]
        if positive.size == 0:
            warnings.warn("all distance diversities are zero; topology is degenerate")
            return float(np.finfo(np.float64).tiny)
        warnings.warn(
            f"percentile {percentile} fell inside the zero-diversity block; "
            "using the smallest positive diversity as threshold"
        )
        return float(positive.min())
    return eta


def edge_value(v_ij, eta: float):
    """Connection strength in [0, 1]: (v - eta)^2 / eta^2 below the threshold,
    zero at or above it."""
    v_ij = np.asarray(v_ij, dtype=np.float64)
    if np.any(v_ij < 0):
        raise TopologyError("diversity values must be nonnegative")
    if eta <= 0:
        raise TopologyError("eta must be positive")
    e = np.where(v_ij < eta, (v_ij - eta) ** 2 / eta ** 2, 0.0)
    return float(e) if e.ndim == 0 else e


def _connected_components(nodes, edges) -> list:
    comps = []
    seen = set()
    adj = {n: set() for n in nodes}
    for (i, j) in edges:
        adj[i].add(j)
        adj[j].add(i)
    for n in sorted(nodes):
        if n in seen:
            continue
        comp = set()
        stack = [n]
        while stack:
            cur = stack.pop()
            if cur in comp:
                continue
            comp.add(cur)
            stack.extend(adj[cur] - comp)
        seen |= comp
        comps.append(comp)
    return comps


def build_topology(v: DiversityMatrix, eta: float) -> TopologyGraph:
    """Threshold the diversity matrix into a weighted graph and keep the
    largest connected component as the structured set.

    Ties on component size break by total edge weight, then by smallest member
    index.  A singleton largest component (an edgeless graph) yields an empty
    structured set.
    """
    if eta <= 0:
        raise TopologyError("eta must be positive")
    k = v.v.shape[0]
    all_edges = {}
    for i in range(k):
        for j in range(i + 1, k):
            e = edge_value(v.v[i, j], eta)
            if e > 0:
                all_edges[(i, j)] = float(e)

    comps = _connected_components(range(k), all_edges)

    def comp_weight(comp):
        return sum(e for (i, j), e in all_edges.items() if i in comp and j in comp)

    best = max(comps, key=lambda c: (len(c), comp_weight(c), -min(c)))
    if len(best) < 2:
        return TopologyGraph(
            structured=frozenset(),
            edges={},
            unstructured=frozenset(range(k)),
            eta=float(eta),
            num_keypoints=k,
        )
    edges = {(i, j): e for (i, j), e in all_edges.items() if i in best and j in best}
    return TopologyGraph(
        structured=frozenset(best),
        edges=edges,
        unstructured=frozenset(range(k)) - frozenset(best),
        eta=float(eta),
        num_keypoints=k,
    )


def enumerate_structured_triplets(g: TopologyGraph) -> list:
    """All (vertex, arm_a, arm_b, weight) triplets of the structured graph.

    For each vertex i and each unordered pair {j, k} of its neighbors the
    weight is the product of the two edge values.  Ordering is deterministic:
    by vertex, then by the two arm indices with arm_a < arm_b.
    """
    triplets = []
    for i in sorted(g.structured):
        nbrs = g.neighbors(i)
        for a_idx in range(len(nbrs)):
            for b_idx in range(a_idx + 1, len(nbrs)):
                j, k = nbrs[a_idx], nbrs[b_idx]
                e_ij = g.edges[(min(i, j), max(i, j))]
                e_ik = g.edges[(min(i, k), max(i, k))]
                triplets.append((i, j, k, e_ij * e_ik))
    return triplets


def discover_topology(trajectories, percentile: float = DEFAULT_ETA_PERCENTILE) -> TopologyGraph:
    """One-shot discovery: diversity matrix -> threshold -> graph."""
    v = distance_diversity(trajectories)
    eta = select_threshold(v, percentile)
    return build_topology(v, eta)
