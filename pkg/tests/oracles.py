"""Independent reference implementations used as test oracles.

Everything here is deliberately naive (python loops, brute force) and shares
no code with the package under test.
"""

import math

import numpy as np
import torch


def fd_gradient(fn, x: torch.Tensor, step: float = 1e-5) -> torch.Tensor:
    """Central finite-difference gradient of scalar fn w.r.t. tensor x."""
    x = x.detach().clone().double()
    grad = torch.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + step
        hi = float(fn(x))
        flat[i] = orig - step
        lo = float(fn(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def rel_error(a: torch.Tensor, b: torch.Tensor) -> float:
    denom = max(a.norm().item(), b.norm().item(), 1e-12)
    return (a - b).norm().item() / denom


def angle_atan2(vertex, a, b) -> float:
    """Included angle via the numerically exact atan2 form."""
    ux, uy = a[0] - vertex[0], a[1] - vertex[1]
    wx, wy = b[0] - vertex[0], b[1] - vertex[1]
    cross = ux * wy - uy * wx
    dot = ux * wx + uy * wy
    return math.atan2(abs(cross), dot)


def diversity_brute(trajectories) -> np.ndarray:
    """Loop-based distance diversity: mean |d_t - mean_t d_t| pooled over all
    frames of all trajectories."""
    k = trajectories[0].shape[1]
    dists = {(i, j): [] for i in range(k) for j in range(i + 1, k)}
    for traj in trajectories:
        for t in range(traj.shape[0]):
            for i in range(k):
                for j in range(i + 1, k):
                    d = math.dist(traj[t][i], traj[t][j])
                    dists[(i, j)].append(d)
    v = np.zeros((k, k))
    for (i, j), ds in dists.items():
        mean = sum(ds) / len(ds)
        val = sum(abs(d - mean) for d in ds) / len(ds)
        v[i, j] = v[j, i] = val
    return v


def components_brute(num_nodes: int, edges) -> list:
    """Connected components by repeated BFS over an adjacency dict."""
    adj = {n: [] for n in range(num_nodes)}
    for (i, j) in edges:
        adj[i].append(j)
        adj[j].append(i)
    comps = []
    left = set(range(num_nodes))
    while left:
        start = min(left)
        comp = {start}
        frontier = [start]
        while frontier:
            nxt = []
            for n in frontier:
                for m in adj[n]:
                    if m not in comp:
                        comp.add(m)
                        nxt.append(m)
            frontier = nxt
        comps.append(frozenset(comp))
        left -= comp
    return comps


def triplets_brute(structured, edges) -> list:
    """All (center, arm, arm) combinations from adjacency lists."""
    adj = {n: set() for n in structured}
    for (i, j) in edges:
        adj[i].add(j)
        adj[j].add(i)
    out = []
    for i in sorted(structured):
        nbrs = sorted(adj[i])
        for x in range(len(nbrs)):
            for y in range(x + 1, len(nbrs)):
                out.append((i, nbrs[x], nbrs[y]))
    return out


def bilinear_at(img: np.ndarray, x: float, y: float) -> np.ndarray:
    """Border-clamped bilinear lookup in an (H, W, C) array at float coords."""
    h, w = img.shape[:2]
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    return (
        img[y0, x0] * (1 - fx) * (1 - fy)
        + img[y0, x1] * fx * (1 - fy)
        + img[y1, x0] * (1 - fx) * fy
        + img[y1, x1] * fx * fy
    )
