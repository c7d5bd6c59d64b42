"""Greedy frontier planner."""

from __future__ import annotations

import numpy as np

from ..mapping import MultiLayerMap
from ..terrain import Waypoint
from .baselines import plan_random_global
from .core import MapView, PlannerConfig


def thin_cells(cells: np.ndarray, spacing: int) -> np.ndarray:
    """Keep cells (row-major order) at Chebyshev distance >= spacing from every kept cell."""
    kept: list[tuple[int, int]] = []
    for r, c in cells:
        if all(max(abs(r - kr), abs(c - kc)) >= spacing for kr, kc in kept):
            kept.append((int(r), int(c)))
    return np.array(kept, dtype=np.int64).reshape(-1, 2)


def frontier_candidates(m: MultiLayerMap, view: MapView, cfg: PlannerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Flyable positions lifted from thinned frontier cells, with their source cell index."""
    cells = np.argwhere(m.frontier_mask())
    geom = view.geom
    spacing = max(1, int(round(cfg.frontier_spacing_factor * geom.fov_w)))
    cells = thin_cells(cells, spacing)
    if len(cells) == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    x, y = geom.clip((cells[:, 1] + 0.5) * geom.gsd_m, (cells[:, 0] + 0.5) * geom.gsd_m)
    xy = np.stack([x, y], axis=1)
    index = cells[:, 0] * geom.cols + cells[:, 1]
    # several frontier cells can clip onto one position; keep the lowest index
    _, first = np.unique(np.round(xy, 9), axis=0, return_index=True)
    first = np.sort(first)
    return xy[first], index[first]


def select_frontier(view: MapView, pose: Waypoint, xy: np.ndarray, index: np.ndarray, budget: float = np.inf) -> Waypoint | None:
    """argmax of score / (Tc + eps); ties by distance to pose, then cell index."""
    if len(xy) == 0:
        return None
    dist = np.hypot(xy[:, 0] - pose.x, xy[:, 1] - pose.y)
    ok = (dist > 1e-9) & (view.hop_costs(pose.x, pose.y, xy[:, 0], xy[:, 1]) <= budget)
    if not ok.any():
        return None
    s, t = view.sums(xy[:, 0], xy[:, 1])
    value = s / (t + view.eps)
    order = np.lexsort((index, dist, -value))
    best = next(i for i in order if ok[i])
    return Waypoint(float(xy[best, 0]), float(xy[best, 1]), pose.z)


def plan_frontier(m: MultiLayerMap, view: MapView, pose: Waypoint, cfg: PlannerConfig, budget: float = np.inf, seed: int = 0) -> Waypoint:
    xy, index = frontier_candidates(m, view, cfg)
    nxt = select_frontier(view, pose, xy, index, budget)
    if nxt is None:
        return plan_random_global(view, pose, budget, cfg, seed)
    return nxt
