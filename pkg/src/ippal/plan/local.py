"""Image-edge local planner."""

from __future__ import annotations

import numpy as np

from ..terrain import Waypoint
from .core import DIRECTION_STEPS, DIRECTIONS, MapView, PlannerConfig, same_xy


def edge_bands(rows: int, cols: int) -> dict[str, tuple[slice, slice]]:
    """N/E/S/W bands of width fov/4 along the image edges."""
    bh = max(1, rows // 4)
    bw = max(1, cols // 4)
    return {
        "N": (slice(0, bh), slice(0, cols)),
        "E": (slice(0, rows), slice(cols - bw, cols)),
        "S": (slice(rows - bh, rows), slice(0, cols)),
        "W": (slice(0, rows), slice(0, bw)),
    }


def edge_values(view: MapView, score_image: np.ndarray, pose: Waypoint) -> dict[str, float]:
    fp = view.geom.footprint(pose.x, pose.y)
    counts = view.train_counts[fp.slices()]
    score = np.asarray(score_image, dtype=np.float64)
    if score.shape != counts.shape:
        raise ValueError(f"score image shape {score.shape} does not match footprint {counts.shape}")
    return {
        d: float(score[b].sum() / (counts[b].sum() + view.eps))
        for d, b in edge_bands(*score.shape).items()
    }


def step_towards(view: MapView, pose: Waypoint, direction: str, step_m: float) -> Waypoint:
    dx, dy = DIRECTION_STEPS[direction]
    x, y = view.geom.clip(pose.x + dx * step_m, pose.y + dy * step_m)
    return Waypoint(float(x), float(y), pose.z)


def plan_local(view: MapView, score_image: np.ndarray, pose: Waypoint, cfg: PlannerConfig, budget: float = np.inf) -> Waypoint:
    """Step towards the edge band with the highest count-normalised score.

    Ties resolve N, E, S, W. An edge whose step is fully clipped away (or is
    unaffordable) is skipped in favour of the next best; if none remains the
    current pose is returned.
    """
    values = edge_values(view, score_image, pose)
    ranked = sorted(DIRECTIONS, key=lambda d: (-values[d], DIRECTIONS.index(d)))
    step_m = cfg.local_step_factor * view.geom.fov_w * view.geom.gsd_m
    for d in ranked:
        nxt = step_towards(view, pose, d, step_m)
        if same_xy(nxt, pose):
            continue
        if view.hop_costs(pose.x, pose.y, nxt.x, nxt.y) > budget:
            continue
        return nxt
    return pose
