"""Coverage lawnmower and random-walk baselines."""

from __future__ import annotations

import numpy as np

from ..terrain import Geometry, Waypoint
from .core import (
    DIRECTIONS,
    KinematicModel,
    MapView,
    Path,
    PlannerConfig,
    flight_time,
    lattice_axis,
    max_distance,
    same_xy,
)
from .local import step_towards

MAX_REDRAWS = 32


def coverage_pattern(geom: Geometry, mission: int, cfg: PlannerConfig) -> tuple[str, float]:
    """Orientation alternates every mission; spacing cycles every two missions."""
    orientation = "horizontal" if mission % 2 == 0 else "vertical"
    factor = cfg.coverage_spacings[(mission // 2) % len(cfg.coverage_spacings)]
    return orientation, factor * geom.fov_w * geom.gsd_m


def plan_coverage(geom: Geometry, km: KinematicModel, budget: float, mission: int, cfg: PlannerConfig) -> Path:
    """Boustrophedon sweep from the top-left flyable corner, truncated to ``budget``."""
    orientation, spacing = coverage_pattern(geom, mission, cfg)
    x0, x1, y0, y1 = geom.flyable
    xs = lattice_axis(x0, x1, spacing)
    ys = lattice_axis(y0, y1, spacing)
    wps: list[Waypoint] = []
    if orientation == "horizontal":
        for i, y in enumerate(ys):
            row = xs if i % 2 == 0 else xs[::-1]
            wps.extend(Waypoint(float(x), float(y), geom.altitude_m) for x in row)
    else:
        for i, x in enumerate(xs):
            col = ys if i % 2 == 0 else ys[::-1]
            wps.extend(Waypoint(float(x), float(y), geom.altitude_m) for y in col)
    out = [wps[0]]
    spent = 0.0
    for w in wps[1:]:
        c = flight_time(km, out[-1], w)
        if spent + c > budget:
            break
        spent += c
        out.append(w)
    return Path(out)


def plan_random_local(view: MapView, pose: Waypoint, cfg: PlannerConfig, seed: int, budget: float = np.inf) -> Waypoint:
    """Follow one of the four image edges, picked uniformly at random.

    Edges whose step is clipped away or unaffordable are not drawn, so the
    walk only holds when every edge is blocked.
    """
    rng = np.random.default_rng([seed, 21])
    step_m = cfg.local_step_factor * view.geom.fov_w * view.geom.gsd_m
    options = []
    for d in DIRECTIONS:
        nxt = step_towards(view, pose, d, step_m)
        if not same_xy(nxt, pose) and view.hop_costs(pose.x, pose.y, nxt.x, nxt.y) <= budget:
            options.append(nxt)
    if not options:
        return pose
    return options[int(rng.integers(len(options)))]


def sample_global_step(rng: np.random.Generator, r_min: float, r_max: float) -> tuple[float, float]:
    return float(rng.uniform(r_min, r_max)), float(rng.uniform(0.0, 2.0 * np.pi))


def plan_random_global(view: MapView, pose: Waypoint, budget: float, cfg: PlannerConfig, seed: int) -> Waypoint:
    """Uniform radius in [r_min, r_max] (capped by the budget) and uniform heading."""
    geom = view.geom
    fov_m = geom.fov_w * geom.gsd_m
    r_min = cfg.random_min_radius_factor * fov_m
    r_max = min(cfg.random_max_radius_factor * fov_m, max_distance(view.km, budget))
    if r_max < r_min:
        return pose
    rng = np.random.default_rng([seed, 23])
    # a draw that clips back onto the pose (e.g. heading out of a corner) is redrawn
    for _ in range(MAX_REDRAWS):
        radius, heading = sample_global_step(rng, r_min, r_max)
        x, y = geom.clip(pose.x + radius * np.cos(heading), pose.y + radius * np.sin(heading))
        nxt = Waypoint(float(x), float(y), pose.z)
        if not same_xy(nxt, pose):
            return nxt
    return pose
