"""Kinematic cost model, paths, planner configuration and map snapshots."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..mapping import MultiLayerMap
from ..terrain import Footprint, Geometry, Waypoint

DIRECTIONS = ("N", "E", "S", "W")
# unit steps in (dx, dy); y grows southwards (row index)
DIRECTION_STEPS = {"N": (0.0, -1.0), "E": (1.0, 0.0), "S": (0.0, 1.0), "W": (-1.0, 0.0)}


@dataclass(frozen=True)
class KinematicModel:
    v_max: float = 2.0
    accel: float = 2.0

    def __post_init__(self):
        if self.v_max <= 0 or self.accel <= 0:
            raise ValueError("v_max and accel must be positive")


def flight_time(km: KinematicModel, p: Waypoint, q: Waypoint) -> float:
    """Trapezoidal (or triangular, for short hops) velocity profile time."""
    d = math.sqrt((p.x - q.x) ** 2 + (p.y - q.y) ** 2 + (p.z - q.z) ** 2)
    return kernels.flight_time(d, km.v_max, km.accel)


def flight_time_dist(km: KinematicModel, d):
    d = np.asarray(d, dtype=np.float64)
    v, a = km.v_max, km.accel
    tri = 2.0 * np.sqrt(np.maximum(d, 0.0) / a)
    trap = d / v + v / a
    return np.where(d <= 0, 0.0, np.where(d >= v * v / a, trap, tri))


def max_distance(km: KinematicModel, t: float) -> float:
    """Largest hop that can be flown in time ``t``."""
    v, a = km.v_max, km.accel
    if t <= 0:
        return 0.0
    if t >= 2.0 * v / a:
        return v * (t - v / a)
    return a * t * t / 4.0


@dataclass
class Path:
    waypoints: list[Waypoint]
    hold: bool = False

    def __len__(self) -> int:
        return len(self.waypoints)

    def xy(self) -> np.ndarray:
        return np.array([[w.x, w.y] for w in self.waypoints], dtype=np.float64).reshape(-1, 2)


def path_cost(km: KinematicModel, path) -> float:
    wps = path.waypoints if isinstance(path, Path) else list(path)
    return float(sum(flight_time(km, a, b) for a, b in zip(wps[:-1], wps[1:])))


@dataclass(frozen=True)
class PlannerConfig:
    kind: str = "frontier"
    horizon: int = 3
    # sampling (MCTS)
    mcts_simulations: int = 300
    ucb_c: float = math.sqrt(2.0)
    n_headings: int = 8
    step_factors: tuple[float, ...] = (0.5, 1.0)  # multiples of the footprint width
    # optimisation (greedy lattice + CMA-ES)
    cma_generations: int = 30
    cma_sigma0_frac: float = 0.1
    lattice_spacing_factor: float = 1.0
    # frontier / local / random walk
    frontier_spacing_factor: float = 0.5
    local_step_factor: float = 0.5
    random_min_radius_factor: float = 0.5
    random_max_radius_factor: float = 4.0
    coverage_spacings: tuple[float, ...] = (1.0, 1.5)
    eps: float | None = None  # defaults to the footprint cell count

    def population(self, n_waypoints: int | None = None) -> int:
        P = self.horizon if n_waypoints is None else n_waypoints
        return 4 + int(math.floor(3.0 * math.log(2 * P)))

    def validate(self) -> None:
        positive = (
            "horizon", "mcts_simulations", "ucb_c", "n_headings", "cma_sigma0_frac",
            "lattice_spacing_factor", "frontier_spacing_factor", "local_step_factor",
            "random_min_radius_factor", "random_max_radius_factor",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"planner.{name} must be positive")
        if self.cma_generations < 0:
            raise ValueError("planner.cma_generations must be >= 0")
        if self.cma_sigma0_frac > 1.0:
            raise ValueError("planner.cma_sigma0_frac must not exceed the terrain extent")
        if self.random_min_radius_factor > self.random_max_radius_factor:
            raise ValueError("random walk min radius exceeds max radius")
        if not self.step_factors or min(self.step_factors) <= 0:
            raise ValueError("planner.step_factors must be positive")


@dataclass(eq=False)
class MapView:
    """Read-only planning snapshot: summed-area tables of one score layer and Tc."""

    geom: Geometry
    km: KinematicModel
    score: np.ndarray
    train_counts: np.ndarray
    eps: float
    sat_s: np.ndarray = field(init=False, repr=False)
    sat_t: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.score = np.array(self.score, dtype=np.float64)
        self.train_counts = np.array(self.train_counts, dtype=np.float64)
        self.sat_s = kernels.summed_area(self.score)
        self.sat_t = kernels.summed_area(self.train_counts)

    @classmethod
    def from_map(cls, m: MultiLayerMap, geom: Geometry, km: KinematicModel, layer: str = "uncertainty", eps: float | None = None) -> "MapView":
        if layer not in ("uncertainty", "novelty"):
            raise ValueError(f"unknown score layer {layer!r}")
        score = m.mu_u if layer == "uncertainty" else m.mu_r
        return cls(geom, km, score, m.train_counts, float(geom.area if eps is None else eps))

    @property
    def cost_floor(self) -> float:
        """Cost charged for hops shorter than one cell, so ratios stay finite."""
        return kernels.flight_time(self.geom.gsd_m, self.km.v_max, self.km.accel)

    def sums(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Score and train-count sums over the footprints at (arrays of) positions."""
        r0, c0 = self.geom.origin(x, y)
        h, w = self.geom.fov_h, self.geom.fov_w
        return kernels.rect_sums(self.sat_s, r0, c0, h, w), kernels.rect_sums(self.sat_t, r0, c0, h, w)

    def rect_sum(self, fp: Footprint, which: str = "score") -> float:
        sat = self.sat_s if which == "score" else self.sat_t
        return float(kernels.rect_sums(sat, np.array([fp.row0]), np.array([fp.col0]), fp.rows, fp.cols)[0])

    def hop_costs(self, x0, y0, x1, y1) -> np.ndarray:
        return flight_time_dist(self.km, np.hypot(np.asarray(x1) - x0, np.asarray(y1) - y0))

    def path_objective(self, start: Waypoint, xy: np.ndarray) -> np.ndarray:
        """Cost-normalised information of paths ``xy`` (n, P, 2) flown from ``start``.

        Each waypoint earns score / (hop cost * (forward-simulated counts + eps));
        forward simulation adds 1 per cell for every earlier planned footprint.
        """
        xy = np.asarray(xy, dtype=np.float64)
        if xy.ndim == 2:
            xy = xy[None]
        prev = np.concatenate([np.broadcast_to([start.x, start.y], (xy.shape[0], 1, 2)), xy[:, :-1]], axis=1)
        costs = np.maximum(self.hop_costs(prev[..., 0], prev[..., 1], xy[..., 0], xy[..., 1]), self.cost_floor)
        r0, c0 = self.geom.origin(xy[..., 0], xy[..., 1])
        return kernels.path_objective(self.sat_s, self.sat_t, r0, c0, costs, self.geom.fov_h, self.geom.fov_w, self.eps)

    def path_costs(self, start: Waypoint, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        if xy.ndim == 2:
            xy = xy[None]
        prev = np.concatenate([np.broadcast_to([start.x, start.y], (xy.shape[0], 1, 2)), xy[:, :-1]], axis=1)
        return self.hop_costs(prev[..., 0], prev[..., 1], xy[..., 0], xy[..., 1]).sum(axis=1)


def lattice_axis(lo: float, hi: float, spacing: float) -> np.ndarray:
    """Points from lo at ``spacing``, plus hi itself when not already hit."""
    n = int(math.floor((hi - lo) / spacing + 1e-9)) + 1
    pts = lo + spacing * np.arange(n)
    if hi - pts[-1] > 1e-9:
        pts = np.append(pts, hi)
    return pts


def same_xy(p: Waypoint, q: Waypoint, tol: float = 1e-9) -> bool:
    return abs(p.x - q.x) <= tol and abs(p.y - q.y) <= tol
