"""Greedy lattice initialisation refined by CMA-ES in continuous space."""

from __future__ import annotations

import math

import numpy as np

from ..terrain import Waypoint
from .core import MapView, Path, PlannerConfig, lattice_axis


def lattice(view: MapView, cfg: PlannerConfig) -> np.ndarray:
    """Flyable positions on a grid of ``lattice_spacing_factor`` footprints, row-major."""
    g = view.geom
    x0, x1, y0, y1 = g.flyable
    xs = lattice_axis(x0, x1, cfg.lattice_spacing_factor * g.fov_w * g.gsd_m)
    ys = lattice_axis(y0, y1, cfg.lattice_spacing_factor * g.fov_h * g.gsd_m)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def plan_greedy_lattice(view: MapView, pose: Waypoint, budget: float, cfg: PlannerConfig) -> Path:
    """Append, P times, the lattice point maximising
    score / (hop cost * (forward-simulated counts + eps)).

    Stops early when no lattice point is affordable; an empty result holds
    the current pose and sets ``hold``.
    """
    F = lattice(view, cfg)
    g = view.geom
    h, w = g.fov_h, g.fov_w
    s, t = view.sums(F[:, 0], F[:, 1])
    r0, c0 = g.origin(F[:, 0], F[:, 1])
    extra = np.zeros(len(F))
    prev = (pose.x, pose.y)
    remaining = budget
    chosen: list[Waypoint] = []
    for _ in range(cfg.horizon):
        cost = view.hop_costs(prev[0], prev[1], F[:, 0], F[:, 1])
        ok = (cost <= remaining) & (np.hypot(F[:, 0] - prev[0], F[:, 1] - prev[1]) > 1e-9)
        if not ok.any():
            break
        value = s / (np.maximum(cost, view.cost_floor) * (t + extra + view.eps))
        value = np.where(ok, value, -np.inf)
        i = int(np.argmax(value))  # first maximum, i.e. lowest lattice index
        chosen.append(Waypoint(float(F[i, 0]), float(F[i, 1]), pose.z))
        remaining -= cost[i]
        extra += np.maximum(0, h - np.abs(r0 - r0[i])) * np.maximum(0, w - np.abs(c0 - c0[i]))
        prev = (F[i, 0], F[i, 1])
    if not chosen:
        return Path([pose], hold=True)
    return Path(chosen)


def path_value(view: MapView, pose: Waypoint, path: Path, budget: float) -> float:
    """Objective of a path flown from ``pose``; -inf when over budget."""
    xy = path.xy()
    if view.path_costs(pose, xy)[0] > budget + 1e-9:
        return -math.inf
    return float(view.path_objective(pose, xy)[0])


class CMAES:
    """Minimal (mu/mu_w, lambda) CMA-ES for maximisation.

    Rank-mu and rank-one covariance updates with cumulative step-size
    adaptation, following the standard default parameter settings.
    """

    def __init__(self, mean: np.ndarray, sigma: float, popsize: int, rng: np.random.Generator):
        n = len(mean)
        self.n = n
        self.mean = np.asarray(mean, dtype=np.float64).copy()
        self.sigma = float(sigma)
        self.lam = popsize
        self.mu = popsize // 2
        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 2 * self.mueff / self.lam + 0.3 + self.cs
        self.chiN = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.invsqrtC = np.eye(n)
        self.rng = rng
        self.gen = 0

    def ask(self) -> np.ndarray:
        z = self.rng.standard_normal((self.lam, self.n))
        return self.mean + self.sigma * (z * self.D) @ self.B.T

    def tell(self, X: np.ndarray, fitness: np.ndarray) -> None:
        """Update from candidates ``X`` and their fitness (higher is better)."""
        self.gen += 1
        order = np.argsort(-fitness, kind="stable")[: self.mu]
        old = self.mean
        sel = X[order]
        self.mean = self.weights @ sel
        y = (self.mean - old) / self.sigma
        self.ps = (1 - self.cs) * self.ps + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * (self.invsqrtC @ y)
        hsig = np.linalg.norm(self.ps) / math.sqrt(1 - (1 - self.cs) ** (2 * self.gen)) / self.chiN < 1.4 + 2 / (self.n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * y
        artmp = (sel - old) / self.sigma
        self.C = (
            (1 - self.c1 - self.cmu) * self.C
            + self.c1 * (np.outer(self.pc, self.pc) + (1 - hsig) * self.cc * (2 - self.cc) * self.C)
            + self.cmu * (artmp.T * self.weights) @ artmp
        )
        self.sigma *= math.exp((self.cs / self.damps) * (np.linalg.norm(self.ps) / self.chiN - 1))
        self.C = np.triu(self.C) + np.triu(self.C, 1).T
        evals, self.B = np.linalg.eigh(self.C)
        self.D = np.sqrt(np.maximum(evals, 1e-20))
        self.invsqrtC = (self.B / self.D) @ self.B.T


def refine_path(view: MapView, pose: Waypoint, init: Path, budget: float, cfg: PlannerConfig, seed: int) -> Path:
    """CMA-ES over the 2P waypoint coordinates, seeded with ``init``.

    Candidates are clipped to the flyable region; over-budget candidates
    score -inf. ``init`` is evaluated in generation 0 and the best path seen
    is returned, so the result never scores below ``init``.
    """
    if init.hold or cfg.cma_generations == 0:
        return init
    g = view.geom
    P = len(init)
    x0 = init.xy().ravel()
    lo = np.tile([g.flyable[0], g.flyable[2]], P)
    hi = np.tile([g.flyable[1], g.flyable[3]], P)
    extent = min(g.cols, g.rows) * g.gsd_m
    es = CMAES(x0, cfg.cma_sigma0_frac * extent, cfg.population(P), np.random.default_rng([seed, 31]))

    def evaluate(X: np.ndarray) -> np.ndarray:
        xy = X.reshape(len(X), P, 2)
        f = view.path_objective(pose, xy)
        over = view.path_costs(pose, xy) > budget + 1e-9
        return np.where(over, -np.inf, f)

    best_x = x0.copy()
    best_f = evaluate(x0[None])[0]
    for gen in range(cfg.cma_generations):
        X = np.clip(es.ask(), lo, hi)
        if gen == 0:
            X[0] = x0
        f = evaluate(X)
        i = int(np.argmax(f))
        if f[i] > best_f:
            best_f, best_x = f[i], X[i].copy()
        if not np.isfinite(f).any():
            continue
        # infeasible candidates rank below every feasible one
        es.tell(X, np.where(np.isfinite(f), f, np.nanmin(np.where(np.isfinite(f), f, np.inf)) - 1.0))
    xy = best_x.reshape(P, 2)
    return Path([Waypoint(float(x), float(y), pose.z) for x, y in xy])


def plan_optimisation(view: MapView, pose: Waypoint, budget: float, cfg: PlannerConfig, seed: int) -> Path:
    greedy = plan_greedy_lattice(view, pose, budget, cfg)
    return refine_path(view, pose, greedy, budget, cfg, seed)
