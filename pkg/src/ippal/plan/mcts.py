"""Monte-Carlo tree search over discrete heading/step actions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..terrain import Waypoint
from .core import MapView, PlannerConfig


def action_set(view: MapView, cfg: PlannerConfig) -> np.ndarray:
    """(n_actions, 2) displacements: step-size major, heading minor (0 = east, counter-clockwise)."""
    fov_m = view.geom.fov_w * view.geom.gsd_m
    acts = []
    for f in cfg.step_factors:
        for j in range(cfg.n_headings):
            th = 2.0 * math.pi * j / cfg.n_headings
            acts.append((f * fov_m * math.cos(th), f * fov_m * math.sin(th)))
    a = np.array(acts)
    a[np.abs(a) < 1e-12] = 0.0
    return a


@dataclass(eq=False)
class Node:
    x: float
    y: float
    budget: float
    depth: int
    hist_r: tuple
    hist_c: tuple
    edge_reward: float = 0.0
    action: int = -1
    untried: list = field(default_factory=list)
    children: list = field(default_factory=list)
    visits: int = 0
    value: float = 0.0


class MCTSPlanner:
    """UCB1 selection, one-child expansion, uniform random rollout, mean backup.

    Node values are returns summed from the root, so a child's mean is the
    average information of the simulated paths through it. UCB compares
    means min-max normalised over the returns seen so far, which keeps
    decisions invariant to the score scale and keeps value gaps visible
    next to the exploration bonus.
    """

    def __init__(self, view: MapView, cfg: PlannerConfig, seed: int):
        self.view = view
        self.cfg = cfg
        self.rng = np.random.default_rng([seed, 41])
        self.actions = action_set(view, cfg)
        self.step_costs = view.hop_costs(0.0, 0.0, self.actions[:, 0], self.actions[:, 1])
        self.min_return = math.inf
        self.max_return = -math.inf
        g = view.geom
        self._bounds = np.array(g.flyable)

    def _feasible(self, x: float, y: float, budget: float) -> list[int]:
        nx = x + self.actions[:, 0]
        ny = y + self.actions[:, 1]
        x0, x1, y0, y1 = self._bounds
        ok = (nx >= x0 - 1e-9) & (nx <= x1 + 1e-9) & (ny >= y0 - 1e-9) & (ny <= y1 + 1e-9) & (self.step_costs <= budget)
        return [int(i) for i in np.nonzero(ok)[0]]

    def _child(self, node: Node, a: int) -> Node:
        v = self.view
        g = v.geom
        x = node.x + self.actions[a, 0]
        y = node.y + self.actions[a, 1]
        r, c = g.origin(x, y)
        r, c = int(r), int(c)
        s = kernels.rect_sums(v.sat_s, np.array([r]), np.array([c]), g.fov_h, g.fov_w)[0]
        t = kernels.rect_sums(v.sat_t, np.array([r]), np.array([c]), g.fov_h, g.fov_w)[0]
        for hr, hc in zip(node.hist_r, node.hist_c):
            dr = g.fov_h - abs(hr - r)
            dc = g.fov_w - abs(hc - c)
            if dr > 0 and dc > 0:
                t += dr * dc
        cost = float(self.step_costs[a])
        reward = s / (max(cost, v.cost_floor) * (t + v.eps))
        child = Node(x, y, node.budget - cost, node.depth + 1, node.hist_r + (r,), node.hist_c + (c,), reward, a)
        if child.depth < self.cfg.horizon:
            child.untried = self._feasible(x, y, child.budget)
        return child

    def _ucb_pick(self, node: Node) -> Node:
        lo = self.min_return
        span = self.max_return - lo
        if not span > 0:
            lo, span = 0.0, 1.0
        log_n = math.log(node.visits)
        best, best_u = None, -math.inf
        for ch in node.children:  # children are in action order: ties keep the lowest index
            u = (ch.value / ch.visits - lo) / span + self.cfg.ucb_c * math.sqrt(log_n / ch.visits)
            if u > best_u:
                best, best_u = ch, u
        return best

    def _rollout(self, node: Node) -> float:
        steps = self.cfg.horizon - node.depth
        if steps <= 0:
            return 0.0
        v = self.view
        g = v.geom
        u = self.rng.random(steps)
        return kernels.mcts_rollout(
            v.sat_s, v.sat_t, list(node.hist_r), list(node.hist_c), node.x, node.y, node.budget, steps,
            self.actions[:, 0], self.actions[:, 1], u, self._bounds, g.gsd_m, g.fov_h, g.fov_w,
            v.km.v_max, v.km.accel, v.cost_floor, v.eps,
        )

    def search(self, pose: Waypoint, budget: float) -> tuple[Node, list[Node]]:
        root = Node(pose.x, pose.y, budget, 0, (), ())
        root.untried = self._feasible(pose.x, pose.y, budget)
        if not root.untried:
            return root, []
        for _ in range(self.cfg.mcts_simulations):
            node = root
            trail = [root]
            ret = 0.0
            while not node.untried and node.children:
                node = self._ucb_pick(node)
                trail.append(node)
                ret += node.edge_reward
            if node.untried:
                child = self._child(node, node.untried.pop(0))
                node.children.append(child)
                node = child
                trail.append(node)
                ret += node.edge_reward
            ret += self._rollout(node)
            self.min_return = min(self.min_return, ret)
            self.max_return = max(self.max_return, ret)
            for n in trail:
                n.visits += 1
                n.value += ret
        return root, root.children


def plan_mcts(view: MapView, pose: Waypoint, budget: float, cfg: PlannerConfig, seed: int) -> Waypoint:
    """Root child with the highest mean return; the pose itself when no action is feasible."""
    planner = MCTSPlanner(view, cfg, seed)
    _, children = planner.search(pose, budget)
    if not children:
        return pose
    best = max(children, key=lambda ch: (ch.value / ch.visits, -ch.action))
    x, y = view.geom.clip(best.x, best.y)
    return Waypoint(float(x), float(y), pose.z)
