"""Mission and campaign orchestration.

A mission flies one budget: image, infer, fuse, plan, move, repeat. A
campaign runs ``missions`` of them, retraining from the fixed checkpoint
on everything labelled so far after each one.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import acquire
from . import model as mdl
from .config import ExperimentConfig
from .mapping import MultiLayerMap, Observation, StoredImage, recompute_priors
from .metrics import evaluate_probs
from .plan import (
    MapView,
    Path,
    plan_coverage,
    plan_frontier,
    plan_local,
    plan_mcts,
    plan_optimisation,
    plan_random_global,
    plan_random_local,
)
from .plan.core import flight_time, same_xy
from .terrain import Geometry, SemanticTerrain, Waypoint, crop_image, generate_terrain, sample_positions

logger = logging.getLogger(__name__)

BUDGET_TOL = 1e-9


class BudgetViolation(AssertionError):
    """A step would push the flown cost above the mission budget."""


def step_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass
class MetricRow:
    mission: int
    images_labeled: int
    miou: float
    acc: float
    f1: float
    ece: float
    class_iou: np.ndarray
    wallclock_s: float = 0.0


@dataclass
class TraceRow:
    mission: int
    t: int
    x: float
    y: float
    z: float
    cost_so_far: float


class ModelBundle:
    """The current model(s) plus the fixed checkpoints they retrain from."""

    def __init__(self, objective: str, checkpoints: list[mdl.ModelParams], cfg: mdl.ModelConfig):
        self.objective = objective
        self.checkpoints = checkpoints
        self.params = list(checkpoints)
        self.cfg = cfg

    @classmethod
    def create(cls, objective: str, n_features: int, n_classes: int, cfg: mdl.ModelConfig, seed: int) -> "ModelBundle":
        n = cfg.ensemble_size if objective == "bayes_ensemble" else 1
        cks = [mdl.init_params(n_features, n_classes, cfg, step_seed(seed, 101, i)) for i in range(n)]
        return cls(objective, cks, cfg)

    @property
    def encoder(self) -> mdl.ModelParams:
        return self.params[0]

    def retrain(self, data: mdl.TrainingSet, seed: int) -> None:
        if len(data) == 0:
            self.params = list(self.checkpoints)
            return
        self.params = [mdl.train(ck, data, self.cfg, step_seed(seed, 202, i)) for i, ck in enumerate(self.checkpoints)]

    def infer(self, z: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """Semantic probabilities and the uncertainty image for one crop."""
        if self.objective == "bayes_mc_dropout":
            post = acquire.posterior_mean(mdl.predict_mc_dropout(self.params[0], z, self.cfg.mc_samples, seed))
            return post.mean, acquire.mutual_information(post).values
        if self.objective == "bayes_ensemble":
            post = acquire.posterior_mean(mdl.predict_ensemble(self.params, z))
            return post.mean, acquire.mutual_information(post).values
        p = mdl.predict(self.params[0], z)
        return p, acquire.entropy(p).values

    def predict_many(self, Z: np.ndarray, seed: int) -> np.ndarray:
        if self.objective == "bayes_mc_dropout":
            return mdl.predict_mc_dropout_many(self.params[0], Z, self.cfg.mc_samples, seed).mean(axis=0)
        if self.objective == "bayes_ensemble":
            return np.mean([mdl.predict_many(p, Z) for p in self.params], axis=0)
        return mdl.predict_many(self.params[0], Z)


@dataclass
class TestSet:
    features: np.ndarray  # (n, D, h, w)
    labels: np.ndarray  # (n, h, w)


@dataclass
class MissionState:
    mission: int
    budget: float
    pose: Waypoint
    training: mdl.TrainingSet
    models: ModelBundle
    map: MultiLayerMap
    db: acquire.LatentDatabase
    history: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    spent: float = 0.0
    images_this_mission: int = 0


class Campaign:
    """Everything fixed for one (config, planner, objective, seed) run."""

    def __init__(self, cfg: ExperimentConfig, seed: int, planner: str | None = None, objective: str | None = None):
        self.cfg = cfg
        self.seed = seed
        self.planner = planner or cfg.planner.kind
        self.objective = objective or cfg.objective
        self.terrain = generate_terrain(seed, cfg.terrain)
        self.geom = Geometry.of(self.terrain, cfg.camera)
        self.test = build_test_set(cfg, self.terrain, seed)
        self.layer = "novelty" if self.objective == "novelty" else "uncertainty"

    def fresh_map(self) -> MultiLayerMap:
        return MultiLayerMap(self.terrain.shape, self.terrain.n_classes)

    def start_pose(self) -> Waypoint:
        return self.geom.corner(self.cfg.start)

    def view(self, m: MultiLayerMap) -> MapView:
        return MapView.from_map(m, self.geom, self.cfg.kinematics, self.layer, self.cfg.planner.eps)


def build_test_set(cfg: ExperimentConfig, terrain: SemanticTerrain, seed: int) -> TestSet:
    if cfg.test_regime == "generalisation":
        # same class appearance, unseen layout
        source = generate_terrain(seed + 100_003, cfg.terrain, terrain.prototypes)
    else:
        source = terrain
    geom = Geometry.of(source, cfg.camera)
    rng = np.random.default_rng([seed, 303])
    feats, labels = [], []
    for wp in sample_positions(geom, cfg.n_test, rng):
        z, y = crop_image(source, geom.footprint(wp.x, wp.y))
        feats.append(z)
        labels.append(y)
    return TestSet(np.stack(feats), np.stack(labels))


def observe(state: MissionState, camp: Campaign, z: np.ndarray, footprint, seed: int, is_training: bool) -> tuple[Observation, np.ndarray]:
    probs, u = state.models.infer(z, seed)
    latents = mdl.encode(state.models.encoder, z)
    r = acquire.novelty(state.db, latents, state.models.encoder.patch).values
    obs = Observation(footprint, probs, u, r, is_training)
    return obs, latents


def _collect(state: MissionState, camp: Campaign, step: int) -> np.ndarray:
    """Image, label and map the current pose; returns the acquisition image."""
    fp = camp.geom.footprint(state.pose.x, state.pose.y)
    z, y = crop_image(camp.terrain, fp)
    obs, latents = observe(state, camp, z, fp, step_seed(camp.seed, state.mission, step, 1), True)
    state.map.fuse(obs)
    state.training.add(z, y, fp)
    state.history.append(StoredImage(fp, z, True))
    acquire.db_insert_image(state.db, latents)
    state.images_this_mission += 1
    state.trace.append(TraceRow(state.mission, state.images_this_mission - 1, state.pose.x, state.pose.y, state.pose.z, state.spent))
    return obs.novelty if camp.layer == "novelty" else obs.uncertainty


def _stream(state: MissionState, camp: Campaign, a: Waypoint, b: Waypoint, step: int) -> None:
    """Map (but do not label) images every half footprint along the hop a -> b."""
    interval = camp.geom.fov_w * camp.geom.gsd_m / 2.0
    d = math.hypot(b.x - a.x, b.y - a.y)
    k = 1
    while k * interval < d - 1e-9:
        f = k * interval / d
        fp = camp.geom.footprint(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
        z, _ = crop_image(camp.terrain, fp)
        obs, _ = observe(state, camp, z, fp, step_seed(camp.seed, state.mission, step, 2, k), False)
        state.map.fuse(obs)
        state.history.append(StoredImage(fp, z, False))
        k += 1


def _next_waypoint(state: MissionState, camp: Campaign, score_image, coverage: Path | None, step: int) -> Waypoint:
    cfg = camp.cfg.planner
    remaining = state.budget - state.spent
    pose = state.pose
    seed = step_seed(camp.seed, state.mission, step, 3)
    kind = camp.planner
    if kind == "coverage":
        idx = state.images_this_mission
        return coverage.waypoints[idx] if idx < len(coverage) else pose
    if kind == "random_local":
        return plan_random_local(camp.view(state.map), pose, cfg, seed, remaining)
    view = camp.view(state.map)
    if kind == "random_global":
        return plan_random_global(view, pose, remaining, cfg, seed)
    if kind == "local":
        return plan_local(view, score_image, pose, cfg, remaining)
    if kind == "frontier":
        return plan_frontier(state.map, view, pose, cfg, remaining, seed)
    if kind == "optimisation":
        path = plan_optimisation(view, pose, remaining, cfg, seed)
        return pose if path.hold else path.waypoints[0]
    if kind == "sampling":
        return plan_mcts(view, pose, remaining, cfg, seed)
    raise ValueError(f"unknown planner {kind!r}")


def run_mission(state: MissionState, camp: Campaign) -> MissionState:
    """Fly one mission in place; the model stays frozen throughout."""
    if state.budget <= 0:
        return state
    km = camp.cfg.kinematics
    coverage = None
    if camp.planner == "coverage":
        coverage = plan_coverage(camp.geom, km, state.budget, state.mission, camp.cfg.planner)
        state.pose = coverage.waypoints[0]
    step = 0
    score = _collect(state, camp, step)
    holds = 0
    while True:
        step += 1
        nxt = _next_waypoint(state, camp, score, coverage, step)
        if same_xy(nxt, state.pose):
            holds += 1
            if holds >= 2:
                break
            continue
        holds = 0
        cost = flight_time(km, state.pose, nxt)
        if state.spent + cost > state.budget + BUDGET_TOL:
            raise BudgetViolation(
                f"mission {state.mission}: step to ({nxt.x:.2f}, {nxt.y:.2f}) costs {cost:.3f}s "
                f"with {state.budget - state.spent:.3f}s left"
            )
        if camp.cfg.stream_mapping:
            _stream(state, camp, state.pose, nxt, step)
        state.spent += cost
        state.pose = nxt
        score = _collect(state, camp, step)
    return state


def evaluate(models: ModelBundle, test: TestSet, n_classes: int, seed: int) -> dict:
    probs = models.predict_many(test.features, seed)
    return evaluate_probs(probs, test.labels, n_classes)


@dataclass
class CampaignResult:
    planner: str
    objective: str
    seed: int
    rows: list
    trace: list
    snapshots: list  # per mission: dict of map layers at mission end
    budgets: list  # flight time spent per mission


def _replay_observer(state: MissionState, camp: Campaign):
    counter = iter(range(10**9))

    def _obs(rec: StoredImage) -> Observation:
        obs, _ = observe(state, camp, rec.features, rec.footprint, step_seed(camp.seed, state.mission, next(counter), 4), rec.is_training_sample)
        return obs

    return _obs


def run_campaign(cfg: ExperimentConfig, seed: int, planner: str | None = None, objective: str | None = None) -> CampaignResult:
    camp = Campaign(cfg, seed, planner, objective)
    K = camp.terrain.n_classes
    models = ModelBundle.create(camp.objective, camp.terrain.feature_dim, K, cfg.model, seed)
    state = MissionState(
        mission=0,
        budget=cfg.budget,
        pose=camp.start_pose(),
        training=mdl.TrainingSet(),
        models=models,
        map=camp.fresh_map(),
        db=acquire.LatentDatabase(cfg.knn_k, models.encoder.latent_dim),
    )
    snapshots, budgets = [], []
    for m in range(cfg.missions):
        t0 = time.perf_counter()
        state.mission = m
        state.pose = camp.start_pose()
        state.spent = 0.0
        state.images_this_mission = 0
        if m > 0 and cfg.informed_priors:
            state.map = recompute_priors(camp.fresh_map, state.history, _replay_observer(state, camp))
        else:
            state.map = camp.fresh_map()
        run_mission(state, camp)
        snapshots.append({k: v.copy() for k, v in state.map.layers().items()})
        budgets.append(state.spent)
        state.models.retrain(state.training, step_seed(seed, m, 5))
        state.db = acquire.rebuild_db(state.models.encoder, state.training, cfg.knn_k)
        scores = evaluate(state.models, camp.test, K, step_seed(seed, m, 6))
        wall = time.perf_counter() - t0 if cfg.record_wallclock else 0.0
        state.rows.append(
            MetricRow(m, len(state.training), scores["miou"], scores["acc"], scores["f1"], scores["ece"], scores["class_iou"], wall)
        )
        logger.info("%s/%s seed %d mission %d: %d images, mIoU %.4f", camp.planner, camp.objective, seed, m, len(state.training), scores["miou"])
    return CampaignResult(camp.planner, camp.objective, seed, state.rows, state.trace, snapshots, budgets)
