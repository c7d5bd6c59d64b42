"""Multi-layer probabilistic terrain map.

Layers: K semantic log-odds layers, running means of uncertainty and
novelty, a hit map and a train-count map. All rasters are (rows, cols).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .terrain import Footprint, OutOfBoundsError

LOGODDS_CLAMP = 10.0


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.log(p) - np.log1p(-p)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


@dataclass(eq=False)
class Observation:
    footprint: Footprint
    probs: np.ndarray  # (K, rows, cols)
    uncertainty: np.ndarray  # (rows, cols)
    novelty: np.ndarray  # (rows, cols)
    is_training_sample: bool = True


class MultiLayerMap:
    def __init__(
        self,
        shape: tuple[int, int],
        n_classes: int,
        prior_uncertainty: float | None = None,
        prior_novelty: float = 1.0,
        clamp: float = LOGODDS_CLAMP,
    ):
        if n_classes < 2:
            raise ValueError("need at least two classes")
        self.shape = tuple(shape)
        self.n_classes = n_classes
        self.clamp = clamp
        self.l0 = float(logit(1.0 / n_classes))
        self.mu_u0 = float(np.log(n_classes)) if prior_uncertainty is None else float(prior_uncertainty)
        self.mu_r0 = float(prior_novelty)
        self.logodds = np.full((n_classes,) + self.shape, self.l0)
        self.mu_u = np.full(self.shape, self.mu_u0)
        self.mu_r = np.full(self.shape, self.mu_r0)
        self.hits = np.zeros(self.shape, dtype=np.int64)
        self.train_counts = np.zeros(self.shape, dtype=np.int64)

    def fresh(self) -> "MultiLayerMap":
        return MultiLayerMap(self.shape, self.n_classes, self.mu_u0, self.mu_r0, self.clamp)

    def copy(self) -> "MultiLayerMap":
        out = self.fresh()
        out.logodds = self.logodds.copy()
        out.mu_u = self.mu_u.copy()
        out.mu_r = self.mu_r.copy()
        out.hits = self.hits.copy()
        out.train_counts = self.train_counts.copy()
        return out

    def _check(self, fp: Footprint) -> None:
        if not fp.inside(self.shape):
            raise OutOfBoundsError(f"{fp} outside map of shape {self.shape}")

    def fuse(self, obs: Observation) -> None:
        """Log-odds update of every class layer and running-mean update of u and r."""
        fp = obs.footprint
        self._check(fp)
        rs, cs = fp.slices()
        self.hits[rs, cs] += 1
        h = self.hits[rs, cs]
        lm = np.clip(logit(obs.probs), -self.clamp, self.clamp)
        lo = self.logodds[:, rs, cs]
        self.logodds[:, rs, cs] = np.clip(lm + lo - self.l0, -self.clamp, self.clamp)
        mu = self.mu_u[rs, cs]
        self.mu_u[rs, cs] = mu + (obs.uncertainty - mu) / h
        mr = self.mu_r[rs, cs]
        self.mu_r[rs, cs] = mr + (obs.novelty - mr) / h
        if obs.is_training_sample:
            self.train_counts[rs, cs] += 1

    def semantic_posterior(self, cell: tuple[int, int]) -> np.ndarray:
        """Per-layer sigmoid, renormalised across the K layers."""
        p = sigmoid(self.logodds[:, cell[0], cell[1]])
        return p / p.sum()

    def semantic_posterior_map(self) -> np.ndarray:
        p = sigmoid(self.logodds)
        return p / p.sum(axis=0, keepdims=True)

    def frontier_mask(self) -> np.ndarray:
        seen = self.hits > 0
        unseen_nb = np.zeros(self.shape, dtype=bool)
        unseen = ~seen
        unseen_nb[1:, :] |= unseen[:-1, :]
        unseen_nb[:-1, :] |= unseen[1:, :]
        unseen_nb[:, 1:] |= unseen[:, :-1]
        unseen_nb[:, :-1] |= unseen[:, 1:]
        return seen & unseen_nb

    def frontier_cells(self) -> set[tuple[int, int]]:
        return {(int(r), int(c)) for r, c in zip(*np.nonzero(self.frontier_mask()))}

    def region_sums(self, fp: Footprint) -> tuple[float, float, int]:
        self._check(fp)
        rs, cs = fp.slices()
        return float(self.mu_u[rs, cs].sum()), float(self.mu_r[rs, cs].sum()), int(self.train_counts[rs, cs].sum())

    def layers(self) -> dict[str, np.ndarray]:
        out = {f"semantic_{i}": self.logodds[i] for i in range(self.n_classes)}
        out.update(uncertainty=self.mu_u, novelty=self.mu_r, hits=self.hits, train_counts=self.train_counts)
        return out


@dataclass(eq=False)
class StoredImage:
    """A collected image kept for prior recomputation."""

    footprint: Footprint
    features: np.ndarray
    is_training_sample: bool


def recompute_priors(
    map_factory: Callable[[], MultiLayerMap],
    history: Iterable[StoredImage],
    observe: Callable[[StoredImage], Observation],
) -> MultiLayerMap:
    """Fresh map with every stored image re-predicted and fused in order.

    ``observe`` wraps the retrained model: it maps a stored image to the
    Observation the current model would produce for it.
    """
    m = map_factory()
    for rec in history:
        obs = observe(rec)
        if obs.probs.shape[1:] != (rec.footprint.rows, rec.footprint.cols):
            raise ValueError("stored image shape does not match its footprint")
        obs.is_training_sample = rec.is_training_sample
        m.fuse(obs)
    return m
