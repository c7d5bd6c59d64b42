"""Per-pixel acquisition scores: mutual information, entropy and latent novelty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as mdl

NOVELTY_PRIOR = 1.0


@dataclass(frozen=True, eq=False)
class PosteriorPrediction:
    mean: np.ndarray  # (K, h, w)
    members: np.ndarray  # (T, K, h, w)


@dataclass(frozen=True, eq=False)
class ScoreImage:
    values: np.ndarray  # (h, w)
    kind: str
    prior: bool = False  # novelty computed against an empty database


def posterior_mean(members) -> PosteriorPrediction:
    if len(members) == 0:
        raise ValueError("need at least one member prediction")
    stack = np.stack([np.asarray(m, dtype=np.float64) for m in members])
    return PosteriorPrediction(mean=stack.mean(axis=0), members=stack)


def _entropy(p: np.ndarray, axis: int) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=axis)


def entropy(pred: np.ndarray) -> ScoreImage:
    """Shannon entropy over the class axis, natural log."""
    return ScoreImage(np.maximum(_entropy(np.asarray(pred, dtype=np.float64), axis=0), 0.0), "entropy")


def mutual_information(post: PosteriorPrediction) -> ScoreImage:
    """H(mean prediction) - mean_i H(member i), per pixel."""
    h_mean = _entropy(post.mean, axis=0)
    h_members = _entropy(post.members, axis=1).mean(axis=0)
    mi = h_mean - h_members
    mi[(mi < 0) & (mi >= -1e-9)] = 0.0
    return ScoreImage(mi, "mutual_information")


class LatentDatabase:
    """Insertion-ordered store of C-dim patch latents queried by cosine kNN."""

    def __init__(self, k: int = 10, dim: int | None = None):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.dim = dim
        self._chunks: list[np.ndarray] = []
        self._cache: np.ndarray | None = None

    def __len__(self) -> int:
        return sum(len(c) for c in self._chunks)

    def insert(self, vectors: np.ndarray) -> None:
        v = np.asarray(vectors, dtype=np.float64)
        v = v.reshape(-1, v.shape[-1])
        if not np.isfinite(v).all():
            raise ValueError("latent vectors must be finite")
        if self.dim is None:
            self.dim = v.shape[1]
        elif v.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-dim latents, got {v.shape[1]}")
        self._chunks.append(v.copy())
        self._cache = None

    @property
    def vectors(self) -> np.ndarray:
        if self._cache is None:
            if self._chunks:
                self._cache = np.concatenate(self._chunks)
            else:
                self._cache = np.zeros((0, self.dim or 0))
        return self._cache

    def snapshot(self) -> "LatentDatabase":
        db = LatentDatabase(self.k, self.dim)
        if self._chunks:
            db._chunks = [self.vectors.copy()]
        return db


TIE_DECIMALS = 12


def _unit(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(v, axis=-1)
    safe = np.where(norms > 0, norms, 1.0)
    return v / safe[..., None], norms > 0


def cosine_distances(db_vectors: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """1 - |cos| between each query row and each database row; zero vectors are at distance 1."""
    qn, qok = _unit(np.asarray(queries, dtype=np.float64))
    rn, rok = _unit(np.asarray(db_vectors, dtype=np.float64))
    d = 1.0 - np.abs(qn @ rn.T)
    d = np.clip(d, 0.0, 1.0)
    d[~qok, :] = 1.0
    d[:, ~rok] = 1.0
    return d


def knn_indices(db: LatentDatabase, query: np.ndarray, k: int | None = None) -> np.ndarray:
    """Indices of the k nearest entries, ties broken by insertion index.

    Distances equal to 12 decimals count as ties, so parallel vectors of
    different lengths order by insertion regardless of rounding noise.
    """
    k = db.k if k is None else k
    d = cosine_distances(db.vectors, np.asarray(query)[None])[0]
    order = np.lexsort((np.arange(len(d)), np.round(d, TIE_DECIMALS)))
    return order[: min(k, len(order))]


def patch_novelty(db: LatentDatabase, latents: np.ndarray) -> np.ndarray:
    """Mean kNN cosine distance per patch, shape (gh, gw)."""
    lat = np.asarray(latents, dtype=np.float64)
    grid = lat.shape[:-1]
    q = lat.reshape(-1, lat.shape[-1])
    n = len(db)
    if n == 0:
        return np.full(grid, NOVELTY_PRIOR)
    d = cosine_distances(db.vectors, q)
    k = min(db.k, n)
    if k < n:
        d = np.partition(d, k - 1, axis=1)[:, :k]
    return d.mean(axis=1).reshape(grid)


def novelty(db: LatentDatabase, latents: np.ndarray, patch: int = 8) -> ScoreImage:
    """Novelty image upsampled (nearest neighbour) by ``patch`` to pixel resolution."""
    scores = patch_novelty(db, latents)
    img = np.repeat(np.repeat(scores, patch, axis=0), patch, axis=1)
    return ScoreImage(np.clip(img, 0.0, 1.0), "novelty", prior=len(db) == 0)


def db_insert_image(db: LatentDatabase, latents: np.ndarray) -> None:
    db.insert(latents)


def rebuild_db(params: mdl.ModelParams, training_set: mdl.TrainingSet, k: int = 10) -> LatentDatabase:
    db = LatentDatabase(k, params.latent_dim)
    if len(training_set):
        X, _ = training_set.arrays()
        for lat in mdl.encode_many(params, X):
            db.insert(lat)
    return db
