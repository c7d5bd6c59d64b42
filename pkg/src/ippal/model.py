"""Desk-scale probabilistic pixel classifier.

The encoder is a per-pixel affine map with a tanh nonlinearity followed by
``patch x patch`` mean pooling into patch latents. The decoder is a linear
softmax over each pixel's encoder activation concatenated with its patch
latent. Images are channel-first: features (D, h, w), probabilities (K, h, w).
"""

from __future__ import annotations

import hashlib
import io
import logging
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "IPPAL-CKPT"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 16
    dropout_prob: float = 0.5
    learning_rate: float = 0.02
    batch_size: int = 8
    max_epochs: int = 200
    patience: int = 5
    rel_tol: float = 1e-4
    ensemble_size: int = 4
    mc_samples: int = 8
    patch_factor: int = 8
    init_scale: float = 1.0

    def validate(self) -> None:
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must be in [0, 1)")
        for name in ("latent_dim", "batch_size", "max_epochs", "ensemble_size", "mc_samples", "patch_factor"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def weight_decay(dropout_prob: float, n_images: int) -> float:
    """lambda = (1 - p) / (2N)."""
    return (1.0 - dropout_prob) / (2.0 * n_images)


@dataclass(frozen=True, eq=False)
class ModelParams:
    We: np.ndarray  # (D, C)
    be: np.ndarray  # (C,)
    Wd: np.ndarray  # (2C, K); rows [:C] read the pixel activation, [C:] the patch latent
    bd: np.ndarray  # (K,)
    patch: int = 8
    dropout_prob: float = 0.5

    @property
    def n_features(self) -> int:
        return self.We.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.We.shape[1]

    @property
    def n_classes(self) -> int:
        return self.Wd.shape[1]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.We, self.be, self.Wd, self.bd)

    def equals(self, other: "ModelParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))

    def shape_signature(self) -> tuple:
        return tuple(a.shape for a in self.arrays()) + (self.patch,)


def init_params(n_features: int, n_classes: int, cfg: ModelConfig, seed: int) -> ModelParams:
    rng = np.random.default_rng([seed, 7])
    C = cfg.latent_dim
    s = cfg.init_scale
    return ModelParams(
        We=rng.normal(0.0, s / np.sqrt(n_features), size=(n_features, C)),
        be=rng.normal(0.0, 0.1 * s, size=C),
        Wd=rng.normal(0.0, s / np.sqrt(2 * C), size=(2 * C, n_classes)),
        bd=np.zeros(n_classes),
        patch=cfg.patch_factor,
        dropout_prob=cfg.dropout_prob,
    )


# --------------------------------------------------------------------------
# forward / backward
# --------------------------------------------------------------------------


def _as_batch(z: np.ndarray, params: ModelParams) -> np.ndarray:
    x = np.asarray(z, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1] != params.n_features:
        raise ShapeError(f"expected (D={params.n_features}, h, w) features, got {np.shape(z)}")
    s = params.patch
    if x.shape[2] % s or x.shape[3] % s:
        raise ShapeError(f"patch factor {s} does not divide image size {x.shape[2:]}")
    return x


def _pool(E: np.ndarray, s: int) -> np.ndarray:
    B, h, w, C = E.shape
    return E.reshape(B, h // s, s, w // s, s, C).mean(axis=(2, 4))


def _unpool(R: np.ndarray, s: int) -> np.ndarray:
    B, gh, gw, C = R.shape
    return np.broadcast_to(R[:, :, None, :, None, :], (B, gh, s, gw, s, C)).reshape(B, gh * s, gw * s, C)


def _softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(We, be, Wd, bd, X, s):
    """X is channel-last (B, h, w, D); returns (probs, cache)."""
    C = We.shape[1]
    E = np.tanh(X @ We + be)
    R = _pool(E, s)
    logits = E @ Wd[:C] + _unpool(R @ Wd[C:], s) + bd
    return _softmax(logits), (X, E, R)


def _masked(params: ModelParams, me, md):
    p = params.dropout_prob
    if me is None:
        return params.We, params.Wd
    return params.We * (me[None, :] / (1.0 - p)), params.Wd * (md[:, None] / (1.0 - p))


def loss_and_grad(params: ModelParams, X: np.ndarray, Y: np.ndarray, lam: float, masks=None):
    """Cross-entropy (pixel sum per image, mean over images) + lam * ||W||^2.

    ``X`` is (B, D, h, w), ``Y`` is (B, h, w) integer labels. Biases are not
    regularised. Returns (loss, dict of gradients keyed like the params).
    """
    X = _as_batch(X, params)
    Xc = np.moveaxis(X, 1, -1)
    B = Xc.shape[0]
    s = params.patch
    me, md = masks if masks is not None else (None, None)
    We, Wd = _masked(params, me, md)
    C = We.shape[1]
    P, (_, E, R) = _forward(We, params.be, Wd, params.bd, Xc, s)
    Y = np.asarray(Y)
    py = np.take_along_axis(P, Y[..., None], axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        nll = -np.log(py).sum() / B
    loss = nll + lam * (np.sum(params.We**2) + np.sum(params.Wd**2))

    dlog = P.copy()
    np.put_along_axis(dlog, Y[..., None], np.take_along_axis(dlog, Y[..., None], -1) - 1.0, axis=-1)
    dlog /= B
    K = dlog.shape[-1]
    dWd = np.empty_like(Wd)
    dWd[:C] = E.reshape(-1, C).T @ dlog.reshape(-1, K)
    gh, gw = R.shape[1], R.shape[2]
    dLR = dlog.reshape(B, gh, s, gw, s, K).sum(axis=(2, 4))
    dWd[C:] = R.reshape(-1, C).T @ dLR.reshape(-1, K)
    dbd = dlog.reshape(-1, K).sum(axis=0)
    dR = dLR @ Wd[C:].T
    dE = dlog @ Wd[:C].T + _unpool(dR, s) / (s * s)
    dpre = dE * (1.0 - E * E)
    D = Xc.shape[-1]
    dWe = Xc.reshape(-1, D).T @ dpre.reshape(-1, C)
    dbe = dpre.reshape(-1, C).sum(axis=0)
    if me is not None:
        p = params.dropout_prob
        dWe *= me[None, :] / (1.0 - p)
        dWd *= md[:, None] / (1.0 - p)
    dWe += 2.0 * lam * params.We
    dWd += 2.0 * lam * params.Wd
    return float(loss), {"We": dWe, "be": dbe, "Wd": dWd, "bd": dbd}


def dataset_loss(params: ModelParams, X: np.ndarray, Y: np.ndarray, lam: float) -> float:
    """Regularised cross-entropy of deterministic params over the whole dataset."""
    Xc = np.moveaxis(_as_batch(X, params), 1, -1)
    P, _ = _forward(params.We, params.be, params.Wd, params.bd, Xc, params.patch)
    py = np.take_along_axis(P, np.asarray(Y)[..., None], axis=-1)[..., 0]
    with np.errstate(divide="ignore"):
        nll = -np.log(py).sum() / Xc.shape[0]
    return float(nll + lam * (np.sum(params.We**2) + np.sum(params.Wd**2)))


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


@dataclass
class TrainingSet:
    """Labelled images; ``footprints`` are kept for map replay."""

    images: list
    labels: list
    footprints: list

    def __init__(self, images=None, labels=None, footprints=None):
        self.images = list(images or [])
        self.labels = list(labels or [])
        self.footprints = list(footprints or [None] * len(self.images))

    def __len__(self) -> int:
        return len(self.images)

    def add(self, z, y, footprint=None) -> None:
        if self.images and np.shape(z) != np.shape(self.images[0]):
            raise ShapeError("training images must all share one shape")
        self.images.append(np.asarray(z))
        self.labels.append(np.asarray(y))
        self.footprints.append(footprint)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.stack(self.images), np.stack(self.labels)

    def copy(self) -> "TrainingSet":
        return TrainingSet(self.images, self.labels, self.footprints)


def _dropout_masks(rng, params: ModelParams):
    q = 1.0 - params.dropout_prob
    me = (rng.random(params.We.shape[1]) < q).astype(np.float64)
    md = (rng.random(params.Wd.shape[0]) < q).astype(np.float64)
    return me, md


def train(checkpoint: ModelParams, data: TrainingSet, cfg: ModelConfig, seed: int) -> ModelParams:
    """Mini-batch Adam on the regularised cross-entropy starting from ``checkpoint``.

    After each epoch the deterministic full-data loss is evaluated; the best
    parameters seen (the checkpoint included) are returned. Training stops
    once that loss has failed to improve by ``rel_tol`` (relative) for
    ``patience`` consecutive epochs, or after ``max_epochs``.
    """
    N = len(data)
    if N == 0:
        raise ValueError("cannot train on an empty training set")
    X, Y = data.arrays()
    X = _as_batch(X, checkpoint)
    lam = weight_decay(checkpoint.dropout_prob, N)
    rng = np.random.default_rng([seed, 11])
    names = ("We", "be", "Wd", "bd")
    theta = {n: a.copy() for n, a in zip(names, checkpoint.arrays())}
    m = {n: np.zeros_like(a) for n, a in theta.items()}
    v = {n: np.zeros_like(a) for n, a in theta.items()}
    b1, b2, adam_eps = 0.9, 0.999, 1e-8
    step = 0

    def as_params(th):
        return replace(checkpoint, We=th["We"], be=th["be"], Wd=th["Wd"], bd=th["bd"])

    best = checkpoint
    best_loss = dataset_loss(checkpoint, X, Y, lam)
    stale = 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(N)
        for start in range(0, N, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            cur = as_params(theta)
            masks = _dropout_masks(rng, cur) if cur.dropout_prob > 0 else None
            loss, grads = loss_and_grad(cur, X[idx], Y[idx], lam, masks)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            step += 1
            for n in names:
                g = grads[n]
                m[n] = b1 * m[n] + (1 - b1) * g
                v[n] = b2 * v[n] + (1 - b2) * g * g
                mhat = m[n] / (1 - b1**step)
                vhat = v[n] / (1 - b2**step)
                theta[n] = theta[n] - cfg.learning_rate * mhat / (np.sqrt(vhat) + adam_eps)
        cur = as_params({n: a.copy() for n, a in theta.items()})
        epoch_loss = dataset_loss(cur, X, Y, lam)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss after epoch {epoch}")
        if epoch_loss < best_loss * (1.0 - cfg.rel_tol) if best_loss > 0 else epoch_loss < best_loss:
            stale = 0
        else:
            stale += 1
        if epoch_loss < best_loss:
            best, best_loss = cur, epoch_loss
        if stale >= cfg.patience:
            break
    logger.debug("trained on %d images for %d epochs, loss %.4f", N, epoch + 1, best_loss)
    return best


def train_ensemble(checkpoints: list[ModelParams], data: TrainingSet, cfg: ModelConfig, seed: int) -> list[ModelParams]:
    return [train(ck, data, cfg, seed * 1000 + i) for i, ck in enumerate(checkpoints)]


# --------------------------------------------------------------------------
# inference
# --------------------------------------------------------------------------


def _predict_batch(params: ModelParams, X: np.ndarray, masks=None) -> np.ndarray:
    """(B, D, h, w) -> (B, K, h, w)."""
    Xc = np.moveaxis(_as_batch(X, params), 1, -1)
    me, md = masks if masks is not None else (None, None)
    We, Wd = _masked(params, me, md)
    P, _ = _forward(We, params.be, Wd, params.bd, Xc, params.patch)
    return np.moveaxis(P, -1, 1)


def predict(params: ModelParams, z: np.ndarray) -> np.ndarray:
    return _predict_batch(params, z)[0]


def predict_many(params: ModelParams, Z: np.ndarray) -> np.ndarray:
    return _predict_batch(params, Z)


def predict_mc_dropout(params: ModelParams, z: np.ndarray, T: int, seed: int) -> list[np.ndarray]:
    """T stochastic passes, each with an independently sampled row-dropout mask."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if params.dropout_prob == 0.0:
        if T > 1:
            warnings.warn("dropout_prob is 0: all MC dropout samples are identical", RuntimeWarning, stacklevel=2)
        p = predict(params, z)
        return [p.copy() for _ in range(T)]
    rng = np.random.default_rng([seed, 13])
    return [_predict_batch(params, z, _dropout_masks(rng, params))[0] for _ in range(T)]


def predict_mc_dropout_many(params: ModelParams, Z: np.ndarray, T: int, seed: int) -> np.ndarray:
    """(B, D, h, w) -> (T, B, K, h, w); one mask per pass shared across the batch."""
    if params.dropout_prob == 0.0:
        return np.repeat(_predict_batch(params, Z)[None], T, axis=0)
    rng = np.random.default_rng([seed, 13])
    return np.stack([_predict_batch(params, Z, _dropout_masks(rng, params)) for _ in range(T)])


def predict_ensemble(members: list[ModelParams], z: np.ndarray) -> list[np.ndarray]:
    if not members:
        raise ValueError("ensemble has no members")
    sig = members[0].shape_signature()
    if any(m.shape_signature() != sig for m in members):
        raise ShapeError("ensemble members have heterogeneous shapes")
    return [predict(m, z) for m in members]


def encode(params: ModelParams, z: np.ndarray) -> np.ndarray:
    """Patch latents of one image, shape (h/s, w/s, C)."""
    Xc = np.moveaxis(_as_batch(z, params), 1, -1)
    E = np.tanh(Xc @ params.We + params.be)
    return _pool(E, params.patch)[0]


def encode_many(params: ModelParams, Z: np.ndarray) -> np.ndarray:
    Xc = np.moveaxis(_as_batch(Z, params), 1, -1)
    return _pool(np.tanh(Xc @ params.We + params.be), params.patch)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------

_ARRAY_NAMES = ("We", "be", "Wd", "bd")


def config_hash(params: ModelParams) -> str:
    text = f"{params.shape_signature()}|{params.dropout_prob!r}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def save_checkpoint(params: ModelParams, path) -> None:
    """Text header then raw little-endian float64 arrays, row-major."""
    buf = io.StringIO()
    buf.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n")
    buf.write(f"patch {params.patch}\n")
    buf.write(f"dropout_prob {params.dropout_prob!r}\n")
    for name, arr in zip(_ARRAY_NAMES, params.arrays()):
        buf.write(f"{name} {' '.join(str(d) for d in arr.shape)}\n")
    buf.write(f"config_hash {config_hash(params)}\n")
    buf.write("END\n")
    with open(path, "wb") as fh:
        fh.write(buf.getvalue().encode("ascii"))
        for arr in params.arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))


def load_checkpoint(path) -> ModelParams:
    raw = Path(path).read_bytes()
    end = raw.find(b"END\n")
    if end < 0:
        raise ValueError(f"{path}: missing checkpoint header terminator")
    lines = raw[:end].decode("ascii").splitlines()
    magic, version = lines[0].split()
    if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint header {lines[0]!r}")
    fields = {ln.split()[0]: ln.split()[1:] for ln in lines[1:]}
    offset = end + 4
    arrays = []
    for name in _ARRAY_NAMES:
        shape = tuple(int(d) for d in fields[name])
        n = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape).astype(np.float64)
        offset += 8 * n
        arrays.append(arr)
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    params = ModelParams(*arrays, patch=int(fields["patch"][0]), dropout_prob=float(fields["dropout_prob"][0]))
    if config_hash(params) != fields["config_hash"][0]:
        raise ValueError(f"{path}: config hash mismatch")
    return params
