"""Synthetic semantic terrains, the nadir camera model and image crops.

Coordinates: a waypoint's ``x`` runs along terrain columns and ``y`` along
rows, both in meters from the top-left corner. One image pixel covers one
terrain cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Invalid terrain, camera or experiment configuration."""


class OutOfBoundsError(ValueError):
    """A footprint would leave the terrain."""


@dataclass(frozen=True)
class TerrainConfig:
    width_m: float = 64.0
    height_m: float = 64.0
    cell_size_m: float = 1.0
    n_classes: int = 4
    feature_dim: int = 8
    cluster_scale: float = 16.0  # mean Voronoi blob diameter, in cells
    noise_std: float = 0.5
    modes_per_class: int = 1
    # class k is drawn with weight class_decay**k; < 1 makes later classes rare
    class_decay: float = 0.7
    prototype_scale: float = 1.0

    def grid_shape(self) -> tuple[int, int]:
        """Return (rows, cols); raise ConfigError unless both are integers."""
        rows = self.height_m / self.cell_size_m
        cols = self.width_m / self.cell_size_m
        if self.cell_size_m <= 0:
            raise ConfigError("cell_size_m must be positive")
        for name, n in (("height_m", rows), ("width_m", cols)):
            if abs(n - round(n)) > 1e-9 or round(n) < 1:
                raise ConfigError(
                    f"{name} / cell_size_m = {n:g} is not a positive integer cell count"
                )
        return int(round(rows)), int(round(cols))

    def validate(self) -> None:
        self.grid_shape()
        if self.n_classes < 3:
            raise ConfigError(f"n_classes must be >= 3, got {self.n_classes}")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")
        if self.cluster_scale <= 0:
            raise ConfigError("cluster_scale must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.modes_per_class < 1:
            raise ConfigError("modes_per_class must be >= 1")
        if not 0 < self.class_decay <= 1:
            raise ConfigError("class_decay must be in (0, 1]")


@dataclass(frozen=True, eq=False)
class SemanticTerrain:
    """Ground-truth class raster with per-cell feature vectors.

    ``labels`` has shape (rows, cols); ``features`` has shape (D, rows, cols);
    ``prototypes`` has shape (K, modes, D). Arrays are made read-only.
    """

    labels: np.ndarray
    features: np.ndarray
    prototypes: np.ndarray
    cell_size_m: float
    n_classes: int
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for arr in (self.labels, self.features, self.prototypes):
            arr.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @property
    def width_m(self) -> float:
        return self.labels.shape[1] * self.cell_size_m

    @property
    def height_m(self) -> float:
        return self.labels.shape[0] * self.cell_size_m

    @property
    def feature_dim(self) -> int:
        return self.features.shape[0]

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.n_classes)


@dataclass(frozen=True)
class CameraModel:
    fov_px: tuple[int, int] = (16, 16)  # (w, h)
    altitude_m: float = 10.0
    gsd_m: float = 1.0

    @property
    def fov_w(self) -> int:
        return self.fov_px[0]

    @property
    def fov_h(self) -> int:
        return self.fov_px[1]

    @property
    def area(self) -> int:
        return self.fov_px[0] * self.fov_px[1]


@dataclass(frozen=True)
class Footprint:
    row0: int
    col0: int
    rows: int
    cols: int

    @property
    def area(self) -> int:
        return self.rows * self.cols

    def slices(self) -> tuple[slice, slice]:
        return slice(self.row0, self.row0 + self.rows), slice(self.col0, self.col0 + self.cols)

    def inside(self, shape: tuple[int, int]) -> bool:
        return (
            self.rows > 0
            and self.cols > 0
            and self.row0 >= 0
            and self.col0 >= 0
            and self.row0 + self.rows <= shape[0]
            and self.col0 + self.cols <= shape[1]
        )


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    z: float = 10.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class Geometry:
    """Lattice/camera geometry shared by the map and every planner."""

    rows: int
    cols: int
    gsd_m: float
    fov_w: int
    fov_h: int
    altitude_m: float = 10.0
    _bounds: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.fov_w > self.cols or self.fov_h > self.rows:
            raise ConfigError("camera footprint larger than the terrain")
        object.__setattr__(
            self,
            "_bounds",
            (
                self.fov_w * self.gsd_m / 2.0,
                (self.cols - self.fov_w / 2.0) * self.gsd_m,
                self.fov_h * self.gsd_m / 2.0,
                (self.rows - self.fov_h / 2.0) * self.gsd_m,
            ),
        )

    @classmethod
    def of(cls, terrain: SemanticTerrain, cam: CameraModel) -> "Geometry":
        if abs(cam.gsd_m - terrain.cell_size_m) > 1e-12:
            raise ConfigError("camera gsd_m must equal the terrain cell size")
        return cls(terrain.shape[0], terrain.shape[1], cam.gsd_m, cam.fov_w, cam.fov_h, cam.altitude_m)

    @property
    def flyable(self) -> tuple[float, float, float, float]:
        """(x_min, x_max, y_min, y_max) in meters."""
        return self._bounds

    @property
    def area(self) -> int:
        return self.fov_w * self.fov_h

    def contains(self, x: float, y: float, tol: float = 1e-9) -> bool:
        x0, x1, y0, y1 = self._bounds
        return x0 - tol <= x <= x1 + tol and y0 - tol <= y <= y1 + tol

    def clip(self, x, y):
        x0, x1, y0, y1 = self._bounds
        return np.clip(x, x0, x1), np.clip(y, y0, y1)

    def corner(self, which: str = "top-left") -> Waypoint:
        x0, x1, y0, y1 = self._bounds
        x = x0 if "left" in which else x1
        y = y0 if "top" in which else y1
        return Waypoint(x, y, self.altitude_m)

    def origin(self, x, y):
        """Footprint top-left cell indices for (arrays of) positions."""
        col0 = np.floor(np.asarray(x) / self.gsd_m - self.fov_w / 2.0 + 0.5).astype(np.int64)
        row0 = np.floor(np.asarray(y) / self.gsd_m - self.fov_h / 2.0 + 0.5).astype(np.int64)
        return row0, col0

    def footprint(self, x: float, y: float) -> Footprint:
        row0, col0 = self.origin(x, y)
        fp = Footprint(int(row0), int(col0), self.fov_h, self.fov_w)
        if not fp.inside((self.rows, self.cols)):
            raise OutOfBoundsError(f"footprint {fp} at ({x:.3f}, {y:.3f}) leaves the terrain")
        return fp

    def center_of(self, fp: Footprint) -> Waypoint:
        return Waypoint(
            (fp.col0 + fp.cols / 2.0) * self.gsd_m,
            (fp.row0 + fp.rows / 2.0) * self.gsd_m,
            self.altitude_m,
        )


def _sample_seeds(rng: np.random.Generator, rows: int, cols: int, scale: float) -> np.ndarray:
    """Dart-throwing seed points with minimum spacing scale/2."""
    n_target = max(1, int(round(rows * cols / scale**2)))
    min_dist = scale / 2.0
    margin = min(scale / 4.0, rows / 2.0, cols / 2.0)
    pts: list[tuple[float, float]] = []
    attempts = 0
    while len(pts) < n_target and attempts < 200 * n_target:
        attempts += 1
        p = (rng.uniform(margin, rows - margin), rng.uniform(margin, cols - margin))
        if all((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 >= min_dist**2 for q in pts):
            pts.append(p)
    return np.array(pts)


def generate_terrain(seed: int, config: TerrainConfig, prototypes: np.ndarray | None = None) -> SemanticTerrain:
    """Seeded Voronoi class blobs with prototype-plus-noise cell features.

    Passing ``prototypes`` (K x modes x D) keeps the class appearance of
    another terrain while the layout and noise still follow ``seed``.
    """
    config.validate()
    rows, cols = config.grid_shape()
    K, M, D = config.n_classes, config.modes_per_class, config.feature_dim
    rng = np.random.default_rng([seed, 0])

    seeds = _sample_seeds(rng, rows, cols, config.cluster_scale)
    n_seeds = len(seeds)
    weights = config.class_decay ** np.arange(K)
    seed_class = rng.choice(K, size=n_seeds, p=weights / weights.sum())
    # every class gets at least one blob when there are enough seeds
    order = rng.permutation(n_seeds)
    for k in range(min(K, n_seeds)):
        seed_class[order[k]] = k
    seed_mode = rng.integers(0, M, size=n_seeds)

    rr, cc = np.mgrid[0:rows, 0:cols]
    centers = np.stack([rr.ravel() + 0.5, cc.ravel() + 0.5], axis=1)
    d2 = ((centers[:, None, :] - seeds[None, :, :]) ** 2).sum(-1)
    owner = np.argmin(d2, axis=1).reshape(rows, cols)
    labels = seed_class[owner].astype(np.int64)
    modes = seed_mode[owner]

    drawn = rng.normal(0.0, config.prototype_scale, size=(K, M, D))
    if prototypes is None:
        prototypes = drawn
    else:
        prototypes = np.asarray(prototypes, dtype=np.float64)
        if prototypes.shape != (K, M, D):
            raise ValueError(f"prototypes must have shape {(K, M, D)}, got {prototypes.shape}")
    features = _render_features(labels, modes, prototypes, config.noise_std, seed)
    return SemanticTerrain(
        labels=labels,
        features=features,
        prototypes=prototypes,
        cell_size_m=config.cell_size_m,
        n_classes=K,
        noise_std=config.noise_std,
        seed=seed,
    )


def _render_features(labels, modes, prototypes, noise_std, seed) -> np.ndarray:
    feats = prototypes[labels, modes]  # (rows, cols, D)
    if noise_std > 0:
        noise_rng = np.random.default_rng([seed, 1])
        feats = feats + noise_rng.normal(0.0, noise_std, size=feats.shape)
    return np.ascontiguousarray(np.moveaxis(feats, -1, 0))


def footprint_at(terrain: SemanticTerrain, cam: CameraModel, position: Waypoint) -> Footprint:
    return Geometry.of(terrain, cam).footprint(position.x, position.y)


def crop_image(terrain: SemanticTerrain, footprint: Footprint) -> tuple[np.ndarray, np.ndarray]:
    """Copy out the (D, rows, cols) feature image and (rows, cols) label image."""
    if not footprint.inside(terrain.shape):
        raise OutOfBoundsError(f"{footprint} outside terrain of shape {terrain.shape}")
    rs, cs = footprint.slices()
    return terrain.features[:, rs, cs].copy(), terrain.labels[rs, cs].copy()


def flyable_region(terrain: SemanticTerrain, cam: CameraModel) -> tuple[float, float, float, float]:
    return Geometry.of(terrain, cam).flyable


def stitch(tiles: list[tuple[Footprint, np.ndarray]], shape: tuple[int, int]) -> np.ndarray:
    """Reassemble label crops into a raster; cells not covered stay -1."""
    out = np.full(shape, -1, dtype=np.int64)
    for fp, crop in tiles:
        out[fp.slices()] = crop
    return out


def nearest_prototype(features: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    """Label each pixel of a (D, ...) feature array with its closest prototype's class."""
    K, M, D = prototypes.shape
    flat = features.reshape(D, -1).T
    d2 = ((flat[:, None, :] - prototypes.reshape(K * M, D)[None]) ** 2).sum(-1)
    return (np.argmin(d2, axis=1) // M).reshape(features.shape[1:])


def sample_positions(geom: Geometry, n: int, rng: np.random.Generator) -> list[Waypoint]:
    x0, x1, y0, y1 = geom.flyable
    xs = rng.uniform(x0, x1, size=n)
    ys = rng.uniform(y0, y1, size=n)
    return [Waypoint(float(x), float(y), geom.altitude_m) for x, y in zip(xs, ys)]
