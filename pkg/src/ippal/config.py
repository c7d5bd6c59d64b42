"""Experiment configuration: TOML loading, validation and serialisation."""

from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .model import ModelConfig
from .plan.core import KinematicModel, PlannerConfig
from .terrain import CameraModel, ConfigError, TerrainConfig

OBJECTIVES = ("bayes_mc_dropout", "bayes_ensemble", "entropy", "novelty")
PLANNER_KINDS = ("local", "frontier", "optimisation", "sampling", "coverage", "random_local", "random_global")
TEST_REGIMES = ("in_domain", "generalisation")
START_CORNERS = ("top-left", "top-right", "bottom-left", "bottom-right")


class ConfigFileError(ConfigError):
    """Configuration problem tied to a file position."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = f"{path}" if path else "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    terrain: TerrainConfig = field(default_factory=TerrainConfig)
    camera: CameraModel = field(default_factory=CameraModel)
    model: ModelConfig = field(default_factory=ModelConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    kinematics: KinematicModel = field(default_factory=KinematicModel)
    objective: str = "bayes_mc_dropout"
    missions: int = 10
    budget: float = 120.0
    seeds: tuple[int, ...] = (0,)
    informed_priors: bool = True
    stream_mapping: bool = False
    test_regime: str = "in_domain"
    n_test: int = 500
    start: str = "top-left"
    knn_k: int = 10
    record_wallclock: bool = False
    output_dir: str = "runs"
    # benchmark matrix
    planners: tuple[str, ...] = ("local", "frontier", "optimisation", "sampling", "coverage", "random_local", "random_global")
    objectives: tuple[str, ...] = OBJECTIVES

    def validate(self) -> None:
        self.terrain.validate()
        self.model.validate()
        self.planner.validate()
        rows, cols = self.terrain.grid_shape()
        if abs(self.camera.gsd_m - self.terrain.cell_size_m) > 1e-12:
            raise ConfigError("camera.gsd_m must equal terrain.cell_size_m")
        if self.camera.fov_w > cols or self.camera.fov_h > rows:
            raise ConfigError("camera field of view exceeds the terrain")
        s = self.model.patch_factor
        if self.camera.fov_w % s or self.camera.fov_h % s:
            raise ConfigError(f"model.patch_factor {s} must divide the camera field of view")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.planner.kind not in PLANNER_KINDS:
            raise ConfigError(f"planner.kind must be one of {PLANNER_KINDS}, got {self.planner.kind!r}")
        bad = [p for p in self.planners if p not in PLANNER_KINDS]
        if bad:
            raise ConfigError(f"unknown planners {bad}")
        bad = [o for o in self.objectives if o not in OBJECTIVES]
        if bad:
            raise ConfigError(f"unknown objectives {bad}")
        if self.missions < 1:
            raise ConfigError("missions must be >= 1")
        if self.budget < 0:
            raise ConfigError("budget must be >= 0")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.test_regime not in TEST_REGIMES:
            raise ConfigError(f"test_regime must be one of {TEST_REGIMES}")
        if self.start not in START_CORNERS:
            raise ConfigError(f"start must be one of {START_CORNERS}")
        if self.n_test < 1 or self.knn_k < 1:
            raise ConfigError("n_test and knn_k must be >= 1")

    def with_(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "terrain": TerrainConfig,
    "camera": CameraModel,
    "model": ModelConfig,
    "planner": PlannerConfig,
    "kinematics": KinematicModel,
}


def _coerce(value, default, where: str):
    """Convert a TOML value to the type of the dataclass default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ValueError(f"{where} must be a boolean")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError(f"{where} must be an integer")
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueError(f"{where} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ValueError(f"{where} must be a string")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ValueError(f"{where} must be an array")
        if default:
            return tuple(_coerce(v, default[0], where) for v in value)
        return tuple(value)
    return value


def _locate(text: str, section: str | None, key: str) -> int | None:
    """Line number of ``key = ...`` inside ``[section]`` (top level when None)."""
    current = None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"^\s*\[([^\]]+)\]\s*(#.*)?$", line)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and pat.match(line):
            return i
    return None


def _section_line(text: str, section: str) -> int | None:
    for i, line in enumerate(text.splitlines(), start=1):
        if re.match(rf"^\s*\[{re.escape(section)}\]\s*(#.*)?$", line):
            return i
    return None


def parse_config(text: str, path=None) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        if m:
            line = int(m.group(1))
        else:
            # errors at end of document: point at the last non-empty line
            lines = text.rstrip().splitlines()
            line = max(len(lines), 1)
        raise ConfigFileError(f"TOML syntax error: {exc}", path, line) from None

    top_defaults = ExperimentConfig()
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS:
            cls = _SECTIONS[key]
            if not isinstance(value, dict):
                raise ConfigFileError(f"[{key}] must be a table", path, _locate(text, None, key))
            defaults = cls()
            names = {f.name for f in dataclasses.fields(cls)}
            sub = {}
            for k, v in value.items():
                if k not in names:
                    raise ConfigFileError(f"unknown key {key}.{k}", path, _locate(text, key, k) or _section_line(text, key))
                try:
                    sub[k] = _coerce(v, getattr(defaults, k), f"{key}.{k}")
                except ValueError as exc:
                    raise ConfigFileError(str(exc), path, _locate(text, key, k)) from None
            if key == "camera" and "fov_px" in sub:
                sub["fov_px"] = tuple(int(v) for v in sub["fov_px"])
            try:
                kwargs[key] = cls(**sub)
            except (TypeError, ValueError) as exc:
                raise ConfigFileError(str(exc), path, _section_line(text, key)) from None
        else:
            if key not in {f.name for f in dataclasses.fields(ExperimentConfig)}:
                raise ConfigFileError(f"unknown key {key}", path, _locate(text, None, key))
            try:
                kwargs[key] = _coerce(value, getattr(top_defaults, key), key)
            except ValueError as exc:
                raise ConfigFileError(str(exc), path, _locate(text, None, key)) from None

    cfg = ExperimentConfig(**kwargs)
    try:
        cfg.validate()
    except ValueError as exc:
        msg = str(exc)
        line = None
        m = re.search(r"\b(terrain|camera|model|planner|kinematics)\.(\w+)", msg)
        if m:
            line = _locate(text, m.group(1), m.group(2))
        else:
            for name in (f.name for f in dataclasses.fields(ExperimentConfig)):
                if re.match(rf"^{name}\b", msg):
                    line = _locate(text, None, name)
                    break
        raise ConfigFileError(msg, path, line) from None
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigFileError("config file not found", p) from None
    except OSError as exc:
        raise ConfigFileError(f"cannot read config: {exc.strerror}", p) from None
    return parse_config(text, p)


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    return value


def to_dict(cfg: ExperimentConfig) -> dict:
    out: dict = {}
    tables: dict = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name in _SECTIONS:
            tables[f.name] = {
                sf.name: _plain(getattr(value, sf.name))
                for sf in dataclasses.fields(value)
                if getattr(value, sf.name) is not None
            }
        else:
            out[f.name] = _plain(value)
    out.update(tables)
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))
