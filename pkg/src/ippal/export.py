"""On-disk artifacts: metric and trace CSVs, map snapshots, PGM rasters."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

PGM16_MAX = 65535


class SnapshotError(RuntimeError):
    """A stored map layer cannot be read or is not finite."""

    def __init__(self, layer_path, reason: str):
        self.layer = str(layer_path)
        super().__init__(f"corrupt map layer {layer_path}: {reason}")


def run_stem(planner: str, objective: str, seed: int) -> str:
    return f"{planner}_{objective}_{seed}"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])
    write_if_changed(path, buf.getvalue().encode("utf-8"))


def write_if_changed(path: Path, data: bytes) -> bool:
    path = Path(path)
    if path.exists() and path.read_bytes() == data:
        return False
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return True


def metrics_header(n_classes: int) -> list[str]:
    return ["mission", "images_labeled", "miou", "acc", "f1", "ece"] + [f"class_iou_{k}" for k in range(n_classes)] + ["wallclock_s"]


def write_metrics_csv(path, rows, n_classes: int) -> None:
    """Absent classes (NaN IoU) are written as empty fields."""
    out = []
    for r in rows:
        out.append([r.mission, r.images_labeled, r.miou, r.acc, r.f1, r.ece, *list(r.class_iou), r.wallclock_s])
    _write_csv(Path(path), metrics_header(n_classes), out)


def read_metrics_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        for k, v in r.items():
            if k in ("mission", "images_labeled"):
                r[k] = int(v)
            else:
                r[k] = float(v) if v != "" else float("nan")
    return rows


def write_trace_csv(path, trace) -> None:
    rows = [[t.mission, t.t, t.x, t.y, t.z, t.cost_so_far] for t in trace]
    _write_csv(Path(path), ["mission", "t", "x", "y", "z", "cost_so_far"], rows)


def write_summary_csv(path, rows: list[list]) -> None:
    _write_csv(Path(path), ["planner", "objective", "seed", "missions", "images_labeled", "final_miou", "auc_miou"], rows)


# -- map snapshots -----------------------------------------------------------

def save_snapshots(root, snapshots: list[dict]) -> list[Path]:
    """One directory per mission, one .npy per layer."""
    written = []
    for m, layers in enumerate(snapshots):
        d = Path(root) / f"m{m:03d}"
        for name, arr in sorted(layers.items()):
            buf = io.BytesIO()
            np.save(buf, np.ascontiguousarray(arr), allow_pickle=False)
            p = d / f"{name}.npy"
            write_if_changed(p, buf.getvalue())
            written.append(p)
    return written


def load_layer(path) -> np.ndarray:
    try:
        arr = np.load(path, allow_pickle=False)
    except Exception as exc:  # noqa: BLE001 - any decode failure means corrupt
        raise SnapshotError(path, f"unreadable ({type(exc).__name__})") from None
    if arr.ndim != 2:
        raise SnapshotError(path, f"expected a 2-D raster, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise SnapshotError(path, "non-finite values")
    return arr


# -- PGM ---------------------------------------------------------------------

def pgm_bytes(img: np.ndarray, maxval: int) -> bytes:
    img = np.asarray(img)
    rows, cols = img.shape
    head = f"P5\n{cols} {rows}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    return head + np.ascontiguousarray(img, dtype=dtype).tobytes()


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    pos += 1
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u2" if maxval > 255 else "u1"
    return np.frombuffer(data[pos:], dtype=dtype, count=rows * cols).reshape(rows, cols).astype(np.int64)


def quantize16(arr: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Affine 16-bit code: value ~= offset + q * scale."""
    a = np.asarray(arr, dtype=np.float64)
    lo, hi = float(a.min()), float(a.max())
    scale = (hi - lo) / PGM16_MAX if hi > lo else 1.0
    q = np.clip(np.rint((a - lo) / scale), 0, PGM16_MAX).astype(np.int64)
    return q, scale, lo


def dequantize16(q: np.ndarray, scale: float, offset: float) -> np.ndarray:
    return offset + np.asarray(q, dtype=np.float64) * scale


def write_terrain_pgm(path, terrain) -> None:
    """8-bit label raster plus a JSON sidecar (K, cell size, prototypes, noise)."""
    path = Path(path)
    meta = {
        "n_classes": terrain.n_classes,
        "cell_size_m": terrain.cell_size_m,
        "rows": terrain.shape[0],
        "cols": terrain.shape[1],
        "seed": terrain.seed,
        "noise_std": terrain.noise_std,
        "prototypes": terrain.prototypes.tolist(),
    }
    write_if_changed(path, pgm_bytes(terrain.labels, 255))
    write_if_changed(path.with_suffix(".json"), (json.dumps(meta, indent=2, sort_keys=True) + "\n").encode())


def read_terrain_pgm(path):
    """Rebuild a terrain from a label PGM and its sidecar.

    Features are re-rendered from the first prototype mode of each class plus
    seeded noise, so any external label raster can be loaded this way.
    """
    from .terrain import SemanticTerrain, _render_features

    path = Path(path)
    labels = read_pgm(path)
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    K = int(meta["n_classes"])
    if labels.max() >= K:
        raise ValueError(f"{path}: label {labels.max()} out of range for K={K}")
    prototypes = np.asarray(meta["prototypes"], dtype=np.float64)
    seed = int(meta.get("seed", 0))
    noise = float(meta.get("noise_std", 0.0))
    features = _render_features(labels, np.zeros_like(labels), prototypes, noise, seed)
    return SemanticTerrain(labels=labels, features=features, prototypes=prototypes,
                           cell_size_m=float(meta["cell_size_m"]), n_classes=K, noise_std=noise, seed=seed)


def export_maps(run_dir) -> list[Path]:
    """Convert every stored snapshot under ``run_dir/snapshots`` to 16-bit PGMs.

    Writes ``run_dir/maps/<run>/<mission>/<layer>.pgm`` and one manifest with
    the scale/offset of each raster. Files whose bytes would not change are
    left untouched, so a second export is a no-op.
    """
    run_dir = Path(run_dir)
    snap_root = run_dir / "snapshots"
    layer_files = sorted(snap_root.glob("*/m*/*.npy")) if snap_root.is_dir() else []
    if not layer_files:
        return []
    out_root = run_dir / "maps"
    manifest = []
    written = []
    for f in layer_files:
        arr = load_layer(f)
        q, scale, offset = quantize16(arr)
        rel = f.relative_to(snap_root).with_suffix(".pgm")
        dst = out_root / rel
        write_if_changed(dst, pgm_bytes(q, PGM16_MAX))
        written.append(dst)
        manifest.append({"file": rel.as_posix(), "layer": f.stem, "scale": scale, "offset": offset, "rows": int(arr.shape[0]), "cols": int(arr.shape[1])})
    mpath = out_root / "manifest.json"
    write_if_changed(mpath, (json.dumps({"rasters": manifest}, indent=2) + "\n").encode())
    written.append(mpath)
    return written
