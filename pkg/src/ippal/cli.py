"""Command line entry point: ``ippal run | benchmark | export-maps``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import export
from .config import ExperimentConfig, load_config
from .metrics import normalized_auc
from .mission import run_campaign
from .terrain import ConfigError, generate_terrain

logger = logging.getLogger("ippal")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def output_root(arg: str | None, cfg: ExperimentConfig | None = None) -> Path:
    if arg:
        return Path(arg)
    env = os.environ.get("IPPAL_OUT")
    if env:
        return Path(env)
    return Path(cfg.output_dir if cfg is not None else "runs")


def run_cell(cfg: ExperimentConfig, planner: str, objective: str, seed: int, out_dir: Path) -> dict:
    """One campaign; writes metrics, trace, snapshots and the terrain raster into ``out_dir``."""
    out_dir = Path(out_dir)
    res = run_campaign(cfg, seed, planner, objective)
    stem = export.run_stem(planner, objective, seed)
    K = cfg.terrain.n_classes
    files = [out_dir / f"{stem}.csv", out_dir / f"{stem}_trace.csv"]
    export.write_metrics_csv(files[0], res.rows, K)
    export.write_trace_csv(files[1], res.trace)
    files += export.save_snapshots(out_dir / "snapshots" / stem, res.snapshots)
    terrain_pgm = out_dir / f"terrain_{seed}.pgm"
    if not terrain_pgm.exists():
        export.write_terrain_pgm(terrain_pgm, generate_terrain(seed, cfg.terrain))
    files += [terrain_pgm, terrain_pgm.with_suffix(".json")]
    x = [r.images_labeled for r in res.rows]
    y = [r.miou for r in res.rows]
    return {
        "planner": planner, "objective": objective, "seed": seed, "missions": len(res.rows),
        "images_labeled": x[-1], "final_miou": y[-1], "auc_miou": normalized_auc(x, y),
        "files": [str(f.relative_to(out_dir)) for f in files],
    }


def _run_cell_job(args):
    cfg, planner, objective, seed, out_dir = args
    return run_cell(cfg, planner, objective, seed, out_dir)


def _map_jobs(jobs: list, n_workers: int) -> list:
    if n_workers <= 1 or len(jobs) <= 1:
        return [_run_cell_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(_run_cell_job, jobs))


def _write_manifest(out: Path, files: list[str]) -> None:
    body = json.dumps({"files": sorted(set(files))}, indent=2) + "\n"
    export.write_if_changed(out / "manifest.json", body.encode())


def _prepare(args) -> tuple[ExperimentConfig, Path]:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_(seeds=(args.seed,))
    return cfg, output_root(args.out, cfg)


def cmd_run(args) -> int:
    cfg, out = _prepare(args)
    jobs = [(cfg, cfg.planner.kind, cfg.objective, s, out) for s in cfg.seeds]
    results = _map_jobs(jobs, args.jobs)
    files = [f for r in results for f in r["files"]]
    _write_manifest(out, files)
    for r in results:
        logger.info("%s_%s_%d: %d images, final mIoU %.4f", r["planner"], r["objective"], r["seed"], r["images_labeled"], r["final_miou"])
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg, out = _prepare(args)
    cells = [(p, o, s) for p in cfg.planners for o in cfg.objectives for s in cfg.seeds]
    jobs = [(cfg, p, o, s, out / "cells" / export.run_stem(p, o, s)) for p, o, s in cells]
    logger.info("benchmark: %d cells", len(jobs))
    results = _map_jobs(jobs, args.jobs)
    rows = [[r["planner"], r["objective"], r["seed"], r["missions"], r["images_labeled"], r["final_miou"], r["auc_miou"]] for r in results]
    export.write_summary_csv(out / "summary.csv", rows)
    logger.info("wrote %s", out / "summary.csv")
    return EXIT_OK


def cmd_export_maps(args) -> int:
    written = export.export_maps(args.run_dir)
    logger.info("%d files in %s", len(written), Path(args.run_dir) / "maps")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ippal", description="Informative path planning with active learning on synthetic terrains")
    p.add_argument("--quiet", action="store_true", help="Only report warnings and errors")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, metavar="PATH", help="TOML experiment config")
        sp.add_argument("--seed", type=int, default=None, help="Run this seed instead of the configured list")
        sp.add_argument("--jobs", type=int, default=1, help="Parallel campaigns (default: 1)")
        sp.add_argument("--out", default=None, metavar="DIR", help="Output directory (default: $IPPAL_OUT or config output_dir)")
        sp.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="Only report warnings and errors")

    sp = sub.add_parser("run", help="Run the configured planner/objective for every seed")
    common(sp)
    sp.set_defaults(func=cmd_run)
    sp = sub.add_parser("benchmark", help="Run the planner x objective x seed matrix and summarise AUCs")
    common(sp)
    sp.set_defaults(func=cmd_benchmark)
    sp = sub.add_parser("export-maps", help="Convert stored map snapshots of a run directory to PGM")
    sp.add_argument("run_dir", help="Directory written by 'run' or one benchmark cell")
    sp.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="Only report warnings and errors")
    sp.set_defaults(func=cmd_export_maps)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    logging.getLogger("ippal").setLevel(logging.WARNING if args.quiet else logging.INFO)
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except export.SnapshotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        logger.debug("traceback", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
