"""Command-line front end: ``carleman-lab run <experiment> --config <path>``.

Exit status: 0 success, 2 invalid configuration, 3 memory budget exceeded,
4 solver or numerical failure, 1 anything else. A ``manifest.json`` is written
in every case; failures also print a JSON error document to stderr.

Region labels resolve ties toward the efficient and resolved side: R = 1
counts as efficient and N = N_K counts as resolved.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .carleman import BudgetError, SolverError
from .config import EXPERIMENTS, ConfigError, load_config
from .experiments import run_experiment
from .field_ops import EigenError, ForcingError
from .grid_ops import GridError
from .reference import ShockError, ToyPoleError
from .regimes import RegimeError
from .spectral import SpectrumError
from .tables import emit_plot_data, sha256_file

OUT_ENV = "CARLEMAN_LAB_OUT"

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_BUDGET, EXIT_SOLVER = 0, 1, 2, 3, 4


def tool_version() -> str:
    try:
        return version("carleman-lab")
    except PackageNotFoundError:
        return "unknown"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return getattr(obj, "value", obj)


def _dump(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def classify_failure(exc: BaseException) -> tuple[int, str]:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG, "config"
    if isinstance(exc, BudgetError):
        return EXIT_BUDGET, "budget"
    if isinstance(exc, (SolverError, EigenError, ToyPoleError, ForcingError)):
        return EXIT_SOLVER, "solver"
    if isinstance(exc, (GridError, RegimeError, ShockError, SpectrumError)):
        return EXIT_CONFIG, "config"
    return EXIT_OTHER, "internal"


def error_document(exc: BaseException, stage: str) -> dict:
    doc = {"error": type(exc).__name__, "stage": stage, "message": str(exc)}
    if isinstance(exc, ConfigError):
        doc["violations"] = exc.violations
    if isinstance(exc, BudgetError):
        doc.update({"order": exc.order, "S": exc.size, "nnz_estimate": exc.nnz_estimate, "budget": exc.budget})
    if isinstance(exc, SolverError):
        doc["t_reached"] = exc.t_reached
    return doc


def run(experiment: str, config_path: str, out_dir: str | None = None, workers: int = 1) -> int:
    out = Path(out_dir or os.environ.get(OUT_ENV) or Path.cwd() / "carleman_out" / experiment)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "tool": "carleman-lab",
        "version": tool_version(),
        "experiment": experiment,
        "config_path": str(config_path),
        "workers": workers,
        "stages": {},
        "status": "running",
    }
    stage = "config"
    try:
        t0 = time.perf_counter()
        cfg = load_config(config_path, experiment)
        manifest["config"] = cfg
        manifest["stages"]["config_s"] = time.perf_counter() - t0

        stage = "compute"
        res = run_experiment(cfg, workers)
        manifest["stages"]["compute_s"] = res.timings["compute_s"]
        manifest["derived"] = res.derived

        stage = "output"
        t0 = time.perf_counter()
        files = []
        for tab in res.tables:
            if tab.rows:
                files += emit_plot_data(tab, out, script=cfg["output"]["plot_scripts"])
        for name, doc in res.documents.items():
            path = out / f"{name}.json"
            _dump(path, doc)
            files.append(path)
        manifest["outputs"] = {p.name: sha256_file(p) for p in files}
        manifest["stages"]["output_s"] = time.perf_counter() - t0
        manifest["status"] = "ok"
        code = EXIT_OK
    except Exception as exc:  # every failure still gets a manifest
        code, kind = classify_failure(exc)
        err = error_document(exc, stage)
        err["kind"] = kind
        manifest["status"] = "failed"
        manifest["failure"] = err
        print(json.dumps(_jsonable(err), sort_keys=True), file=sys.stderr)
    _dump(out / "manifest.json", manifest)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carleman-lab",
        description="Carleman-linearisation laboratory for discretised Burgers/Navier-Stokes systems.",
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("experiment", choices=EXPERIMENTS)
    run_p.add_argument("--config", required=True, help="path to the JSON run configuration")
    run_p.add_argument("--out-dir", default=None, help=f"output directory (default: ${OUT_ENV} or ./carleman_out/<experiment>)")
    run_p.add_argument("--workers", type=int, default=1, help="worker threads for independent sweep points")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        print(json.dumps({"error": "ConfigError", "message": "--workers must be >= 1"}), file=sys.stderr)
        return EXIT_CONFIG
    return run(args.experiment, args.config, args.out_dir, args.workers)


if __name__ == "__main__":
    sys.exit(main())
