"""Command-line experiment runner.

Subcommands: estimate-sweep, steer, sweep-steer, validate-config.
Exit codes: 0 success, 2 config error, 3 solver infeasible, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .pipeline import (derive_seed, estimate_error_sweep, run_steering_pipeline,
                       sweep_summary)
from .serialize import (SCHEMA_VERSION, law_to_csv, report_to_files,
                        save_data_matrices, save_matrices, schedule_to_csv,
                        solution_to_json)
from .steering import MeanSteeringInfeasibleError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

_FMT = "%.17g"


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="covsteer",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, desc in (("estimate-sweep", "estimation-error sweep over dataset sizes"),
                       ("steer", "single end-to-end steering run"),
                       ("sweep-steer", "steering runs over dataset sizes/replicates"),
                       ("validate-config", "validate a configuration file")):
        sp = sub.add_parser(name, help=desc)
        sp.add_argument("--config", required=True, help="YAML configuration path")
        sp.add_argument("--seed", type=int, default=None, help="override run.seed")
        sp.add_argument("--out", default=None, help="override run.out directory")
        sp.add_argument("--jobs", type=int, default=1, help="parallel workers")
        sp.add_argument("--dry-run", action="store_true",
                        help="validate and print the plan without computing")
    return ap


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg


def _write_rows(path: Path, rows, header) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([(_FMT % v) if isinstance(v, float) else str(v)
                        for v in (row[h] for h in header)])


def cmd_validate_config(args) -> int:
    cfg = _load(args)
    print("configuration OK")
    print(cfg.describe())
    return EXIT_OK


def cmd_estimate_sweep(args) -> int:
    cfg = _load(args)
    if args.dry_run:
        print("estimate-sweep plan:")
        print(cfg.describe())
        print(f"stages: collect -> represent -> fit {cfg.sweep_methods} "
              f"per (T, replicate); rows = {len(cfg.sizes) * cfg.replicates * len(cfg.sweep_methods)}")
        return EXIT_OK
    rows = estimate_error_sweep(cfg.system, cfg.settings.ell, cfg.sizes,
                                cfg.replicates, cfg.sweep_methods, cfg.seed,
                                input_scale=cfg.settings.input_scale,
                                instrument_lags=cfg.settings.instrument_lags)
    out = Path(cfg.out)
    _write_rows(out / "estimate_sweep.csv", rows, ["T", "method", "replicate", "e"])
    _write_rows(out / "estimate_sweep_summary.csv", sweep_summary(rows),
                ["T", "method", "median", "variance", "count"])
    (out / "manifest.json").write_text(json.dumps(
        {"schema_version": SCHEMA_VERSION, "command": "estimate-sweep",
         "seed": cfg.seed, "sizes": cfg.sizes, "replicates": cfg.replicates},
        indent=2, sort_keys=True))
    print(f"wrote {out / 'estimate_sweep.csv'} ({len(rows)} rows)")
    return EXIT_OK


def _steer_stage_plan(cfg: ExperimentConfig) -> str:
    return ("stages: collect(T={T}) -> represent(ell={ell}, kappa={kappa}) -> "
            "estimate({method}) -> mean-steer(N={N}) -> covariance SDP -> "
            "evaluate({M} rollouts)").format(
        T=cfg.settings.T, ell=cfg.settings.ell, kappa=cfg.settings.kappa,
        method=cfg.settings.method, N=cfg.settings.N, M=cfg.settings.rollouts)


def cmd_steer(args) -> int:
    cfg = _load(args)
    if args.dry_run:
        print("steer plan:")
        print(cfg.describe())
        print(_steer_stage_plan(cfg))
        return EXIT_OK
    settings = dataclasses.replace(cfg.settings, T=cfg.sizes[0])
    try:
        result = run_steering_pipeline(cfg.system, settings, cfg.seed)
    except MeanSteeringInfeasibleError as exc:
        print(f"mean steering infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    save_data_matrices(result.dm, out / "data_matrices",
                       extra_manifest={"kappa": settings.kappa})
    save_matrices(out / "model",
                  {"A_hat": result.model.A_hat, "B_hat": result.model.B_hat,
                   "C_hat": result.model.C_hat},
                  {"method": result.model.method})
    save_matrices(out / "noise",
                  {"Sigma_zeta_hat": result.noise.Sigma_zeta_hat,
                   "Sigma_xi_hat": result.noise.Sigma_xi_hat,
                   "Psi_hat": result.noise.Psi_hat, "D_hat": result.noise.D_hat,
                   "Sigma_chizeta_init": result.noise.Sigma_chizeta_init},
                  {"psi_stabilized": bool(result.noise.psi_stabilized)})
    manifest = {
        "schema_version": SCHEMA_VERSION, "command": "steer",
        "seed": cfg.seed, "stage_seeds": result.seeds,
        "solver_status": result.status, "relax_factor": result.relax_factor,
        "timings_s": result.timings,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    if result.status == "infeasible":
        print("covariance program infeasible at every relaxation level",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    if result.status == "numerical_trouble":
        print("covariance solver reported numerical trouble", file=sys.stderr)
        return EXIT_NUMERICAL
    sched = result.solution.schedule
    sched.mu = result.mu
    schedule_to_csv(sched, out / "schedule.csv")
    law_to_csv(result.solution.law.K, result.v, out / "gains.csv")
    solution_to_json(result.solution, out / "solution.json")
    report_to_files(result.report, out / "report")
    print(f"status {result.status} (relax factor {result.relax_factor:g}); "
          f"terminal mean error {result.report.terminal_mean_error:.3f}; "
          f"lambda_max ratio {result.report.cov_comparison['lambda_max_ratio']:.3f}")
    print(f"artifacts in {out}")
    return EXIT_OK


def _sweep_one(payload) -> dict:
    cfg_path, seed_override, out_override, T, rep = payload
    cfg = load_config(cfg_path)
    if seed_override is not None:
        cfg.seed = seed_override
    settings = dataclasses.replace(cfg.settings, T=T)
    run_seed = derive_seed(cfg.seed, 1000 + T, rep)
    try:
        result = run_steering_pipeline(cfg.system, settings, run_seed)
    except MeanSteeringInfeasibleError:
        return {"T": T, "replicate": rep, "status": "mean_infeasible",
                "relax_factor": float("nan"), "terminal_mean_error": float("nan"),
                "lambda_max_ratio": float("nan"), "frobenius_distance": float("nan")}
    row = {"T": T, "replicate": rep, "status": result.status,
           "relax_factor": result.relax_factor}
    if result.report is not None:
        row["terminal_mean_error"] = result.report.terminal_mean_error
        row["lambda_max_ratio"] = result.report.cov_comparison["lambda_max_ratio"]
        row["frobenius_distance"] = result.report.cov_comparison["frobenius_distance"]
    else:
        row["terminal_mean_error"] = float("nan")
        row["lambda_max_ratio"] = float("nan")
        row["frobenius_distance"] = float("nan")
    return row


def cmd_sweep_steer(args) -> int:
    cfg = _load(args)
    if args.dry_run:
        print("sweep-steer plan:")
        print(cfg.describe())
        print(f"{len(cfg.sizes)} sizes x {cfg.replicates} replicates = "
              f"{len(cfg.sizes) * cfg.replicates} steering runs")
        return EXIT_OK
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "sweep_manifest.json"
    rows_path = out / "sweep_steer.csv"
    header = ["T", "replicate", "status", "relax_factor", "terminal_mean_error",
              "lambda_max_ratio", "frobenius_distance"]
    completed: dict = {}
    if manifest_path.exists():
        state = json.loads(manifest_path.read_text())
        if state.get("seed") == cfg.seed:
            completed = {(row["T"], row["replicate"]): row
                         for row in state.get("rows", [])}
    tasks = [(str(args.config), args.seed, args.out, T, rep)
             for T in cfg.sizes for rep in range(cfg.replicates)
             if (T, rep) not in completed]
    results = dict(completed)
    def _flush():
        ordered = [results[(T, rep)] for T in cfg.sizes
                   for rep in range(cfg.replicates) if (T, rep) in results]
        _write_rows(rows_path, ordered, header)
        manifest_path.write_text(json.dumps(
            {"schema_version": SCHEMA_VERSION, "command": "sweep-steer",
             "seed": cfg.seed, "rows": ordered}, indent=2, sort_keys=True))
    if args.jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            for row in ex.map(_sweep_one, tasks):
                results[(row["T"], row["replicate"])] = row
                _flush()
    else:
        for payload in tasks:
            row = _sweep_one(payload)
            results[(row["T"], row["replicate"])] = row
            _flush()
    _flush()
    ordered = [results[(T, rep)] for T in cfg.sizes
               for rep in range(cfg.replicates) if (T, rep) in results]
    agg = []
    for T in cfg.sizes:
        vals = [r["terminal_mean_error"] for r in ordered
                if r["T"] == T and np.isfinite(r["terminal_mean_error"])]
        agg.append({"T": T, "median_terminal_mean_error":
                    float(np.median(vals)) if vals else float("nan"),
                    "count": len(vals)})
    _write_rows(out / "sweep_steer_summary.csv", agg,
                ["T", "median_terminal_mean_error", "count"])
    n_bad = sum(1 for r in ordered if r["status"] not in ("optimal", "near_optimal"))
    print(f"completed {len(ordered)} runs ({n_bad} without a solution); "
          f"results in {rows_path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handlers = {
        "validate-config": cmd_validate_config,
        "estimate-sweep": cmd_estimate_sweep,
        "steer": cmd_steer,
        "sweep-steer": cmd_sweep_steer,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
