"""File formats: trajectory CSV, matrix directories with JSON manifests, and
the schedule/report CSV and JSON outputs."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from .evaluation import EvaluationReport
from .moments import MomentSchedule
from .representation import DataMatrices
from .steering import SteeringSolution
from .system_sim import Trajectory

SCHEMA_VERSION = 1
_FMT = "%.17g"


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write columns k, u_1..u_m, y_1..y_p with a header row."""
    path = Path(path)
    m, p = traj.m, traj.p
    header = ["k"] + [f"u_{i + 1}" for i in range(m)] + [f"y_{i + 1}" for i in range(p)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(len(traj)):
            row = [str(k)] + [_FMT % v for v in traj.inputs[k]] \
                + [_FMT % v for v in traj.outputs[k]]
            w.writerow(row)


def trajectory_from_csv(path) -> Trajectory:
    path = Path(path)
    with path.open(newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if not header or header[0] != "k":
            raise ValueError(f"{path}: missing trajectory header")
        m = sum(1 for c in header if c.startswith("u_"))
        p = sum(1 for c in header if c.startswith("y_"))
        us, ys = [], []
        for row in r:
            vals = [float(v) for v in row[1:]]
            us.append(vals[:m])
            ys.append(vals[m:m + p])
    return Trajectory(inputs=np.asarray(us), outputs=np.asarray(ys))


def save_matrices(dirpath, matrices: Dict[str, np.ndarray],
                  manifest: Optional[dict] = None) -> None:
    """Write one CSV per matrix plus a manifest.json."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"schema_version": SCHEMA_VERSION, "matrices": {}}
    if manifest:
        meta.update(manifest)
        meta["schema_version"] = SCHEMA_VERSION
    for name, M in matrices.items():
        M = np.atleast_2d(np.asarray(M, dtype=float))
        np.savetxt(d / f"{name}.csv", M, delimiter=",", fmt=_FMT)
        meta["matrices"][name] = list(M.shape)
    (d / "manifest.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_matrices(dirpath) -> Dict[str, np.ndarray]:
    """Load a matrix directory written by save_matrices; manifest under '_manifest'."""
    d = Path(dirpath)
    meta = json.loads((d / "manifest.json").read_text())
    out: Dict[str, np.ndarray] = {}
    for name, shape in meta["matrices"].items():
        M = np.loadtxt(d / f"{name}.csv", delimiter=",", ndmin=2)
        out[name] = M.reshape(shape)
    out["_manifest"] = meta
    return out


def save_data_matrices(dm: DataMatrices, dirpath,
                       extra_manifest: Optional[dict] = None) -> None:
    manifest = {"ell": dm.ell, "r": dm.r, "T": dm.T, "m": dm.m, "p": dm.p}
    if extra_manifest:
        manifest.update(extra_manifest)
    save_matrices(dirpath, {"U0": dm.U0, "Z0": dm.Z0, "Z1": dm.Z1,
                            "X0": dm.X0, "X1": dm.X1, "Y0": dm.Y0, "L": dm.L},
                  manifest)


def load_data_matrices(dirpath) -> DataMatrices:
    mats = load_matrices(dirpath)
    return DataMatrices(U0=mats["U0"], Z0=mats["Z0"], Z1=mats["Z1"],
                        X0=mats["X0"], X1=mats["X1"], Y0=mats["Y0"],
                        L=mats["L"], ell=int(mats["_manifest"]["ell"]))


def schedule_to_csv(schedule: MomentSchedule, path) -> None:
    """One row per step with flattened covariance blocks (and output blocks)."""
    path = Path(path)
    Np1 = len(schedule.Sigma)
    r = schedule.Sigma[0].shape[0]
    p = schedule.Sigma_chizeta[0].shape[1]
    header = ["k"] + [f"Sigma_{i + 1}{j + 1}" for i in range(r) for j in range(r)] \
        + [f"Sigma_chizeta_{i + 1}{j + 1}" for i in range(r) for j in range(p)]
    if schedule.Sigma_y is not None:
        header += [f"Sigma_y_{i + 1}{j + 1}" for i in range(p) for j in range(p)]
    if schedule.mu is not None:
        header += [f"mu_{i + 1}" for i in range(r)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(Np1):
            row = [str(k)]
            row += [_FMT % v for v in schedule.Sigma[k].ravel()]
            row += [_FMT % v for v in schedule.Sigma_chizeta[k].ravel()]
            if schedule.Sigma_y is not None:
                row += [_FMT % v for v in schedule.Sigma_y[k].ravel()]
            if schedule.mu is not None:
                row += [_FMT % v for v in schedule.mu[k]]
            w.writerow(row)


def law_to_csv(K_list, v_list, path) -> None:
    """Gain and feedforward schedule, one row per step, gains flattened."""
    path = Path(path)
    m, r = K_list[0].shape
    header = ["k"] + [f"K_{i + 1}{j + 1}" for i in range(m) for j in range(r)] \
        + [f"v_{i + 1}" for i in range(m)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, (K, v) in enumerate(zip(K_list, v_list)):
            w.writerow([str(k)] + [_FMT % x for x in K.ravel()]
                       + [_FMT % x for x in np.asarray(v).ravel()])


def solution_to_json(sol: SteeringSolution, path) -> None:
    """Status, objective, and per-step slack-gap traces."""
    path = Path(path)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "solver_status": sol.solver_status,
        "objective_value": sol.objective_value,
        "gap_trace": sol.diagnostics.get("gap_trace"),
        "gap_min_eig": sol.diagnostics.get("gap_min_eig"),
        "sdp_vs_propagated_min_eig": sol.diagnostics.get("sdp_vs_propagated_min_eig"),
        "cvxpy_status": sol.diagnostics.get("cvxpy_status"),
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


def report_to_files(report: EvaluationReport, prefix) -> None:
    """JSON summary plus per-step moment and ellipse CSVs."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "terminal_mean_error": report.terminal_mean_error,
        "cov_comparison": report.cov_comparison,
        "rollout_count": report.rollout_count,
        "confidence": report.confidence,
        "input_norm_max": report.input_norm_max,
        "empirical_terminal_cov": report.empirical_terminal_cov.tolist(),
    }
    Path(str(prefix) + "_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True))
    p = report.mean_per_step.shape[1]
    header = ["k"] + [f"mean_{i + 1}" for i in range(p)] \
        + [f"cov_{i + 1}{j + 1}" for i in range(p) for j in range(p)]
    with open(str(prefix) + "_moments.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(report.mean_per_step.shape[0]):
            w.writerow([str(k)] + [_FMT % v for v in report.mean_per_step[k]]
                       + [_FMT % v for v in report.cov_per_step[k].ravel()])
    if report.ellipses:
        with open(str(prefix) + "_ellipses.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "center_1", "center_2", "axis_major", "axis_minor",
                        "angle_rad"])
            for k, e in enumerate(report.ellipses):
                w.writerow([str(k)] + [_FMT % v for v in e["center"]]
                           + [_FMT % v for v in e["axes"]] + [_FMT % e["angle"]])
