"""YAML experiment configuration: parsing, validation, normalization."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import yaml

from . import estimation as est
from .pipeline import SteerSettings
from .presets import PAPER_3STATE, PAPER_4STATE, get_preset
from .system_sim import GroundTruthSystem, observability_index


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    """Normalized experiment configuration."""

    system: GroundTruthSystem
    preset_name: Optional[str]
    settings: SteerSettings
    sizes: List[int]
    replicates: int
    seed: int
    out: str
    sweep_methods: List[str] = field(default_factory=lambda: [est.LS, est.TLS, est.IV2SLS])

    def describe(self) -> str:
        lines = [
            f"system: {self.preset_name or 'custom'} "
            f"(n={self.system.n}, m={self.system.m}, p={self.system.p})",
            f"window length ell={self.settings.ell}, kappa={self.settings.kappa}",
            f"dataset sizes {self.sizes} x {self.replicates} replicates, "
            f"input scale {self.settings.input_scale}",
            f"estimator {self.settings.method}, instrument lags "
            f"{self.settings.instrument_lags if self.settings.instrument_lags is not None else 'auto'}",
            f"horizon N={self.settings.N}, terminal mean {list(self.settings.mu_y_final)}",
            f"terminal covariance mode {self.settings.terminal_mode}",
            f"rollouts {self.settings.rollouts}, seed {self.seed}, out {self.out!r}",
        ]
        return "\n".join(lines)


def _matrix(value, base: Path, name: str) -> np.ndarray:
    if isinstance(value, str):
        path = (base / value) if not Path(value).is_absolute() else Path(value)
        if not path.exists():
            raise ConfigError(f"{name}: matrix file {path} not found")
        return np.loadtxt(path, delimiter=",", ndmin=2)
    try:
        return np.atleast_2d(np.asarray(value, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: not a matrix: {exc}") from exc


def _noise_matrix(value, dim: int, base: Path, name: str) -> np.ndarray:
    if isinstance(value, (int, float)):
        return float(value) * np.eye(dim)
    return _matrix(value, base, name)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML experiment configuration.

    Raises:
        ConfigError: any structural or value problem.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"YAML parse error: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    base = path.parent

    sysc = raw.get("system", {})
    preset_name = sysc.get("preset")
    if preset_name is not None:
        if preset_name not in (PAPER_3STATE, PAPER_4STATE):
            raise ConfigError(f"unknown preset {preset_name!r}")
        system = get_preset(preset_name)
    else:
        try:
            A = _matrix(sysc["A"], base, "system.A")
            B = _matrix(sysc["B"], base, "system.B")
            C = _matrix(sysc["C"], base, "system.C")
        except KeyError as exc:
            raise ConfigError(f"system.{exc.args[0]} missing (or use a preset)") from exc
        Sw = _noise_matrix(sysc.get("sigma_w", 0.0), A.shape[0], base, "system.sigma_w")
        Sq = _noise_matrix(sysc.get("sigma_q", 0.0), C.shape[0], base, "system.sigma_q")
        try:
            system = GroundTruthSystem(A=A, B=B, C=C, Sigma_w=Sw, Sigma_q=Sq)
        except ValueError as exc:
            raise ConfigError(f"system: {exc}") from exc

    repc = raw.get("representation", {})
    ell = repc.get("ell")
    if ell is None:
        ell = observability_index(system.A, system.C)
    ell = int(ell)
    if ell < observability_index(system.A, system.C):
        raise ConfigError(f"ell={ell} below the observability index")
    kappa = repc.get("kappa")
    if preset_name == PAPER_3STATE and kappa is None:
        kappa = system.m * ell + system.n
    datac = raw.get("data", {})
    sizes = [int(v) for v in datac.get("sizes", [1500])]
    if any(s < 1 for s in sizes):
        raise ConfigError("data.sizes must be positive")
    replicates = int(datac.get("replicates", 1))
    if replicates < 1:
        raise ConfigError("data.replicates must be positive")

    estc = raw.get("estimation", {})
    method = estc.get("method", est.IV2SLS)
    if method not in est.METHODS:
        raise ConfigError(f"estimation.method must be one of {est.METHODS}")
    steerc = raw.get("steering", {})
    evalc = raw.get("evaluation", {})
    runc = raw.get("run", {})
    p = system.p

    def _vec(value, name, default):
        if value is None:
            return np.asarray(default, dtype=float)
        v = np.asarray(value, dtype=float).ravel()
        if v.shape[0] != p:
            raise ConfigError(f"{name} must have {p} entries")
        return v

    terminal_mode = steerc.get("terminal_mode", "upper_bound")
    if terminal_mode not in ("upper_bound", "equality"):
        raise ConfigError("steering.terminal_mode must be 'upper_bound' or 'equality'")
    mu0_mode = steerc.get("mu0_mode", "fixed")
    if mu0_mode not in ("fixed", "free"):
        raise ConfigError("steering.mu0_mode must be 'fixed' or 'free'")
    reference = steerc.get("reference", "lissajous")
    if reference not in ("lissajous", "zero"):
        raise ConfigError("steering.reference must be 'lissajous' or 'zero'")
    psi_fit = estc.get("psi_fit", "tls")
    if psi_fit not in ("tls", "ls"):
        raise ConfigError("estimation.psi_fit must be 'tls' or 'ls'")

    settings = SteerSettings(
        ell=ell,
        T=sizes[0],
        N=int(steerc.get("horizon", 15)),
        kappa=int(kappa) if kappa is not None else None,
        gap_ratio=float(repc.get("gap_ratio", 10.0)),
        input_scale=float(datac.get("input_scale", 1.0)),
        method=method,
        instrument_lags=(int(estc["instrument_lags"])
                         if estc.get("instrument_lags") is not None else None),
        psi_fit=psi_fit,
        mu_y_init=_vec(steerc.get("mu_y_init"), "steering.mu_y_init", np.zeros(p)),
        mu_y_final=_vec(steerc.get("mu_y_final"), "steering.mu_y_final",
                        np.array([-5.878, -9.511]) if p == 2 else np.zeros(p)),
        sigma_y_init=steerc.get("sigma_y_init", 2.5),
        sigma_y_final=steerc.get("sigma_y_final", 0.25),
        q_weight=float(steerc.get("q_weight", 1.0)),
        r_weight=float(steerc.get("r_weight", 1.0)),
        reference=reference,
        terminal_mode=terminal_mode,
        mu0_mode=mu0_mode,
        reg_slack=float(steerc.get("reg_slack", 1e-4)),
        floor=float(steerc.get("floor", 1e-3)),
        init_probes=int(evalc.get("init_probes", 4000)),
        rollouts=int(evalc.get("rollouts", 1000)),
        confidence=float(evalc.get("confidence", 0.95)),
    )
    if settings.N < 1:
        raise ConfigError("steering.horizon must be >= 1")
    if settings.rollouts < 2:
        raise ConfigError("evaluation.rollouts must be >= 2")

    return ExperimentConfig(system=system, preset_name=preset_name,
                            settings=settings, sizes=sizes, replicates=replicates,
                            seed=int(runc.get("seed", 0)),
                            out=str(runc.get("out", "runs/experiment")))
