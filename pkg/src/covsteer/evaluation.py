"""Closed-loop Monte Carlo validation against the true plant, the estimation
error metric, and covariance-ellipse geometry for reporting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import stats

from .moments import ControlLaw
from .system_sim import (GroundTruthSystem, _history_batch, history_draw_size,
                         initial_state_spread, rollout_stream)
from .utils import is_psd, psd_sqrt, symmetrize


@dataclass
class SamplerConfig:
    """Initial-condition sampler settings for rollouts."""

    target_mean: np.ndarray
    target_cov: np.ndarray
    lam: Optional[float] = None   # override of the initial-state spread

    def __post_init__(self):
        self.target_mean = np.asarray(self.target_mean, dtype=float).ravel()
        self.target_cov = np.atleast_2d(np.asarray(self.target_cov, dtype=float))
        if not is_psd(self.target_cov, tol=1e-8):
            raise ValueError("target_cov must be PSD")


@dataclass
class EvaluationReport:
    """Empirical closed-loop moments and terminal metrics."""

    terminal_mean_error: float
    empirical_terminal_cov: np.ndarray
    cov_comparison: Dict[str, float]
    mean_per_step: np.ndarray      # (N+1, p)
    cov_per_step: np.ndarray       # (N+1, p, p)
    rollout_count: int
    ellipses: List[Dict[str, np.ndarray]] = field(default_factory=list)
    confidence: float = 0.95
    input_norm_max: float = 0.0

    def __post_init__(self):
        for k in range(self.cov_per_step.shape[0]):
            if not is_psd(self.cov_per_step[k], tol=1e-8):
                raise ValueError("empirical covariance not PSD")


def _rollout_draws(sys: GroundTruthSystem, ell: int, N: int, rollouts: int,
                   seed: int) -> np.ndarray:
    """Per-rollout standard-normal blocks with the fixed layout
    [history | per horizon step: q (p) then w (n)]."""
    total = history_draw_size(sys, ell) + (N + 1) * (sys.p + sys.n)
    draws = np.empty((rollouts, total))
    for i in range(rollouts):
        draws[i] = rollout_stream(seed, i).standard_normal(total)
    return draws


def run_closed_loop(sys: GroundTruthSystem, ell: int, L: np.ndarray,
                    law: ControlLaw, mu: List[np.ndarray],
                    sampler: SamplerConfig, rollouts: int, seed: int,
                    confidence: float = 0.95) -> EvaluationReport:
    """Monte Carlo rollout of the true plant under the window-feedback law.

    Each rollout samples an initial history window, forms the reduced state
    from the realized input-output window at every step, applies
    u_k = K_k (chi_k - mu_k) + v_k, and steps the plant. The per-rollout noise
    comes from seeds derived from (seed, rollout index), so results are
    deterministic and independent of batching.

    Args:
        sys: ground-truth plant.
        ell: window length of the reduced state.
        L: r x h reduction used to form chi from the window.
        law: feedback law (horizon N).
        mu: planned state means, length >= N.
        sampler: initial-condition settings.
        rollouts: number of rollouts (>= 2).
        seed: root seed.
        confidence: level for the reported covariance ellipses (2-D outputs).

    Returns:
        EvaluationReport with per-step empirical output moments.
    """
    if rollouts < 2:
        raise ValueError("need at least 2 rollouts")
    N = law.N
    if len(mu) < N:
        raise ValueError("mean schedule shorter than the law horizon")
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n, m, p = sys.n, sys.m, sys.p
    if L.shape[1] != ell * (m + p):
        raise ValueError(f"L has {L.shape[1]} columns, window state has {ell * (m + p)}")
    for k in range(N):
        if law.K[k].shape != (m, L.shape[0]):
            raise ValueError(f"gain K_{k} has shape {law.K[k].shape}, "
                             f"expected {(m, L.shape[0])}")
    lam = sampler.lam
    if lam is None:
        lam = initial_state_spread(sys, sampler.target_cov, ell)
    draws = _rollout_draws(sys, ell, N, rollouts, seed)
    hist_len = history_draw_size(sys, ell)
    uw, yw, X = _history_batch(sys, sampler.target_mean, lam, ell,
                               draws[:, :hist_len])
    sqw = psd_sqrt(sys.Sigma_w)
    sqq = psd_sqrt(sys.Sigma_q)
    pos = hist_len
    M = rollouts
    means = np.empty((N + 1, p))
    covs = np.empty((N + 1, p, p))
    umax = 0.0
    for k in range(N + 1):
        yk = X @ sys.C.T + draws[:, pos:pos + p] @ sqq.T
        pos += p
        means[k] = yk.mean(axis=0)
        yc = yk - means[k]
        covs[k] = symmetrize(yc.T @ yc / (M - 1))
        if k == N:
            break
        window = np.concatenate([uw[:, ::-1].reshape(M, ell * m),
                                 yw[:, ::-1].reshape(M, ell * p)], axis=1)
        chi = window @ L.T
        uk = (chi - np.asarray(mu[k])) @ law.K[k].T + np.asarray(law.v[k])
        umax = max(umax, float(np.linalg.norm(uk, axis=1).max()))
        X = X @ sys.A.T + uk @ sys.B.T + draws[:, pos:pos + n] @ sqw.T
        pos += n
        uw = np.concatenate([uw[:, 1:], uk[:, None, :]], axis=1)
        yw = np.concatenate([yw[:, 1:], yk[:, None, :]], axis=1)
    ellipses = []
    if p == 2:
        for k in range(N + 1):
            axes, angle = covariance_ellipse(covs[k], confidence)
            ellipses.append({"center": means[k], "axes": axes, "angle": angle})
    return EvaluationReport(
        terminal_mean_error=float("nan"),
        empirical_terminal_cov=covs[N],
        cov_comparison={},
        mean_per_step=means,
        cov_per_step=covs,
        rollout_count=rollouts,
        ellipses=ellipses,
        confidence=confidence,
        input_norm_max=umax,
    )


def finalize_report(report: EvaluationReport, mu_y_final: np.ndarray,
                    Sigma_y_final: np.ndarray) -> EvaluationReport:
    """Fill the terminal metrics of a report against the steering targets."""
    mu_y_final = np.asarray(mu_y_final, dtype=float).ravel()
    Sigma_y_final = np.atleast_2d(np.asarray(Sigma_y_final, dtype=float))
    term_cov = report.empirical_terminal_cov
    report.terminal_mean_error = float(
        np.linalg.norm(report.mean_per_step[-1] - mu_y_final))
    lt = float(np.linalg.eigvalsh(Sigma_y_final).max())
    le = float(np.linalg.eigvalsh(term_cov).max())
    report.cov_comparison = {
        "lambda_max_empirical": le,
        "lambda_max_target": lt,
        "lambda_max_ratio": le / lt if lt > 0 else float("inf"),
        "frobenius_distance": float(np.linalg.norm(term_cov - Sigma_y_final)),
    }
    return report


def measure_initial_moments(sys: GroundTruthSystem, ell: int, L: np.ndarray,
                            sampler: SamplerConfig, probes: int,
                            seed: int) -> Dict[str, np.ndarray]:
    """Probe the sampler's achieved initial moments (used by the steering SDP).

    Returns the empirical output mean/covariance at k=0 and the reduced-state
    mean/covariance of chi_0 over `probes` windows.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    lam = sampler.lam
    if lam is None:
        lam = initial_state_spread(sys, sampler.target_cov, ell)
    m, p = sys.m, sys.p
    hist_len = history_draw_size(sys, ell)
    draws = np.empty((probes, hist_len + p))
    for i in range(probes):
        draws[i] = rollout_stream(seed, i).standard_normal(hist_len + p)
    uw, yw, X = _history_batch(sys, sampler.target_mean, lam, ell,
                               draws[:, :hist_len])
    y0 = X @ sys.C.T + draws[:, hist_len:] @ psd_sqrt(sys.Sigma_q).T
    window = np.concatenate([uw[:, ::-1].reshape(probes, ell * m),
                             yw[:, ::-1].reshape(probes, ell * p)], axis=1)
    chi = window @ L.T
    yc = y0 - y0.mean(axis=0)
    cc = chi - chi.mean(axis=0)
    return {
        "mu_y": y0.mean(axis=0),
        "Sigma_y": symmetrize(yc.T @ yc / (probes - 1)),
        "mu_chi": chi.mean(axis=0),
        "Sigma_chi": symmetrize(cc.T @ cc / (probes - 1)),
        "lam": np.asarray(lam),
    }


def model_error(est, truth_BA: np.ndarray) -> float:
    """Frobenius error between the stacked truth [B A] and the estimate."""
    truth_BA = np.atleast_2d(np.asarray(truth_BA, dtype=float))
    BA = est.BA if hasattr(est, "BA") else np.atleast_2d(np.asarray(est, dtype=float))
    if BA.shape != truth_BA.shape:
        raise ValueError(f"shape mismatch: estimate {BA.shape}, truth {truth_BA.shape}")
    return float(np.linalg.norm(BA - truth_BA))


def covariance_ellipse(Sigma: np.ndarray, confidence: float):
    """Confidence-ellipse geometry of a 2-D covariance.

    Args:
        Sigma: 2x2 PSD covariance.
        confidence: level in (0, 1).

    Returns:
        (axes, angle): semi-axis lengths (descending) and the rotation angle
        of the principal axis in radians.
    """
    Sigma = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if Sigma.shape != (2, 2):
        raise ValueError("Sigma must be 2x2")
    if not is_psd(Sigma, tol=1e-8):
        raise ValueError("Sigma must be PSD")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    w, V = np.linalg.eigh(symmetrize(Sigma))
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    V = V[:, order]
    q = stats.chi2.ppf(confidence, df=2)
    axes = np.sqrt(q * w)
    angle = float(np.arctan2(V[1, 0], V[0, 0]))
    if angle < -np.pi / 2:
        angle += np.pi
    elif angle > np.pi / 2:
        angle -= np.pi
    return axes, angle
