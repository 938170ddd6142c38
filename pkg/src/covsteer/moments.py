"""Exact first/second-moment propagation of the reduced closed loop, in both
the model-based and the data-parameterized form, plus a vectorized Monte Carlo
mirror used as an oracle in tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from numpy.random import Generator, Philox

from .estimation import NoiseEstimate
from .representation import DataMatrices
from .utils import psd_clip, psd_sqrt, spectral_radius, symmetrize


@dataclass
class ControlLaw:
    """Affine output-window feedback u_k = K_k (chi_k - mu_k) + v_k (+ nu_k)."""

    K: List[np.ndarray]                      # N gains, m x r
    v: List[np.ndarray]                      # N feedforward inputs, (m,)
    Sigma_nu: Optional[List[np.ndarray]] = None  # N injection covariances, m x m

    def __post_init__(self):
        if len(self.K) != len(self.v):
            raise ValueError("K and v must have the same horizon length")
        if self.Sigma_nu is not None and len(self.Sigma_nu) != len(self.K):
            raise ValueError("Sigma_nu horizon inconsistent with K")

    @property
    def N(self) -> int:
        return len(self.K)


@dataclass
class MomentSchedule:
    """Moment trajectories over the horizon (length N+1 sequences)."""

    Sigma: List[np.ndarray]                    # r x r state covariances
    Sigma_chizeta: List[np.ndarray]           # r x p state-noise cross-covariances
    mu: Optional[List[np.ndarray]] = None      # state means
    Sigma_y: Optional[List[np.ndarray]] = None  # p x p output covariances

    def __post_init__(self):
        for S in self.Sigma:
            if np.linalg.norm(S - S.T) > 1e-9 * max(1.0, np.linalg.norm(S)):
                raise ValueError("state covariance not symmetric")
            if np.linalg.eigvalsh(symmetrize(S)).min() < -1e-8:
                raise ValueError("state covariance not PSD")


def propagate_mean(A_hat: np.ndarray, B_hat: np.ndarray, mu0: np.ndarray,
                   v: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Linear mean recursion mu_{k+1} = A mu_k + B v_k."""
    A_hat = np.atleast_2d(A_hat)
    B_hat = np.atleast_2d(B_hat)
    mu = [np.asarray(mu0, dtype=float).ravel()]
    if mu[0].shape[0] != A_hat.shape[0]:
        raise ValueError("mu0 dimension inconsistent with A_hat")
    for vk in v:
        mu.append(A_hat @ mu[-1] + B_hat @ np.asarray(vk, dtype=float).ravel())
    return mu


def propagate_covariance_model(A: np.ndarray, B: np.ndarray, D: np.ndarray,
                               Psi: np.ndarray, Sigma_zeta: np.ndarray,
                               Sigma0: np.ndarray, Sigma_chizeta0: np.ndarray,
                               law: ControlLaw) -> MomentSchedule:
    """Covariance and cross-covariance recursion of the reduced closed loop.

    Sigma_{k+1} = Acl Sigma_k Acl' + Acl Scz_k D' + (Scz_k D')' Acl'
                  + B Sigma_nu_k B' + D Sigma_zeta D',
    Scz_{k+1}   = Acl Scz_k Psi' + D Sigma_zeta Psi',
    with Acl = A + B K_k. Every step is symmetrized.

    Args:
        A, B, D: reduced model and noise-injection matrices.
        Psi: one-step noise map, spectral radius < 1.
        Sigma_zeta: stationary output-noise covariance.
        Sigma0: initial state covariance (PSD).
        Sigma_chizeta0: initial state-noise cross-covariance (r x p).
        law: gains and injection covariances (Sigma_nu may be None for zero).

    Returns:
        MomentSchedule with Sigma and Sigma_chizeta of length N+1.
    """
    if spectral_radius(Psi) >= 1.0:
        raise ValueError("noise map must have spectral radius < 1")
    S = symmetrize(np.atleast_2d(np.asarray(Sigma0, dtype=float)))
    if np.linalg.eigvalsh(S).min() < -1e-8:
        raise ValueError("Sigma0 must be PSD")
    X = np.atleast_2d(np.asarray(Sigma_chizeta0, dtype=float))
    DSD = D @ Sigma_zeta @ D.T
    DS = D @ Sigma_zeta
    Sigmas = [S]
    crosses = [X]
    for k in range(law.N):
        Acl = A + B @ law.K[k]
        Snu = law.Sigma_nu[k] if law.Sigma_nu is not None else None
        nxt = Acl @ Sigmas[k] @ Acl.T + Acl @ crosses[k] @ D.T \
            + (crosses[k] @ D.T).T @ Acl.T + DSD
        if Snu is not None:
            nxt = nxt + B @ Snu @ B.T
        Sigmas.append(symmetrize(nxt))
        crosses.append(Acl @ crosses[k] @ Psi.T + DS @ Psi.T)
    return MomentSchedule(Sigma=Sigmas, Sigma_chizeta=crosses)


def propagate_covariance_datadriven(dm: DataMatrices, ne: NoiseEstimate,
                                    G_seq: Sequence[np.ndarray],
                                    Sigma0: np.ndarray,
                                    Sigma_chizeta0: np.ndarray,
                                    clip_dust: float = 0.0) -> MomentSchedule:
    """Model-free covariance recursion through the data matrices.

    The closed-loop map is (X1 - D Z) P' G_k; each G_k must satisfy the
    data-parameterization identity (bottom block of Phi G_k equal to I).

    Args:
        dm: data matrices.
        ne: noise estimate supplying Z_hat, D_hat, Sigma_zeta_hat, Psi_hat.
        G_seq: N parameterization matrices, (m+r) x r.
        Sigma0, Sigma_chizeta0: initial second moments.
        clip_dust: clip propagated covariances to the PSD cone when their
            minimum eigenvalue is above -clip_dust (inconsistent inputs from
            loose solves); 0 keeps the strict PSD assertion.

    Returns:
        MomentSchedule with Sigma and Sigma_chizeta of length N+1.
    """
    bottom = dm.Phi[dm.m:, :]
    Fmap = (dm.X1 - ne.D_hat @ ne.Z_hat) @ dm.P.T
    D = ne.D_hat
    Sz = ne.Sigma_zeta_hat
    Psi = ne.Psi_hat
    DSD = D @ Sz @ D.T
    DS = D @ Sz
    S = symmetrize(np.atleast_2d(np.asarray(Sigma0, dtype=float)))
    X = np.atleast_2d(np.asarray(Sigma_chizeta0, dtype=float))

    def _settle(M: np.ndarray) -> np.ndarray:
        if clip_dust > 0 and -clip_dust <= np.linalg.eigvalsh(M).min() < 0:
            return psd_clip(M)
        return M

    Sigmas = [_settle(S)]
    crosses = [X]
    for k, Gk in enumerate(G_seq):
        dev = np.abs(bottom @ Gk - np.eye(dm.r)).max()
        if dev > 1e-6:
            raise ValueError(f"G_{k} violates the parameterization identity "
                             f"(bottom-block deviation {dev:.2e} > 1e-6)")
        M = Fmap @ Gk
        nxt = M @ Sigmas[k] @ M.T + M @ crosses[k] @ D.T + D @ crosses[k].T @ M.T + DSD
        Sigmas.append(_settle(symmetrize(nxt)))
        crosses.append(M @ crosses[k] @ Psi.T + DS @ Psi.T)
    return MomentSchedule(Sigma=Sigmas, Sigma_chizeta=crosses)


def output_covariance(C_hat: np.ndarray, Sigma_k: np.ndarray,
                      Sigma_chizeta_k: np.ndarray, Sigma_zeta: np.ndarray) -> np.ndarray:
    """Output covariance C S C' + C X + X' C' + Sigma_zeta, symmetrized."""
    C_hat = np.atleast_2d(C_hat)
    out = C_hat @ Sigma_k @ C_hat.T + C_hat @ Sigma_chizeta_k \
        + Sigma_chizeta_k.T @ C_hat.T + Sigma_zeta
    return symmetrize(out)


def stationary_innovation_covariance(Psi: np.ndarray, Sigma_zeta: np.ndarray) -> np.ndarray:
    """Innovation covariance making Sigma_zeta stationary under the one-step
    map: Sigma_eta = Sigma_zeta - Psi Sigma_zeta Psi', clipped to PSD."""
    return psd_clip(Sigma_zeta - Psi @ Sigma_zeta @ Psi.T)


def mc_reduced_moments(A: np.ndarray, B: np.ndarray, D: np.ndarray,
                       Psi: np.ndarray, Sigma_zeta: np.ndarray,
                       law: ControlLaw, mu: Sequence[np.ndarray],
                       rollouts: int, seed: int, burn_in: int = 200):
    """Vectorized Monte Carlo mirror of the reduced closed loop.

    The noise follows the one-step model with a stationary start; the state is
    warmed up open loop for burn_in steps so the initial cross-covariance is
    induced, then the law is applied for N steps.

    Args:
        A, B, D, Psi, Sigma_zeta: reduced model and noise model.
        law: control law (Sigma_nu treated as zero).
        mu: planned mean schedule (length >= N).
        rollouts: number of sample paths.
        seed: stream key.
        burn_in: open-loop warm-up steps (requires spectral radius(A) < 1).

    Returns:
        dict with the measured initial moments (Sigma0, Sigma_chizeta0) and
        terminal moments (Sigma_N, Sigma_chizeta_N), all sample averages.
    """
    if spectral_radius(A) >= 1.0 and burn_in > 0:
        raise ValueError("open-loop warm-up needs a stable A")
    r = A.shape[0]
    p = D.shape[1]
    rng = Generator(Philox(key=np.uint64(seed & (2**64 - 1))))
    sq_zeta = psd_sqrt(Sigma_zeta)
    Sigma_eta = stationary_innovation_covariance(Psi, Sigma_zeta)
    sq_eta = psd_sqrt(Sigma_eta)
    zeta = rng.standard_normal((rollouts, p)) @ sq_zeta.T
    chi = np.zeros((rollouts, r))
    for _ in range(burn_in):
        chi = chi @ A.T + zeta @ D.T
        zeta = zeta @ Psi.T + rng.standard_normal((rollouts, p)) @ sq_eta.T
    def _center(M):
        return M - M.mean(axis=0)
    cc, zc = _center(chi), _center(zeta)
    Sigma0 = cc.T @ cc / (rollouts - 1)
    Scz0 = cc.T @ zc / (rollouts - 1)
    for k in range(law.N):
        u = (chi - np.asarray(mu[k])) @ law.K[k].T + np.asarray(law.v[k])
        chi = chi @ A.T + u @ B.T + zeta @ D.T
        zeta = zeta @ Psi.T + rng.standard_normal((rollouts, p)) @ sq_eta.T
    cc, zc = _center(chi), _center(zeta)
    return {
        "Sigma0": symmetrize(Sigma0),
        "Sigma_chizeta0": Scz0,
        "Sigma_N": symmetrize(cc.T @ cc / (rollouts - 1)),
        "Sigma_chizeta_N": cc.T @ zc / (rollouts - 1),
    }
