"""Model and noise estimation: ordinary, total, and two-stage (instrumental
variable) least squares, plus the residual-based noise model fit."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .representation import DataMatrices, check_persistency, hankel
from .system_sim import Trajectory
from .utils import psd_clip, spectral_radius, symmetrize

logger = logging.getLogger(__name__)

LS = "ls"
TLS = "tls"
IV2SLS = "iv"
METHODS = (LS, TLS, IV2SLS)

PSI_STABILIZE_RADIUS = 0.99


@dataclass
class EstimatedModel:
    """Fitted reduced-state model; C_hat is filled by estimate_C."""

    A_hat: np.ndarray            # r x r
    B_hat: np.ndarray            # r x m
    method: str
    C_hat: Optional[np.ndarray] = None   # p x r

    def __post_init__(self):
        self.A_hat = np.atleast_2d(np.asarray(self.A_hat, dtype=float))
        self.B_hat = np.atleast_2d(np.asarray(self.B_hat, dtype=float))
        if self.C_hat is not None:
            self.C_hat = np.atleast_2d(np.asarray(self.C_hat, dtype=float))
        if not (np.all(np.isfinite(self.A_hat)) and np.all(np.isfinite(self.B_hat))):
            raise ValueError("estimated dynamics contain non-finite entries")

    @property
    def BA(self) -> np.ndarray:
        """The stacked coefficient block [B_hat A_hat]."""
        return np.hstack([self.B_hat, self.A_hat])


@dataclass
class NoiseEstimate:
    """Residual-based noise quantities for the direct covariance formulation."""

    Z_hat: np.ndarray             # p x T output-noise realization
    Xi_hat: np.ndarray            # r x T state-noise realization
    Sigma_zeta_hat: np.ndarray    # p x p
    Sigma_xi_hat: np.ndarray      # r x r
    Psi_hat: np.ndarray           # p x p one-step noise map
    D_hat: np.ndarray             # r x p injection map
    Sigma_chizeta_init: np.ndarray  # r x p initial cross-covariance
    psi_stabilized: bool = False


@dataclass
class InstrumentMatrix:
    """Stacked instrument rows g_k = [u_k', u_{k-1}', ..., u_{k-lags}'].

    Rows are aligned with the regression rows of P starting at row_offset
    (rows before it lack the deepest lag and are dropped from IV fits).
    """

    G: np.ndarray
    lag_count: int
    row_offset: int = 0

    @property
    def count(self) -> int:
        return self.G.shape[1]


def estimate_ls(J: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Ordinary least squares, Y ~ J beta'.

    Args:
        J: (T, q) regressors, full column rank.
        Y: (T, s) observations.

    Returns:
        (s, q) coefficient matrix beta minimizing ||Y - J beta'||_F.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if np.linalg.matrix_rank(J) < J.shape[1]:
        raise ValueError("regressor matrix is rank deficient")
    beta_t, *_ = np.linalg.lstsq(J, Y, rcond=None)
    return beta_t.T


def estimate_tls(J: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Total least squares via the SVD of the augmented matrix [J Y].

    Minimizes the Frobenius norm of the joint correction [dJ dY] subject to
    (Y + dY) = (J + dJ) beta'.

    Args:
        J: (T, q) regressors.
        Y: (T, s) observations.

    Returns:
        (s, q) coefficient matrix.

    Raises:
        ValueError: nongeneric problem (singular trailing block).
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    q = J.shape[1]
    s = Y.shape[1]
    V = np.linalg.svd(np.hstack([J, Y]), full_matrices=False)[2].T
    V12 = V[:q, q:q + s]
    V22 = V[q:q + s, q:q + s]
    if np.linalg.matrix_rank(V22) < s or abs(np.linalg.det(V22)) < 1e-300:
        raise ValueError("TLS nongeneric: trailing singular block not invertible")
    return (-V12 @ np.linalg.inv(V22)).T


def build_instruments(traj: Trajectory, lag_count: int, ell: int,
                      T_len: Optional[int] = None) -> InstrumentMatrix:
    """Instrument rows from the input sequence, aligned with the P columns.

    Regression row j corresponds to time k = ell + j; its instruments are
    u_k, u_{k-1}, ..., u_{k-lag_count}. Rows with k - lag_count < 0 are
    dropped (row_offset).

    Args:
        traj: source trajectory.
        lag_count: number of past-input lags (instrument count (lag_count+1)*m).
        ell: window length used for the data matrices.
        T_len: number of regression rows covered; defaults to the maximum.

    Returns:
        InstrumentMatrix with full-rank G'G verified.
    """
    if lag_count < 0:
        raise ValueError("lag_count must be >= 0")
    K = len(traj)
    T_max = K - ell
    if T_len is None:
        T_len = T_max
    if T_len > T_max:
        raise ValueError(f"T_len={T_len} exceeds available rows {T_max}")
    off = max(0, lag_count - ell)
    if T_len - off < (lag_count + 1) * traj.m:
        raise ValueError("not enough samples for the deepest instrument lag")
    rows = []
    for j in range(off, T_len):
        k = ell + j
        rows.append(np.concatenate([traj.inputs[k - i] for i in range(lag_count + 1)]))
    G = np.asarray(rows)
    gram_rank = np.linalg.matrix_rank(G.T @ G)
    if gram_rank < (lag_count + 1) * traj.m:
        raise ValueError(
            f"instrument Gram matrix rank {gram_rank} < {(lag_count + 1) * traj.m}; "
            "instruments are not linearly independent")
    return InstrumentMatrix(G=G, lag_count=lag_count, row_offset=off)


def default_lag_count(r: int, m: int) -> int:
    """Smallest lag count so that (lag+1)*m >= r + m."""
    return int(np.ceil((r + m) / m)) - 1


def estimate_2sls(J: np.ndarray, Y: np.ndarray, G: InstrumentMatrix) -> np.ndarray:
    """Two-stage least squares with instrument matrix G.

    beta' solves (J' Pg J) beta' = J' Pg Y with Pg the projection onto the
    instrument column space.

    Args:
        J: (T, q) regressors (rows aligned with G after its row_offset).
        Y: (T, s) observations.
        G: instruments.

    Returns:
        (s, q) coefficient matrix.

    Raises:
        ValueError: instrument count below regressor count, or instruments
            insufficiently correlated with the regressors.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Gm = G.G
    if J.shape[0] == Gm.shape[0] + G.row_offset:
        J = J[G.row_offset:]
        Y = Y[G.row_offset:]
    if J.shape[0] != Gm.shape[0]:
        raise ValueError(f"regressor rows {J.shape[0]} do not align with "
                         f"instrument rows {Gm.shape[0]}")
    q = J.shape[1]
    if Gm.shape[1] < q:
        raise ValueError(f"{Gm.shape[1]} instruments < {q} regressors")
    cross = Gm.T @ J / Gm.shape[0]
    if np.linalg.matrix_rank(cross, tol=1e-10 * max(1.0, np.linalg.norm(cross))) < q:
        raise ValueError("instruments insufficiently correlated with regressors")
    GtG = Gm.T @ Gm
    W = Gm.T @ J
    rhs = np.linalg.solve(GtG, np.hstack([W, Gm.T @ Y]))
    PJ = rhs[:, :q]
    PY = rhs[:, q:]
    return np.linalg.solve(W.T @ PJ, W.T @ PY).T


def estimate_dynamics(dm: DataMatrices, method: str = IV2SLS,
                      G: Optional[InstrumentMatrix] = None) -> EstimatedModel:
    """Fit [B_hat A_hat] by regressing the shifted states on P.

    Args:
        dm: data matrices (persistency must hold).
        method: "ls", "tls", or "iv".
        G: instruments (required for "iv").

    Returns:
        EstimatedModel without C_hat.
    """
    rep = check_persistency(dm)
    if not rep.passed:
        raise ValueError(f"persistency check failed: rank {rep.rank} < {rep.required}")
    J = dm.P.T
    Y = dm.X1.T
    if method == LS:
        beta = estimate_ls(J, Y)
    elif method == TLS:
        beta = estimate_tls(J, Y)
    elif method == IV2SLS:
        if G is None:
            raise ValueError("method 'iv' requires an InstrumentMatrix")
        beta = estimate_2sls(J, Y, G)
    else:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    return EstimatedModel(A_hat=beta[:, dm.m:], B_hat=beta[:, :dm.m], method=method)


def estimate_C(dm: DataMatrices, method: str = IV2SLS,
               G: Optional[InstrumentMatrix] = None) -> np.ndarray:
    """Fit the output map by regressing Y0 on X0 (same method choices)."""
    J = dm.X0.T
    Y = dm.Y0.T
    if method == LS:
        return estimate_ls(J, Y)
    if method == TLS:
        return estimate_tls(J, Y)
    if method == IV2SLS:
        if G is None:
            raise ValueError("method 'iv' requires an InstrumentMatrix")
        return estimate_2sls(J, Y, G)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def estimate_noise(dm: DataMatrices, model: EstimatedModel) -> NoiseEstimate:
    """Residual-based noise model fit.

    Residuals Xi = X1 - [B A] P and Z = Y0 - C X0 are re-centered, their
    sample covariances taken, the one-step noise map Psi fitted by TLS on the
    shifted residuals (radially rescaled to 0.99 if unstable), the injection
    map D by OLS of Xi on Z, and the initial cross-covariance from the sample
    moments of (y, x0-state).

    Args:
        dm: data matrices the model was fitted on.
        model: estimated dynamics with C_hat present.

    Returns:
        NoiseEstimate.
    """
    if model.C_hat is None:
        raise ValueError("model.C_hat required; run estimate_C first")
    if dm.T < max(4, 2 * dm.p):
        raise ValueError("T too small for the shifted residual fit")
    Xi = dm.X1 - model.BA @ dm.P
    Z = dm.Y0 - model.C_hat @ dm.X0
    Xi = Xi - Xi.mean(axis=1, keepdims=True)
    Z = Z - Z.mean(axis=1, keepdims=True)
    T = dm.T
    Sigma_zeta = psd_clip(Z @ Z.T / T)
    Sigma_xi = psd_clip(Xi @ Xi.T / T)
    Zrows = Z.T  # (T, p)
    Psi = estimate_tls(hankel(Zrows, 0, 1, T - 1).T, hankel(Zrows, 1, 1, T - 1).T)
    stabilized = False
    rho = spectral_radius(Psi)
    if rho >= 1.0:
        logger.warning("fitted noise map unstable (spectral radius %.3f); "
                       "rescaling to %.2f", rho, PSI_STABILIZE_RADIUS)
        Psi = Psi * (PSI_STABILIZE_RADIUS / rho)
        stabilized = True
    D = estimate_ls(Z.T, Xi.T)
    Scz = (dm.Y0 @ dm.X0.T / T - model.C_hat @ (dm.X0 @ dm.X0.T) / T).T
    return NoiseEstimate(Z_hat=Z, Xi_hat=Xi, Sigma_zeta_hat=Sigma_zeta,
                         Sigma_xi_hat=Sigma_xi, Psi_hat=Psi, D_hat=D,
                         Sigma_chizeta_init=Scz, psi_stabilized=stabilized)


def estimate_noise_psi_ls(dm: DataMatrices, model: EstimatedModel) -> NoiseEstimate:
    """Variant of estimate_noise with the one-step noise map fitted by OLS.

    OLS on the shifted residuals is typically stable without rescaling; kept
    as a configuration escape hatch.
    """
    ne = estimate_noise(dm, model)
    Zrows = ne.Z_hat.T
    T = dm.T
    Psi = estimate_ls(hankel(Zrows, 0, 1, T - 1).T, hankel(Zrows, 1, 1, T - 1).T)
    stabilized = False
    rho = spectral_radius(Psi)
    if rho >= 1.0:
        Psi = Psi * (PSI_STABILIZE_RADIUS / rho)
        stabilized = True
    ne.Psi_hat = Psi
    ne.psi_stabilized = stabilized
    return ne


def instrument_noise_correlation(G: InstrumentMatrix, residuals: np.ndarray) -> float:
    """Max absolute sample cross-covariance between instruments and residuals.

    Diagnostic for the exogeneity assumption; residuals is (d, T) aligned with
    the data columns.
    """
    R = residuals[:, G.row_offset:] if residuals.shape[1] == G.G.shape[0] + G.row_offset \
        else residuals
    if R.shape[1] != G.G.shape[0]:
        raise ValueError("residual columns do not align with instrument rows")
    cross = G.G.T @ R.T / G.G.shape[0]
    return float(np.abs(cross).max())
