"""Hankel matrices, window-state sequences, the SVD-based rank reduction, and
the data matrices consumed by estimation and steering."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .system_sim import Trajectory
from .utils import numerical_rank

logger = logging.getLogger(__name__)

FULL_RANK_RTOL = 1e-8


@dataclass
class DataMatrices:
    """Single-trajectory data matrices for the reduced window state."""

    U0: np.ndarray        # m x T inputs
    Z0: np.ndarray        # h x T window states
    Z1: np.ndarray        # h x T shifted window states
    X0: np.ndarray        # r x T reduced states, = L Z0
    X1: np.ndarray        # r x T shifted reduced states
    Y0: np.ndarray        # p x T outputs
    L: np.ndarray         # r x h reduction
    ell: int
    P: np.ndarray = field(init=False)      # (m+r) x T regressors [U0; X0]
    Phi: np.ndarray = field(init=False)    # (m+r) x (m+r), P P^T
    Theta: np.ndarray = field(init=False)  # m x (m+r), first m rows of Phi

    def __post_init__(self):
        T = self.U0.shape[1]
        for name, M in (("Z0", self.Z0), ("Z1", self.Z1), ("X0", self.X0),
                        ("X1", self.X1), ("Y0", self.Y0)):
            if M.shape[1] != T:
                raise ValueError(f"{name} has {M.shape[1]} columns, expected {T}")
        if np.abs(self.X0 - self.L @ self.Z0).max() > 1e-12 * max(1.0, np.abs(self.Z0).max()):
            raise ValueError("X0 != L Z0")
        if np.abs(self.X1 - self.L @ self.Z1).max() > 1e-12 * max(1.0, np.abs(self.Z1).max()):
            raise ValueError("X1 != L Z1")
        self.P = np.vstack([self.U0, self.X0])
        self.Phi = self.P @ self.P.T
        self.Theta = self.Phi[:self.m, :]

    @property
    def m(self) -> int:
        return self.U0.shape[0]

    @property
    def p(self) -> int:
        return self.Y0.shape[0]

    @property
    def r(self) -> int:
        return self.X0.shape[0]

    @property
    def h(self) -> int:
        return self.Z0.shape[0]

    @property
    def T(self) -> int:
        return self.U0.shape[1]


@dataclass
class PersistencyReport:
    rank: int
    required: int
    condition_number: float
    passed: bool


def hankel(seq: Sequence[np.ndarray], i: int, depth: int, length: int) -> np.ndarray:
    """Block Hankel matrix of a vector sequence.

    Column j stacks seq[i+j], ..., seq[i+j+depth-1].

    Args:
        seq: sequence of d-vectors (or a (K, d) array).
        i: start index.
        depth: window depth (rows = d*depth).
        length: number of columns.

    Returns:
        (d*depth, length) matrix.
    """
    arr = np.atleast_2d(np.asarray(seq, dtype=float))
    if arr.shape[0] == 1 and np.asarray(seq).ndim == 1:
        arr = arr.T
    K, d = arr.shape
    need = i + length + depth - 1
    if need > K:
        raise ValueError(f"sequence too short: need {need} samples, have {K}")
    if length < 1 or depth < 1:
        raise ValueError("depth and length must be >= 1")
    out = np.empty((d * depth, length))
    for j in range(length):
        out[:, j] = arr[i + j:i + j + depth].ravel()
    return out


def build_z_sequence(traj: Trajectory, ell: int) -> np.ndarray:
    """Window states z_k = col(u_{k-1},...,u_{k-ell}, y_{k-1},...,y_{k-ell}).

    Args:
        traj: trajectory with K samples.
        ell: window length.

    Returns:
        (K+1-ell, h) array of z_ell .. z_K, h = ell*(m+p).
    """
    K = len(traj)
    if K < ell + 1:
        raise ValueError(f"trajectory too short: {K} samples, need >= {ell + 1}")
    m, p = traj.m, traj.p
    count = K + 1 - ell
    out = np.empty((count, ell * (m + p)))
    for idx in range(count):
        k = ell + idx
        us = [traj.inputs[k - 1 - i] for i in range(ell)]
        ys = [traj.outputs[k - 1 - i] for i in range(ell)]
        out[idx] = np.concatenate(us + ys)
    return out


def compute_L(U0: np.ndarray, Z0: np.ndarray, kappa: Optional[int] = None,
              gap_ratio: float = 10.0,
              ell: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """SVD-based reduction removing the linearly dependent rows of Z0.

    With Z0 = U1 diag(S1) V1' + noise terms, returns L = diag(1/S1) U1' for the
    kappa leading directions. kappa defaults to the singular-value gap rule
    (smallest r > m*ell with sigma_r/sigma_{r+1} >= gap_ratio). If Z0 already
    has full numerical row rank (or kappa == h), returns the identity.

    Args:
        U0: m x T input data (fixes m for the gap rule).
        Z0: h x T window-state data.
        kappa: explicit reduced dimension, overrides the gap rule.
        gap_ratio: minimum ratio for the gap heuristic.
        ell: window length; sharpens the gap rule's lower bound r > m*ell.

    Returns:
        (L, singular_values): (r x h) reduction and the singular values of Z0.

    Raises:
        ValueError: no singular-value gap found and kappa not given.
    """
    Z0 = np.atleast_2d(np.asarray(Z0, dtype=float))
    h, T = Z0.shape
    if T <= h:
        raise ValueError(f"need T > h, got T={T}, h={h}")
    m = np.atleast_2d(U0).shape[0]
    Uu, sv, _ = np.linalg.svd(Z0, full_matrices=False)
    if kappa is not None:
        if not 1 <= kappa <= h:
            raise ValueError(f"kappa must be in [1, {h}]")
        r = int(kappa)
    elif sv[-1] > FULL_RANK_RTOL * sv[0]:
        return np.eye(h), sv
    else:
        lower = m * ell if ell is not None else 0
        r = None
        for cand in range(max(1, lower + 1), h):
            if sv[cand] <= 1e-300 or sv[cand - 1] / max(sv[cand], 1e-300) >= gap_ratio:
                r = cand
                break
        if r is None:
            raise ValueError(
                "no singular-value gap found; pass an explicit kappa "
                f"(singular values: {np.array2string(sv, precision=3)})")
    if r == h:
        return np.eye(h), sv
    L = np.diag(1.0 / sv[:r]) @ Uu[:, :r].T
    mr_rank = numerical_rank(np.vstack([np.atleast_2d(U0), L @ Z0]), FULL_RANK_RTOL)
    if mr_rank < m + r:
        logger.warning("rank([U0; L Z0]) = %d < m + r = %d; excitation may be "
                       "insufficient for the chosen reduction", mr_rank, m + r)
    return L, sv


def assemble_data_matrices(traj: Trajectory, ell: int, L: np.ndarray,
                           T_len: Optional[int] = None) -> DataMatrices:
    """Build all data matrices from one trajectory.

    Z0 holds z_ell..z_{ell+T-1}, Z1 the shift by one (reusing the final
    sample), U0/Y0 the aligned inputs/outputs, X0/X1 the reduced states.

    Args:
        traj: source trajectory (K samples).
        ell: window length.
        L: r x h reduction.
        T_len: number of data columns; defaults to the maximum K - ell.

    Returns:
        DataMatrices with all invariants established.
    """
    K = len(traj)
    T_max = K - ell
    if T_len is None:
        T_len = T_max
    if T_len < 1 or T_len > T_max:
        raise ValueError(f"T_len={T_len} not in [1, {T_max}] for {K} samples, ell={ell}")
    zseq = build_z_sequence(traj, ell)
    Z0 = hankel(zseq, 0, 1, T_len)
    Z1 = hankel(zseq, 1, 1, T_len)
    U0 = hankel(traj.inputs, ell, 1, T_len)
    Y0 = hankel(traj.outputs, ell, 1, T_len)
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != Z0.shape[0]:
        raise ValueError(f"L has {L.shape[1]} columns, Z0 has {Z0.shape[0]} rows")
    return DataMatrices(U0=U0, Z0=Z0, Z1=Z1, X0=L @ Z0, X1=L @ Z1, Y0=Y0, L=L, ell=ell)


def check_persistency(dm: DataMatrices) -> PersistencyReport:
    """Numerical full-row-rank check of P = [U0; X0] (data-driven rank condition)."""
    sv = np.linalg.svd(dm.P, compute_uv=False)
    rank = int(np.sum(sv > FULL_RANK_RTOL * sv[0])) if sv[0] > 0 else 0
    required = dm.m + dm.r
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    return PersistencyReport(rank=rank, required=required,
                             condition_number=cond, passed=rank == required)
