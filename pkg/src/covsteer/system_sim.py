"""Ground-truth stochastic LTI plant: simulation, excitation, initial-history
sampling, and the exact non-minimal (input-output window) realization used as
an oracle by the data-driven layers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.random import Generator, Philox

from .utils import is_psd, psd_sqrt, symmetrize

# channel ids for the counter-based noise streams
_CH_PROCESS = 0
_CH_MEASUREMENT = 1
_CH_INIT = 2


def noise_stream(seed: int, step: int, channel: int) -> Generator:
    """Counter-based generator keyed by (seed, time index, channel).

    Each (seed, step, channel) triple owns a disjoint Philox counter block, so
    draws are reproducible independent of execution order.
    """
    return Generator(Philox(key=np.uint64(seed & (2**64 - 1)),
                            counter=[0, step, channel, 0]))


def rollout_stream(seed: int, index: int) -> Generator:
    """Per-rollout generator with a child seed derived from (seed, index).

    Stable under changes of the total rollout count.
    """
    child = np.random.SeedSequence((int(seed), int(index))).generate_state(2, np.uint64)
    return Generator(Philox(key=child))


@dataclass
class GroundTruthSystem:
    """True plant x+ = Ax + Bu + w, y = Cx + q with Gaussian white noise."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Sigma_w: np.ndarray
    Sigma_q: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.Sigma_w = np.atleast_2d(np.asarray(self.Sigma_w, dtype=float))
        self.Sigma_q = np.atleast_2d(np.asarray(self.Sigma_q, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape[0] != n:
            raise ValueError(f"B has {self.B.shape[0]} rows, expected {n}")
        if self.C.shape[1] != n:
            raise ValueError(f"C has {self.C.shape[1]} columns, expected {n}")
        p = self.C.shape[0]
        for name, M, d in (("Sigma_w", self.Sigma_w, n), ("Sigma_q", self.Sigma_q, p)):
            if M.shape != (d, d):
                raise ValueError(f"{name} must be {d}x{d}, got {M.shape}")
            if np.linalg.norm(M - M.T) > 1e-12 * max(1.0, np.linalg.norm(M)):
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(symmetrize(M)).min() < -1e-10:
                raise ValueError(f"{name} is not PSD")
        if np.linalg.matrix_rank(observability_matrix(self.A, self.C, n)) < n:
            raise ValueError("(A, C) is not observable")
        ctrb = np.hstack([np.linalg.matrix_power(self.A, k) @ self.B for k in range(n)])
        if np.linalg.matrix_rank(ctrb) < n:
            raise ValueError("(A, B) is not controllable")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]


@dataclass
class NoiseLog:
    """Realized noise of a simulated trajectory: w_k for k=0..K-2, q_k for k=0..K-1."""

    w: np.ndarray
    q: np.ndarray


@dataclass
class Trajectory:
    """Input-output record; rows are time samples."""

    inputs: np.ndarray          # (K, m)
    outputs: np.ndarray         # (K, p)
    states: Optional[np.ndarray] = None      # (K, n), ground truth only
    noise_log: Optional[NoiseLog] = None

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise ValueError("inputs and outputs must have the same number of samples")
        if self.states is not None:
            self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
            if self.states.shape[0] != self.inputs.shape[0]:
                raise ValueError("states length inconsistent with inputs")
        if self.noise_log is not None:
            K = self.inputs.shape[0]
            if self.noise_log.w.shape[0] != K - 1 or self.noise_log.q.shape[0] != K:
                raise ValueError("noise log length inconsistent with trajectory")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def p(self) -> int:
        return self.outputs.shape[1]


@dataclass
class HistoryWindow:
    """The last ell inputs/outputs before time 0, stored oldest-first."""

    inputs: np.ndarray   # (ell, m): u_{-ell} .. u_{-1}
    outputs: np.ndarray  # (ell, p): y_{-ell} .. y_{-1}

    @property
    def ell(self) -> int:
        return self.inputs.shape[0]

    def stack_newest_first(self) -> np.ndarray:
        """col(u_{-1},...,u_{-ell}, y_{-1},...,y_{-ell}) — the window state at k=0."""
        return np.concatenate([self.inputs[::-1].ravel(), self.outputs[::-1].ravel()])


@dataclass
class NonminimalGroundTruth:
    """Exact shift/selector realization of the window state z."""

    A_z: np.ndarray
    B_z: np.ndarray
    D_z: np.ndarray
    S: np.ndarray        # output map: y_k = S z_k + induced noise
    F_w: np.ndarray      # p x (n*ell), acts on stacked past process noise
    F_q: np.ndarray      # p x (p*ell), acts on stacked past measurement noise
    ell: int
    h: int = field(init=False)

    def __post_init__(self):
        self.h = self.A_z.shape[0]


def observability_matrix(A: np.ndarray, C: np.ndarray, ell: int) -> np.ndarray:
    """Stack [C A^{ell-1}; ...; C A; C] (newest block first)."""
    return np.vstack([C @ np.linalg.matrix_power(A, ell - 1 - j) for j in range(ell)])


def observability_index(A: np.ndarray, C: np.ndarray) -> int:
    """Smallest ell with rank([CA^{ell-1}; ...; C]) = n."""
    n = A.shape[0]
    for ell in range(1, n + 1):
        if np.linalg.matrix_rank(observability_matrix(A, C, ell)) == n:
            return ell
    raise ValueError("(A, C) not observable")


def generate_excitation(T: int, m: int, scale: float, seed: int) -> np.ndarray:
    """i.i.d. N(0, scale^2 I_m) input sequence of length T, deterministic in seed.

    Args:
        T: number of samples (>= 1).
        m: input dimension.
        scale: standard deviation per component (> 0).
        seed: stream key.

    Returns:
        (T, m) array.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if m < 1:
        raise ValueError("m must be >= 1")
    if scale <= 0:
        raise ValueError("scale must be positive")
    out = np.empty((T, m))
    for k in range(T):
        out[k] = scale * noise_stream(seed, k, _CH_INIT).standard_normal(m)
    return out


def simulate_trajectory(sys: GroundTruthSystem, x0: np.ndarray,
                        inputs: np.ndarray, seed: int) -> Trajectory:
    """Roll the plant forward under the given inputs, logging states and noise.

    The k-th process/measurement noise draws come from streams keyed by
    (seed, k, channel), so identical seeds give bit-identical trajectories.

    Args:
        sys: ground-truth plant.
        x0: initial state (n,).
        inputs: (K, m) input samples; the trajectory has K samples.
        seed: noise stream key.

    Returns:
        Trajectory with inputs/outputs/states of length K and the noise log.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.size == 0:
        raise ValueError("inputs must be nonempty")
    if inputs.shape[1] != sys.m:
        raise ValueError(f"inputs have dimension {inputs.shape[1]}, system expects {sys.m}")
    x = np.asarray(x0, dtype=float).ravel()
    if x.shape[0] != sys.n:
        raise ValueError(f"x0 has dimension {x.shape[0]}, system expects {sys.n}")
    K = inputs.shape[0]
    sqw = psd_sqrt(sys.Sigma_w)
    sqq = psd_sqrt(sys.Sigma_q)
    xs = np.empty((K, sys.n))
    ys = np.empty((K, sys.p))
    wlog = np.empty((K - 1, sys.n))
    qlog = np.empty((K, sys.p))
    for k in range(K):
        q = sqq @ noise_stream(seed, k, _CH_MEASUREMENT).standard_normal(sys.p)
        xs[k] = x
        ys[k] = sys.C @ x + q
        qlog[k] = q
        if k < K - 1:
            w = sqw @ noise_stream(seed, k, _CH_PROCESS).standard_normal(sys.n)
            wlog[k] = w
            x = sys.A @ x + sys.B @ inputs[k] + w
    return Trajectory(inputs=inputs, outputs=ys, states=xs,
                      noise_log=NoiseLog(w=wlog, q=qlog))


def build_ground_truth_nonminimal(sys: GroundTruthSystem, ell: int) -> NonminimalGroundTruth:
    """Construct the exact window-state realization (A_z, B_z, D_z, S, F_w, F_q).

    Requires ell at least the observability index. The realization satisfies
    z_{k+1} = A_z z_k + B_z u_k exactly on noise-free data, and on noisy data
    y_k - S z_k = F_w wtil_k + F_q qtil_k + q_k with wtil/qtil the newest-first
    stacks of the last ell noise samples.
    """
    n, m, p = sys.n, sys.m, sys.p
    A, B, C = sys.A, sys.B, sys.C
    O = observability_matrix(A, C, ell)
    if np.linalg.matrix_rank(O) < n:
        raise ValueError(f"ell={ell} below observability index of (A, C)")
    Opinv = np.linalg.pinv(O)
    Cx = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(ell)])
    Cw = np.hstack([np.linalg.matrix_power(A, i) for i in range(ell)])
    # block (j, i): effect of u_{k-(i+1)} (resp. w) on y_{k-(j+1)}
    Tu = np.zeros((p * ell, m * ell))
    Tw = np.zeros((p * ell, n * ell))
    for j in range(ell):
        for i in range(j + 1, ell):
            M = C @ np.linalg.matrix_power(A, i - j - 1)
            Tu[j * p:(j + 1) * p, i * m:(i + 1) * m] = M @ B
            Tw[j * p:(j + 1) * p, i * n:(i + 1) * n] = M
    Al = np.linalg.matrix_power(A, ell)
    S = np.hstack([C @ (Cx - Al @ Opinv @ Tu), C @ Al @ Opinv])
    F_w = C @ (Cw - Al @ Opinv @ Tw)
    F_q = -C @ Al @ Opinv
    h = ell * (m + p)
    A_z = np.zeros((h, h))
    for i in range(1, ell):
        A_z[i * m:(i + 1) * m, (i - 1) * m:i * m] = np.eye(m)
    A_z[ell * m:ell * m + p, :] = S
    for i in range(1, ell):
        A_z[ell * m + i * p:ell * m + (i + 1) * p,
            ell * m + (i - 1) * p:ell * m + i * p] = np.eye(p)
    B_z = np.zeros((h, m))
    B_z[:m, :] = np.eye(m)
    D_z = np.zeros((h, p))
    D_z[ell * m:ell * m + p, :] = np.eye(p)
    return NonminimalGroundTruth(A_z=A_z, B_z=B_z, D_z=D_z, S=S,
                                 F_w=F_w, F_q=F_q, ell=ell)


def induced_noise_sequence(traj: Trajectory, ngt: NonminimalGroundTruth) -> np.ndarray:
    """Recompute the induced window noise from the logged plant noise.

    Returns a (p, K-ell) matrix whose column j is the induced noise at time
    ell+j: F_w wtil + F_q qtil + q. Requires the trajectory's noise log.
    """
    if traj.noise_log is None:
        raise ValueError("trajectory has no noise log")
    ell = ngt.ell
    K = len(traj)
    w, q = traj.noise_log.w, traj.noise_log.q
    n = w.shape[1]
    p = q.shape[1]
    count = K - ell
    # newest-first stacks: wtil_k = (w_{k-1}, ..., w_{k-ell})
    wt = np.empty((count, n * ell))
    qt = np.empty((count, p * ell))
    for i in range(ell):
        wt[:, i * n:(i + 1) * n] = w[ell - 1 - i:K - 1 - i]
        qt[:, i * p:(i + 1) * p] = q[ell - 1 - i:K - 1 - i]
    zt = wt @ ngt.F_w.T + qt @ ngt.F_q.T + q[ell:K]
    return zt.T


def lagged_cross_covariance(seq: np.ndarray, lag: int,
                            block: int = 25) -> Tuple[np.ndarray, np.ndarray]:
    """Sample cross-covariance E[s_k s_{k+lag}^T] with batch-means standard errors.

    Args:
        seq: (d, K) sample matrix, columns are time samples.
        lag: nonnegative lag.
        block: batch length for the batch-means error estimate (robust to the
            short-range serial dependence of the sequence).

    Returns:
        (cov, se): (d, d) sample cross-covariance of the centered sequence and
        the entrywise Monte Carlo standard error of its entries.
    """
    s = seq - seq.mean(axis=1, keepdims=True)
    d, K = s.shape
    count = K - lag
    prods = s[:, :count][:, None, :] * s[:, lag:][None, :, :]   # (d, d, count)
    cov = prods.mean(axis=2)
    nb = count // block
    if nb < 2:
        raise ValueError("sequence too short for batch-means error estimate")
    bm = prods[:, :, :nb * block].reshape(d, d, nb, block).mean(axis=3)
    se = bm.std(axis=2, ddof=1) / np.sqrt(nb)
    return cov, se


def initial_state_spread(sys: GroundTruthSystem, target_cov: np.ndarray, ell: int) -> float:
    """Spread lambda for x_{-ell} ~ N(., lambda I) matching the target output
    covariance at k=0 in trace: tr(C Pi0 C' + Sigma_q) = tr(target_cov) where
    Pi0 = lambda A^ell A^ell' + sum_i A^i Sigma_w A^i'. Clipped at 0."""
    A, C = sys.A, sys.C
    Wl = sum(np.linalg.matrix_power(A, i) @ sys.Sigma_w @ np.linalg.matrix_power(A, i).T
             for i in range(ell))
    Al = np.linalg.matrix_power(A, ell)
    denom = np.trace(C @ Al @ Al.T @ C.T)
    num = np.trace(target_cov) - np.trace(C @ Wl @ C.T) - np.trace(sys.Sigma_q)
    if denom <= 0:
        return 0.0
    return max(0.0, float(num / denom))


def history_draw_size(sys: GroundTruthSystem, ell: int) -> int:
    """Standard-normal draws one history window consumes (layout contract)."""
    return sys.n + ell * (sys.p + sys.n)


def _history_batch(sys: GroundTruthSystem, target_mean: np.ndarray, lam: float,
                   ell: int, draws: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Form initial windows from pre-drawn standard normals.

    Layout per row of draws: [x-init (n) | per window step: q (p) then w (n)].
    Returns (u_windows (M, ell, m) ≡ 0, y_windows (M, ell, p) oldest-first,
    x0 (M, n)).
    """
    n, p = sys.n, sys.p
    M = draws.shape[0]
    if draws.shape[1] < history_draw_size(sys, ell):
        raise ValueError("draw block too small for the history layout")
    xbar = np.linalg.pinv(sys.C) @ np.asarray(target_mean, dtype=float).ravel()
    sqw = psd_sqrt(sys.Sigma_w)
    sqq = psd_sqrt(sys.Sigma_q)
    X = xbar + np.sqrt(max(lam, 0.0)) * draws[:, :n]
    pos = n
    yw = np.empty((M, ell, p))
    uw = np.zeros((M, ell, sys.m))
    for j in range(ell):
        yw[:, j] = X @ sys.C.T + draws[:, pos:pos + p] @ sqq.T
        pos += p
        X = X @ sys.A.T + draws[:, pos:pos + n] @ sqw.T
        pos += n
    return uw, yw, X


def sample_initial_history(sys: GroundTruthSystem, target_mean: np.ndarray,
                           target_cov: np.ndarray, ell: int, seed: int,
                           lam: Optional[float] = None) -> Tuple[HistoryWindow, np.ndarray]:
    """Sample an initial input-output window with prescribed output moments.

    Draws x_{-ell} ~ N(C^+ target_mean, lambda I) with lambda matching the
    target output covariance in trace, then simulates ell steps with zero
    inputs. The achieved output covariance matches target_cov only in trace;
    pipelines measure and use the achieved value.

    Args:
        sys: ground-truth plant.
        target_mean: desired output mean at k=0 (p,).
        target_cov: desired output covariance at k=0 (p x p PSD).
        ell: window length (>= 1).
        seed: stream key.
        lam: optional override of the initial-state spread.

    Returns:
        (window, x0): the window (u and y, oldest-first) and the state at k=0.
    """
    target_cov = np.atleast_2d(np.asarray(target_cov, dtype=float))
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if not is_psd(target_cov, tol=1e-8):
        raise ValueError("target_cov must be symmetric PSD")
    if lam is None:
        lam = initial_state_spread(sys, target_cov, ell)
    draws = rollout_stream(seed, 0).standard_normal((1, history_draw_size(sys, ell)))
    uw, yw, X = _history_batch(sys, target_mean, lam, ell, draws)
    return HistoryWindow(inputs=uw[0], outputs=yw[0]), X[0]
