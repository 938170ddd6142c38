"""Mean steering (equality-constrained QP) and covariance steering (relaxed
semidefinite program over the data parameterization), with gain recovery."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import cvxpy as cp
import numpy as np

from .estimation import NoiseEstimate
from .moments import (ControlLaw, MomentSchedule, output_covariance,
                      propagate_covariance_datadriven)
from .representation import DataMatrices
from .utils import is_psd, symmetrize

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
NEAR_OPTIMAL = "near_optimal"
INFEASIBLE = "infeasible"
NUMERICAL_TROUBLE = "numerical_trouble"

TERMINAL_EQUALITY = "equality"
TERMINAL_UPPER_BOUND = "upper_bound"

INITIAL_OUTPUT_MOMENT = "output_moment"   # output-covariance equality, free Sigma_0
INITIAL_STATE_MOMENT = "state_moment"     # Sigma_0 pinned to a supplied matrix


class MeanSteeringInfeasibleError(ValueError):
    """Boundary pair unreachable; carries a rank report of the constraint map."""

    def __init__(self, message: str, rank: int, rows: int):
        super().__init__(message)
        self.rank = rank
        self.rows = rows


@dataclass
class SteeringSpec:
    """Targets and weights for one steering instance."""

    N: int
    mu_y_init: np.ndarray
    mu_y_final: np.ndarray
    Sigma_y_init: np.ndarray
    Sigma_y_final: np.ndarray
    Q_y: np.ndarray
    R: np.ndarray
    y_ref: Optional[np.ndarray] = None        # (>= N, p) output reference
    terminal_mode: str = TERMINAL_UPPER_BOUND

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon must be >= 1")
        self.mu_y_init = np.asarray(self.mu_y_init, dtype=float).ravel()
        self.mu_y_final = np.asarray(self.mu_y_final, dtype=float).ravel()
        self.Sigma_y_init = np.atleast_2d(np.asarray(self.Sigma_y_init, dtype=float))
        self.Sigma_y_final = np.atleast_2d(np.asarray(self.Sigma_y_final, dtype=float))
        self.Q_y = np.atleast_2d(np.asarray(self.Q_y, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if not is_psd(self.Sigma_y_final, tol=1e-8):
            raise ValueError("Sigma_y_final must be PSD")
        # R must be PD for the mean QP (checked there); PSD suffices for the
        # covariance program, whose zero-weight case is a feasibility problem
        if np.linalg.eigvalsh(symmetrize(self.R)).min() < -1e-12:
            raise ValueError("R must be PSD")
        if self.terminal_mode not in (TERMINAL_EQUALITY, TERMINAL_UPPER_BOUND):
            raise ValueError(f"unknown terminal_mode {self.terminal_mode!r}")
        if self.y_ref is not None:
            self.y_ref = np.atleast_2d(np.asarray(self.y_ref, dtype=float))
            if self.y_ref.shape[0] < self.N:
                raise ValueError("y_ref must cover at least N steps")


@dataclass
class SolverConfig:
    """Conic solver settings; the ladder is tried in order until certified."""

    solvers: Tuple[str, ...] = ("CLARABEL", "CLARABEL_LOOSE", "SCS")
    feas_tol: float = 1e-7
    verbose: bool = False
    scs_eps: float = 1e-6
    max_iters: int = 200000


@dataclass
class ConicProgramDescription:
    """Assembled covariance-steering program plus everything needed to map the
    solution back to unscaled coordinates."""

    problem: cp.Problem
    blocks: Dict[str, list]
    constraints: list
    N: int
    r: int
    m: int
    p: int
    terminal_mode: str
    initial_mode: str
    scale: np.ndarray                 # diagonal of the chi rescaling
    T: int
    data: Dict[str, np.ndarray]       # scaled coefficient matrices
    C_hat: np.ndarray
    dm: DataMatrices
    ne: NoiseEstimate
    base_objective: cp.Expression
    lmi_size: int = field(init=False)
    n_lmis: int = field(init=False)

    def __post_init__(self):
        self.lmi_size = self.r + (self.m + self.r) + self.p
        self.n_lmis = self.N


@dataclass
class SteeringSolution:
    """Gains, self-consistent moment schedule, and solver diagnostics."""

    law: ControlLaw
    schedule: MomentSchedule
    solver_status: str
    objective_value: float
    G: List[np.ndarray] = field(default_factory=list)
    U: List[np.ndarray] = field(default_factory=list)
    W: List[np.ndarray] = field(default_factory=list)
    diagnostics: Dict[str, object] = field(default_factory=dict)


def solve_mean_steering(model, spec: SteeringSpec,
                        mu0_mode: Union[str, Tuple[str, np.ndarray]] = "free",
                        ) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Finite-horizon mean steering as one KKT linear system.

    Minimizes sum_k (mu_k - ref_k)' Q_k (mu_k - ref_k) + v_k' R v_k over the
    estimated mean dynamics, with Q_k = C' Q_y C and ref_k the pseudo-inverse
    lift of the output reference, subject to the boundary output means.

    Args:
        model: EstimatedModel with C_hat set.
        spec: steering targets; y_ref defaults to zeros.
        mu0_mode: "free" (initial state constrained through the output map) or
            ("fixed", mu0) pinning the initial mean.

    Returns:
        (mu, v): N+1 state means and N feedforward inputs.

    Raises:
        MeanSteeringInfeasibleError: boundary pair unreachable in N steps.
    """
    if model.C_hat is None:
        raise ValueError("model.C_hat required for output boundary constraints")
    if np.linalg.eigvalsh(symmetrize(spec.R)).min() <= 0:
        raise ValueError("mean steering requires a positive definite R")
    A, B, C = model.A_hat, model.B_hat, model.C_hat
    r_dim = A.shape[0]
    m = B.shape[1]
    p = C.shape[0]
    N = spec.N
    yref = spec.y_ref if spec.y_ref is not None else np.zeros((N, p))
    Qk = C.T @ spec.Q_y @ C
    Cpinv = np.linalg.pinv(C)
    fixed_mu0 = None
    if isinstance(mu0_mode, tuple):
        if mu0_mode[0] != "fixed":
            raise ValueError(f"unknown mu0_mode {mu0_mode!r}")
        fixed_mu0 = np.asarray(mu0_mode[1], dtype=float).ravel()
    elif mu0_mode != "free":
        raise ValueError(f"unknown mu0_mode {mu0_mode!r}")
    if fixed_mu0 is None and np.linalg.matrix_rank(C) < p:
        raise ValueError("free mu0 mode requires a full-row-rank output map")

    nv = (N + 1) * r_dim + N * m
    H = np.zeros((nv, nv))
    g = np.zeros(nv)
    for k in range(N):
        H[k * r_dim:(k + 1) * r_dim, k * r_dim:(k + 1) * r_dim] = 2 * Qk
        g[k * r_dim:(k + 1) * r_dim] = -2 * Qk @ (Cpinv @ yref[k])
        i0 = (N + 1) * r_dim + k * m
        H[i0:i0 + m, i0:i0 + m] = 2 * spec.R
    n_init = r_dim if fixed_mu0 is not None else p
    ncon = N * r_dim + n_init + p
    Con = np.zeros((ncon, nv))
    b = np.zeros(ncon)
    for k in range(N):
        Con[k * r_dim:(k + 1) * r_dim, (k + 1) * r_dim:(k + 2) * r_dim] = -np.eye(r_dim)
        Con[k * r_dim:(k + 1) * r_dim, k * r_dim:(k + 1) * r_dim] = A
        i0 = (N + 1) * r_dim + k * m
        Con[k * r_dim:(k + 1) * r_dim, i0:i0 + m] = B
    row = N * r_dim
    if fixed_mu0 is not None:
        Con[row:row + r_dim, :r_dim] = np.eye(r_dim)
        b[row:row + r_dim] = fixed_mu0
    else:
        Con[row:row + p, :r_dim] = C
        b[row:row + p] = spec.mu_y_init
    Con[row + n_init:, N * r_dim:(N + 1) * r_dim] = C
    b[row + n_init:] = spec.mu_y_final

    KKT = np.block([[H, Con.T], [Con, np.zeros((ncon, ncon))]])
    rhs = np.concatenate([-g, b])
    sol, *_ = np.linalg.lstsq(KKT, rhs, rcond=None)
    x = sol[:nv]
    scale = max(1.0, float(np.linalg.norm(b)))
    con_resid = float(np.abs(Con @ x - b).max())
    if con_resid > 1e-6 * scale:
        rank = np.linalg.matrix_rank(Con)
        raise MeanSteeringInfeasibleError(
            f"boundary pair unreachable: constraint residual {con_resid:.2e}; "
            f"constraint map rank {rank} of {ncon} rows", rank=rank, rows=ncon)
    kkt_resid = float(np.linalg.norm(KKT @ sol - rhs) / max(1.0, np.linalg.norm(rhs)))
    if kkt_resid > 1e-8:
        logger.warning("mean steering KKT residual %.2e above 1e-8", kkt_resid)
    mu = [x[k * r_dim:(k + 1) * r_dim] for k in range(N + 1)]
    v = [x[(N + 1) * r_dim + k * m:(N + 1) * r_dim + (k + 1) * m] for k in range(N)]
    return mu, v


def _chi_rescaling(dm: DataMatrices) -> np.ndarray:
    """Diagonal rescaling of the reduced state so X0 rows have energy T."""
    norms = np.linalg.norm(dm.X0, axis=1)
    if np.any(norms <= 0):
        raise ValueError("X0 has a zero row; persistency is violated")
    return np.sqrt(dm.T) / norms


def assemble_covariance_sdp(dm: DataMatrices, ne: NoiseEstimate,
                            C_hat: np.ndarray, spec: SteeringSpec,
                            initial_mode: str = INITIAL_OUTPUT_MOMENT,
                            Sigma0_fixed: Optional[np.ndarray] = None,
                            reg_slack: float = 1e-4,
                            floor: float = 1e-3,
                            reg_state: float = 1e-6) -> ConicProgramDescription:
    """Build the relaxed covariance-steering program.

    The recursion and the consistency equalities of the data parameterization
    are satisfied by construction: the free variables per step are
    (K_k Sigma_k, K_k Sigma_chizeta_k, Y_k), from which U_k and W_k are affine
    substitutions through the inverse data Gram matrix, and each next-step
    covariance is the substituted recursion. One joint-covariance LMI of size
    r+(m+r)+p is posed per step. Everything is assembled in internally
    rescaled state coordinates so that the coefficient blocks are O(1).

    Args:
        dm: data matrices.
        ne: noise estimate.
        C_hat: output map estimate.
        spec: targets/weights; terminal equality or Loewner upper bound.
        initial_mode: "output_moment" (initial output-covariance equality,
            free initial state covariance) or "state_moment" (initial state
            covariance pinned to Sigma0_fixed plus the PSD floor ridge).
        Sigma0_fixed: r x r measured initial covariance for "state_moment".
        reg_slack: trace regularization weight on the slack blocks.
        floor: PSD floor on the state covariances (scaled coordinates).
        reg_state: trace regularization on the free initial covariance in
            output_moment mode (its output-invisible directions are otherwise
            unbounded).

    Returns:
        ConicProgramDescription ready for solve_covariance_sdp.
    """
    if not is_psd(spec.Sigma_y_init, tol=1e-8):
        raise ValueError("Sigma_y_init must be PSD")
    if initial_mode not in (INITIAL_OUTPUT_MOMENT, INITIAL_STATE_MOMENT):
        raise ValueError(f"unknown initial_mode {initial_mode!r}")
    if initial_mode == INITIAL_STATE_MOMENT and Sigma0_fixed is None:
        raise ValueError("state_moment mode requires Sigma0_fixed")
    C_hat = np.atleast_2d(np.asarray(C_hat, dtype=float))
    r, m, p, T, N = dm.r, dm.m, dm.p, dm.T, spec.N
    if C_hat.shape != (p, r):
        raise ValueError(f"C_hat must be {p}x{r}, got {C_hat.shape}")
    if ne.Sigma_chizeta_init.shape != (r, p):
        raise ValueError("Sigma_chizeta_init has wrong shape")

    d = _chi_rescaling(dm)                     # chi_tilde = diag(d) chi
    X0s = dm.X0 * d[:, None]
    X1s = dm.X1 * d[:, None]
    Ds = ne.D_hat * d[:, None]
    Chs = C_hat / d[None, :]
    Sczs = ne.Sigma_chizeta_init * d[:, None]
    Ps = np.vstack([dm.U0, X0s])
    F = (X1s - Ds @ ne.Z_hat) @ Ps.T / T
    Phin = Ps @ Ps.T / T
    Phin_inv = np.linalg.inv(Phin)
    Thn = dm.U0 @ Ps.T / T
    Sz = ne.Sigma_zeta_hat
    Psi = ne.Psi_hat
    DSD = Ds @ Sz @ Ds.T
    DS = Ds @ Sz
    Qcov = Chs.T @ spec.Q_y @ Chs

    Lam = [cp.Variable((m, r), name=f"Lam{k}") for k in range(N)]
    Om = [cp.Variable((m, p), name=f"Om{k}") for k in range(N)]
    Yv = [cp.Variable((m + r, m + r), symmetric=True, name=f"Y{k}") for k in range(N)]
    cons: list = []
    if initial_mode == INITIAL_STATE_MOMENT:
        S0 = symmetrize(np.asarray(Sigma0_fixed, dtype=float))
        S0s = (d[:, None] * S0 * d[None, :]) + floor * np.eye(r)
        Sig: list = [cp.Constant(S0s)]
    else:
        Sig0 = cp.Variable((r, r), symmetric=True, name="Sigma0")
        Sig = [Sig0]
        cons += [Chs @ Sig0 @ Chs.T + Chs @ Sczs + Sczs.T @ Chs.T + Sz
                 == spec.Sigma_y_init,
                 Sig0 >> floor * np.eye(r)]
    Sxz: list = [cp.Constant(Sczs)]
    Ub: list = []
    Wb: list = []
    for k in range(N):
        Uk = Phin_inv @ cp.vstack([Lam[k], Sig[k]])
        Wk = Phin_inv @ cp.vstack([Om[k], Sxz[k]])
        Ub.append(Uk)
        Wb.append(Wk)
        Sig.append(F @ Yv[k] @ F.T + F @ Wk @ Ds.T + Ds @ Wk.T @ F.T + DSD)
        Sxz.append(F @ Wk @ Psi.T + DS @ Psi.T)
        cons.append(cp.bmat([[Sig[k], Uk.T, Sxz[k]],
                             [Uk, Yv[k], Wk],
                             [Sxz[k].T, Wk.T, Sz]]) >> 0)
        if k > 0:
            cons.append(Sig[k] >> floor * np.eye(r))
    SyN = Chs @ Sig[N] @ Chs.T + Chs @ Sxz[N] + Sxz[N].T @ Chs.T + Sz
    cons.append(Sig[N] >> floor * np.eye(r))
    # terminal joint-consistency: (Sigma_N, Sigma_chizeta_N, Sigma_zeta) must
    # be a valid second moment, otherwise the terminal output covariance can
    # be faked through an inconsistent cross block
    cons.append(cp.bmat([[Sig[N], Sxz[N]], [Sxz[N].T, Sz]]) >> 0)
    if spec.terminal_mode == TERMINAL_EQUALITY:
        cons.append(SyN == spec.Sigma_y_final)
    else:
        cons.append(SyN << spec.Sigma_y_final)
    base = sum(cp.trace(Qcov @ Sig[k]) + cp.trace(spec.R @ Thn @ Yv[k] @ Thn.T)
               for k in range(N))
    reg = reg_slack * sum(cp.trace(Yv[k]) for k in range(N))
    if initial_mode == INITIAL_OUTPUT_MOMENT and reg_state > 0:
        reg = reg + reg_state * cp.trace(Sig[0])
    problem = cp.Problem(cp.Minimize(base + reg), cons)
    blocks = {"Sigma": Sig, "Sigma_chizeta": Sxz, "U": Ub, "W": Wb, "Y": Yv,
              "KSigma": Lam, "KSigma_chizeta": Om}
    data = {"F": F, "Phin": Phin, "Phin_inv": Phin_inv, "Thn": Thn,
            "Ds": Ds, "Chs": Chs, "Sz": Sz, "Psi": Psi, "Sczs": Sczs}
    return ConicProgramDescription(problem=problem, blocks=blocks, constraints=cons,
                                   N=N, r=r, m=m, p=p,
                                   terminal_mode=spec.terminal_mode,
                                   initial_mode=initial_mode, scale=d, T=T,
                                   data=data, C_hat=C_hat, dm=dm, ne=ne,
                                   base_objective=base)


def _solve_with_ladder(problem: cp.Problem, cfg: SolverConfig) -> str:
    """Try the solver ladder; return the cvxpy status of the last attempt."""
    last = "solver_error"
    for name in cfg.solvers:
        try:
            if name == "CLARABEL":
                problem.solve(solver=cp.CLARABEL, verbose=cfg.verbose,
                              tol_gap_abs=1e-7, tol_gap_rel=1e-7,
                              tol_feas=cfg.feas_tol,
                              reduced_tol_gap_abs=1e-5, reduced_tol_gap_rel=1e-5,
                              reduced_tol_feas=1e-6)
            elif name == "CLARABEL_LOOSE":
                problem.solve(solver=cp.CLARABEL, verbose=cfg.verbose,
                              tol_gap_abs=1e-5, tol_gap_rel=1e-5,
                              tol_feas=cfg.feas_tol, max_iter=500)
            elif name == "SCS":
                problem.solve(solver=cp.SCS, verbose=cfg.verbose,
                              eps=cfg.scs_eps, max_iters=cfg.max_iters)
            else:
                problem.solve(solver=name, verbose=cfg.verbose)
        except (cp.error.SolverError, cp.error.DCPError) as exc:
            logger.warning("solver %s failed: %s", name, exc)
            last = "solver_error"
            continue
        last = problem.status
        if problem.status == "optimal":
            return last
        if problem.status in ("infeasible", "unbounded"):
            return last
        logger.info("solver %s returned %s; trying next in ladder", name, problem.status)
    return last


def solve_covariance_sdp(prog: ConicProgramDescription,
                         solver_cfg: Optional[SolverConfig] = None) -> SteeringSolution:
    """Solve the assembled program and map the solution to unscaled blocks.

    The returned schedule is the exact data-driven propagation of the
    recovered gains (self-consistent with the returned law); the raw solver
    blocks, slack-gap traces, and constraint residuals are kept in
    diagnostics.

    Args:
        prog: assembled program.
        solver_cfg: solver ladder settings.

    Returns:
        SteeringSolution; solver_status in {optimal, near_optimal, infeasible,
        numerical_trouble}.
    """
    cfg = solver_cfg or SolverConfig()
    raw_status = _solve_with_ladder(prog.problem, cfg)
    if raw_status in ("infeasible", "infeasible_inaccurate"):
        return SteeringSolution(law=ControlLaw(K=[], v=[]),
                                schedule=MomentSchedule(Sigma=[], Sigma_chizeta=[]),
                                solver_status=INFEASIBLE,
                                objective_value=float("nan"),
                                diagnostics={"cvxpy_status": raw_status})
    if raw_status not in ("optimal", "optimal_inaccurate"):
        return SteeringSolution(law=ControlLaw(K=[], v=[]),
                                schedule=MomentSchedule(Sigma=[], Sigma_chizeta=[]),
                                solver_status=NUMERICAL_TROUBLE,
                                objective_value=float("nan"),
                                diagnostics={"cvxpy_status": raw_status})
    status = OPTIMAL if raw_status == "optimal" else NEAR_OPTIMAL

    d = prog.scale
    N, r, m = prog.N, prog.r, prog.m
    dinv = 1.0 / d
    Sig_s = [np.asarray(S.value if hasattr(S, "value") else S) for S in prog.blocks["Sigma"]]
    Sxz_s = [np.asarray(S.value if hasattr(S, "value") else S)
             for S in prog.blocks["Sigma_chizeta"]]
    # gains: K_scaled = Lam Sigma^{-1}; unscale by the diagonal rescaling
    K_list = []
    G_list = []
    gap_eigs = []
    for k in range(N):
        Lam = np.asarray(prog.blocks["KSigma"][k].value)
        Ks = Lam @ np.linalg.inv(symmetrize(Sig_s[k]))
        K = Ks * d[None, :]
        K_list.append(K)
        G = np.linalg.solve(prog.dm.Phi, np.vstack([K, np.eye(r)]))
        G_list.append(G)
        Ysol = np.asarray(prog.blocks["Y"][k].value)
        Gs_scaled = prog.data["Phin_inv"] @ np.vstack([Ks, np.eye(r)])
        gap = Ysol - Gs_scaled @ Sig_s[k] @ Gs_scaled.T
        gap_eigs.append(np.linalg.eigvalsh(symmetrize(gap)))
    # unscaled solver blocks for diagnostics
    Sig_raw = [dinv[:, None] * S * dinv[None, :] for S in Sig_s]
    Sxz_raw = [dinv[:, None] * S for S in Sxz_s]
    U_list = [G_list[k] @ Sig_raw[k] for k in range(N)]
    W_list = [G_list[k] @ Sxz_raw[k] for k in range(N)]
    # self-consistent schedule: exact propagation of the recovered gains;
    # eigenvalue dust from loose solves is clipped up to 1e-6
    schedule_dd = propagate_covariance_datadriven(
        prog.dm, prog.ne, G_list, Sig_raw[0], prog.ne.Sigma_chizeta_init,
        clip_dust=1e-6)
    Sy = [output_covariance(prog.C_hat, schedule_dd.Sigma[k],
                            schedule_dd.Sigma_chizeta[k], prog.ne.Sigma_zeta_hat)
          for k in range(N + 1)]
    schedule = MomentSchedule(Sigma=schedule_dd.Sigma,
                              Sigma_chizeta=schedule_dd.Sigma_chizeta,
                              Sigma_y=Sy)
    law = ControlLaw(K=K_list, v=[np.zeros(m) for _ in range(N)])
    obj = float(prog.base_objective.value)
    # Loewner comparison of the solver's blocks against the gain propagation
    loewner = [float(np.linalg.eigvalsh(symmetrize(Sig_raw[k] - schedule.Sigma[k])).min())
               for k in range(N + 1)]
    diagnostics = {
        "cvxpy_status": raw_status,
        "objective_with_reg": float(prog.problem.value),
        "gap_eigs": gap_eigs,
        "gap_trace": [float(np.clip(e, 0, None).sum()) for e in gap_eigs],
        "gap_min_eig": float(min(e.min() for e in gap_eigs)),
        "sdp_Sigma": Sig_raw,
        "sdp_Sigma_chizeta": Sxz_raw,
        "sdp_vs_propagated_min_eig": min(loewner),
        "scale": d,
    }
    return SteeringSolution(law=law, schedule=schedule, solver_status=status,
                            objective_value=obj, G=G_list, U=U_list, W=W_list,
                            diagnostics=diagnostics)


def recover_gains(U_seq: Sequence[np.ndarray], Sigma_seq: Sequence[np.ndarray],
                  dm: DataMatrices, jitter: bool = True) -> List[np.ndarray]:
    """Recover feedback gains from (U_k, Sigma_k) solution blocks.

    G_k = U_k Sigma_k^{-1}, K_k = Theta G_k; verifies the bottom block of
    Phi G_k against the identity.

    Args:
        U_seq: (m+r) x r blocks.
        Sigma_seq: r x r covariance blocks (invertible).
        dm: data matrices supplying Theta and the bottom Gram rows.
        jitter: add 1e-9 I before inversion when the minimum eigenvalue is
            below 1e-9 (otherwise raise).

    Returns:
        List of m x r gains.
    """
    bottom = dm.Phi[dm.m:, :]
    out = []
    for k, (U, S) in enumerate(zip(U_seq, Sigma_seq)):
        S = symmetrize(np.asarray(S, dtype=float))
        lmin = float(np.linalg.eigvalsh(S).min())
        if lmin <= 1e-9:
            if not jitter:
                raise ValueError(
                    f"Sigma_{k} nearly singular (min eigenvalue {lmin:.2e}); "
                    "enable jitter regularization")
            logger.warning("Sigma_%d min eigenvalue %.2e; adding 1e-9 jitter", k, lmin)
            S = S + 1e-9 * np.eye(S.shape[0])
        G = np.asarray(U, dtype=float) @ np.linalg.inv(S)
        dev = np.abs(bottom @ G - np.eye(dm.r)).max()
        if dev > 1e-6:
            raise ValueError(f"recovered G_{k} violates the parameterization "
                             f"identity (deviation {dev:.2e} > 1e-6)")
        out.append(dm.Theta @ G)
    return out
