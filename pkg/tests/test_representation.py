import numpy as np
import pytest

from covsteer import (GroundTruthSystem, assemble_data_matrices, build_z_sequence,
                      check_persistency, compute_L, generate_excitation, hankel,
                      simulate_trajectory)
from covsteer.estimation import estimate_ls
from covsteer.presets import paper_3state, paper_4state
from covsteer.system_sim import Trajectory, build_ground_truth_nonminimal


def noise_free(sys):
    n, p = sys.n, sys.p
    return GroundTruthSystem(A=sys.A, B=sys.B, C=sys.C,
                             Sigma_w=np.zeros((n, n)), Sigma_q=np.zeros((p, p)))


def collect(sys, T, seed, scale=1.0, ell=2):
    u = generate_excitation(T + ell + 1, sys.m, scale, seed)
    return simulate_trajectory(sys, np.zeros(sys.n), u, seed)


class TestHankel:
    def test_scalar_definition(self):
        H = hankel(np.array([1.0, 2.0, 3.0, 4.0]), 0, 2, 3)
        assert np.array_equal(H, [[1, 2, 3], [2, 3, 4]])

    def test_depth_one_identity(self):
        seq = np.arange(12.0).reshape(6, 2)
        H = hankel(seq, 0, 1, 6)
        assert np.array_equal(H, seq.T)

    def test_vector_single_column(self):
        seq = np.array([[1.0, 2], [3, 4], [5, 6]])
        H = hankel(seq, 1, 2, 1)
        assert np.array_equal(H.ravel(), [3, 4, 5, 6])

    def test_insufficient_length_message(self):
        with pytest.raises(ValueError, match="need 6 samples, have 4"):
            hankel(np.zeros((4, 1)), 1, 3, 3)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_shift_consistency(self, seed):
        rng = np.random.default_rng(seed)
        seq = rng.normal(size=(15, 3))
        full = hankel(seq, 2, 4, 6)
        shifted = hankel(seq, 3, 4, 5)
        assert np.array_equal(full[:, 1:], shifted)


class TestZSequence:
    def test_single_lag(self):
        traj = Trajectory(inputs=[[1.0], [2.0], [3.0]], outputs=[[4.0], [5.0], [6.0]])
        z = build_z_sequence(traj, 1)
        assert np.array_equal(z, [[1, 4], [2, 5], [3, 6]])

    def test_two_lags_scalar(self):
        traj = Trajectory(inputs=[[1.0], [2.0], [3.0]], outputs=[[4.0], [5.0], [6.0]])
        z = build_z_sequence(traj, 2)
        assert np.array_equal(z[0], [2, 1, 5, 4])
        assert np.array_equal(z[1], [3, 2, 6, 5])

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        u, y = rng.normal(size=(10, 2)), rng.normal(size=(10, 1))
        full = build_z_sequence(Trajectory(inputs=u, outputs=y), 2)
        shifted = build_z_sequence(Trajectory(inputs=u[1:], outputs=y[1:]), 2)
        assert np.allclose(full[1:], shifted)

    def test_too_short(self):
        with pytest.raises(ValueError, match="too short"):
            build_z_sequence(Trajectory(inputs=[[1.0]], outputs=[[2.0]]), 2)


class TestComputeL:
    def test_noise_free_rank_law(self):
        # p*ell > n: rank(Z0) = m*ell + n < h and rank([U0;Z0]) = m + m*ell + n
        sys = noise_free(paper_3state())
        traj = collect(sys, 400, seed=0)
        z = build_z_sequence(traj, 2)
        Z0 = hankel(z, 0, 1, 400)
        U0 = hankel(traj.inputs, 2, 1, 400)
        assert np.linalg.matrix_rank(Z0, tol=1e-6) == 2 * 2 + 3
        assert np.linalg.matrix_rank(np.vstack([U0, Z0]), tol=1e-6) == 2 + 4 + 3
        L, sv = compute_L(U0, Z0, ell=2)
        assert L.shape == (7, 8)
        assert np.linalg.matrix_rank(L @ Z0, tol=1e-8) == 7

    def test_full_rank_gives_identity(self):
        # p*ell = n: the window data has full row rank and no reduction applies
        sys = paper_4state()
        traj = collect(sys, 300, seed=1)
        z = build_z_sequence(traj, 2)
        Z0 = hankel(z, 0, 1, 300)
        U0 = hankel(traj.inputs, 2, 1, 300)
        L, sv = compute_L(U0, Z0, ell=2)
        assert np.array_equal(L, np.eye(8))

    def test_duplicated_row(self):
        rng = np.random.default_rng(5)
        base = rng.normal(size=(5, 200))
        Z0 = np.vstack([base, base[2]])
        U0 = rng.normal(size=(1, 200))
        L, sv = compute_L(U0, Z0, ell=1)
        assert L.shape == (5, 6)
        assert np.linalg.matrix_rank(L @ Z0, tol=1e-8) == 5

    def test_no_gap_error(self):
        rng = np.random.default_rng(6)
        # smooth decay into a tiny (numerically deficient) tail, no usable gap
        U, _ = np.linalg.qr(rng.normal(size=(6, 6)))
        V, _ = np.linalg.qr(rng.normal(size=(50, 6)))
        sv = np.array([1.0, 0.9, 0.8, 0.7, 0.6, 1e-9])
        Z0 = U @ np.diag(sv) @ V.T * 10
        with pytest.raises(ValueError, match="kappa"):
            compute_L(rng.normal(size=(3, 50)), Z0, ell=1, gap_ratio=1e12)

    def test_explicit_kappa(self):
        sys = paper_3state()
        traj = collect(sys, 400, seed=2)
        z = build_z_sequence(traj, 2)
        Z0 = hankel(z, 0, 1, 400)
        U0 = hankel(traj.inputs, 2, 1, 400)
        L, sv = compute_L(U0, Z0, kappa=7)
        assert L.shape == (7, 8)


class TestAssembleDataMatrices:
    def test_noise_free_regression_identity(self):
        sys = noise_free(paper_4state())
        traj = collect(sys, 300, seed=3)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=300)
        beta = estimate_ls(dm.P.T, dm.X1.T)
        assert np.linalg.norm(dm.X1 - beta @ dm.P) < 1e-8

    def test_phi_positive_definite(self):
        sys = paper_4state()
        traj = collect(sys, 300, seed=4)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=300)
        assert np.linalg.eigvalsh(dm.Phi).min() > 0

    def test_theta_is_top_rows_of_phi(self):
        sys = paper_3state()
        traj = collect(sys, 200, seed=5)
        z = build_z_sequence(traj, 2)
        L, _ = compute_L(hankel(traj.inputs, 2, 1, 200), hankel(z, 0, 1, 200), kappa=7)
        dm = assemble_data_matrices(traj, 2, L, T_len=200)
        assert np.array_equal(dm.Theta, dm.Phi[:2, :])
        assert np.allclose(dm.Theta, np.hstack([dm.U0 @ dm.U0.T, dm.U0 @ dm.X0.T]))

    def test_z0_z1_alignment(self):
        sys = paper_4state()
        traj = collect(sys, 100, seed=6)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=99)
        assert np.array_equal(dm.Z0[:, 1:], dm.Z1[:, :-1])


class TestPersistency:
    def test_constant_input_fails(self):
        sys = paper_4state()
        u = np.ones((103, 2))
        traj = simulate_trajectory(sys, np.zeros(4), u, seed=0)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=100)
        rep = check_persistency(dm)
        assert not rep.passed
        assert rep.rank < rep.required

    @pytest.mark.parametrize("seed", range(20))
    def test_iid_inputs_pass(self, seed):
        sys = paper_4state()
        traj = collect(sys, 100, seed=seed)  # T = 10 (m + r) = 100
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=100)
        rep = check_persistency(dm)
        assert rep.passed
        assert rep.required == 2 + 8
