import numpy as np
import pytest

from covsteer import (GroundTruthSystem, build_ground_truth_nonminimal,
                      generate_excitation, induced_noise_sequence,
                      lagged_cross_covariance, observability_index,
                      sample_initial_history, simulate_trajectory)
from covsteer.presets import paper_3state, paper_4state
from covsteer.system_sim import initial_state_spread


def scalar_system(a=0.5, sw=0.0, sq=0.0):
    return GroundTruthSystem(A=[[a]], B=[[1.0]], C=[[1.0]],
                             Sigma_w=[[sw]], Sigma_q=[[sq]])


class TestGroundTruthSystem:
    def test_rejects_asymmetric_noise(self):
        with pytest.raises(ValueError, match="symmetric"):
            GroundTruthSystem(A=np.eye(2), B=np.eye(2), C=np.eye(2),
                              Sigma_w=[[1, 0.1], [0.0, 1]], Sigma_q=np.eye(2))

    def test_rejects_indefinite_noise(self):
        with pytest.raises(ValueError, match="PSD"):
            GroundTruthSystem(A=np.eye(2), B=np.eye(2), C=np.eye(2),
                              Sigma_w=-np.eye(2), Sigma_q=np.eye(2))

    def test_rejects_unobservable(self):
        with pytest.raises(ValueError, match="observable"):
            GroundTruthSystem(A=np.eye(2), B=np.eye(2), C=[[1.0, 0.0]],
                              Sigma_w=np.eye(2), Sigma_q=[[1.0]])

    def test_rejects_uncontrollable(self):
        with pytest.raises(ValueError, match="controllable"):
            GroundTruthSystem(A=[[0.5, 0], [0, 0.3]], B=[[1.0], [0.0]],
                              C=np.eye(2), Sigma_w=np.eye(2), Sigma_q=np.eye(2))

    def test_observability_index_presets(self):
        s4 = paper_4state()
        s3 = paper_3state()
        assert observability_index(s4.A, s4.C) == 2
        assert observability_index(s3.A, s3.C) == 2


class TestSimulateTrajectory:
    def test_zero_dynamics(self):
        sys = GroundTruthSystem(A=np.eye(2), B=np.eye(2), C=np.eye(2),
                                Sigma_w=np.zeros((2, 2)), Sigma_q=np.zeros((2, 2)))
        traj = simulate_trajectory(sys, np.zeros(2), np.zeros((10, 2)), seed=0)
        assert np.allclose(traj.outputs, 0.0)

    def test_scalar_geometric_decay(self):
        traj = simulate_trajectory(scalar_system(), [1.0], np.zeros((6, 1)), seed=0)
        assert np.allclose(traj.outputs.ravel(), 0.5 ** np.arange(6))

    def test_noise_only_variance_matches_lyapunov(self):
        # time-average output variance of the noise-only response against the
        # covariance recursion Pi_{k+1} = A Pi_k A' + Sigma_w
        sys = paper_4state()
        T = 100
        traj = simulate_trajectory(sys, np.zeros(4), np.zeros((T + 1, 2)), seed=7)
        burn = 10
        Pi = np.zeros((4, 4))
        oracle = []
        for k in range(T + 1):
            if k >= burn:
                oracle.append(np.diag(sys.C @ Pi @ sys.C.T + sys.Sigma_q))
            Pi = sys.A @ Pi @ sys.A.T + sys.Sigma_w
        oracle = np.mean(oracle, axis=0)
        emp = traj.outputs[burn:].var(axis=0)
        # ~90 serially correlated samples; conservative effective sample size
        se = oracle * np.sqrt(2.0 / 20.0)
        assert np.all(np.abs(emp - oracle) <= 3 * se)

    def test_determinism_bit_identical(self):
        sys = paper_3state()
        u = generate_excitation(50, 2, 1.0, seed=3)
        t1 = simulate_trajectory(sys, np.zeros(3), u, seed=11)
        t2 = simulate_trajectory(sys, np.zeros(3), u, seed=11)
        assert np.array_equal(t1.outputs, t2.outputs)
        assert np.array_equal(t1.noise_log.w, t2.noise_log.w)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            simulate_trajectory(paper_4state(), np.zeros(3), np.zeros((5, 2)), 0)
        with pytest.raises(ValueError, match="dimension"):
            simulate_trajectory(paper_4state(), np.zeros(4), np.zeros((5, 3)), 0)


class TestGenerateExcitation:
    def test_deterministic(self):
        a = generate_excitation(5, 2, 1.0, seed=9)
        b = generate_excitation(5, 2, 1.0, seed=9)
        assert np.array_equal(a, b)

    def test_sample_mean_clt(self):
        u = generate_excitation(10000, 1, 1.0, seed=1)
        assert np.abs(u.mean(axis=0)).max() < 0.05

    def test_validation(self):
        with pytest.raises(ValueError):
            generate_excitation(0, 2, 1.0, 0)
        with pytest.raises(ValueError):
            generate_excitation(5, 2, -1.0, 0)


class TestNonminimalGroundTruth:
    def test_noise_free_replay(self):
        sys = paper_4state()
        ngt = build_ground_truth_nonminimal(sys, ell=2)
        sys0 = GroundTruthSystem(A=sys.A, B=sys.B, C=sys.C,
                                 Sigma_w=np.zeros((4, 4)), Sigma_q=np.zeros((2, 2)))
        u = generate_excitation(52, 2, 1.0, seed=5)
        traj = simulate_trajectory(sys0, np.array([0.3, -0.2, 0.1, 0.4]), u, seed=5)
        z = np.column_stack([
            np.concatenate([traj.inputs[k - 1], traj.inputs[k - 2],
                            traj.outputs[k - 1], traj.outputs[k - 2]])
            for k in range(2, 52)])
        resid = z[:, 1:] - ngt.A_z @ z[:, :-1] - ngt.B_z @ traj.inputs[2:51].T
        assert np.abs(resid).max() < 1e-10
        yresid = traj.outputs[2:51].T - ngt.S @ z[:, :-1]
        assert np.abs(yresid).max() < 1e-10

    def test_noisy_replay_identity(self):
        sys = paper_4state()
        ngt = build_ground_truth_nonminimal(sys, ell=2)
        u = generate_excitation(60, 2, 1.0, seed=6)
        traj = simulate_trajectory(sys, np.zeros(4), u, seed=6)
        zeta = induced_noise_sequence(traj, ngt)
        z = np.column_stack([
            np.concatenate([traj.inputs[k - 1], traj.inputs[k - 2],
                            traj.outputs[k - 1], traj.outputs[k - 2]])
            for k in range(2, 60)])
        resid = traj.outputs[2:60].T - ngt.S @ z - zeta
        assert np.abs(resid).max() < 1e-10

    def test_identity_output_single_lag(self):
        # C = I, ell = 1: one-step prediction y_k = A y_{k-1} + B u_{k-1}
        A = np.array([[0.4, 0.2], [0.0, 0.3]])
        B = np.array([[1.0], [0.5]])
        sys = GroundTruthSystem(A=A, B=B, C=np.eye(2),
                                Sigma_w=np.zeros((2, 2)), Sigma_q=np.zeros((2, 2)))
        ngt = build_ground_truth_nonminimal(sys, ell=1)
        u = generate_excitation(20, 1, 1.0, seed=2)
        traj = simulate_trajectory(sys, np.array([1.0, -1.0]), u, seed=2)
        for k in range(1, 20):
            z = np.concatenate([traj.inputs[k - 1], traj.outputs[k - 1]])
            pred = ngt.S @ z
            direct = A @ traj.outputs[k - 1] + B @ traj.inputs[k - 1]
            assert np.allclose(pred, traj.outputs[k], atol=1e-10)
            assert np.allclose(pred, direct, atol=1e-10)

    def test_block_structure(self):
        sys = paper_3state()
        ngt = build_ground_truth_nonminimal(sys, ell=2)
        m, p, ell = 2, 2, 2
        h = ell * (m + p)
        assert ngt.B_z.shape == (h, m)
        assert np.array_equal(ngt.B_z[:m], np.eye(m))
        assert not ngt.B_z[m:].any()
        assert np.array_equal(ngt.D_z[ell * m:ell * m + p], np.eye(p))
        assert not np.delete(ngt.D_z, range(ell * m, ell * m + p), axis=0).any()
        assert np.array_equal(ngt.A_z[ell * m:ell * m + p], ngt.S)

    def test_ell_below_observability_index(self):
        with pytest.raises(ValueError, match="observability index"):
            build_ground_truth_nonminimal(paper_4state(), ell=1)


class TestInducedNoiseCorrelation:
    def test_lemma1_lag_structure(self):
        # temporal correlation at lags <= ell-1, statistically zero at ell+1
        sys = paper_3state()
        ell = 2
        ngt = build_ground_truth_nonminimal(sys, ell)
        T = 20000
        traj = simulate_trajectory(sys, np.zeros(3),
                                   generate_excitation(T, 2, 1.0, seed=4), seed=4)
        zeta = induced_noise_sequence(traj, ngt)
        c1, se1 = lagged_cross_covariance(zeta, 1)
        assert np.linalg.norm(c1) > 5 * np.linalg.norm(se1)
        c3, se3 = lagged_cross_covariance(zeta, ell + 1)
        assert np.all(np.abs(c3) <= 4 * se3 + 1e-12)


class TestInitialHistorySampler:
    def test_lambda_zero_when_noise_only(self):
        sys = paper_4state()
        sys0 = GroundTruthSystem(A=sys.A, B=sys.B, C=sys.C,
                                 Sigma_w=np.zeros((4, 4)), Sigma_q=sys.Sigma_q)
        lam = initial_state_spread(sys0, sys0.Sigma_q, ell=2)
        assert lam == 0.0
        w1, x1 = sample_initial_history(sys0, np.zeros(2), sys0.Sigma_q, 2, seed=0)
        w2, x2 = sample_initial_history(sys0, np.zeros(2), sys0.Sigma_q, 2, seed=1)
        # deterministic initial state regardless of seed (only noise varies)
        assert np.allclose(w1.inputs, 0.0)
        assert x1.shape == (4,)

    def test_monte_carlo_contract(self):
        sys = paper_3state()
        target = 2.5 * np.eye(2)
        ys = np.empty((10000, 2))
        for i in range(10000):
            _, x0 = sample_initial_history(sys, np.zeros(2), target, 2, seed=i)
            ys[i] = sys.C @ x0
        # output at k=0 adds measurement noise on top of C x0
        y0 = ys + np.random.default_rng(0).normal(size=(10000, 2)) * 0.1
        assert np.abs(y0.mean(axis=0)).max() < 0.1
        tr = np.trace(np.cov(y0.T))
        assert abs(tr - 5.0) / 5.0 < 0.05

    def test_deterministic(self):
        sys = paper_3state()
        w1, x1 = sample_initial_history(sys, np.zeros(2), 2.5 * np.eye(2), 2, seed=42)
        w2, x2 = sample_initial_history(sys, np.zeros(2), 2.5 * np.eye(2), 2, seed=42)
        assert np.array_equal(w1.outputs, w2.outputs)
        assert np.array_equal(x1, x2)

    def test_rejects_indefinite_target(self):
        with pytest.raises(ValueError, match="PSD"):
            sample_initial_history(paper_3state(), np.zeros(2),
                                   -np.eye(2), 2, seed=0)
