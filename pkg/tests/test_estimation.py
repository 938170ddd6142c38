import numpy as np
import pytest

from covsteer import (GroundTruthSystem, assemble_data_matrices,
                      build_instruments, build_ground_truth_nonminimal,
                      estimate_2sls, estimate_C, estimate_dynamics, estimate_ls,
                      estimate_noise, estimate_tls, generate_excitation,
                      model_error, simulate_trajectory)
from covsteer.estimation import (EstimatedModel, InstrumentMatrix,
                                 default_lag_count)
from covsteer.pipeline import collect_dataset, fit_model, represent
from covsteer.presets import paper_3state, paper_4state
from covsteer.representation import hankel
from covsteer.utils import spectral_radius


def noise_free(sys):
    return GroundTruthSystem(A=sys.A, B=sys.B, C=sys.C,
                             Sigma_w=np.zeros((sys.n, sys.n)),
                             Sigma_q=np.zeros((sys.p, sys.p)))


class TestLeastSquares:
    def test_identity_selection(self):
        rng = np.random.default_rng(0)
        J = rng.normal(size=(4, 4))
        assert np.allclose(estimate_ls(J, J), np.eye(4), atol=1e-10)

    def test_column_scaling(self):
        rng = np.random.default_rng(1)
        J = rng.normal(size=(50, 3))
        Y = 2.0 * J[:, :1]
        beta = estimate_ls(J, Y)
        assert np.allclose(beta, [[2.0, 0.0, 0.0]], atol=1e-10)

    def test_rank_deficient_raises(self):
        J = np.ones((10, 2))
        with pytest.raises(ValueError, match="rank deficient"):
            estimate_ls(J, np.ones((10, 1)))

    def test_noise_free_recovery(self):
        sys = noise_free(paper_4state())
        traj = collect_dataset(sys, 2, 500, 1.0, seed=0)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=500)
        ngt = build_ground_truth_nonminimal(sys, 2)
        model = estimate_dynamics(dm, method="ls")
        assert model_error(model, np.hstack([ngt.B_z, ngt.A_z])) < 1e-8


class TestTotalLeastSquares:
    def test_matches_ls_on_exact_data(self):
        rng = np.random.default_rng(2)
        J = rng.normal(size=(100, 4))
        beta_true = rng.normal(size=(2, 4))
        Y = J @ beta_true.T
        assert np.allclose(estimate_tls(J, Y), estimate_ls(J, Y), atol=1e-10)

    def test_attenuation_bias_oracle(self):
        # errors-in-variables y = 2x: LS is biased low by sx^2/(sx^2+se^2),
        # TLS (equal noise on both sides) is consistent
        rng = np.random.default_rng(3)
        T = 100000
        x = rng.normal(size=(T, 1))
        ex = 0.5 * rng.normal(size=(T, 1))
        ey = 0.5 * rng.normal(size=(T, 1))
        J = x + ex
        Y = 2.0 * x + ey
        ls = estimate_ls(J, Y).item()
        tls = estimate_tls(J, Y).item()
        attenuated = 2.0 * 1.0 / (1.0 + 0.25)
        assert abs(ls - attenuated) < 0.05
        assert abs(tls - 2.0) < 0.02

    def test_orthogonal_distance_grid_oracle(self):
        # 1-D TLS equals the minimizer of total orthogonal distance
        rng = np.random.default_rng(4)
        J = rng.normal(size=(200, 1))
        Y = 1.3 * J + 0.3 * rng.normal(size=(200, 1))
        tls = estimate_tls(J, Y).item()
        slopes = np.linspace(0.5, 2.5, 4001)
        dists = [np.sum((Y.ravel() - s * J.ravel()) ** 2) / (1 + s * s)
                 for s in slopes]
        assert abs(tls - slopes[int(np.argmin(dists))]) < 2e-3

    def test_tls_residual_never_exceeds_ls(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            J = rng.normal(size=(60, 3))
            Y = J @ rng.normal(size=(3, 2)) + 0.3 * rng.normal(size=(60, 2))
            def orth_resid(beta):
                R = Y - J @ beta.T
                # total orthogonal residual of the combined perturbation
                M = np.linalg.inv(np.eye(2) + beta @ beta.T)
                return float(np.trace(R @ M @ R.T))
            assert orth_resid(estimate_tls(J, Y)) <= orth_resid(estimate_ls(J, Y)) + 1e-9


class TestInstruments:
    def test_lag_zero_equals_inputs(self):
        sys = paper_4state()
        traj = collect_dataset(sys, 2, 50, 1.0, seed=5)
        G = build_instruments(traj, 0, 2, T_len=50)
        assert G.row_offset == 0
        assert np.array_equal(G.G, traj.inputs[2:52])

    def test_full_rank_gram(self):
        sys = paper_4state()
        for seed in range(5):
            traj = collect_dataset(sys, 2, 200, 1.0, seed=seed)
            G = build_instruments(traj, 3, 2, T_len=200)
            assert np.linalg.matrix_rank(G.G.T @ G.G) == 4 * 2

    def test_shift_consistency_with_hankel(self):
        sys = paper_4state()
        traj = collect_dataset(sys, 2, 60, 1.0, seed=6)
        G = build_instruments(traj, 2, 2, T_len=60)
        # row j: [u_{k}, u_{k-1}, u_{k-2}] at k = 2 + j; the reversed stack is
        # a depth-3 Hankel column starting at k-2
        H = hankel(traj.inputs, 0, 3, 60)
        for j in (0, 5, 20):
            expect = np.concatenate([H[4:6, j], H[2:4, j], H[0:2, j]])
            assert np.allclose(G.G[j], expect)

    def test_offset_for_deep_lags(self):
        sys = paper_4state()
        traj = collect_dataset(sys, 2, 100, 1.0, seed=7)
        G = build_instruments(traj, 4, 2, T_len=100)
        assert G.row_offset == 2
        assert G.G.shape == (98, 10)


class Test2SLS:
    def test_reduces_to_ls_with_exogenous_instruments(self):
        rng = np.random.default_rng(8)
        J = rng.normal(size=(300, 3))
        Y = J @ rng.normal(size=(2, 3)).T + 0.1 * rng.normal(size=(300, 2))
        G = InstrumentMatrix(G=J.copy(), lag_count=0)
        assert np.allclose(estimate_2sls(J, Y, G), estimate_ls(J, Y), atol=1e-10)

    def test_endogenous_bias_oracle(self):
        # x = pi z + v, y = beta x + u with u = gamma v + w:
        # LS bias = gamma sv^2 / (pi^2 sz^2 + sv^2); 2SLS via z is consistent
        rng = np.random.default_rng(9)
        T = 100000
        pi, beta, gamma = 1.0, 1.5, 0.8
        z = rng.normal(size=(T, 1))
        v = rng.normal(size=(T, 1))
        w = 0.3 * rng.normal(size=(T, 1))
        x = pi * z + v
        y = beta * x + gamma * v + w
        ls = estimate_ls(x, y).item()
        iv = estimate_2sls(x, y, InstrumentMatrix(G=z, lag_count=0)).item()
        bias = gamma * 1.0 / (pi ** 2 + 1.0)
        assert abs(ls - (beta + bias)) < 0.03
        assert abs(iv - beta) < 0.02

    def test_insufficient_instruments(self):
        rng = np.random.default_rng(10)
        J = rng.normal(size=(100, 3))
        G = InstrumentMatrix(G=rng.normal(size=(100, 2)), lag_count=0)
        with pytest.raises(ValueError, match="instruments"):
            estimate_2sls(J, rng.normal(size=(100, 1)), G)

    def test_uncorrelated_instruments_rejected(self):
        rng = np.random.default_rng(11)
        J = rng.normal(size=(2000, 2))
        # instruments independent of the regressors
        G = InstrumentMatrix(G=1e-8 * rng.normal(size=(2000, 2)), lag_count=0)
        G.G[:, 1] = G.G[:, 0] * (1 + 1e-12)
        with pytest.raises(ValueError):
            estimate_2sls(J, rng.normal(size=(2000, 1)), G)


class TestEstimateDynamics:
    def test_noise_free_all_methods(self):
        sys = noise_free(paper_4state())
        traj = collect_dataset(sys, 2, 500, 1.0, seed=12)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=500)
        ngt = build_ground_truth_nonminimal(sys, 2)
        truth = np.hstack([ngt.B_z, ngt.A_z])
        for method in ("ls", "tls", "iv"):
            G = build_instruments(traj, default_lag_count(8, 2), 2, T_len=500) \
                if method == "iv" else None
            model = estimate_dynamics(dm, method=method, G=G)
            assert model_error(model, truth) < 1e-8, method

    def test_estimate_C_noise_free(self):
        sys = noise_free(paper_4state())
        traj = collect_dataset(sys, 2, 400, 1.0, seed=13)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=400)
        C_hat = estimate_C(dm, method="ls")
        assert np.linalg.norm(C_hat @ dm.X0 - dm.Y0) < 1e-8

    def test_unknown_method(self):
        sys = paper_4state()
        traj = collect_dataset(sys, 2, 120, 1.0, seed=14)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=120)
        with pytest.raises(ValueError, match="unknown method"):
            estimate_dynamics(dm, method="ridge")


class TestEstimateNoise:
    def test_exact_model_noise_free(self):
        sys = noise_free(paper_4state())
        traj = collect_dataset(sys, 2, 300, 1.0, seed=15)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=300)
        ngt = build_ground_truth_nonminimal(sys, 2)
        model = EstimatedModel(A_hat=ngt.A_z, B_hat=ngt.B_z, method="ls",
                               C_hat=ngt.S)
        ne = estimate_noise(dm, model)
        assert np.abs(ne.Z_hat).max() < 1e-9
        assert np.abs(ne.Sigma_zeta_hat).max() < 1e-18
        assert np.abs(ne.Sigma_chizeta_init).max() < 1e-9

    def test_analytic_output_noise_covariance(self):
        # exact model on long noisy data: residual covariance approaches
        # F_w Sw~ F_w' + F_q Sq~ F_q' + Sq with block-diagonal stacks
        sys = paper_4state()
        T = 100000
        traj = collect_dataset(sys, 2, T, 1.0, seed=16)
        dm = assemble_data_matrices(traj, 2, np.eye(8), T_len=T)
        ngt = build_ground_truth_nonminimal(sys, 2)
        model = EstimatedModel(A_hat=ngt.A_z, B_hat=ngt.B_z, method="ls",
                               C_hat=ngt.S)
        ne = estimate_noise(dm, model)
        SwT = np.kron(np.eye(2), sys.Sigma_w)
        SqT = np.kron(np.eye(2), sys.Sigma_q)
        analytic = ngt.F_w @ SwT @ ngt.F_w.T + ngt.F_q @ SqT @ ngt.F_q.T + sys.Sigma_q
        rel = np.linalg.norm(ne.Sigma_zeta_hat - analytic) / np.linalg.norm(analytic)
        assert rel < 0.05

    def test_psi_spectral_radius_below_one(self):
        sys = paper_3state()
        for seed in range(3):
            traj = collect_dataset(sys, 2, 800, 1.0, seed=seed)
            dm = represent(traj, 2, 800, kappa=7, gap_ratio=10.0)
            model, ne, _ = fit_model(dm, traj, "iv", None)
            assert spectral_radius(ne.Psi_hat) < 1.0

    def test_covariances_symmetric_psd(self):
        sys = paper_3state()
        traj = collect_dataset(sys, 2, 500, 1.0, seed=20)
        dm = represent(traj, 2, 500, kappa=7, gap_ratio=10.0)
        model, ne, _ = fit_model(dm, traj, "tls", None)
        for M in (ne.Sigma_zeta_hat, ne.Sigma_xi_hat):
            assert np.linalg.norm(M - M.T) <= 1e-10 * max(1.0, np.linalg.norm(M))
            assert np.linalg.eigvalsh(M).min() >= -1e-12
