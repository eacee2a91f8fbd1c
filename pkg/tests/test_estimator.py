import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clrajo.channel import SystemConfig, draw_realization
from clrajo.estimator import (
    RankConditionError,
    clra_jo,
    clra_ls,
    combiner_projection,
    complexity_estimate,
    estimate_column_space,
    joint_loss,
    joint_optimization,
    ls_coefficients,
    mdl_objective,
    mdl_rank,
    update_D,
    update_T,
)
from clrajo.harness import nmse
from clrajo.numerics import ParameterError, hermitian_eig_desc
from clrajo.protocol import build_schedule, observe
from conftest import crandn
import oracles


def trial(cfg, seed, B_c=6, B_r=1, combiner="scrambled-dft"):
    rng = np.random.default_rng(seed)
    real = draw_realization(rng, cfg)
    obs = observe(real, build_schedule(cfg, B_c, B_r, combiner=combiner), cfg, rng)
    return real, obs


def at_snr(cfg, snr_db):
    return cfg.with_(noise_variance=1.0, transmit_power=10 ** (snr_db / 10))


class TestMDL:
    def test_one_dominant(self):
        lam = np.array([100.0] + [1e-12] * 15)
        assert mdl_rank(lam, 64, 16).rank == 1

    def test_all_equal(self):
        assert mdl_rank(np.full(8, 3.0), 32, 8).rank == 1

    def test_all_zero_degenerate(self):
        res = mdl_rank(np.zeros(8), 32, 8)
        assert res.rank == 1 and res.degenerate

    def test_noiseless_rank_three(self, rng):
        cfg = SystemConfig(bs_shape=(4, 4), ris_shape=(4, 4), rf_chains=4, noise_variance=0.0)
        _, obs = trial(cfg, 11)
        lam = hermitian_eig_desc(obs.M_col @ obs.M_col.conj().T).values
        assert mdl_rank(lam, obs.sample_count, cfg.M).rank == 3

    def test_matches_oracle(self):
        r = np.random.default_rng(4)
        for _ in range(50):
            M = int(r.integers(3, 20))
            S = int(r.integers(2, 80))
            lam = np.sort(r.exponential(size=M) * 10.0 ** r.uniform(-3, 3, size=M))[::-1]
            dim = min(M, S)
            assert mdl_rank(lam, S, M).rank == oracles.mdl(lam, S, dim)

    def test_objective_length(self):
        assert mdl_objective(np.arange(6.0)[::-1] + 1, 10).shape == (5,)

    def test_rejects_bad_input(self):
        with pytest.raises(ParameterError):
            mdl_rank(np.array([1.0, 2.0, 3.0]), 10, 3)
        with pytest.raises(ParameterError):
            mdl_rank(np.array([3.0, 2.0]), 1, 2)


class TestColumnSpace:
    def test_exact_subspace(self, rng):
        F = crandn(rng, 12, 3) @ crandn(rng, 3, 10)
        S = estimate_column_space(F, 3)
        assert np.linalg.norm(F - S @ (S.conj().T @ F)) < 1e-8
        np.testing.assert_allclose(S.conj().T @ S, np.eye(3), atol=1e-10)

    def test_full_rank(self, rng):
        A = crandn(rng, 5, 7)
        S = estimate_column_space(A, 5)
        np.testing.assert_allclose(S @ S.conj().T, np.eye(5), atol=1e-10)

    def test_bad_rank(self, rng):
        with pytest.raises(ParameterError):
            estimate_column_space(crandn(rng, 4, 4), 5)

    def test_more_blocks_better_subspace(self, desk):
        cfg = at_snr(desk, 0.0)
        resid = {}
        for B_c in (2, 4, 8):
            vals = []
            for seed in range(40):
                real, obs = trial(cfg, seed, B_c=B_c)
                S = estimate_column_space(obs.M_col, 3)
                F = real.F / np.linalg.norm(real.F)
                vals.append(np.linalg.norm(F - S @ (S.conj().T @ F)))
            resid[B_c] = np.mean(vals)
        assert resid[2] > resid[4] > resid[8]


class TestLS:
    def test_noiseless_exact(self, desk):
        cfg = desk.with_(noise_variance=0.0)
        real, obs = trial(cfg, 2)
        U = np.linalg.svd(real.F)[0][:, :3]
        T = ls_coefficients(U, obs.M_row[1, 2], obs.row_combiner)
        H = real.H_eff[1, 2]
        assert np.linalg.norm(U @ T - H) < 1e-8 * np.linalg.norm(H)

    def test_square_orthonormal_projection(self, rng):
        # W^H S square unitary: pinv is the conjugate transpose
        Q = np.linalg.qr(crandn(rng, 6, 6))[0]
        S, W = Q[:, :3], Q[:, :3]
        P = combiner_projection(S, W)
        np.testing.assert_allclose(P, np.eye(3), atol=1e-12)
        Y = crandn(rng, 3, 5)
        np.testing.assert_allclose(ls_coefficients(S, Y, W), P.conj().T @ Y, atol=1e-12)

    def test_residual_no_worse_than_truth(self, desk):
        cfg = at_snr(desk, 0.0)
        real, obs = trial(cfg, 3)
        U = np.linalg.svd(real.F)[0][:, :3]
        P = combiner_projection(U, obs.row_combiner)
        Y = obs.M_row[0, 1]
        T_ls = ls_coefficients(U, Y, obs.row_combiner)
        T_true = U.conj().T @ real.H_eff[0, 1]
        assert np.linalg.norm(Y - P @ T_ls) <= np.linalg.norm(Y - P @ T_true)

    def test_rank_condition(self, rng):
        S = np.linalg.qr(crandn(rng, 8, 5))[0]
        with pytest.raises(RankConditionError, match="B_r"):
            ls_coefficients(S, crandn(rng, 4, 3), np.eye(8)[:, :4])

    def test_rank_deficient_projection(self, rng):
        S = np.eye(8)[:, :2]
        W = np.eye(8)[:, 2:6]                     # orthogonal to span(S)
        with pytest.raises(RankConditionError):
            ls_coefficients(S, crandn(rng, 4, 3), W)


def random_pair(r, rows, cols):
    return crandn(r, rows, cols), crandn(r, rows, cols)


class TestUpdates:
    def test_update_D_identity(self, rng):
        T = crandn(rng, 3, 4)
        np.testing.assert_allclose(update_D(T, T)[0], np.ones(4), atol=1e-14)
        np.testing.assert_allclose(update_D(T, 2 * T)[0], 2 * np.ones(4), atol=1e-14)

    def test_update_D_dense_minimizer(self, rng):
        Tp, Tl = random_pair(rng, 3, 4)
        d, _ = update_D(Tp, Tl)
        # brute force: least squares over all N diagonal entries jointly
        A = np.zeros((12, 4), dtype=complex)
        for n in range(4):
            E = np.zeros((3, 4), dtype=complex)
            E[:, n] = Tp[:, n]
            A[:, n] = E.ravel()
        d_ref = np.linalg.lstsq(A, Tl.ravel(), rcond=None)[0]
        np.testing.assert_allclose(d, d_ref, atol=1e-8)

    def test_update_D_kronecker(self):
        r = np.random.default_rng(8)
        for _ in range(50):
            Tp, Tl = random_pair(r, int(r.integers(1, 5)), int(r.integers(1, 7)))
            np.testing.assert_allclose(update_D(Tp, Tl)[0], oracles.update_d_kron(Tp, Tl), atol=1e-8)

    def test_update_D_degenerate_column(self, rng):
        Tp, Tl = random_pair(rng, 3, 4)
        Tp[:, 2] = 0
        d, n = update_D(Tp, Tl)
        assert n == 1 and d[2] == 0

    def test_update_D_perturbation(self, rng):
        T_ls = crandn(rng, 4, 3, 5)
        T = crandn(rng, 3, 5)
        D, _ = update_D(T, T_ls)
        base = joint_loss(T_ls, T, D)
        for i in range(4):
            for n in range(5):
                for delta in (1e-4, -1e-4, 1e-4j, -1e-4j):
                    Dp = D.copy()
                    Dp[i, n] += delta
                    assert joint_loss(T_ls, T, Dp) >= base - 1e-12

    def test_update_T_trivial(self, rng):
        T_ls = crandn(rng, 1, 3, 4)
        np.testing.assert_allclose(update_T(T_ls, np.ones((1, 4))), T_ls[0])
        same = np.repeat(T_ls, 5, axis=0)
        np.testing.assert_allclose(update_T(same, np.ones((5, 4))), T_ls[0], atol=1e-14)

    def test_update_T_stationary(self):
        r = np.random.default_rng(9)
        for _ in range(50):
            P, rank, N = int(r.integers(1, 5)), int(r.integers(1, 4)), int(r.integers(1, 6))
            T_ls = crandn(r, P, rank, N)
            D = crandn(r, P, N)
            D[0] = 1.0
            T = update_T(T_ls, D)
            g = oracles.loss_gradient_fd(T_ls, T, D)
            assert np.max(np.abs(g)) < 1e-6 * max(1.0, oracles.joint_loss(T_ls, T, D))

    def test_update_T_needs_energy(self, rng):
        with pytest.raises(ParameterError):
            update_T(crandn(rng, 2, 3, 4), np.zeros((2, 4)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 4), st.integers(1, 8))
    def test_descent(self, seed, P, rank, N):
        r = np.random.default_rng(seed)
        T_ls = crandn(r, P, rank, N)
        T, D, losses, _ = joint_optimization(T_ls, 8)
        assert losses.shape == (9,)
        # exact fits reach zero loss, so the slack is scaled by the data energy
        slack = 1e-9 * np.sum(np.abs(T_ls) ** 2)
        assert np.all(np.diff(losses) <= slack)
        np.testing.assert_array_equal(D[0], np.ones(N))
        assert losses[-1] == pytest.approx(joint_loss(T_ls, T, D), rel=1e-12, abs=slack)


class TestEstimators:
    @pytest.mark.parametrize("category", [("far", "far"), ("far", "near"), ("near", "near")])
    @pytest.mark.parametrize("combiner", ["scrambled-dft", "dft"])
    def test_noiseless_exact(self, desk, category, combiner):
        cfg = desk.with_(noise_variance=0.0, regime_bsris=category[0], regime_risuser=category[1])
        for seed in range(3):
            real, obs = trial(cfg, seed, combiner=combiner)
            for est in (clra_jo(obs.M_col, obs.M_row, obs.row_combiner), clra_ls(obs.M_col, obs.M_row, obs.row_combiner)):
                assert est.rank_hat == 3
                assert nmse(est.H_eff_hat, real.H_eff) < 1e-12
                for k in range(cfg.K):
                    for l in range(cfg.L):
                        err = np.linalg.norm(est.H_eff_hat[k, l] - real.H_eff[k, l])
                        assert err < 1e-10 * np.linalg.norm(real.H_eff[k, l])

    def test_output_invariants(self, desk):
        real, obs = trial(at_snr(desk, 0.0), 5)
        out = clra_jo(obs.M_col, obs.M_row, obs.row_combiner, t_max=10)
        r = out.rank_hat
        assert out.S_hat.shape == (desk.M, r) and out.T_hat.shape == (r, desk.N)
        assert out.D_hat.shape == (desk.K * desk.L, desk.N)
        np.testing.assert_allclose(out.S_hat.conj().T @ out.S_hat, np.eye(r), atol=1e-10)
        np.testing.assert_array_equal(out.D_hat[0], np.ones(desk.N))
        assert out.loss_trajectory.shape == (11,)
        assert np.all(np.diff(out.loss_trajectory) <= 1e-9 * out.loss_trajectory[0])

    def test_zero_iterations_is_ls(self, desk):
        _, obs = trial(at_snr(desk, 0.0), 6)
        jo = clra_jo(obs.M_col, obs.M_row, obs.row_combiner, t_max=0)
        ls = clra_ls(obs.M_col, obs.M_row, obs.row_combiner)
        np.testing.assert_allclose(jo.H_eff_hat, ls.H_eff_hat, atol=1e-14)
        assert jo.loss_trajectory.shape == (1,)

    def test_shared_first_part(self, desk):
        _, obs = trial(at_snr(desk, 5.0), 7)
        jo = clra_jo(obs.M_col, obs.M_row, obs.row_combiner)
        ls = clra_ls(obs.M_col, obs.M_row, obs.row_combiner)
        assert jo.rank_hat == ls.rank_hat
        np.testing.assert_array_equal(jo.S_hat, ls.S_hat)

    def test_jo_beats_ls_on_average(self, desk):
        cfg = at_snr(desk, 0.0)
        jo, ls = [], []
        for seed in range(40):
            real, obs = trial(cfg, 100 + seed)
            jo.append(nmse(clra_jo(obs.M_col, obs.M_row, obs.row_combiner).H_eff_hat, real.H_eff))
            ls.append(nmse(clra_ls(obs.M_col, obs.M_row, obs.row_combiner).H_eff_hat, real.H_eff))
        assert np.mean(jo) < np.mean(ls)

    def test_rank_clamped(self, desk):
        # forcing a large MDL rank triggers the clamp to N_RF * B_r
        _, obs = trial(at_snr(desk, -30.0), 8)
        out = clra_jo(obs.M_col, obs.M_row, obs.row_combiner)
        assert out.rank_hat <= desk.rf_chains
        if out.rank_mdl > desk.rf_chains:
            assert out.rank_clamped and "rank-clamped" in out.flags

    def test_explicit_rank_clamp(self, desk):
        _, obs = trial(at_snr(desk, 0.0), 9)
        out = clra_ls(obs.M_col, obs.M_row, obs.row_combiner, rank_hat=7)
        assert out.rank_hat == desk.rf_chains and out.rank_clamped

    def test_given_subspace(self, desk):
        cfg = desk.with_(noise_variance=0.0)
        real, obs = trial(cfg, 10)
        S = np.linalg.svd(real.F)[0][:, :3]
        out = clra_jo(None, obs.M_row, obs.row_combiner, S_hat=S)
        assert nmse(out.H_eff_hat, real.H_eff) < 1e-12


class TestComplexity:
    def test_large_array_ls(self):
        assert complexity_estimate(128, 128, 4, 4, 3, 10).delta_ls == 18432

    def test_no_iterations(self):
        rep = complexity_estimate(32, 32, 4, 4, 3, 0)
        assert rep.total == 32**3 + rep.delta_ls

    def test_minimal(self):
        rep = complexity_estimate(1, 1, 1, 1, 1, 1)
        assert (rep.delta_d, rep.delta_t) == (4, 3)

    @given(st.integers(1, 256), st.integers(1, 256), st.integers(1, 16), st.integers(1, 16),
           st.integers(1, 16), st.integers(0, 50))
    def test_oracle(self, M, N, K, L, r, t):
        rep = complexity_estimate(M, N, K, L, r, t)
        assert (rep.delta_ls, rep.delta_d, rep.delta_t, rep.total) == oracles.complexity(M, N, K, L, r, t)

    def test_rejects(self):
        with pytest.raises(ParameterError):
            complexity_estimate(0, 1, 1, 1, 1, 1)
