import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import LinAlgError
from scipy.optimize import minimize_scalar

from nfirs.channel import Variant, bs_irs_channel, user_links
from nfirs.geometry import SystemGeometry
from nfirs.moments import _assemble, build_moment_set, moment_arrays, second_moment, statistics
from nfirs.optimizer import (
    AdmmSettings,
    InfeasibleProblem,
    admm_block,
    admm_duals,
    admm_k,
    admm_s,
    admm_theta,
    admm_z,
    apply_q,
    augmented_lagrangian,
    budget_halfspace,
    build_Q,
    initial_state,
    objective_l1,
    objective_l2,
    power_coefficients,
    power_used,
    project_unit_disk,
    q_coefficients,
    quartic_weights,
    run_algorithm1,
    update_eta,
    update_power,
    update_xi,
)

from conftest import F60, REF_CENTER, REF_USERS, crandn, random_set

SIGMA = 0.3


def prepared(ms, rng, p_max=5.0, seed=0, scramble=True):
    """State with fresh auxiliaries and (optionally) random ADMM iterates."""
    state = initial_state(ms, p_max, seed)
    sig = np.full(ms.K, SIGMA)
    state.xi = update_xi(state, ms, sig)
    state.eta = update_eta(state, ms, sig)
    if scramble:
        for name in ("theta", "z", "k_var", "s"):
            setattr(state, name, crandn(rng, ms.N))
        for name in ("lambda_z", "lambda_k", "lambda_s"):
            setattr(state, name, 0.3 * crandn(rng, ms.N))
    return state


def dense_upsilon(state, ms, z, prime=False):
    W = quartic_weights(state, ms)
    out = np.zeros((ms.N, ms.N), dtype=complex)
    for k in range(ms.K):
        for j in range(ms.K):
            A = ms.A(k, j)
            v = A.conj().T @ z if prime else A @ z
            out += W[k, j] * np.outer(v, v.conj())
    return out


def solve_2x2(mat, rhs):
    (a, b), (c, d) = mat
    det = a * d - b * c
    return np.array([d * rhs[0] - b * rhs[1], a * rhs[1] - c * rhs[0]]) / det


# -- fractional programming -------------------------------------------------


class TestAuxiliaries:
    def test_zero_power_gives_zero_xi(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng, scramble=False)
        state.p[1] = 0.0
        assert update_xi(state, ms, SIGMA)[1] == 0.0

    def test_single_user_xi_is_snr(self, rng):
        ms = random_set(rng, K=1)
        state = prepared(ms, rng, scramble=False)
        first, _ = moment_arrays(ms, state.phases)
        xi = update_xi(state, ms, SIGMA)
        assert xi[0] == pytest.approx(state.p[0] * first[0] ** 2 / SIGMA, rel=1e-12)

    def test_l1_tight_at_xi(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng, scramble=False)
        rate = statistics(ms, state.phases, state.p, SIGMA).sum_rate
        l1 = objective_l1(ms, state.phases, state.p, state.xi, SIGMA)
        assert l1 == pytest.approx(math.log(2) * rate, abs=1e-10)

    def test_l2_tight_at_eta(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng, scramble=False)
        l1 = objective_l1(ms, state.phases, state.p, state.xi, SIGMA)
        l2 = objective_l2(ms, state.phases, state.p, state.xi, state.eta, SIGMA)
        assert l2 == pytest.approx(l1, abs=1e-10)

    def test_surrogates_lower_bound_the_rate(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng, scramble=False)
        rate = math.log(2) * statistics(ms, state.phases, state.p, SIGMA).sum_rate
        for _ in range(5):
            xi = state.xi * rng.uniform(0.2, 3.0, ms.K)
            eta = state.eta * rng.uniform(0.2, 3.0, ms.K)
            assert objective_l1(ms, state.phases, state.p, xi, SIGMA) <= rate + 1e-12
            l1 = objective_l1(ms, state.phases, state.p, state.xi, SIGMA)
            assert objective_l2(ms, state.phases, state.p, state.xi, eta, SIGMA) <= l1 + 1e-12

    def test_zero_signal_gives_zero_eta(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng, scramble=False)
        state.p[0] = 0.0
        state.xi = update_xi(state, ms, SIGMA)
        assert update_eta(state, ms, SIGMA)[0] == 0.0

    def test_eta_homogeneity(self, rng):
        # scaling p and sigma by c scales S and J by c
        ms = random_set(rng)
        state = prepared(ms, rng, scramble=False)
        base = update_eta(state, ms, SIGMA)
        c = 7.5
        state.p = state.p * c
        assert np.allclose(update_xi(state, ms, SIGMA * c), state.xi, rtol=1e-12)
        assert np.allclose(update_eta(state, ms, SIGMA * c), base / math.sqrt(c), rtol=1e-12)

    def test_nonpositive_noise_rejected(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng, scramble=False)
        with pytest.raises((ValueError, ZeroDivisionError)):
            update_xi(state, ms, 0.0)


# -- power allocation -------------------------------------------------------


def surrogate_power_value(c1, c2, p):
    return np.sum(-c1 * p + c2 * np.sqrt(p), axis=-1)


class TestPower:
    def test_coefficients_match_loop(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng, scramble=False)
        first, second = moment_arrays(ms, state.phases)
        c1, c2 = power_coefficients(first, second, state.xi, state.eta)
        for k in range(ms.K):
            cross = sum(
                state.eta[j] ** 2 * second_moment(ms, state.phases, j, k) for j in range(ms.K) if j != k
            )
            assert c1[k] == pytest.approx(state.eta[k] ** 2 * first[k] ** 2 + cross, rel=1e-12)
            assert c2[k] == pytest.approx(2 * state.eta[k] * math.sqrt(1 + state.xi[k]) * first[k], rel=1e-12)

    def test_large_budget_is_interior(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng, p_max=1e6, scramble=False)
        first, second = moment_arrays(ms, state.phases)
        c1, c2 = power_coefficients(first, second, state.xi, state.eta)
        p = update_power(state, ms, SIGMA, 1e6)
        assert np.allclose(p, (c2 / (2 * c1)) ** 2, rtol=1e-12)

    def test_tiny_budget_binds_for_equal_users(self, rng):
        F = crandn(rng, 4, 6)
        los = np.tile(np.exp(2j * np.pi * rng.random(6)), (2, 1))
        ms = _assemble(F, los, [1.0, 1.0], [0.5, 0.5])
        state = prepared(ms, rng, p_max=1.0, scramble=False)
        p_max = 1e-4
        p = update_power(state, ms, SIGMA, p_max)
        assert power_used(ms, state.phases, p) == pytest.approx(p_max, rel=1e-9)

    @pytest.mark.parametrize("p_max", [0.05, 0.5, 50.0])
    def test_two_user_grid_oracle(self, p_max):
        rng = np.random.default_rng(5)
        ms = random_set(rng, M=4, N=6, K=2)
        state = prepared(ms, rng, p_max=p_max, seed=3, scramble=False)
        p = update_power(state, ms, SIGMA, p_max)
        first, second = moment_arrays(ms, state.phases)
        c1, c2 = power_coefficients(first, second, state.xi, state.eta)

        n = 2001
        g0, g1 = np.meshgrid(
            np.linspace(0, p_max / first[0], n), np.linspace(0, p_max / first[1], n), indexing="ij"
        )
        grid = np.stack([g0, g1], axis=-1)
        feasible = grid @ first <= p_max * (1 + 1e-12)
        best = float(np.max(np.where(feasible, surrogate_power_value(c1, c2, grid), -np.inf)))
        value = float(surrogate_power_value(c1, c2, p))
        # no grid point beats the result; the result beats the grid by at most the grid resolution
        assert value >= best - 1e-12 * abs(best)
        assert value - best <= 1e-4 * abs(best)
        assert power_used(ms, state.phases, p) <= p_max * (1 + 1e-9)

    def test_l2_does_not_decrease(self, rng):
        ms = random_set(rng)
        for p_max in (0.01, 1.0, 100.0):
            state = prepared(ms, rng, p_max=p_max, scramble=False)
            before = objective_l2(ms, state.phases, state.p, state.xi, state.eta, SIGMA)
            p = update_power(state, ms, SIGMA, p_max)
            after = objective_l2(ms, state.phases, p, state.xi, state.eta, SIGMA)
            assert after >= before - 1e-12 * abs(before)

    @pytest.mark.parametrize("p_max", [0.0, -1.0])
    def test_nonpositive_budget(self, rng, p_max):
        ms = random_set(rng)
        state = prepared(ms, rng, scramble=False)
        with pytest.raises(InfeasibleProblem):
            update_power(state, ms, SIGMA, p_max)


# -- Q matrix ---------------------------------------------------------------


def loop_Q(state, ms):
    a, b, C = ms.alpha, ms.beta, ms.C
    eta, p, xi = state.eta, state.p, state.xi
    Q = np.zeros((ms.N, ms.N), dtype=complex)
    for k in range(ms.K):
        lin = 2 * eta[k] * a[k] * b[k] * math.sqrt((1 + xi[k]) * p[k])
        lin -= 2 * eta[k] ** 2 * p[k] * a[k] * C[k] * b[k]
        Q -= lin * ms.A(k, k)
        for j in range(ms.K):
            if j == k:
                continue
            # interference of j at k, and of k at j, each carry a D_k term
            Q += eta[k] ** 2 * p[j] * a[k] * a[j] * b[k] * (1 - b[j]) * ms.D(k)
            Q += eta[j] ** 2 * p[k] * a[j] * a[k] * b[k] * (1 - b[j]) * ms.D(k)
    return Q


class TestQ:
    def test_zero_eta(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        state.eta[:] = 0.0
        assert np.all(build_Q(state, ms) == 0)

    def test_pure_los_drops_d_terms(self, rng):
        ms = random_set(rng, betas=[1.0, 1.0, 1.0])
        state = prepared(ms, rng)
        _, coef_b = q_coefficients(state, ms)
        assert np.all(coef_b == 0)
        coef_a, _ = q_coefficients(state, ms)
        expected = sum(coef_a[m] * ms.A(m, m) for m in range(ms.K))
        assert np.allclose(build_Q(state, ms), expected, rtol=0, atol=1e-14)

    def test_loop_oracle(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        Q, ref = build_Q(state, ms), loop_Q(state, ms)
        assert np.max(np.abs(Q - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_hermitian_and_operator_form(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        Q = build_Q(state, ms)
        assert np.allclose(Q, Q.conj().T, atol=1e-13)
        x = crandn(rng, ms.N)
        coef_a, coef_b = q_coefficients(state, ms)
        assert np.allclose(apply_q(ms, coef_a, coef_b, x), Q @ x, atol=1e-12)

    def test_surrogate_decomposition(self, rng):
        # -L2 = theta^H Q theta + quartic(theta) + const, for any theta
        ms = random_set(rng)
        state = prepared(ms, rng)
        Q = build_Q(state, ms)
        W = quartic_weights(state, ms)
        offsets = []
        for _ in range(4):
            th = crandn(rng, ms.N)
            a_forms, _ = ms.forms(th)
            quart = float(np.sum(W * np.abs(a_forms) ** 2))
            neg_l2 = -objective_l2(ms, th, state.p, state.xi, state.eta, SIGMA)
            offsets.append(neg_l2 - float(np.vdot(th, Q @ th).real) - quart)
        assert np.ptp(offsets) <= 1e-10 * max(1.0, abs(offsets[0]))


# -- ADMM blocks ------------------------------------------------------------


def perturbed_not_better(f, x, rng, scale=1e-3, trials=8):
    base = f(x)
    return all(f(x + scale * crandn(rng, x.size)) >= base - 1e-12 * abs(base) for _ in range(trials))


class TestAdmmTheta:
    def test_pure_averaging(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        state.eta[:] = 0.0
        expected = (
            state.z + state.lambda_z + state.k_var + state.lambda_k + state.s + state.lambda_s
        ) / 3
        assert np.allclose(admm_theta(state, ms), expected, rtol=0, atol=1e-15)

    def test_two_element_hand_solve(self, rng):
        ms = random_set(rng, M=3, N=2, K=2)
        state = prepared(ms, rng)
        rho = state.rho_penalty = 0.7
        Q = build_Q(state, ms)
        lhs = dense_upsilon(state, ms, state.z) + 3 * rho * np.eye(2)
        rhs = rho * (
            state.z + state.lambda_z + state.k_var + state.lambda_k + state.s + state.lambda_s
        ) - 0.5 * Q @ state.z
        ref = solve_2x2(lhs, rhs)
        assert np.max(np.abs(admm_theta(state, ms) - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_solve_residual(self, rng):
        ms = random_set(rng, N=10)
        state = prepared(ms, rng)
        theta = admm_theta(state, ms)
        rho = state.rho_penalty
        lhs = dense_upsilon(state, ms, state.z) + 3 * rho * np.eye(ms.N)
        v = rho * (
            state.z + state.lambda_z + state.k_var + state.lambda_k + state.s + state.lambda_s
        ) - 0.5 * build_Q(state, ms) @ state.z
        assert np.linalg.norm(lhs @ theta - v) < 1e-10 * np.linalg.norm(v)

    def test_block_minimiser(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        before = augmented_lagrangian(state, ms)
        state.theta = admm_theta(state, ms)
        assert augmented_lagrangian(state, ms) <= before + 1e-12 * abs(before)

        def lagr(th):
            old, state.theta = state.theta, th
            val = augmented_lagrangian(state, ms)
            state.theta = old
            return val

        assert perturbed_not_better(lagr, state.theta, rng)

    def test_zero_penalty_rejected(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        state.rho_penalty = 0.0
        with pytest.raises(LinAlgError):
            admm_theta(state, ms)


class TestAdmmZ:
    def test_no_curvature_passthrough(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        state.eta[:] = 0.0
        assert np.allclose(admm_z(state, ms), state.theta - state.lambda_z, rtol=0, atol=1e-15)

    def test_two_element_hand_solve(self, rng):
        ms = random_set(rng, M=3, N=2, K=2)
        state = prepared(ms, rng)
        rho = state.rho_penalty = 1.3
        lhs = dense_upsilon(state, ms, state.theta, prime=True) + rho * np.eye(2)
        rhs = rho * (state.theta - state.lambda_z) - 0.5 * build_Q(state, ms).conj().T @ state.theta
        ref = solve_2x2(lhs, rhs)
        assert np.max(np.abs(admm_z(state, ms) - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_block_minimiser(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        before = augmented_lagrangian(state, ms)
        state.z = admm_z(state, ms)
        assert augmented_lagrangian(state, ms) <= before + 1e-12 * abs(before)

        def lagr(z):
            old, state.z = state.z, z
            val = augmented_lagrangian(state, ms)
            state.z = old
            return val

        assert perturbed_not_better(lagr, state.z, rng)


class TestAdmmK:
    def test_interior_entry_unchanged(self):
        x = np.array([0.5 * np.exp(1j * np.pi / 3)])
        assert project_unit_disk(x)[0] == x[0]

    def test_boundary_projection(self):
        out = project_unit_disk(np.array([3 * np.exp(1j * np.pi / 4)]))
        assert out[0] == pytest.approx(np.exp(1j * np.pi / 4), abs=1e-15)

    def test_k_update_uses_theta_minus_dual(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        k = admm_k(state)
        assert np.array_equal(k, project_unit_disk(state.theta - state.lambda_k))
        assert np.max(np.abs(k)) <= 1 + 1e-12

    def test_idempotent(self, rng):
        x = 3 * crandn(rng, 50)
        once = project_unit_disk(x)
        assert np.array_equal(project_unit_disk(once), once)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
    def test_nonexpansive(self, seed, scale):
        r = np.random.default_rng(seed)
        x, y = scale * crandn(r, 16), scale * crandn(r, 16)
        assert np.linalg.norm(project_unit_disk(x) - project_unit_disk(y)) <= np.linalg.norm(x - y) + 1e-12

    def test_block_non_increase(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        before = augmented_lagrangian(state, ms)
        state.k_var = admm_k(state)
        assert augmented_lagrangian(state, ms) <= before + 1e-12 * abs(before)


class TestAdmmS:
    def test_halfspace_matches_dense_form(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        c, b = budget_halfspace(state, ms, 5.0)
        ref = sum(state.p[k] * ms.alpha[k] * ms.beta[k] * ms.A(k, k).conj().T @ state.theta for k in range(ms.K))
        assert np.allclose(c, ref, atol=1e-13)
        assert b == pytest.approx(5.0 - float(state.p @ ms.C))

    def test_feasible_point_passthrough(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        s = admm_s(state, ms, 1e6)
        assert np.array_equal(s, state.theta - state.lambda_s)

    def test_projection_makes_constraint_active(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        c, _ = budget_halfspace(state, ms, 0.0)
        s0 = state.theta - state.lambda_s
        # budget chosen so that s0 is infeasible by a margin
        p_max = float(np.vdot(c, s0).real) + float(state.p @ ms.C) - 1.0
        c, b = budget_halfspace(state, ms, p_max)
        assert np.vdot(c, s0).real > b
        s = admm_s(state, ms, p_max)
        assert np.vdot(c, s).real == pytest.approx(b, abs=1e-10 * max(1.0, abs(b)))

    def test_dense_solver_oracle(self):
        cp = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(8)
        ms = random_set(rng, M=5, N=8, K=3)
        state = prepared(ms, rng)
        c, _ = budget_halfspace(state, ms, 0.0)
        s0 = state.theta - state.lambda_s
        p_max = float(np.vdot(c, s0).real) + float(state.p @ ms.C) - 2.0
        c, b = budget_halfspace(state, ms, p_max)

        var = cp.Variable(ms.N, complex=True)
        prob = cp.Problem(
            cp.Minimize(cp.sum_squares(var - s0)), [cp.real(cp.sum(cp.multiply(np.conj(c), var))) <= b]
        )
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
        assert np.max(np.abs(admm_s(state, ms, p_max) - var.value)) < 1e-6

    def test_structurally_infeasible(self, rng):
        ms = random_set(rng, betas=[0.0, 0.0, 0.0])
        state = prepared(ms, rng)
        with pytest.raises(InfeasibleProblem):
            admm_s(state, ms, 0.5 * float(state.p @ ms.C))

    def test_block_non_increase(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        c, b = budget_halfspace(state, ms, 0.0)
        p_max = float(np.vdot(c, state.s).real) + float(state.p @ ms.C)  # current s feasible
        before = augmented_lagrangian(state, ms)
        state.s = admm_s(state, ms, p_max)
        assert augmented_lagrangian(state, ms) <= before + 1e-12 * abs(before)


class TestDuals:
    def test_consensus_keeps_duals(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        state.z = state.k_var = state.s = state.theta.copy()
        lz, lk, ls = admm_duals(state)
        assert np.array_equal(lz, state.lambda_z)
        assert np.array_equal(lk, state.lambda_k)
        assert np.array_equal(ls, state.lambda_s)

    def test_shift_by_residual(self, rng):
        ms = random_set(rng)
        state = prepared(ms, rng)
        v = crandn(rng, ms.N)
        state.z = state.theta + v
        lz, _, _ = admm_duals(state)
        assert np.allclose(lz - state.lambda_z, v, rtol=0, atol=1e-15)

    @pytest.mark.slow
    def test_reference_consensus_within_500_iterations(self, ref_geom):
        # relative penalty 1: rho equal to the curvature bound of the phase subproblem
        F = bs_irs_channel(ref_geom).F
        ms = build_moment_set(F, user_links(ref_geom, kappas=[10.0] * 4))
        sig = np.full(4, 10 ** (-14.5))
        p_max = 10 ** (-1.5)
        state = initial_state(ms, p_max, seed=1)
        state.rho_relative = 1.0
        state.xi = update_xi(state, ms, sig)
        state.eta = update_eta(state, ms, sig)
        state.p = update_power(state, ms, sig, p_max)
        residual = admm_block(state, ms, p_max, AdmmSettings(inner_iterations=500, inner_tol=1e-4))
        assert residual < 1e-4


# -- outer loop -------------------------------------------------------------


def single_user_setup(variant):
    geom = SystemGeometry(F60, 128, 3.0, 10, 10, 6.0, REF_CENTER, REF_USERS[:1], allow_even=True)
    F = bs_irs_channel(geom, variant).F
    ms = build_moment_set(F, user_links(geom, kappas=[10.0]))
    return ms, np.array([10 ** (-14.5)]), 10 ** (-1.5)


def phase_aligned_oracle(ms, sig, p_max):
    """Golden-section search over phases aligned with a 1-D family of BS combiners."""
    U = np.linalg.svd(ms.F)[0]
    B = ms.F * ms.los[0][None, :]

    def rate(phi):
        u = np.cos(phi) * U[:, 0] + np.sin(phi) * U[:, 1]
        theta = np.exp(-1j * np.angle(u.conj() @ B))
        # one user: the whole budget goes to it
        p = p_max / (ms.C[0] + ms.alpha[0] * ms.beta[0] * np.linalg.norm(B @ theta) ** 2)
        return statistics(ms, theta, np.array([p]), sig).sum_rate

    res = minimize_scalar(lambda x: -rate(x), bracket=(0.0, math.pi / 2), method="golden")
    return -res.fun


class TestAlgorithm1:
    @pytest.mark.xfail(
        strict=True,
        reason="with one user the power step fills the budget, so the phase block cannot raise "
        "the channel gain; progress relies on ADMM leakage and stalls well short of alignment",
    )
    def test_single_user_rank_one_optimum(self):
        ms, sig, p_max = single_user_setup(Variant.FAR_FIELD)
        state = run_algorithm1(ms, sig, p_max, seed=1)
        got = statistics(ms, state.phases, state.p, sig).sum_rate
        oracle = phase_aligned_oracle(ms, sig, p_max)
        assert state.converged
        assert abs(got - oracle) <= 0.01 * oracle

    def test_single_user_near_field_reaches_aligned_baseline(self):
        ms, sig, p_max = single_user_setup(Variant.EXACT)
        state = run_algorithm1(ms, sig, p_max, seed=1)
        got = statistics(ms, state.phases, state.p, sig).sum_rate
        assert got >= 0.99 * phase_aligned_oracle(ms, sig, p_max)

    def test_trace_properties(self, rng):
        ms = random_set(rng, M=6, N=12, K=3)
        sig = np.full(3, 0.05)
        state = run_algorithm1(ms, sig, 2.0, seed=4, max_outer=60)
        trace = np.array(state.objective_trace)
        assert np.all(np.diff(trace) >= -1e-6)
        assert trace[-1] > trace[0]
        assert np.all(np.array(state.power_trace) <= 2.0 * (1 + 1e-9))
        assert np.allclose(np.abs(state.phases), 1.0, rtol=0, atol=1e-15)
        assert power_used(ms, state.phases, state.p) <= 2.0 * (1 + 1e-9)
        if state.converged:
            assert state.residual_trace[-1] < 1e-4

    def test_deterministic_under_seed(self, rng):
        ms = random_set(rng, M=6, N=12, K=3)
        runs = [run_algorithm1(ms, 0.05, 2.0, seed=11, max_outer=30) for _ in range(2)]
        assert runs[0].objective_trace == runs[1].objective_trace
        assert np.array_equal(runs[0].phases, runs[1].phases)
        assert np.array_equal(runs[0].p, runs[1].p)

    def test_budget_exhausted_without_convergence(self, rng):
        ms = random_set(rng, M=6, N=12, K=3)
        state = run_algorithm1(ms, 0.05, 2.0, seed=4, max_outer=1, epsilon=0.0)
        assert not state.converged
        assert "no convergence" in state.warning
        assert len(state.objective_trace) == 2

    @pytest.mark.parametrize("p_max", [0.0, -1.0])
    def test_infeasible_budget(self, rng, p_max):
        ms = random_set(rng)
        with pytest.raises(InfeasibleProblem):
            run_algorithm1(ms, SIGMA, p_max, seed=0)
