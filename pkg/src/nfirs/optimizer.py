"""Joint phase-shift and power optimisation of the approximate ergodic sum-rate.

Each outer iteration

1. refreshes the fractional-programming auxiliaries ``xi`` (Lagrangian
   dual transform) and ``eta`` (quadratic transform),
2. updates the powers by cyclic coordinate maximisation with the
   closed-form per-user solution,
3. runs consensus ADMM on the relaxed phase problem with copies ``z``
   (bilinear quartic term), ``k`` (unit-disk projection) and ``s``
   (power budget, an affine halfspace once ``theta`` is fixed),
4. projects the phases back to unit modulus.

The outer iterate is only replaced when the projected candidate does not
lower the approximate sum-rate (after scaling the powers back into the
budget if needed), which keeps the objective trace monotone. The ADMM
iterates are warm-started across outer iterations.

``L1`` and ``L2`` use the natural logarithm: that is the base for which
``xi = S/J`` is the exact maximiser, so at the closed-form auxiliaries
``L2 = L1 = ln(2) * approx_sum_rate``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import brentq

from .moments import MomentSet, moment_arrays, statistics

log = logging.getLogger(__name__)

POWER_SWEEP_TOL = 1e-8
POWER_MAX_SWEEPS = 50
JITTER = 1e-12
DISK_SLACK = 1e-12


class InfeasibleProblem(ValueError):
    """Raised when the power budget admits no feasible point."""


@dataclass
class OptimizerState:
    p: np.ndarray
    phases: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    k_var: np.ndarray
    s: np.ndarray
    lambda_z: np.ndarray
    lambda_k: np.ndarray
    lambda_s: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    rho_penalty: float = 1.0
    rho_relative: float = 1.0
    objective_trace: list = field(default_factory=list)
    power_trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    accepted_trace: list = field(default_factory=list)
    converged: bool = False
    warning: str | None = None

    @property
    def admm_residual(self) -> float:
        return max(
            float(np.linalg.norm(self.z - self.theta)),
            float(np.linalg.norm(self.k_var - self.theta)),
            float(np.linalg.norm(self.s - self.theta)),
        )


@dataclass(frozen=True)
class AdmmSettings:
    rho: float = 0.001
    inner_iterations: int = 50
    inner_tol: float = 1e-6
    balance_every: int = 10
    balance_ratio: float = 10.0
    # rho is taken relative to the curvature of the phase subproblem
    relative_rho: bool = True
    # outer-level penalty adaptation: x reject_growth after a rejected
    # candidate, / accept_shrink after an accepted one (never below rho)
    reject_growth: float = 4.0
    accept_shrink: float = 2.0


def initial_state(ms: MomentSet, p_max: float, seed=None, rho: float = 1.0) -> OptimizerState:
    """Random unit-modulus phases and an equal split of half the budget."""
    if not p_max > 0:
        raise InfeasibleProblem("P_max must be positive")
    rng = np.random.default_rng(seed)
    theta = np.exp(2j * np.pi * rng.random(ms.N))
    first, _ = moment_arrays(ms, theta)
    p = 0.5 * p_max / (ms.K * first)
    zeros = np.zeros(ms.N, dtype=complex)
    return OptimizerState(
        p=p,
        phases=theta.copy(),
        theta=theta.copy(),
        z=theta.copy(),
        k_var=theta.copy(),
        s=theta.copy(),
        lambda_z=zeros.copy(),
        lambda_k=zeros.copy(),
        lambda_s=zeros.copy(),
        xi=np.zeros(ms.K),
        eta=np.zeros(ms.K),
        rho_penalty=rho,
    )


# -- fractional programming -------------------------------------------------


def update_xi(state: OptimizerState, ms: MomentSet, sigmas) -> np.ndarray:
    st = statistics(ms, state.phases, state.p, sigmas)
    if np.any(st.interference <= 0):
        raise ZeroDivisionError("interference-plus-noise must be positive")
    return st.signal / st.interference


def update_eta(state: OptimizerState, ms: MomentSet, sigmas) -> np.ndarray:
    st = statistics(ms, state.phases, state.p, sigmas)
    total = st.signal + st.interference
    if np.any(total <= 0):
        raise ZeroDivisionError("S_k + J_k must be positive")
    return np.sqrt((1.0 + state.xi) * st.signal) / total


def objective_l1(ms, theta, p, xi, sigmas) -> float:
    st = statistics(ms, theta, p, sigmas)
    S, J = st.signal, st.interference
    return float(np.sum(np.log1p(xi) - xi + (1.0 + xi) * S / (S + J)))


def objective_l2(ms, theta, p, xi, eta, sigmas) -> float:
    st = statistics(ms, theta, p, sigmas)
    S, J = st.signal, st.interference
    quad = 2.0 * eta * np.sqrt((1.0 + xi) * S) - eta**2 * (J + S)
    return float(np.sum(np.log1p(xi) - xi + quad))


# -- power allocation -------------------------------------------------------


def power_coefficients(first, second, xi, eta) -> tuple[np.ndarray, np.ndarray]:
    """Per-user ``(c1, c2)`` of the concave objective ``-c1 p + c2 sqrt(p)``."""
    eta2 = eta**2
    c1 = eta2 * first**2 + second.T @ eta2  # second is zero on the diagonal
    c2 = 2.0 * eta * np.sqrt(1.0 + xi) * np.abs(first)
    return c1, c2


def update_power(state: OptimizerState, ms: MomentSet, sigmas, p_max: float) -> np.ndarray:
    """Cyclic coordinate maximisation of ``L2`` over ``p`` in natural user order."""
    if not p_max > 0:
        raise InfeasibleProblem("P_max must be positive")
    first, second = moment_arrays(ms, state.phases)
    c1, c2 = power_coefficients(first, second, state.xi, state.eta)
    if np.any(c1 <= 0):
        raise ZeroDivisionError("c1 must be positive")
    p = state.p.copy()
    unconstrained = (c2 / (2.0 * c1)) ** 2
    for _ in range(POWER_MAX_SWEEPS):
        change = 0.0
        for k in range(ms.K):
            others = float(np.dot(p, first) - p[k] * first[k])
            cap = max(0.0, (p_max - others) / first[k])
            new = min(cap, unconstrained[k])
            change = max(change, abs(new - p[k]))
            p[k] = new
        if change < POWER_SWEEP_TOL * max(1.0, float(np.max(p))):
            break
    if np.dot(p, first) >= p_max * (1.0 - 1e-12):
        # coordinate moves stall on the budget face; solve the block exactly
        p = _budget_face_power(c1, c2, first, p_max)
    return p


def _budget_face_power(c1, c2, first, p_max) -> np.ndarray:
    """Maximiser of ``sum(-c1 p + c2 sqrt(p))`` with ``first @ p = p_max``.

    ``p_k(mu) = (c2_k / (2 (c1_k + mu first_k)))^2`` is decreasing in the
    budget multiplier ``mu >= 0``, so the active multiplier is a 1-D root.
    """
    def spend(mu):
        return float(np.dot(first, (c2 / (2.0 * (c1 + mu * first))) ** 2)) - p_max

    if spend(0.0) <= 0:
        return (c2 / (2.0 * c1)) ** 2
    hi = 1.0
    while spend(hi) > 0:
        hi *= 2.0
    mu = brentq(spend, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    p = (c2 / (2.0 * (c1 + mu * first))) ** 2
    return p * min(1.0, p_max / float(np.dot(first, p)))


def power_used(ms: MomentSet, theta: np.ndarray, p: np.ndarray) -> float:
    first, _ = moment_arrays(ms, theta)
    return float(np.dot(p, first))


# -- phase subproblem -------------------------------------------------------


def quartic_weights(state: OptimizerState, ms: MomentSet) -> np.ndarray:
    """``c[k, j] = eta_k^2 p_j a_k a_j b_k b_j``."""
    ab = ms.alpha * ms.beta
    return np.outer(state.eta**2 * ab, state.p * ab)


def q_coefficients(state: OptimizerState, ms: MomentSet) -> tuple[np.ndarray, np.ndarray]:
    """``Q = sum_m a_m A_mm + b_m D_m``; returns ``(a, b)``."""
    a_, b_, C = ms.alpha, ms.beta, ms.C
    eta, p, xi = state.eta, state.p, state.xi
    coef_a = -(
        2.0 * eta * a_ * b_ * np.sqrt((1.0 + xi) * p) - 2.0 * eta**2 * p * a_ * C * b_
    )
    nlos = a_ * (1.0 - b_)
    coef_b = np.empty(ms.K)
    for m in range(ms.K):
        rest = np.arange(ms.K) != m
        coef_b[m] = a_[m] * b_[m] * (
            eta[m] ** 2 * np.sum(p[rest] * nlos[rest]) + p[m] * np.sum(eta[rest] ** 2 * nlos[rest])
        )
    return coef_a, coef_b


def apply_q(ms: MomentSet, coef_a, coef_b, x: np.ndarray) -> np.ndarray:
    out = np.zeros(ms.N, dtype=complex)
    for m in range(ms.K):
        u = ms.F @ (ms.los[m] * x)
        back = coef_a[m] * u + coef_b[m] * (ms.FFH @ u)
        out += ms.los[m].conj() * (ms.F.conj().T @ back)
    return out


def build_Q(state: OptimizerState, ms: MomentSet) -> np.ndarray:
    coef_a, coef_b = q_coefficients(state, ms)
    Q = np.zeros((ms.N, ms.N), dtype=complex)
    for m in range(ms.K):
        if coef_a[m]:
            Q += coef_a[m] * ms.A(m, m)
        if coef_b[m]:
            Q += coef_b[m] * ms.D(m)
    return Q


def _gram_images(ms: MomentSet, x: np.ndarray) -> np.ndarray:
    """Rows ``F^H F (gbar_j * x)``, shape ``(K, N)``."""
    return (ms.los_images(x)) @ ms.F.conj()


def _low_rank_solve(U: np.ndarray, shift: float, v: np.ndarray) -> np.ndarray:
    """Solve ``(U U^H + shift I) x = v`` through the small capacitance matrix."""
    if not shift > 0:
        raise LinAlgError("penalty must be positive for a positive definite system")
    if U.shape[1] == 0:
        return v / shift
    cap = U.conj().T @ U + shift * np.eye(U.shape[1])
    try:
        fac = cho_factor(cap)
    except LinAlgError:
        fac = cho_factor(cap + JITTER * np.trace(cap).real * np.eye(U.shape[1]))
    return (v - U @ cho_solve(fac, U.conj().T @ v)) / shift


def _quartic_factor(weights: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Stack ``sqrt(c_kj) * col_kj`` as columns, skipping zero weights."""
    K = weights.shape[0]
    picked = [
        math.sqrt(weights[k, j]) * cols[k][j]
        for k in range(K)
        for j in range(K)
        if weights[k, j] > 0
    ]
    if not picked:
        return np.zeros((cols.shape[-1], 0), dtype=complex)
    return np.column_stack(picked)


def upsilon_factor(state: OptimizerState, ms: MomentSet, z: np.ndarray) -> np.ndarray:
    """``U`` with ``Upsilon(z) = U U^H``; column ``(k, j)`` is ``sqrt(c_kj) A_kj z``."""
    Y = _gram_images(ms, z)  # Y[j] = F^H F (gbar_j * z)
    cols = ms.los.conj()[:, None, :] * Y[None, :, :]  # cols[k, j] = A_kj z
    return _quartic_factor(quartic_weights(state, ms), cols)


def upsilon_prime_factor(state: OptimizerState, ms: MomentSet, theta: np.ndarray) -> np.ndarray:
    """``U'`` with ``Upsilon'(theta) = U' U'^H``; column ``(k, j)`` is ``A_kj^H theta``."""
    Y = _gram_images(ms, theta)  # Y[k] = F^H F (gbar_k * theta)
    cols = ms.los.conj()[None, :, :] * Y[:, None, :]  # cols[k, j] = A_jk theta
    return _quartic_factor(quartic_weights(state, ms), cols)


def admm_theta(state: OptimizerState, ms: MomentSet) -> np.ndarray:
    rho = state.rho_penalty
    coef_a, coef_b = q_coefficients(state, ms)
    v = rho * (
        state.z + state.lambda_z + state.k_var + state.lambda_k + state.s + state.lambda_s
    ) - 0.5 * apply_q(ms, coef_a, coef_b, state.z)
    return _low_rank_solve(upsilon_factor(state, ms, state.z), 3.0 * rho, v)


def admm_z(state: OptimizerState, ms: MomentSet) -> np.ndarray:
    rho = state.rho_penalty
    coef_a, coef_b = q_coefficients(state, ms)
    # Q is Hermitian, so Q^H theta = Q theta
    v = rho * (state.theta - state.lambda_z) - 0.5 * apply_q(ms, coef_a, coef_b, state.theta)
    return _low_rank_solve(upsilon_prime_factor(state, ms, state.theta), rho, v)


def project_unit_disk(x: np.ndarray) -> np.ndarray:
    # entries within DISK_SLACK of the circle are kept, so the map is idempotent
    mag = np.abs(x)
    return np.where(mag <= 1.0 + DISK_SLACK, x, x / np.where(mag == 0, 1.0, mag))


def admm_k(state: OptimizerState) -> np.ndarray:
    return project_unit_disk(state.theta - state.lambda_k)


def budget_halfspace(state: OptimizerState, ms: MomentSet, p_max: float):
    """``(c, b)`` with the s-constraint written as ``Re(c^H s) <= b``."""
    w = state.p * ms.alpha * ms.beta
    Y = _gram_images(ms, state.theta)
    c = np.sum((w[:, None] * ms.los.conj()) * Y, axis=0)  # sum_k w_k A_kk theta
    b = p_max - float(np.dot(state.p, ms.C))
    return c, b


def admm_s(state: OptimizerState, ms: MomentSet, p_max: float) -> np.ndarray:
    """Euclidean projection of ``theta - lambda_s`` onto the budget halfspace.

    The complex-valued budget expression is read through its real part,
    which equals the true average power at consensus ``s = theta``.
    """
    c, b = budget_halfspace(state, ms, p_max)
    s0 = state.theta - state.lambda_s
    cc = float(np.vdot(c, c).real)
    if cc == 0.0:
        if b < 0:
            raise InfeasibleProblem("budget below the NLoS floor with no phase dependence")
        return s0
    excess = float(np.vdot(c, s0).real) - b
    if excess <= 0:
        return s0
    return s0 - (excess / cc) * c


def admm_duals(state: OptimizerState):
    return (
        state.lambda_z + (state.z - state.theta),
        state.lambda_k + (state.k_var - state.theta),
        state.lambda_s + (state.s - state.theta),
    )


def augmented_lagrangian(state: OptimizerState, ms: MomentSet) -> float:
    coef_a, coef_b = q_coefficients(state, ms)
    rho = state.rho_penalty
    bil = float(np.vdot(state.theta, apply_q(ms, coef_a, coef_b, state.z)).real)
    W = quartic_weights(state, ms)
    left = ms.los_images(state.theta)
    right = ms.los_images(state.z)
    quart = float(np.sum(W * np.abs(left.conj() @ right.T) ** 2))
    pen = sum(
        float(np.linalg.norm(x - state.theta + lam) ** 2)
        for x, lam in (
            (state.z, state.lambda_z),
            (state.k_var, state.lambda_k),
            (state.s, state.lambda_s),
        )
    )
    return bil + quart + rho * pen


def curvature_scale(state: OptimizerState, ms: MomentSet) -> float:
    """Upper bound on the spectral norms of ``Q`` and ``Upsilon(theta)``.

    Channel gains put both many orders of magnitude below one, so an
    absolute penalty would swamp the objective and freeze the phases.
    """
    gram_norm = float(np.linalg.eigvalsh(ms.FFH)[-1])
    coef_a, coef_b = q_coefficients(state, ms)
    q_norm = float(np.sum(np.abs(coef_a)) * gram_norm + np.sum(np.abs(coef_b)) * gram_norm**2)
    U = upsilon_factor(state, ms, state.theta)
    return q_norm + float(np.sum(np.abs(U) ** 2))


def _rescale_penalty(state: OptimizerState, rho: float) -> None:
    if rho > 0 and rho != state.rho_penalty:
        ratio = state.rho_penalty / rho
        state.lambda_z *= ratio
        state.lambda_k *= ratio
        state.lambda_s *= ratio
        state.rho_penalty = rho


def admm_block(state: OptimizerState, ms: MomentSet, p_max: float, settings: AdmmSettings) -> float:
    """Run the inner ADMM loop in place; returns the final consensus residual."""
    if settings.relative_rho:
        _rescale_penalty(state, state.rho_relative * curvature_scale(state, ms))
    residual = state.admm_residual
    for it in range(1, settings.inner_iterations + 1):
        state.theta = admm_theta(state, ms)
        old = np.concatenate([state.z, state.k_var, state.s])
        state.z = admm_z(state, ms)
        state.k_var = admm_k(state)
        state.s = admm_s(state, ms, p_max)
        state.lambda_z, state.lambda_k, state.lambda_s = admm_duals(state)
        residual = state.admm_residual
        if residual < settings.inner_tol and it > 1:
            break
        if it % settings.balance_every == 0:
            new = np.concatenate([state.z, state.k_var, state.s])
            dual_res = state.rho_penalty * float(np.linalg.norm(new - old))
            scale = 1.0
            if residual > settings.balance_ratio * dual_res:
                scale = 2.0
            elif dual_res > settings.balance_ratio * residual:
                scale = 0.5
            if scale != 1.0:
                state.rho_penalty *= scale
                # scaled duals shrink when the penalty grows
                state.lambda_z /= scale
                state.lambda_k /= scale
                state.lambda_s /= scale
    return residual


# -- outer loop -------------------------------------------------------------


def unit_modulus(x: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.angle(x))


def _fit_budget(ms, theta, p, p_max):
    used = power_used(ms, theta, p)
    if used > p_max:
        p = p * (p_max / used)
    return p


def _restart_admm(state: OptimizerState) -> None:
    for name in ("theta", "z", "k_var", "s"):
        setattr(state, name, state.phases.copy())
    for name in ("lambda_z", "lambda_k", "lambda_s"):
        setattr(state, name, np.zeros_like(state.phases))


def run_algorithm1(
    ms: MomentSet,
    sigmas,
    p_max: float,
    epsilon: float = 1e-4,
    max_outer: int = 200,
    seed=None,
    settings: AdmmSettings | None = None,
    residual_tol: float = 1e-4,
    state: OptimizerState | None = None,
) -> OptimizerState:
    """Alternating FP / power / ADMM optimisation.

    Stops once an accepted phase update improves the approximate sum-rate
    by less than ``epsilon`` with the ADMM consensus residual below
    ``residual_tol``. The relative penalty grows after a rejected candidate
    or a stall without consensus, and shrinks back towards ``settings.rho``
    after a productive step. Returns the state with ``converged=False`` and
    a ``warning`` if ``max_outer`` is hit.
    """
    settings = settings or AdmmSettings()
    sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), (ms.K,))
    if state is None:
        state = initial_state(ms, p_max, seed, settings.rho)
        state.rho_relative = settings.rho
    state.p = _fit_budget(ms, state.phases, state.p, p_max)
    current = statistics(ms, state.phases, state.p, sigmas).sum_rate
    state.objective_trace.append(current)
    state.power_trace.append(power_used(ms, state.phases, state.p))
    state.residual_trace.append(state.admm_residual)
    state.accepted_trace.append(True)

    for outer in range(1, max_outer + 1):
        previous = current
        state.xi = update_xi(state, ms, sigmas)
        state.eta = update_eta(state, ms, sigmas)
        state.p = update_power(state, ms, sigmas, p_max)
        after_power = statistics(ms, state.phases, state.p, sigmas).sum_rate

        residual = admm_block(state, ms, p_max, settings)
        candidate = unit_modulus(state.theta)
        cand_p = _fit_budget(ms, candidate, state.p, p_max)
        cand_rate = statistics(ms, candidate, cand_p, sigmas).sum_rate
        accepted = cand_rate >= after_power
        if accepted:
            state.phases, state.p, current = candidate, cand_p, cand_rate
        else:
            current = after_power

        state.objective_trace.append(current)
        state.power_trace.append(power_used(ms, state.phases, state.p))
        state.residual_trace.append(residual)
        state.accepted_trace.append(bool(accepted))
        log.debug(
            "outer %d rate %.6f accepted=%s residual %.2e rho %.3g",
            outer, current, accepted, residual, state.rho_penalty,
        )
        if accepted and current - previous < epsilon and residual < residual_tol:
            state.converged = True
            break
        if not accepted:
            # shorter phase step, restarted from the incumbent
            state.rho_relative *= settings.reject_growth
            _restart_admm(state)
        elif current - previous < epsilon:
            # stalled without consensus: tighten the penalty
            state.rho_relative *= settings.reject_growth
        else:
            state.rho_relative = max(settings.rho, state.rho_relative / settings.accept_shrink)

    if not state.converged:
        state.warning = f"no convergence within {max_outer} outer iterations"
        log.warning(state.warning)
    state.phases = unit_modulus(state.phases)
    return state
