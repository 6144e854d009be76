"""Direction computation and the aggressive / stabilization line searches.

Both step kinds solve the same factorized system with different right-hand
sides.  A direction targets removing the fraction ``1 - gamma`` of the
current KKT residual: ``gamma = 1`` holds ``mu`` and the primal residual
fixed (stabilization), ``gamma < 1`` drives everything down together
(aggressive).  Between refactorizations the matrix data comes from the
snapshot where M was assembled while the right-hand side tracks the
current iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .iterate import (
    Iterate,
    SolverOptions,
    StepRejected,
    check_interior,
    inf_norm,
    make_iterate,
    merit_kkt,
    merit_phi,
    primal_trial,
    sigma,
)
from .linalg import FactorizedSystem, solve_shifted
from .problem import EvaluationError, NlpProblem

MAX_GUARD_RETRIES = 10


@dataclass
class Direction:
    """Primal-dual direction with the target reduction and rhs that made it."""

    dx: np.ndarray
    ds: np.ndarray
    dy: np.ndarray
    gamma: float
    b_d: np.ndarray
    b_p: np.ndarray
    b_c: np.ndarray


@dataclass
class Filter:
    """(phi, kkt) pairs of every accepted iterate at the current residual
    level.  Stabilization steps keep ``mu`` (hence the residual ``mu*w``)
    fixed, so the level is simply "since the last aggressive acceptance";
    the driver resets the filter whenever ``mu`` changes."""

    entries: list = field(default_factory=list)

    def reset(self, phi: float, kkt: float) -> None:
        self.entries = [(phi, kkt)]

    def add(self, phi: float, kkt: float) -> None:
        self.entries.append((phi, kkt))

    def accepts(self, phi_plus: float, kkt_plus: float, alpha_p: float,
                beta_kkt: float) -> bool:
        """KKT-progress acceptance against every recorded entry."""
        return all(
            kkt_plus <= (1.0 - beta_kkt * alpha_p) * kkt_e
            and phi_plus <= phi_e + math.sqrt(kkt_e)
            for phi_e, kkt_e in self.entries
        )


def build_rhs(it: Iterate, gamma: float, beta1: float):
    """Target KKT-residual change: b_D = grad L_{gamma*mu}(x, y),
    b_P = (1-gamma)*mu*w,  b_C = S y - gamma*mu*e."""
    b_d = it.lagrangian_grad(gamma * it.mu, beta1)
    b_p = (1.0 - gamma) * it.mu * it.w
    b_c = it.s * it.y - gamma * it.mu
    return b_d, b_p, b_c


def compute_direction(fs: FactorizedSystem, it: Iterate, gamma: float,
                      beta1: float) -> Direction:
    """Directions from the snapshot factorization with a fresh rhs.

    dx solves (M + delta I) dx = -(b_D + J_hat^T S_hat^{-1} (Y b_P - b_C));
    ds = -(1-gamma) mu w - J(x) dx uses the current Jacobian;
    dy = S_hat^{-1} Y_hat (J_hat dx + b_P - Y_hat^{-1} b_C), the sign that
    solves the Newton rows S dy + Y ds = -b_C, J dx + ds = -b_P at the
    snapshot.  At the snapshot point this is the exact Newton system.
    """
    hat = fs.schur
    b_d, b_p, b_c = build_rhs(it, gamma, beta1)
    if it.m:
        rhs = -(b_d + hat.jac.T @ ((it.y * b_p - b_c) / hat.s))
    else:
        rhs = -b_d
    dx = solve_shifted(fs, rhs)
    if it.m:
        jhat_dx = hat.jac @ dx
        dy = (hat.y / hat.s) * (jhat_dx + b_p - b_c / hat.y)
        ds = -(1.0 - gamma) * it.mu * it.w - it.jac @ dx
    else:
        dy = np.zeros(0)
        ds = np.zeros(0)
    return Direction(dx=dx, ds=ds, dy=dy, gamma=gamma, b_d=b_d, b_p=b_p, b_c=b_c)


def _boundary_bound(it: Iterate, direction: Direction, delta: float,
                    beta_exp: float) -> np.ndarray:
    """min(s, ||dx||_inf (delta + ||dy||_inf + ||dx||_inf^beta_exp) e)."""
    dx_norm = inf_norm(direction.dx)
    t = dx_norm * (delta + inf_norm(direction.dy) + dx_norm ** beta_exp)
    return np.minimum(it.s, t)


def max_primal_step(it: Iterate, direction: Direction, delta: float,
                    theta_p: np.ndarray, beta_exp: float) -> float:
    """Largest alpha in [0,1] with s + alpha*ds >= theta_p * bound.

    The bound caps at ``theta_p * s``, so alpha = 0 is always feasible and
    the largest alpha follows from a per-component ratio test.
    """
    if it.m == 0:
        return 1.0
    floor = theta_p * _boundary_bound(it, direction, delta, beta_exp)
    room = it.s - floor
    shrinking = direction.ds < 0
    if not np.any(shrinking):
        return 1.0
    ratios = room[shrinking] / (-direction.ds[shrinking])
    return float(min(1.0, np.min(ratios)))


def fraction_to_boundary_ok(s_plus: np.ndarray, it: Iterate, direction: Direction,
                            delta: float, theta_b: np.ndarray,
                            beta_exp: float) -> bool:
    """Acceptance-side rule s+ >= theta_b * min(s, step-size bound)."""
    if it.m == 0:
        return True
    floor = theta_b * _boundary_bound(it, direction, delta, beta_exp)
    return bool(np.all(s_plus >= floor))


def dual_interval(s_plus: np.ndarray, mu_plus: float, it: Iterate,
                  direction: Direction, beta2: float,
                  theta_b: np.ndarray) -> tuple[float, float] | None:
    """Feasible dual step sizes: the largest [lo, hi] within [0,1] keeping
    s+_i (y + alpha dy)_i / mu+ in [beta2, 1/beta2] and
    y + alpha dy >= theta_b * y * min(1, ||dx||_inf).

    Returns None when the intersection is empty (the trial is rejected).
    """
    if it.m == 0:
        return (0.0, 1.0)
    if np.min(s_plus) <= 0 or mu_plus <= 0:
        return None
    lower = np.maximum(
        beta2 * mu_plus / s_plus,
        theta_b * it.y * min(1.0, inf_norm(direction.dx)),
    )
    upper = mu_plus / (beta2 * s_plus)

    lo, hi = 0.0, 1.0
    for yi, di, li, ui in zip(it.y, direction.dy, lower, upper):
        if li > ui:
            return None
        if di > 0:
            lo = max(lo, (li - yi) / di)
            hi = min(hi, (ui - yi) / di)
        elif di < 0:
            lo = max(lo, (ui - yi) / di)
            hi = min(hi, (li - yi) / di)
        else:
            if not (li <= yi <= ui):
                return None
        if lo > hi:
            return None
    return (lo, hi)


def dual_step_size(s_plus: np.ndarray, mu_plus: float,
                   grad_f_plus: np.ndarray, jac_plus: np.ndarray,
                   it: Iterate, direction: Direction,
                   interval: tuple[float, float], alpha_p: float) -> float:
    """Least-squares dual step within the feasible interval.

    Minimizes ||S+ y - mu+ e + zeta S+ dy||^2 +
    ||grad f(x+) + J(x+)^T (y + zeta dy)||^2 over the interval, then pushes
    the result up to at least alpha_p (capped at the interval's top) so the
    duals are not left behind when delta is large.
    """
    lo, hi = interval
    if it.m == 0:
        zeta = hi
    else:
        p = np.concatenate([s_plus * it.y - mu_plus, grad_f_plus + jac_plus.T @ it.y])
        q = np.concatenate([s_plus * direction.dy, jac_plus.T @ direction.dy])
        qq = float(q @ q)
        if qq == 0.0:
            zeta = hi
        else:
            zeta = min(max(-float(p @ q) / qq, lo), hi)
    return min(max(zeta, alpha_p), hi)


@dataclass
class StepOutcome:
    success: bool
    iterate: Iterate | None
    direction: Direction | None
    alpha_p: float = 0.0
    alpha_d: float = 0.0
    reason: str = ""


def theta_bar(mu: float, s: np.ndarray, w: np.ndarray, opts: SolverOptions) -> float:
    """Minimum aggressive step size.

    min(1/2, beta6/(4 mu) * min((beta3-beta2)/beta3, 1-theta_b)
        * min_{i: w_i>0} s_i/w_i);
    the slack-ratio factor is vacuous (treated as infinite) when no
    constraint is shifted.  Rejection is strict (alpha_P < theta_bar):
    the trial at exactly theta_bar must stay admissible because the cap
    1/2 coincides with the first backtrack beta6 * 1 whenever the
    fraction-to-boundary maximum is a full step, and that trial is the
    only viable one when the full gamma=0 step zeroes mu.
    """
    shifted = w > 0
    if not np.any(shifted):
        return 0.5
    slack_ratio = float(np.min(s[shifted] / w[shifted]))
    corridor = min((opts.beta3 - opts.beta2) / opts.beta3, 1.0 - opts.theta_b)
    return min(0.5, opts.beta6 / (4.0 * mu) * corridor * slack_ratio)


def _trial_duals(it: Iterate, gamma: float) -> np.ndarray:
    """Dual estimate mu S^{-1} (gamma e + (1-gamma) Y w) for the aggressive
    descent precheck; chosen so the modified Lagrangian gradient at these
    duals equals the system right-hand side whenever the iterate is the
    snapshot point, making the precheck pass there by construction."""
    return it.mu / it.s * (gamma + (1.0 - gamma) * it.y * it.w)


def _finite_direction(direction: Direction) -> bool:
    return bool(
        np.all(np.isfinite(direction.dx))
        and np.all(np.isfinite(direction.dy))
        and np.all(np.isfinite(direction.ds))
    )


def aggressive_step(fs: FactorizedSystem, it: Iterate, problem: NlpProblem,
                    opts: SolverOptions) -> StepOutcome:
    """Mehrotra-style mu-reducing step.

    A pure predictor (gamma = 0) direction sets the corrector target
    gamma = min(0.5, (1 - alpha_max)^2).  The corrector direction is then
    line searched from the fraction-to-boundary maximum, rejecting early
    when it is not a descent direction for the modified Lagrangian at the
    centering duals.  After the dual step is chosen, a guard rejects steps
    that slash mu while the dual infeasibility stays large.
    """
    theta_p = opts.theta_p_vector(problem)
    theta_b = opts.theta_b_vector(problem)

    predictor = compute_direction(fs, it, 0.0, opts.beta1)
    if not _finite_direction(predictor):
        return StepOutcome(False, None, predictor, reason="non-finite direction")
    alpha_hat = max_primal_step(it, predictor, fs.delta, theta_p, opts.beta_exp)
    gamma = min(0.5, (1.0 - alpha_hat) ** 2)

    direction = compute_direction(fs, it, gamma, opts.beta1)
    if not _finite_direction(direction):
        return StepOutcome(False, None, direction, reason="non-finite direction")

    y_tilde = _trial_duals(it, gamma)
    grad_tilde = it.grad_f if it.m == 0 else (
        it.grad_f + it.jac.T @ (y_tilde - gamma * it.mu * opts.beta1))
    if float(grad_tilde @ direction.dx) >= 0:
        return StepOutcome(False, None, direction, reason="not a descent direction")

    alpha_min = theta_bar(it.mu, it.s, it.w, opts)
    alpha_p = max_primal_step(it, direction, fs.delta, theta_p, opts.beta_exp)
    guard_retries = 0

    while True:
        if alpha_p < alpha_min:
            return StepOutcome(False, None, direction, reason="step size below minimum")
        try:
            mu_plus, x_plus, a_plus, s_plus = primal_trial(
                it, direction.dx, gamma, alpha_p, problem)
        except StepRejected:
            alpha_p *= opts.beta6
            continue
        if it.m and (mu_plus <= 0 or np.min(s_plus) <= 0):
            alpha_p *= opts.beta6
            continue
        if not fraction_to_boundary_ok(s_plus, it, direction, fs.delta,
                                       theta_b, opts.beta_exp):
            alpha_p *= opts.beta6
            continue
        interval = dual_interval(s_plus, mu_plus, it, direction, opts.beta2, theta_b)
        if interval is None:
            alpha_p *= opts.beta6
            continue
        try:
            grad_f_plus = problem.grad_f(x_plus)
            jac_plus = problem.jac(x_plus)
        except EvaluationError:
            alpha_p *= opts.beta6
            continue
        alpha_d = dual_step_size(s_plus, mu_plus, grad_f_plus, jac_plus,
                                 it, direction, interval, alpha_p)
        y_plus = it.y + alpha_d * direction.dy

        if mu_plus / it.mu < 1.0 - opts.beta8:
            # mu dropped hard; make sure the dual infeasibility followed.
            grad_l_plus = grad_f_plus if it.m == 0 else (
                grad_f_plus + jac_plus.T @ (y_plus - mu_plus * opts.beta1))
            denom = (1.0 - opts.beta8) * sigma(y_plus) * inf_norm(grad_l_plus)
            tau = mu_plus / denom if denom > 0 else math.inf
            if tau < 1.0:
                guard_retries += 1
                if guard_retries > MAX_GUARD_RETRIES:
                    return StepOutcome(False, None, direction,
                                       reason="dual-feasibility guard retries exhausted")
                alpha_p = max(opts.beta8 ** 2, alpha_p * tau ** 2)
                continue

        try:
            new = make_iterate(problem, mu_plus, x_plus, s_plus, y_plus, it.w,
                               a=a_plus, jac=jac_plus, grad_f=grad_f_plus)
        except EvaluationError:
            alpha_p *= opts.beta6
            continue
        if not check_interior(new, opts.beta2):
            alpha_p *= opts.beta6
            continue
        return StepOutcome(True, new, direction, alpha_p=alpha_p, alpha_d=alpha_d)


def stabilization_step(fs: FactorizedSystem, it: Iterate, filt: Filter,
                       problem: NlpProblem, opts: SolverOptions) -> StepOutcome:
    """gamma = 1 step: hold mu and the primal residual, descend the merits.

    The trial point must either make sufficient progress on the augmented
    barrier phi (Armijo-style, with the regularization term folded into
    the model slope) or pass the KKT filter against every accepted iterate
    at this residual level.
    """
    theta_p = opts.theta_p_vector(problem)
    theta_b = opts.theta_b_vector(problem)

    direction = compute_direction(fs, it, 1.0, opts.beta1)
    if not _finite_direction(direction):
        return StepOutcome(False, None, direction, reason="non-finite direction")

    grad_psi = it.barrier_grad(opts.beta1)
    slope = float(grad_psi @ direction.dx)
    if slope >= 0:
        return StepOutcome(False, None, direction, reason="not a descent direction")

    phi_cur = merit_phi(it, opts.beta1)
    comp_term = inf_norm(it.s * it.y - it.mu) ** 3 / it.mu ** 2
    dx_sq = float(direction.dx @ direction.dx)

    alpha_p = max_primal_step(it, direction, fs.delta, theta_p, opts.beta_exp)

    while True:
        if alpha_p <= opts.beta5:
            return StepOutcome(False, None, direction, reason="step size below minimum")
        try:
            mu_plus, x_plus, a_plus, s_plus = primal_trial(
                it, direction.dx, 1.0, alpha_p, problem)
        except StepRejected:
            alpha_p *= opts.beta6
            continue
        if it.m and np.min(s_plus) <= 0:
            alpha_p *= opts.beta6
            continue
        if not fraction_to_boundary_ok(s_plus, it, direction, fs.delta,
                                       theta_b, opts.beta_exp):
            alpha_p *= opts.beta6
            continue
        interval = dual_interval(s_plus, mu_plus, it, direction, opts.beta2, theta_b)
        if interval is None:
            alpha_p *= opts.beta6
            continue
        try:
            grad_f_plus = problem.grad_f(x_plus)
            jac_plus = problem.jac(x_plus)
        except EvaluationError:
            alpha_p *= opts.beta6
            continue
        alpha_d = dual_step_size(s_plus, mu_plus, grad_f_plus, jac_plus,
                                 it, direction, interval, alpha_p)
        y_plus = it.y + alpha_d * direction.dy
        try:
            new = make_iterate(problem, mu_plus, x_plus, s_plus, y_plus, it.w,
                               a=a_plus, jac=jac_plus, grad_f=grad_f_plus)
        except EvaluationError:
            alpha_p *= opts.beta6
            continue

        phi_plus = merit_phi(new, opts.beta1)
        model = 0.5 * (slope - 0.5 * fs.delta * alpha_p * dx_sq) - comp_term
        sufficient = phi_plus <= phi_cur + alpha_p * opts.beta4 * model
        if not sufficient:
            kkt_plus = merit_kkt(new, opts.beta1)
            sufficient = filt.accepts(phi_plus, kkt_plus, alpha_p, opts.beta_kkt)
        if not sufficient:
            alpha_p *= opts.beta6
            continue
        if not check_interior(new, opts.beta2):
            alpha_p *= opts.beta6
            continue
        return StepOutcome(True, new, direction, alpha_p=alpha_p, alpha_d=alpha_d)
