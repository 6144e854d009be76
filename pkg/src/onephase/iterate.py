"""Iterate state, termination certificates, switching rule and merit functions.

Every iterate carries the barrier parameter ``mu``, primal point ``x``,
slacks ``s``, duals ``y`` and the fixed shift vector ``w``, and maintains

    a(x) + s = mu * w,        s_i y_i / mu in [beta2, 1/beta2],
    mu, s, y > 0.

Slack updates are nonlinear (``s+ = mu+ * w - a(x+)``) precisely so the
first identity survives every step: primal feasibility and complementarity
shrink at the same rate as ``mu``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .problem import EvaluationError, NlpProblem


def inf_norm(v: np.ndarray) -> float:
    """Infinity norm with the empty vector mapped to 0."""
    v = np.asarray(v)
    return float(np.abs(v).max()) if v.size else 0.0


def one_norm(v: np.ndarray) -> float:
    v = np.asarray(v)
    return float(np.abs(v).sum()) if v.size else 0.0


class StepRejected(Exception):
    """A trial point failed (non-finite evaluation or lost interiority)."""


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal-infeasible"
    UNBOUNDED = "unbounded"
    MAX_DELTA = "max-delta"
    ITERATION_LIMIT = "iteration-limit"
    TIME_LIMIT = "time-limit"
    EVALUATION_ERROR = "evaluation-error"


@dataclass
class SolverOptions:
    """Algorithm parameters; defaults follow the standard tuning.

    ``beta_kkt`` is the filter's KKT reduction factor and ``beta_exp`` the
    step-size exponent in the fraction-to-boundary bound (two distinct
    parameters despite their historical shared name).
    """

    eps_opt: float = 1e-6
    eps_far: float = 1e-3
    eps_inf: float = 1e-6
    eps_unbd: float = 1e-12
    beta1: float = 1e-4        # modified log-barrier slope
    beta2: float = 0.01        # complementarity corridor
    beta3: float = 0.02        # aggressive-step corridor buffer
    beta4: float = 0.2         # merit decrease fraction
    beta5: float = 2.0 ** -5   # minimum stabilization step size
    beta6: float = 0.5         # backtracking factor
    beta_kkt: float = 0.01     # filter KKT reduction factor
    beta_exp: float = 0.5      # fraction-to-boundary exponent
    beta8: float = 0.9         # dual-feasibility guard threshold
    theta_b: float = 0.1       # fraction-to-boundary, acceptance
    theta_p_linear: float = 0.1     # fraction-to-boundary, max step (linear rows)
    theta_p_nonlinear: float = 0.25  # idem, nonlinear rows
    delta_min: float = 1e-8
    delta_inc: float = 8.0
    delta_dec: float = float(np.pi)
    delta_max: float = 1e50
    j_max: int = 2             # inner iterations per factorization
    beta10: float = 1e-4       # minimum initial slack shift
    beta11: float = 1e-2       # minimum initial dual value
    beta12: float = 1e3        # maximum initial dual value
    mu_scale: float = 1.0      # scales the initial barrier parameter
    max_iter: int = 3000       # inner-iteration budget
    max_time: float = 3600.0   # wall-clock budget, seconds
    debug_checks: bool = False  # re-verify iterate invariants at every acceptance

    def validate(self) -> None:
        def _in(value, lo, hi, name, lo_open=True, hi_open=True):
            ok = (value > lo if lo_open else value >= lo) and (
                value < hi if hi_open else value <= hi)
            if not ok:
                raise ValueError(f"{name}={value} outside its admissible interval")

        _in(self.eps_opt, 0, math.inf, "eps_opt")
        _in(self.eps_far, 0, 1, "eps_far")
        _in(self.eps_inf, 0, 1, "eps_inf")
        _in(self.eps_unbd, 0, 1, "eps_unbd")
        _in(self.beta1, 0, 1, "beta1")
        _in(self.beta2, 0, 1, "beta2")
        _in(self.beta3, self.beta2, 1, "beta3")
        _in(self.beta4, 0, 1, "beta4")
        _in(self.beta5, 0, 1, "beta5")
        _in(self.beta6, 0, 1, "beta6")
        _in(self.beta_kkt, 0, 1, "beta_kkt")
        _in(self.beta_exp, 0, 1, "beta_exp")
        _in(self.beta8, 0.5, 1, "beta8")
        _in(self.theta_b, 0, 1, "theta_b")
        _in(self.theta_p_linear, self.theta_b, 1, "theta_p_linear", lo_open=False)
        _in(self.theta_p_nonlinear, self.theta_b, 1, "theta_p_nonlinear", lo_open=False)
        _in(self.delta_min, 0, math.inf, "delta_min")
        _in(self.delta_inc, 1, math.inf, "delta_inc")
        _in(self.delta_dec, 1, math.inf, "delta_dec")
        _in(self.delta_max, self.delta_min, math.inf, "delta_max")
        _in(self.beta10, 0, 1, "beta10")
        _in(self.beta11, 0, math.inf, "beta11")
        _in(self.beta12, self.beta11, math.inf, "beta12", lo_open=False)
        _in(self.mu_scale, 0, math.inf, "mu_scale")
        if self.j_max < 1:
            raise ValueError("j_max must be at least 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")

    def theta_p_vector(self, problem: NlpProblem) -> np.ndarray:
        th = np.full(problem.m, self.theta_p_nonlinear)
        for i in problem.linear_indices:
            th[i] = self.theta_p_linear
        return th

    def theta_b_vector(self, problem: NlpProblem) -> np.ndarray:
        return np.full(problem.m, self.theta_b)


@dataclass(frozen=True)
class Iterate:
    """Immutable snapshot (mu, x, s, y) with cached evaluations at x."""

    mu: float
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    w: np.ndarray
    f: float
    grad_f: np.ndarray
    a: np.ndarray
    jac: np.ndarray

    @property
    def m(self) -> int:
        return self.s.shape[0]

    def lagrangian_grad(self, mu_bar: float, beta1: float) -> np.ndarray:
        """grad f + J^T (y - mu_bar*beta1*e) from the caches."""
        if self.m == 0:
            return self.grad_f
        return self.grad_f + self.jac.T @ (self.y - mu_bar * beta1)

    def barrier_grad(self, beta1: float) -> np.ndarray:
        """Gradient of psi_mu at x: grad f + J^T (mu/s - mu*beta1*e)."""
        if self.m == 0:
            return self.grad_f
        return self.grad_f + self.jac.T @ (self.mu / self.s - self.mu * beta1)

    def primal_residual(self) -> np.ndarray:
        return self.a + self.s - self.mu * self.w


def make_iterate(
    problem: NlpProblem,
    mu: float,
    x: np.ndarray,
    s: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    a: np.ndarray | None = None,
    jac: np.ndarray | None = None,
    f: float | None = None,
    grad_f: np.ndarray | None = None,
) -> Iterate:
    """Evaluate whatever caches were not supplied and freeze the snapshot."""
    x = np.asarray(x, float)
    return Iterate(
        mu=float(mu),
        x=x,
        s=np.asarray(s, float),
        y=np.asarray(y, float),
        w=np.asarray(w, float),
        f=problem.f(x) if f is None else float(f),
        grad_f=problem.grad_f(x) if grad_f is None else np.asarray(grad_f, float),
        a=problem.a(x) if a is None else np.asarray(a, float),
        jac=problem.jac(x) if jac is None else np.asarray(jac, float),
    )


def primal_trial(cur: Iterate, dx: np.ndarray, gamma: float, alpha_p: float,
                 problem: NlpProblem) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Primal part of the iterate update for a trial step size.

    Returns ``(mu+, x+, a(x+), s+)`` with ``s+ = mu+ * w - a(x+)``.  Only
    the constraints are evaluated here; callers check interiority and the
    fraction-to-boundary rule before paying for objective evaluations.
    Raises :class:`StepRejected` when ``a(x+)`` is non-finite.
    """
    mu_plus = (1.0 - (1.0 - gamma) * alpha_p) * cur.mu
    x_plus = cur.x + alpha_p * dx
    try:
        a_plus = problem.a(x_plus)
    except EvaluationError as exc:
        raise StepRejected(str(exc)) from exc
    s_plus = mu_plus * cur.w - a_plus
    return mu_plus, x_plus, a_plus, s_plus


def update_iterate(cur: Iterate, direction, alpha_p: float, alpha_d: float,
                   problem: NlpProblem) -> Iterate:
    """Full nonlinear update: mu+ = (1-(1-gamma)alpha_P)mu, x+ = x+alpha_P dx,
    s+ = mu+ w - a(x+),  y+ = y + alpha_D dy.

    The slack rebuild keeps ``a(x)+s = mu*w`` exact by construction.
    Raises :class:`StepRejected` on evaluation failure or a nonpositive
    slack component.
    """
    mu_plus, x_plus, a_plus, s_plus = primal_trial(
        cur, direction.dx, direction.gamma, alpha_p, problem)
    if cur.m and np.min(s_plus) <= 0:
        raise StepRejected("slack lost interiority")
    y_plus = cur.y + alpha_d * direction.dy
    try:
        return make_iterate(problem, mu_plus, x_plus, s_plus, y_plus, cur.w, a=a_plus)
    except EvaluationError as exc:
        raise StepRejected(str(exc)) from exc


def check_interior(it: Iterate, beta2: float) -> bool:
    """Interiority test: mu, s, y > 0 and s_i y_i / mu within
    [beta2, 1/beta2] for every constraint."""
    if not (it.mu > 0):
        return False
    if it.m == 0:
        return True
    if np.min(it.s) <= 0 or np.min(it.y) <= 0:
        return False
    ratio = it.s * it.y / it.mu
    return bool(np.min(ratio) >= beta2 and np.max(ratio) <= 1.0 / beta2)


def sigma(y: np.ndarray) -> float:
    """Dual scaling 100 / max(100, ||y||_inf); lies in (0, 1]."""
    return 100.0 / max(100.0, inf_norm(y))


def terminate_optimal(it: Iterate, eps_opt: float) -> bool:
    """Scaled first-order optimality: sigma||grad L_0||, sigma||Sy|| and the
    raw primal residual ||a(x)+s|| all below ``eps_opt``."""
    sig = sigma(it.y)
    return (
        sig * inf_norm(it.lagrangian_grad(0.0, 0.0)) <= eps_opt
        and sig * inf_norm(it.s * it.y) <= eps_opt
        and inf_norm(it.a + it.s) <= eps_opt
    )


def gamma_far(it: Iterate) -> float:
    """||J^T y||_1 / (a^T y); small values mean y is close to a Fritz-John
    ray for infeasibility.  Undefined unless a^T y > 0."""
    ay = float(it.a @ it.y)
    if ay <= 0:
        raise ValueError("gamma_far undefined: a(x)^T y <= 0")
    return one_norm(it.jac.T @ it.y) / ay


def gamma_inf(it: Iterate) -> float:
    """(||J^T y||_1 + s^T y) / ||y||_1; invariant under positive rescaling
    of y.  Undefined when y = 0."""
    y1 = one_norm(it.y)
    if y1 <= 0:
        raise ValueError("gamma_inf undefined: y = 0")
    return (one_norm(it.jac.T @ it.y) + float(it.s @ it.y)) / y1


def terminate_infeasible(it: Iterate, eps_far: float, eps_inf: float) -> bool:
    """Local-infeasibility certificate: a^T y > 0 with both stationarity
    measures below tolerance."""
    if it.m == 0:
        return False
    if float(it.a @ it.y) <= 0:
        return False
    return gamma_far(it) <= eps_far and gamma_inf(it) <= eps_inf


def terminate_unbounded(it: Iterate, eps_unbd: float) -> bool:
    """Divergence test ||x||_inf >= 1/eps_unbd: since a(x) <= mu^0 w along
    the whole run, diverging x certifies the shifted region is unbounded."""
    return inf_norm(it.x) >= 1.0 / eps_unbd


def aggressive_criterion(it: Iterate, beta1: float, beta3: float) -> bool:
    """Switching test for taking an aggressive (mu-reducing) step.

    Requires (a) the shifted barrier problem is solved to within mu,
    (b) the modified Lagrangian gradient is no larger than its trivial
    bound (a Farkas-style safeguard), and (c) complementarity sits in the
    tighter [beta3, 1/beta3] corridor so the step has room to move it.
    """
    grad_l = it.lagrangian_grad(it.mu, beta1)
    if sigma(it.y) * inf_norm(grad_l) > it.mu:
        return False
    if it.m == 0:
        return True
    bound_vec = it.grad_f - beta1 * it.mu * (it.jac.T @ np.ones(it.m))
    if one_norm(grad_l) > one_norm(bound_vec) + float(it.s @ it.y):
        return False
    ratio = it.s * it.y / it.mu
    return bool(np.min(ratio) >= beta3 and np.max(ratio) <= 1.0 / beta3)


def merit_psi(it: Iterate, beta1: float) -> float:
    """Shifted log-barrier merit
    psi_mu(x) = f(x) - mu * sum_i (beta1*a_i(x) + log(mu*w_i - a_i(x))).

    Returns +inf when any shifted slack is nonpositive, so backtracking
    treats boundary violations like any other merit increase.
    """
    if it.m == 0:
        return it.f
    slack = it.mu * it.w - it.a
    if np.min(slack) <= 0:
        return math.inf
    return it.f - it.mu * float(beta1 * it.a.sum() + np.log(slack).sum())


def merit_phi(it: Iterate, beta1: float) -> float:
    """Augmented barrier merit phi = psi + ||Sy - mu e||_inf^3 / mu^2."""
    psi = merit_psi(it, beta1)
    if not math.isfinite(psi):
        return psi
    return psi + inf_norm(it.s * it.y - it.mu) ** 3 / it.mu ** 2


def merit_kkt(it: Iterate, beta1: float) -> float:
    """Scaled KKT merit sigma(y) * max(||grad L_mu||_inf, ||Sy - mu e||_inf)."""
    return sigma(it.y) * max(
        inf_norm(it.lagrangian_grad(it.mu, beta1)),
        inf_norm(it.s * it.y - it.mu),
    )


@dataclass
class Certificate:
    """Measured quantities backing a terminal status."""

    values: dict = field(default_factory=dict)

    def __str__(self) -> str:
        return ", ".join(f"{k}={v:.3e}" for k, v in self.values.items())


def optimality_certificate(it: Iterate) -> Certificate:
    sig = sigma(it.y)
    return Certificate({
        "scaled_dual_infeasibility": sig * inf_norm(it.lagrangian_grad(0.0, 0.0)),
        "scaled_complementarity": sig * inf_norm(it.s * it.y),
        "primal_residual": inf_norm(it.a + it.s),
    })


def infeasibility_certificate(it: Iterate) -> Certificate:
    return Certificate({
        "a_dot_y": float(it.a @ it.y),
        "gamma_far": gamma_far(it),
        "gamma_inf": gamma_inf(it),
        "dual_norm": inf_norm(it.y),
    })


def unboundedness_certificate(it: Iterate) -> Certificate:
    return Certificate({"x_norm": inf_norm(it.x)})
