"""Solve driver: initialization, outer/inner iterations, termination.

Each outer iteration assembles and factorizes the Schur matrix once (one
Hessian evaluation), then reuses the factorization for up to ``j_max``
inner steps.  A failed first inner step escalates the regularization
shift and retries; a failed later step starts a fresh outer iteration.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .iterate import (
    Certificate,
    Iterate,
    SolveStatus,
    SolverOptions,
    aggressive_criterion,
    check_interior,
    inf_norm,
    infeasibility_certificate,
    make_iterate,
    merit_kkt,
    merit_phi,
    optimality_certificate,
    sigma,
    terminate_infeasible,
    terminate_optimal,
    terminate_unbounded,
    unboundedness_certificate,
)
from .linalg import (
    DeltaState,
    FactorizedSystem,
    MaxDeltaError,
    SchurMatrix,
    assemble_schur,
    escalate_delta,
    factorize_with_shift,
    _try_cholesky,
)
from .problem import EvaluationError, NlpProblem
from .steps import (
    Direction,
    Filter,
    aggressive_step,
    compute_direction,
    stabilization_step,
)


class InitializationError(EvaluationError):
    """The starting point could not be made interior."""

    def __init__(self, message: str):
        RuntimeError.__init__(self, message)
        self.what = "initialization"
        self.index = None


TRACE_SCHEMA_VERSION = "onephase-trace-v1"

TRACE_COLUMNS = [
    "iter", "outer", "inner", "kind", "accepted", "gamma", "delta",
    "alpha_p", "alpha_d", "mu", "mu_pre", "primal_resid", "opt_dual",
    "opt_comp", "switch_dual", "phi", "kkt", "filter_size",
    "f_evals", "grad_evals", "cons_evals", "jac_evals", "hess_evals",
    "factorizations", "backsolves",
]


@dataclass
class TraceRecord:
    iter: int
    outer: int
    inner: int
    kind: str
    accepted: bool
    gamma: float
    delta: float
    alpha_p: float
    alpha_d: float
    mu: float
    mu_pre: float
    primal_resid: float
    opt_dual: float
    opt_comp: float
    switch_dual: float
    phi: float
    kkt: float
    filter_size: int
    f_evals: int
    grad_evals: int
    cons_evals: int
    jac_evals: int
    hess_evals: int
    factorizations: int
    backsolves: int

    def row(self) -> list:
        return [getattr(self, c) for c in TRACE_COLUMNS]


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def write_csv(self, stream: io.TextIOBase) -> None:
        stream.write(f"# {TRACE_SCHEMA_VERSION}\n")
        writer = csv.writer(stream)
        writer.writerow(TRACE_COLUMNS)
        for rec in self.records:
            writer.writerow(rec.row())


@dataclass
class SolveResult:
    status: SolveStatus
    iterate: Optional[Iterate]
    certificate: Certificate
    trace: SolveTrace
    counters: dict
    inner_iterations: int
    outer_iterations: int
    wall_time: float

    @property
    def x(self) -> Optional[np.ndarray]:
        return None if self.iterate is None else self.iterate.x

    @property
    def f(self) -> Optional[float]:
        return None if self.iterate is None else self.iterate.f


ProgressCallback = Callable[[TraceRecord], None]
StepObserver = Callable[[Iterate, Direction, float, float, Iterate, str], None]


def _counting_problem(problem: NlpProblem) -> tuple[NlpProblem, dict]:
    counts = {"f": 0, "grad": 0, "cons": 0, "jac": 0, "hess": 0}

    def tally(key, fn):
        def wrapper(*args):
            counts[key] += 1
            return fn(*args)
        return wrapper

    counted = replace(
        problem,
        eval_f=tally("f", problem.eval_f),
        eval_grad_f=tally("grad", problem.eval_grad_f),
        eval_a=tally("cons", problem.eval_a),
        eval_jac=tally("jac", problem.eval_jac),
        eval_hess_lag=tally("hess", problem.eval_hess_lag),
    )
    return counted, counts


def _bound_rows(problem: NlpProblem, x: np.ndarray) -> list[tuple[int, int, int, float]]:
    """Decode flagged bound rows into (row, variable, sign, constant)."""
    if not problem.bound_indices:
        return []
    J = problem.jac(x)
    a = problem.a(x)
    rows = []
    for i in sorted(problem.bound_indices):
        nz = np.flatnonzero(J[i])
        if nz.size != 1 or abs(J[i, nz[0]]) != 1.0:
            raise InitializationError(
                f"bound row {i} is not a single +-1 coefficient row")
        j = int(nz[0])
        sign = int(J[i, j])
        const = float(a[i] - sign * x[j])
        rows.append((i, j, sign, const))
    return rows


def _project_onto_bounds(x: np.ndarray, bound_rows, kappa: float = 1e-2) -> np.ndarray:
    """Push the start point strictly inside its variable bounds.

    Uses the relative margin min(kappa*max(1,|bound|), kappa*(u-l)) on each
    side, so one-sided bounds get a fixed push and tight boxes remain
    ordered.
    """
    n = x.shape[0]
    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    for _i, j, sign, const in bound_rows:
        if sign > 0:   # x_j + const <= 0
            upper[j] = min(upper[j], -const)
        else:          # -x_j + const <= 0
            lower[j] = max(lower[j], const)
    out = np.array(x, float)
    for j in range(n):
        lo, hi = lower[j], upper[j]
        if np.isfinite(lo) and np.isfinite(hi):
            width = hi - lo
            pad_lo = min(kappa * max(1.0, abs(lo)), kappa * width)
            pad_hi = min(kappa * max(1.0, abs(hi)), kappa * width)
            out[j] = min(max(out[j], lo + pad_lo), hi - pad_hi)
        elif np.isfinite(lo):
            out[j] = max(out[j], lo + kappa * max(1.0, abs(lo)))
        elif np.isfinite(hi):
            out[j] = min(out[j], hi - kappa * max(1.0, abs(hi)))
    return out


def initial_slack_shift(s_raw: np.ndarray, beta10: float) -> np.ndarray:
    """Raw slacks plus the scalar shift max(-2 min_i s_raw_i, beta10)."""
    if s_raw.size == 0:
        return s_raw.copy()
    return s_raw + max(-2.0 * float(np.min(s_raw)), beta10)


def clip_initial_duals(y: np.ndarray, s0: np.ndarray, mu0: float,
                       beta3: float) -> np.ndarray:
    """Clamp dual estimates into the [beta3, 1/beta3] complementarity corridor."""
    return np.minimum(np.maximum(beta3 * mu0 / s0, y), mu0 / (beta3 * s0))


def initialize(problem: NlpProblem, x_start: np.ndarray,
               opts: SolverOptions, fs_log: Optional[list] = None) -> Iterate:
    """Build the starting iterate (mu0, x0, s0, y0) and the shift vector w.

    The start point is projected strictly inside any variable bounds; bound
    rows get w_i = 0 so they stay satisfied forever.  Dual estimates come
    from one Newton direction on the KKT system at unit duals, followed by
    shifts and clipping that center complementarity.  Finally
    w = (a(x0) + s0)/mu0, which makes the residual identity hold exactly.

    Raises :class:`InitializationError` when a bound row is active or
    violated after projection; evaluation failures at the start point
    propagate.
    """
    x0 = np.asarray(x_start, float)
    if x0.shape != (problem.n,):
        raise ValueError(f"x_start must have shape ({problem.n},)")
    if not np.all(np.isfinite(x0)):
        raise InitializationError("x_start has non-finite entries")

    m = problem.m
    if m == 0:
        mu0 = opts.mu_scale * 1.0
        empty = np.zeros(0)
        return make_iterate(problem, mu0, x0, empty, empty, empty)

    bound_rows = _bound_rows(problem, x0)
    x0 = _project_onto_bounds(x0, bound_rows)
    a0 = problem.a(x0)
    s_raw = -a0

    bound_mask = np.zeros(m, dtype=bool)
    for i, _j, _sign, _c in bound_rows:
        bound_mask[i] = True
    if np.any(s_raw[bound_mask] <= 0):
        bad = int(np.flatnonzero(bound_mask & (s_raw <= 0))[0])
        raise InitializationError(
            f"bound row {bad} active or violated after projection")

    # One Newton direction at unit duals to estimate y.  The shifted slacks
    # only serve this solve; the residual target is a(x0) + s_tilde.
    y_tilde = np.ones(m)
    s_tilde = initial_slack_shift(s_raw, opts.beta10)
    probe_w = a0 + s_tilde
    probe = make_iterate(problem, 1.0, x0, s_tilde, y_tilde, probe_w, a=a0)
    schur = assemble_schur(problem, x0, s_tilde, y_tilde, 1.0, opts.beta1,
                           jac=probe.jac)
    state = DeltaState(opts.delta_min, opts.delta_inc, opts.delta_dec, opts.delta_max)
    fs = factorize_with_shift(schur, 0.0, state)
    if fs_log is not None:
        fs_log.append(fs)
    direction = compute_direction(fs, probe, 0.0, opts.beta1)

    y_tilde = y_tilde + direction.dy
    s_tilde = s_raw.copy()

    eps_y = max(-2.0 * float(np.min(y_tilde)), 0.0)
    y_tilde = y_tilde + eps_y
    grad_l0 = probe.grad_f + probe.jac.T @ y_tilde
    eps_s = max(-2.0 * float(np.min(s_tilde)),
                inf_norm(grad_l0) / (float(np.linalg.norm(y_tilde)) + 1.0))
    free = ~bound_mask
    s_tilde[free] += eps_s

    denom_s = 2.0 * float(s_tilde.sum())
    if denom_s > 0:
        y_tilde = y_tilde + float(s_tilde @ y_tilde) / denom_s
    y_tilde = np.clip(y_tilde, opts.beta11, opts.beta12)
    s_tilde[free] += float(s_tilde @ y_tilde) / (2.0 * float(y_tilde.sum()))

    mu_tilde = float(s_tilde @ y_tilde) / m
    mu0 = opts.mu_scale * mu_tilde
    s0 = s_tilde
    if mu0 <= 0 or np.min(s0) <= 0:
        raise InitializationError("could not construct a strictly interior start")
    w = (a0 + s0) / mu0
    y0 = clip_initial_duals(y_tilde, s0, mu0, opts.beta3)

    start = make_iterate(problem, mu0, x0, s0, y0, w, a=a0,
                         jac=probe.jac, f=probe.f, grad_f=probe.grad_f)
    assert check_interior(start, opts.beta2)
    return start


def _refactorize(schur: SchurMatrix, delta: float, state: DeltaState) -> FactorizedSystem:
    """Factor M + delta*I at an escalated shift, growing delta on numerical
    failure (the escalation formula does not guarantee positive
    definiteness by itself)."""
    attempts = 0
    eye = np.eye(schur.M.shape[0])
    while True:
        if delta >= state.delta_max:
            raise MaxDeltaError(delta, state.delta_max)
        attempts += 1
        L = _try_cholesky(schur.M + delta * eye)
        if L is not None:
            state.delta_prev = delta
            return FactorizedSystem(schur=schur, delta=delta, factor=L,
                                    attempts=attempts)
        delta = state.delta_inc * delta


def solve(
    problem: NlpProblem,
    x_start: np.ndarray,
    opts: Optional[SolverOptions] = None,
    progress: Optional[ProgressCallback] = None,
    step_observer: Optional[StepObserver] = None,
) -> SolveResult:
    """Run the one-phase interior point method.

    Returns a terminal status with its certificate: first-order optimality,
    local primal infeasibility (a^T y > 0 with vanishing stationarity
    measures), unboundedness of the shifted feasible set, or one of the
    failure statuses (shift cap, iteration/time limit, evaluation error).

    ``progress`` receives each :class:`TraceRecord` as it is produced and
    must not mutate solver state.  ``step_observer`` is called on every
    accepted step with ``(previous, direction, alpha_p, alpha_d, new,
    kind)``; it exists for verification and diagnostics.
    """
    opts = SolverOptions() if opts is None else opts
    opts.validate()
    counted, counters = _counting_problem(problem)
    t0 = time.perf_counter()
    trace = SolveTrace()
    all_fs: list[FactorizedSystem] = []

    def result(status, iterate, certificate, outer):
        return SolveResult(
            status=status,
            iterate=iterate,
            certificate=certificate,
            trace=trace,
            counters={
                "f": counters["f"], "grad": counters["grad"],
                "cons": counters["cons"], "jac": counters["jac"],
                "hess": counters["hess"],
                "factorizations": sum(f.attempts for f in all_fs),
                "backsolves": sum(f.solves for f in all_fs),
            },
            inner_iterations=inner_count,
            outer_iterations=outer,
            wall_time=time.perf_counter() - t0,
        )

    inner_count = 0
    outer_count = 0
    try:
        cur = initialize(counted, x_start, opts, fs_log=all_fs)
    except MaxDeltaError as exc:
        return result(SolveStatus.MAX_DELTA, None,
                      Certificate({"delta": exc.delta}), 0)
    except EvaluationError:
        return result(SolveStatus.EVALUATION_ERROR, None,
                      Certificate({}), 0)

    state = DeltaState(opts.delta_min, opts.delta_inc, opts.delta_dec, opts.delta_max)
    filt = Filter()
    filt.reset(merit_phi(cur, opts.beta1), merit_kkt(cur, opts.beta1))
    delta = 0.0
    mu0_w = cur.mu * inf_norm(cur.w)

    def check_termination(it: Iterate):
        if terminate_optimal(it, opts.eps_opt):
            return SolveStatus.OPTIMAL, optimality_certificate(it)
        if terminate_infeasible(it, opts.eps_far, opts.eps_inf):
            return SolveStatus.PRIMAL_INFEASIBLE, infeasibility_certificate(it)
        if terminate_unbounded(it, opts.eps_unbd):
            return SolveStatus.UNBOUNDED, unboundedness_certificate(it)
        if inner_count >= opts.max_iter:
            return SolveStatus.ITERATION_LIMIT, Certificate({"inner_iterations": inner_count})
        if time.perf_counter() - t0 >= opts.max_time:
            return SolveStatus.TIME_LIMIT, Certificate({"seconds": time.perf_counter() - t0})
        return None

    while True:
        # New outer iteration: snapshot, assemble, factorize.
        try:
            schur = assemble_schur(counted, cur.x, cur.s, cur.y, cur.mu,
                                   opts.beta1, jac=cur.jac)
        except EvaluationError:
            return result(SolveStatus.EVALUATION_ERROR, cur, Certificate({}),
                          outer_count)
        outer_count += 1
        try:
            fs = factorize_with_shift(schur, delta, state)
        except MaxDeltaError as exc:
            return result(SolveStatus.MAX_DELTA, cur,
                          Certificate({"delta": exc.delta}), outer_count)
        all_fs.append(fs)
        delta = fs.delta

        j = 1
        while j <= opts.j_max:
            hit = check_termination(cur)
            if hit is not None:
                return result(hit[0], cur, hit[1], outer_count)
            inner_count += 1

            mu_pre = cur.mu
            switch_dual = sigma(cur.y) * inf_norm(cur.lagrangian_grad(cur.mu, opts.beta1))
            take_aggressive = aggressive_criterion(cur, opts.beta1, opts.beta3)
            if take_aggressive:
                outcome = aggressive_step(fs, cur, counted, opts)
                kind = "aggressive"
            else:
                outcome = stabilization_step(fs, cur, filt, counted, opts)
                kind = "stabilization"

            if outcome.success:
                prev = cur
                cur = outcome.iterate
                if take_aggressive:
                    filt.reset(merit_phi(cur, opts.beta1), merit_kkt(cur, opts.beta1))
                else:
                    filt.add(merit_phi(cur, opts.beta1), merit_kkt(cur, opts.beta1))
                if step_observer is not None:
                    step_observer(prev, outcome.direction, outcome.alpha_p,
                                  outcome.alpha_d, cur, kind)
                if opts.debug_checks:
                    assert check_interior(cur, opts.beta2)
                    # rebuilt slacks satisfy the identity exactly up to
                    # rounding at the iterate's own magnitude
                    scale = inf_norm(cur.s) + inf_norm(cur.a) + cur.mu * inf_norm(cur.w)
                    assert inf_norm(cur.primal_residual()) <= (
                        1e-8 * (1.0 + mu0_w) + 16 * np.finfo(float).eps * scale)

            sig = sigma(cur.y)
            record = TraceRecord(
                iter=inner_count, outer=outer_count, inner=j, kind=kind,
                accepted=outcome.success,
                gamma=outcome.direction.gamma if outcome.direction else float("nan"),
                delta=fs.delta, alpha_p=outcome.alpha_p, alpha_d=outcome.alpha_d,
                mu=cur.mu, mu_pre=mu_pre,
                primal_resid=inf_norm(cur.primal_residual()),
                opt_dual=sig * inf_norm(cur.lagrangian_grad(0.0, 0.0)),
                opt_comp=sig * inf_norm(cur.s * cur.y),
                switch_dual=switch_dual,
                phi=merit_phi(cur, opts.beta1), kkt=merit_kkt(cur, opts.beta1),
                filter_size=len(filt.entries),
                f_evals=counters["f"], grad_evals=counters["grad"],
                cons_evals=counters["cons"], jac_evals=counters["jac"],
                hess_evals=counters["hess"],
                factorizations=sum(f.attempts for f in all_fs),
                backsolves=sum(f.solves for f in all_fs),
            )
            trace.append(record)
            if progress is not None:
                progress(record)

            if outcome.success:
                j += 1
                continue
            if j == 1:
                # Escalate the shift and retry the inner loop with the same M.
                dx_norm = inf_norm(outcome.direction.dx) if outcome.direction else 0.0
                grad_norm = inf_norm(cur.lagrangian_grad(cur.mu, opts.beta1))
                try:
                    delta = escalate_delta(state, delta, grad_norm,
                                           dx_norm if dx_norm > 0 else 1.0)
                    fs = _refactorize(schur, delta, state)
                except MaxDeltaError as exc:
                    return result(SolveStatus.MAX_DELTA, cur,
                                  Certificate({"delta": exc.delta}), outer_count)
                all_fs.append(fs)
                delta = fs.delta
                j = 1
                continue
            break  # failure with j > 1: new outer iteration
