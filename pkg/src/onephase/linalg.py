"""Schur-complement assembly and regularized Cholesky factorization.

The solver reduces every direction computation to one symmetric positive
definite system ``(M + delta*I) d = rhs`` where
``M = hess_lag + J^T Y S^{-1} J``.  ``delta`` is found by trial
factorization: attempt ``delta = 0`` when the diagonal allows it, otherwise
restart from the previous shift and multiply by ``delta_inc`` until the
factorization succeeds or the shift cap is hit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .problem import NlpProblem


class MaxDeltaError(RuntimeError):
    """The regularization shift exceeded its cap; the solve is abandoned."""

    def __init__(self, delta: float, delta_max: float):
        self.delta = delta
        self.delta_max = delta_max
        super().__init__(f"shift {delta:.3e} reached cap {delta_max:.3e}")


@dataclass
class DeltaState:
    """Shift-strategy constants plus the last successful shift."""

    delta_min: float = 1e-8
    delta_inc: float = 8.0
    delta_dec: float = float(np.pi)
    delta_max: float = 1e50
    delta_prev: float = 0.0

    def __post_init__(self):
        if not (self.delta_max > self.delta_min > 0):
            raise ValueError("need delta_max > delta_min > 0")
        if self.delta_inc <= 1 or self.delta_dec <= 1:
            raise ValueError("delta_inc and delta_dec must exceed 1")


@dataclass
class SchurMatrix:
    """M together with the point it was assembled at.

    Inner iterations reuse the factorization of M built here, so the
    assembly-point slacks, duals and Jacobian ride along for the direction
    formulas.
    """

    M: np.ndarray
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    mu: float
    jac: np.ndarray


@dataclass
class FactorizedSystem:
    """Lower Cholesky factor of ``schur.M + delta*I``."""

    schur: SchurMatrix
    delta: float
    factor: np.ndarray
    attempts: int = 1
    solves: int = field(default=0, compare=False)


def assemble_schur(
    problem: NlpProblem,
    x: np.ndarray,
    s: np.ndarray,
    y: np.ndarray,
    mu: float,
    beta1: float = 1e-4,
    jac: np.ndarray | None = None,
    hess: np.ndarray | None = None,
) -> SchurMatrix:
    """Build ``M = hess_lag(x, y - mu*beta1*e) + J^T Y S^{-1} J``.

    ``jac``/``hess`` may be passed to reuse cached evaluations.  Slacks and
    duals must be strictly positive.
    """
    m = problem.m
    assert np.all(s > 0) and np.all(y > 0), "assemble_schur needs s, y > 0"
    if hess is None:
        hess = problem.hess_lag(x, y - mu * beta1)
    M = np.array(hess, dtype=float)
    M = 0.5 * (M + M.T)
    if m:
        if jac is None:
            jac = problem.jac(x)
        M += (jac.T * (y / s)) @ jac
        M = 0.5 * (M + M.T)
    else:
        jac = np.zeros((0, problem.n))
    return SchurMatrix(M=M, x=np.array(x, float), s=np.array(s, float),
                       y=np.array(y, float), mu=float(mu), jac=jac)


def _try_cholesky(A: np.ndarray) -> np.ndarray | None:
    # ValueError covers non-finite entries (overflowed assembly); treating
    # it as a failed trial lets the shift loop run out to the cap instead
    # of crashing the solve.
    try:
        return scipy.linalg.cholesky(A, lower=True)
    except (scipy.linalg.LinAlgError, ValueError):
        return None


def factorize_with_shift(
    schur: SchurMatrix,
    delta_in: float,
    state: DeltaState,
) -> FactorizedSystem:
    """Factor ``M + delta*I`` choosing delta by trial Cholesky.

    ``delta_in`` is the caller's previous shift (0 on the first outer
    iteration).  If ``min diag(M) > 0`` an unshifted factorization is tried
    first; otherwise the shift restarts at
    ``max(delta_in / delta_dec, delta_min - tau)`` and is multiplied by
    ``delta_inc`` after every failure.  Raises :class:`MaxDeltaError` once
    ``delta >= delta_max``.  On success ``state.delta_prev`` is set to the
    returned shift.
    """
    M = schur.M
    n = M.shape[0]
    tau = float(np.min(np.diag(M)))
    attempts = 0

    if tau > 0:
        attempts += 1
        L = _try_cholesky(M)
        if L is not None:
            state.delta_prev = 0.0
            return FactorizedSystem(schur=schur, delta=0.0, factor=L, attempts=attempts)
        tau = 0.0

    delta = max(delta_in / state.delta_dec, state.delta_min - tau)
    eye = np.eye(n)
    while True:
        if delta >= state.delta_max:
            raise MaxDeltaError(delta, state.delta_max)
        attempts += 1
        L = _try_cholesky(M + delta * eye)
        if L is not None:
            state.delta_prev = delta
            return FactorizedSystem(schur=schur, delta=delta, factor=L, attempts=attempts)
        delta = state.delta_inc * delta


def solve_shifted(fs: FactorizedSystem, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(M + delta*I) d = rhs`` via the stored factor.

    One round of iterative refinement is applied when the raw residual
    exceeds ``1e-10 * (1 + ||rhs||_inf)``; Cholesky backsolves alone lose
    accuracy near convergence.
    """
    A = fs.schur.M + fs.delta * np.eye(fs.schur.M.shape[0])
    d = scipy.linalg.cho_solve((fs.factor, True), rhs)
    fs.solves += 1
    resid = rhs - A @ d
    if np.abs(resid).max(initial=0.0) > 1e-10 * (1.0 + np.abs(rhs).max(initial=0.0)):
        d = d + scipy.linalg.cho_solve((fs.factor, True), resid)
        fs.solves += 1
    return d


def escalate_delta(
    state: DeltaState,
    delta: float,
    grad_norm: float,
    dx_norm: float,
) -> float:
    """Shift increase after a failed first inner iteration.

    Returns ``max(delta_inc*delta, delta_prev/delta_dec,
    grad_norm/dx_norm)`` with ``delta_min`` substituted only when all
    three terms vanish.  Keeping ``delta_min`` out of the max preserves
    scale invariance: diverging problems need shifts far below it (the
    right shift is about gradient over step length), and flooring there
    would cap the step length and stall the divergence certificate.
    Raises :class:`MaxDeltaError` when the result exceeds the cap.
    ``dx_norm`` must be positive (a direction exists).
    """
    assert dx_norm > 0, "escalate_delta needs a nonzero direction"
    new = max(
        state.delta_inc * delta,
        state.delta_prev / state.delta_dec,
        grad_norm / dx_norm,
    )
    if new == 0.0:
        new = state.delta_min
    if new > state.delta_max:
        raise MaxDeltaError(new, state.delta_max)
    return new
