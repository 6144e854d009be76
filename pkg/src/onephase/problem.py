"""Problem abstraction: min f(x) subject to a(x) <= 0.

The solver works exclusively with inequality constraints.  Richer source
descriptions (equalities, >=, variable boxes) are lowered to this form by
:func:`to_inequality_form`, which also records the mapping back to the
original constraints.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class EvaluationError(RuntimeError):
    """A user callback produced a non-finite value.

    Carries the name of the callback and the flat index of the first
    offending entry so the failure can be reported precisely.
    """

    def __init__(self, what: str, index: int | None = None):
        self.what = what
        self.index = index
        loc = "" if index is None else f" at entry {index}"
        super().__init__(f"non-finite value from {what}{loc}")


def _check_finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(np.atleast_1d(arr)))[0])
        raise EvaluationError(what, bad)
    return arr


@dataclass
class NlpProblem:
    """Inequality-form nonlinear program with user-supplied derivatives.

    ``eval_hess_lag(x, v)`` must return the already-assembled matrix
    ``hess(f)(x) + sum_i v_i * hess(a_i)(x)``; the solver supplies the
    weight vector, so individual constraint Hessians are never requested.
    Callbacks must be pure; a single solve calls them from one thread.
    """

    n: int
    m: int
    eval_f: Callable[[np.ndarray], float]
    eval_grad_f: Callable[[np.ndarray], np.ndarray]
    eval_a: Callable[[np.ndarray], np.ndarray]
    eval_jac: Callable[[np.ndarray], np.ndarray]
    eval_hess_lag: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bound_indices: frozenset = frozenset()
    linear_indices: frozenset = frozenset()
    name: str = "problem"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("problem needs at least one variable")
        if self.m < 0:
            raise ValueError("negative constraint count")
        if not self.bound_indices <= set(range(self.m)):
            raise ValueError("bound_indices outside {0..m-1}")
        if not self.linear_indices <= set(range(self.m)):
            raise ValueError("linear_indices outside {0..m-1}")

    # Validating wrappers; all solver code goes through these.
    def f(self, x: np.ndarray) -> float:
        val = float(self.eval_f(x))
        if not np.isfinite(val):
            raise EvaluationError("f")
        return val

    def grad_f(self, x: np.ndarray) -> np.ndarray:
        g = np.asarray(self.eval_grad_f(x), dtype=float).reshape(self.n)
        return _check_finite(g, "grad_f")

    def a(self, x: np.ndarray) -> np.ndarray:
        v = np.asarray(self.eval_a(x), dtype=float).reshape(self.m)
        return _check_finite(v, "a")

    def jac(self, x: np.ndarray) -> np.ndarray:
        J = np.asarray(self.eval_jac(x), dtype=float).reshape(self.m, self.n)
        return _check_finite(J, "jac")

    def hess_lag(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        H = np.asarray(self.eval_hess_lag(x, v), dtype=float)
        H = H.reshape(self.n, self.n)
        _check_finite(H, "hess_lag")
        if __debug__:
            scale = max(1.0, float(np.abs(H).max()))
            assert np.abs(H - H.T).max() <= 1e-12 * scale, (
                "eval_hess_lag returned an asymmetric matrix"
            )
        return H


def modified_lagrangian_gradient(
    problem: NlpProblem,
    x: np.ndarray,
    y: np.ndarray,
    mu: float,
    beta1: float,
) -> np.ndarray:
    """grad f(x) + jac(x)^T (y - mu*beta1*e).

    With ``mu == 0`` this is the classical Lagrangian gradient used by the
    optimality test.  Evaluation failures propagate as
    :class:`EvaluationError`.
    """
    g = problem.grad_f(x)
    if problem.m == 0:
        return g
    J = problem.jac(x)
    return g + J.T @ (y - mu * beta1)


class Relation(enum.Enum):
    LE = "<="
    GE = ">="
    EQ = "=="


@dataclass
class SourceConstraint:
    """One constraint ``func(x) REL rhs`` of a source problem."""

    func: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    relation: Relation
    rhs: float
    hess: Optional[Callable[[np.ndarray], np.ndarray]] = None
    linear: bool = False


@dataclass
class SourceProblem:
    """Mixed-form problem before lowering to pure inequalities.

    Variable bounds are given as ``lower``/``upper`` arrays with +-inf for
    absent bounds.  Constraints may be <=, >= or ==; equalities are split
    into two opposing inequalities by :func:`to_inequality_form`.
    """

    n: int
    eval_f: Callable[[np.ndarray], float]
    eval_grad_f: Callable[[np.ndarray], np.ndarray]
    eval_hess_f: Callable[[np.ndarray], np.ndarray]
    constraints: Sequence[SourceConstraint] = ()
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    name: str = "problem"


@dataclass
class TransformRow:
    """Where inequality row i came from: ``a_i(x) = sign*(func(x) - rhs)``.

    ``source_kind`` is "constraint" (index into the source constraint
    list), "lower" or "upper" (index is then a variable index).
    """

    source_kind: str
    source_index: int
    sign: int


@dataclass
class ProblemTransform:
    rows: list[TransformRow] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.rows)


def to_inequality_form(source: SourceProblem) -> tuple[NlpProblem, ProblemTransform]:
    """Lower a mixed-form problem to ``a(x) <= 0`` rows.

    Equalities ``c(x) = b`` become the pair ``c(x)-b <= 0`` and
    ``b-c(x) <= 0``.  Box bounds become single-coefficient rows flagged in
    ``bound_indices``.  Rejects inconsistent bound pairs (l > u) naming the
    variable.
    """
    n = source.n
    lower = np.full(n, -np.inf) if source.lower is None else np.asarray(source.lower, float)
    upper = np.full(n, np.inf) if source.upper is None else np.asarray(source.upper, float)
    if lower.shape != (n,) or upper.shape != (n,):
        raise ValueError("bound arrays must have length n")
    for j in range(n):
        if lower[j] > upper[j]:
            raise ValueError(f"inconsistent bounds for variable {j}: "
                             f"lower {lower[j]} > upper {upper[j]}")

    transform = ProblemTransform()
    # Per-row evaluation data: (kind, payload).  Constraint rows carry
    # (sign, SourceConstraint); bound rows carry (sign, var index, const).
    row_defs: list[tuple] = []
    bound_idx: set[int] = set()
    linear_idx: set[int] = set()

    for k, con in enumerate(source.constraints):
        if con.relation is Relation.LE:
            signs = (+1,)
        elif con.relation is Relation.GE:
            signs = (-1,)
        else:
            signs = (+1, -1)
        for sign in signs:
            i = len(row_defs)
            row_defs.append(("constraint", sign, con))
            transform.rows.append(TransformRow("constraint", k, sign))
            if con.linear:
                linear_idx.add(i)

    for j in range(n):
        if np.isfinite(lower[j]):
            i = len(row_defs)
            row_defs.append(("bound", -1, j, float(lower[j])))
            transform.rows.append(TransformRow("lower", j, -1))
            bound_idx.add(i)
            linear_idx.add(i)
        if np.isfinite(upper[j]):
            i = len(row_defs)
            row_defs.append(("bound", +1, j, float(upper[j])))
            transform.rows.append(TransformRow("upper", j, +1))
            bound_idx.add(i)
            linear_idx.add(i)

    m = len(row_defs)

    def eval_a(x: np.ndarray) -> np.ndarray:
        out = np.empty(m)
        for i, row in enumerate(row_defs):
            if row[0] == "constraint":
                _, sign, con = row
                out[i] = sign * (con.func(x) - con.rhs)
            else:
                _, sign, j, c = row
                # lower: c - x_j <= 0;  upper: x_j - c <= 0
                out[i] = sign * x[j] - sign * c
        return out

    def eval_jac(x: np.ndarray) -> np.ndarray:
        J = np.zeros((m, n))
        for i, row in enumerate(row_defs):
            if row[0] == "constraint":
                _, sign, con = row
                J[i] = sign * np.asarray(con.grad(x), float)
            else:
                _, sign, j, _c = row
                J[i, j] = sign
        return J

    def eval_hess_lag(x: np.ndarray, v: np.ndarray) -> np.ndarray:
        H = np.asarray(source.eval_hess_f(x), float).copy()
        for i, row in enumerate(row_defs):
            if row[0] == "constraint":
                _, sign, con = row
                if con.hess is not None:
                    H += v[i] * sign * np.asarray(con.hess(x), float)
        return H

    problem = NlpProblem(
        n=n,
        m=m,
        eval_f=source.eval_f,
        eval_grad_f=source.eval_grad_f,
        eval_a=eval_a,
        eval_jac=eval_jac,
        eval_hess_lag=eval_hess_lag,
        bound_indices=frozenset(bound_idx),
        linear_indices=frozenset(linear_idx),
        name=source.name,
    )
    return problem, transform


@dataclass
class DerivativeReport:
    """Max elementwise errors of analytic derivatives vs central differences."""

    grad_f_error: float
    jac_error: float
    hess_error: float

    def max_error(self) -> float:
        return max(self.grad_f_error, self.jac_error, self.hess_error)


def _rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    analytic = np.atleast_1d(np.asarray(analytic, float))
    fd = np.atleast_1d(np.asarray(fd, float))
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.abs(fd))
    return float(np.max(np.abs(analytic - fd) / denom))


def check_derivatives(problem: NlpProblem, x: np.ndarray, h: float = 1e-6) -> DerivativeReport:
    """Compare callbacks against central finite differences at ``x``.

    The Hessian is probed through the Lagrangian gradient with unit
    constraint weights.  Report-only: never raises on mismatch.
    """
    x = np.asarray(x, float)
    n, m = problem.n, problem.m
    v = np.ones(m)

    fd_grad = np.empty(n)
    fd_jac = np.empty((m, n))
    fd_hess = np.empty((n, n))
    for j in range(n):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        denom = xp[j] - xm[j]  # realized step; exact for nearby floats
        fd_grad[j] = (problem.f(xp) - problem.f(xm)) / denom
        if m:
            fd_jac[:, j] = (problem.a(xp) - problem.a(xm)) / denom

        def lag_grad(z):
            g = problem.grad_f(z)
            return g if m == 0 else g + problem.jac(z).T @ v

        fd_hess[:, j] = (lag_grad(xp) - lag_grad(xm)) / denom

    return DerivativeReport(
        grad_f_error=_rel_err(problem.grad_f(x), fd_grad),
        jac_error=_rel_err(problem.jac(x), fd_jac) if m else 0.0,
        hess_error=_rel_err(problem.hess_lag(x, v), 0.5 * (fd_hess + fd_hess.T)),
    )
