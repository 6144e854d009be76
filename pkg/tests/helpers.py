"""Shared constructors for solver tests."""

import numpy as np

from onephase import Iterate, NlpProblem


def linear_problem(grad, jac_rows, a_consts, name="toy"):
    """NlpProblem with constant objective gradient and affine constraints
    a_i(x) = jac_rows[i] @ x + a_consts[i]."""
    grad = np.asarray(grad, float)
    J = np.atleast_2d(np.asarray(jac_rows, float))
    c = np.asarray(a_consts, float)
    n = grad.shape[0]
    m = J.shape[0] if c.size else 0
    return NlpProblem(
        n=n,
        m=m,
        eval_f=lambda x: float(grad @ x),
        eval_grad_f=lambda x: grad,
        eval_a=lambda x: J @ x + c,
        eval_jac=lambda x: J,
        eval_hess_lag=lambda x, v: np.zeros((n, n)),
        linear_indices=frozenset(range(m)),
        name=name,
    )


def quadratic_problem(H, g, jac_rows=None, a_consts=None, name="toy-qp"):
    """NlpProblem for f = 0.5 x'Hx + g'x with affine constraints."""
    H = np.asarray(H, float)
    g = np.asarray(g, float)
    n = g.shape[0]
    if jac_rows is None:
        J = np.zeros((0, n))
        c = np.zeros(0)
    else:
        J = np.atleast_2d(np.asarray(jac_rows, float))
        c = np.asarray(a_consts, float)
    m = J.shape[0]
    return NlpProblem(
        n=n,
        m=m,
        eval_f=lambda x: 0.5 * float(x @ (H @ x)) + float(g @ x),
        eval_grad_f=lambda x: H @ x + g,
        eval_a=lambda x: J @ x + c,
        eval_jac=lambda x: J,
        eval_hess_lag=lambda x, v: H,
        linear_indices=frozenset(range(m)),
        name=name,
    )


def raw_iterate(mu, x, s, y, w, f=0.0, grad_f=None, a=None, jac=None):
    """Iterate with every cache supplied explicitly (no problem needed)."""
    x = np.atleast_1d(np.asarray(x, float))
    s = np.atleast_1d(np.asarray(s, float))
    y = np.atleast_1d(np.asarray(y, float))
    w = np.atleast_1d(np.asarray(w, float))
    n, m = x.shape[0], s.shape[0]
    return Iterate(
        mu=float(mu),
        x=x,
        s=s,
        y=y,
        w=w,
        f=float(f),
        grad_f=np.zeros(n) if grad_f is None else np.atleast_1d(np.asarray(grad_f, float)),
        a=(mu * w - s) if a is None else np.atleast_1d(np.asarray(a, float)),
        jac=np.zeros((m, n)) if jac is None else np.atleast_2d(np.asarray(jac, float)),
    )


def random_interior_setup(rng, n=None, m=None):
    """Random linear-constraint problem plus an iterate satisfying the
    residual identity a(x) + s = mu*w and the complementarity corridor."""
    n = int(rng.integers(1, 6)) if n is None else n
    m = int(rng.integers(1, 6)) if m is None else m
    H = rng.standard_normal((n, n))
    H = 0.5 * (H + H.T)
    J = rng.standard_normal((m, n))
    x = rng.standard_normal(n)
    mu = float(rng.uniform(0.05, 2.0))
    s = rng.uniform(0.2, 2.0, m)
    # complementarity ratio in the corridor, well inside [beta2, 1/beta2]
    ratio = rng.uniform(0.1, 10.0, m)
    y = ratio * mu / s
    w = rng.uniform(0.0, 2.0, m)
    c = mu * w - s - J @ x          # makes a(x) = mu*w - s at this x
    g_obj = rng.standard_normal(n)
    b = g_obj - H @ x               # so grad f(x) = g_obj

    problem = NlpProblem(
        n=n,
        m=m,
        eval_f=lambda z: 0.5 * float(z @ (H @ z)) + float(b @ z),
        eval_grad_f=lambda z: H @ z + b,
        eval_a=lambda z: J @ z + c,
        eval_jac=lambda z: J,
        eval_hess_lag=lambda z, v: H,
        linear_indices=frozenset(range(m)),
        name="random-linear",
    )
    it = Iterate(mu=mu, x=x, s=s, y=y, w=w,
                 f=problem.f(x), grad_f=problem.grad_f(x),
                 a=problem.a(x), jac=problem.jac(x))
    return problem, it
