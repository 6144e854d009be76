import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from onephase import (
    SolverOptions,
    aggressive_criterion,
    check_interior,
    gamma_far,
    gamma_inf,
    merit_kkt,
    merit_phi,
    merit_psi,
    sigma,
    terminate_infeasible,
    terminate_optimal,
    terminate_unbounded,
    update_iterate,
)
from onephase.iterate import StepRejected
from onephase.steps import Direction

from helpers import linear_problem, raw_iterate


def direction(dx, ds, dy, gamma):
    dx = np.atleast_1d(np.asarray(dx, float))
    ds = np.atleast_1d(np.asarray(ds, float))
    dy = np.atleast_1d(np.asarray(dy, float))
    return Direction(dx=dx, ds=ds, dy=dy, gamma=gamma,
                     b_d=np.zeros_like(dx), b_p=np.zeros_like(ds),
                     b_c=np.zeros_like(ds))


class TestUpdateIterate:
    def problem(self):
        # a(x) = x, f = 0
        return linear_problem([0.0], [[1.0]], [0.0])

    def test_stabilization_keeps_mu_bitwise(self):
        p = self.problem()
        mu = 0.7300000000000001
        cur = raw_iterate(mu, [-1.0], [mu * 1.0 + 1.0], [1.0], [1.0], jac=[[1.0]])
        new = update_iterate(cur, direction(-0.1, 0.1, 0.0, 1.0), 0.8, 0.0, p)
        assert new.mu == mu  # bit-identical
        assert_allclose(new.primal_residual(), [0.0], atol=1e-12)

    def test_affine_step_halves_mu(self):
        p = self.problem()
        cur = raw_iterate(1.0, [-2.0], [3.0], [0.5], [1.0], jac=[[1.0]])
        new = update_iterate(cur, direction(0.0, 0.0, 0.0, 0.0), 0.5, 0.0, p)
        assert new.mu == 0.5

    def test_linear_slack_update_matches_step(self):
        # w=1, mu=1, x=0, s=1, gamma=0, d_x=-0.4 so d_s = -mu*w - J d_x = -0.6;
        # at alpha_P = 0.5: x+=-0.2, mu+=0.5, s+ = 0.5 - (-0.2) = 0.7 = s + 0.5*d_s.
        p = self.problem()
        cur = raw_iterate(1.0, [0.0], [1.0], [1.0], [1.0], jac=[[1.0]])
        d = direction(-0.4, -0.6, 0.0, 0.0)
        new = update_iterate(cur, d, 0.5, 0.0, p)
        assert_allclose(new.x, [-0.2])
        assert new.mu == 0.5
        assert_allclose(new.s, [0.7])
        assert_allclose(new.s, cur.s + 0.5 * d.ds)

    def test_lost_interiority_signals(self):
        p = self.problem()
        cur = raw_iterate(1.0, [0.0], [1.0], [1.0], [1.0], jac=[[1.0]])
        with pytest.raises(StepRejected):
            # x+ = 2 makes s+ = mu+ w - a = 1 - 2 < 0
            update_iterate(cur, direction(2.0, 0.0, 0.0, 1.0), 1.0, 0.0, p)


class TestSolverOptionDefaults:
    def test_default_tuning_table(self):
        opts = SolverOptions()
        assert opts.eps_opt == 1e-6
        assert opts.eps_far == 1e-3
        assert opts.eps_inf == 1e-6
        assert opts.eps_unbd == 1e-12
        assert opts.beta1 == 1e-4
        assert opts.beta2 == 0.01
        assert opts.beta3 == 0.02
        assert opts.beta4 == 0.2
        assert opts.beta5 == 2.0 ** -5
        assert opts.beta6 == 0.5
        assert opts.beta_kkt == 0.01
        assert opts.beta_exp == 0.5
        assert opts.beta8 == 0.9
        assert opts.theta_b == 0.1
        assert opts.theta_p_linear == 0.1
        assert opts.theta_p_nonlinear == 0.25
        assert opts.delta_min == 1e-8
        assert opts.delta_inc == 8.0
        assert opts.delta_dec == pytest.approx(np.pi)
        assert opts.delta_max == 1e50
        assert opts.j_max == 2
        assert opts.beta10 == 1e-4
        assert opts.beta11 == 1e-2
        assert opts.beta12 == 1e3
        assert opts.mu_scale == 1.0
        assert opts.max_iter == 3000
        opts.validate()

    def test_interval_violations_rejected(self):
        for bad in (
            SolverOptions(beta2=0.0),
            SolverOptions(beta3=0.005),      # must exceed beta2
            SolverOptions(beta8=0.4),        # lives in (0.5, 1)
            SolverOptions(theta_p_linear=0.05),  # below theta_b
            SolverOptions(delta_max=1e-9),   # below delta_min
            SolverOptions(beta12=1e-3),      # below beta11
            SolverOptions(j_max=0),
        ):
            with pytest.raises(ValueError):
                bad.validate()


class TestCheckInterior:
    def test_centered_point(self):
        it = raw_iterate(1.0, [0.0], [1.0], [1.0], [0.0])
        assert check_interior(it, 0.01)

    def test_small_product_fails(self):
        it = raw_iterate(1.0, [0.0], [1.0], [0.005], [0.0])
        assert not check_interior(it, 0.01)

    def test_zero_mu_fails(self):
        it = raw_iterate(0.0, [0.0], [1.0], [1.0], [0.0])
        assert not check_interior(it, 0.01)


class TestSigma:
    def test_zero_duals(self):
        assert sigma(np.zeros(3)) == 1.0

    def test_large_duals(self):
        assert sigma(np.array([400.0, -1.0])) == 0.25

    def test_boundary(self):
        assert sigma(np.array([100.0])) == 1.0


class TestTerminateOptimal:
    def test_clean_kkt_point(self):
        # grad L_0 = 0 (zero objective gradient, zero jacobian), S y = 1e-7.
        it = raw_iterate(1.0, [0.0], [1.0], [1e-7], [0.0], a=[-1.0])
        assert terminate_optimal(it, 1e-6)

    def test_primal_residual_unscaled(self):
        it = raw_iterate(1.0, [0.0], [1.0 + 1e-3], [1e-9], [0.0], a=[-1.0])
        assert not terminate_optimal(it, 1e-6)

    def test_dual_scaling_admits_large_duals(self):
        # ||y||=1e6 shrinks sigma to 1e-4, so ||grad L_0|| = 5e-3 passes.
        it = raw_iterate(1.0, [0.0], [1e-9], [1e6], [0.0],
                         grad_f=[5e-3], a=[-1e-9], jac=[[0.0]])
        assert terminate_optimal(it, 1e-6)

    def test_monotone_in_tolerance(self):
        rng = np.random.default_rng(12)
        for _ in range(50):
            it = raw_iterate(
                rng.uniform(1e-8, 1.0), rng.standard_normal(1),
                rng.uniform(1e-9, 1.0, 1), rng.uniform(1e-9, 10.0, 1), [0.0],
                grad_f=rng.standard_normal(1) * 1e-5,
                a=-rng.uniform(1e-9, 1.0, 1), jac=rng.standard_normal((1, 1)))
            eps = float(rng.uniform(1e-8, 1e-4))
            if terminate_optimal(it, eps):
                assert terminate_optimal(it, eps * 10)


class TestGammaMeasures:
    def test_far_zero_at_stationarity(self):
        it = raw_iterate(1.0, [0.0], [1.0, 1.0], [1.0, 1.0], [0.0, 0.0],
                         a=[1.0, 0.0], jac=[[1.0], [-1.0]])
        assert gamma_far(it) == 0.0

    def test_far_hand_value(self):
        it = raw_iterate(1.0, [2.0], [1.0], [3.0], [0.0], a=[2.0], jac=[[1.0]])
        assert gamma_far(it) == pytest.approx(0.5)

    def test_far_undefined(self):
        it = raw_iterate(1.0, [0.0], [1.0], [1.0], [0.0], a=[-1.0], jac=[[1.0]])
        with pytest.raises(ValueError):
            gamma_far(it)

    def test_inf_hand_value(self):
        it = raw_iterate(1.0, [0.0], [0.5], [2.0], [0.0], a=[0.5], jac=[[1.0]])
        assert gamma_inf(it) == pytest.approx(1.5)

    def test_inf_scale_invariant(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            m = int(rng.integers(1, 5))
            it = raw_iterate(1.0, rng.standard_normal(2),
                             rng.uniform(0.1, 2.0, m), rng.uniform(0.1, 2.0, m),
                             np.zeros(m), a=rng.standard_normal(m),
                             jac=rng.standard_normal((m, 2)))
            t = float(rng.uniform(0.1, 100.0))
            scaled = raw_iterate(it.mu, it.x, it.s, t * it.y, it.w, a=it.a, jac=it.jac)
            assert gamma_inf(scaled) == pytest.approx(gamma_inf(it), rel=1e-12)

    def test_inf_zero_limit(self):
        it = raw_iterate(1.0, [0.0], [0.0, 0.0], [1.0, 1.0], [0.0, 0.0],
                         a=[1.0, 1.0], jac=[[1.0], [-1.0]])
        assert gamma_inf(it) == 0.0


class TestTerminateInfeasible:
    def test_certificate_holds(self):
        it = raw_iterate(1.0, [0.0], [1e-8, 1e-8], [1.0, 1.0], [1.0, 1.0],
                         a=[1.0, 1.0], jac=[[1.0], [-1.0]])
        assert terminate_infeasible(it, 1e-3, 1e-6)

    def test_nonpositive_pairing_blocks(self):
        it = raw_iterate(1.0, [0.0], [1e-8], [1.0], [1.0], a=[-1.0], jac=[[1.0]])
        assert not terminate_infeasible(it, 1e-3, 1e-6)

    def test_far_measure_blocks(self):
        it = raw_iterate(1.0, [0.0], [1e-9, 1e-9], [1.0, 1.0], [1.0, 1.0],
                         a=[1.0, 1.0], jac=[[1.0], [-0.98]])
        # gamma_far = 0.02/2 = 0.01 > 1e-3
        assert not terminate_infeasible(it, 1e-3, 1e-6)


class TestTerminateUnbounded:
    def test_diverged(self):
        it = raw_iterate(1.0, [1e13], [1.0], [1.0], [0.0])
        assert terminate_unbounded(it, 1e-12)

    def test_moderate(self):
        it = raw_iterate(1.0, [1.0], [1.0], [1.0], [0.0])
        assert not terminate_unbounded(it, 1e-12)

    def test_boundary(self):
        it = raw_iterate(1.0, [1e12], [1.0], [1.0], [0.0])
        assert terminate_unbounded(it, 1e-12)


class TestAggressiveCriterion:
    def test_exact_shifted_solution(self):
        # grad L_mu = 0 and s y = mu: all three clauses slack.
        beta1 = 1e-4
        it = raw_iterate(1.0, [0.0], [1.0], [1.0], [0.5],
                         grad_f=[-(1.0 - beta1)], a=[-0.5], jac=[[1.0]])
        assert aggressive_criterion(it, beta1, 0.02)

    def test_complementarity_buffer_blocks(self):
        beta1 = 1e-4
        it = raw_iterate(1.0, [0.0], [1.0], [0.015], [0.5],
                         grad_f=[-(0.015 - beta1)], a=[-0.5], jac=[[1.0]])
        assert not aggressive_criterion(it, beta1, 0.02)

    def test_unsolved_barrier_blocks(self):
        beta1 = 1e-4
        it = raw_iterate(1.0, [0.0], [1.0], [1.0], [0.5],
                         grad_f=[2.0 - (1.0 - beta1)], a=[-0.5], jac=[[1.0]])
        assert not aggressive_criterion(it, beta1, 0.02)


class TestMerits:
    def test_psi_plain_log(self):
        it = raw_iterate(1.0, [0.0], [1.0], [1.0], [0.0], f=0.0, a=[-1.0])
        assert merit_psi(it, 0.0) == pytest.approx(0.0, abs=1e-15)

    def test_psi_shifted(self):
        it = raw_iterate(1.0, [0.0], [2.0], [1.0], [1.0], f=0.0, a=[-1.0])
        assert merit_psi(it, 1e-4) == pytest.approx(1e-4 - math.log(2.0), rel=1e-12)

    def test_psi_boundary_signal(self):
        it = raw_iterate(1.0, [0.0], [0.0], [1.0], [1.0], f=0.0, a=[1.0])
        assert merit_psi(it, 1e-4) == math.inf

    def test_phi_equals_psi_when_centered(self):
        it = raw_iterate(1.0, [0.0], [2.0], [0.5], [1.0], f=0.3, a=[-1.0])
        assert merit_phi(it, 1e-4) == pytest.approx(merit_psi(it, 1e-4), rel=1e-12)

    def test_phi_cubic_term(self):
        it = raw_iterate(1.0, [0.0], [2.0], [1.0], [1.0], f=0.0, a=[-1.0])
        psi = merit_psi(it, 0.0)
        assert merit_phi(it, 0.0) == pytest.approx(psi + 1.0, rel=1e-12)

    def test_phi_hand_value(self):
        # psi = 0, |Sy - mu| = 0.2, mu = 0.5 -> 0.008/0.25 = 0.032
        it = raw_iterate(0.5, [0.0], [1.0], [0.7], [0.0], f=0.0, a=[-1.0])
        assert merit_psi(it, 0.0) == pytest.approx(0.0, abs=1e-15)
        assert merit_phi(it, 0.0) == pytest.approx(0.032, rel=1e-12)

    def test_kkt_zero_at_center(self):
        beta1 = 0.0
        it = raw_iterate(1.0, [0.0], [1.0], [1.0], [0.0],
                         grad_f=[-1.0], a=[-1.0], jac=[[1.0]])
        assert merit_kkt(it, beta1) == 0.0

    def test_kkt_max_of_pair(self):
        it = raw_iterate(1.0, [0.0], [2.0], [1.0], [0.0],
                         grad_f=[2.0], a=[-2.0], jac=[[1.0]])
        # grad L = 2 + 1 = 3, Sy - mu = 1
        assert merit_kkt(it, 0.0) == pytest.approx(3.0)

    def test_kkt_scaled(self):
        it = raw_iterate(1.0, [0.0], [0.01], [200.0], [0.0],
                         grad_f=[-197.0], a=[-0.01], jac=[[1.0]])
        # sigma = 0.5, grad L = 3, Sy - mu = 1
        assert merit_kkt(it, 0.0) == pytest.approx(1.5)
