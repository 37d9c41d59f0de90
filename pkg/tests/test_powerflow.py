import numpy as np
import pytest

from outageid.netmodel import remove_lines
from outageid.powerflow import (
    PowerFlowError,
    SteadyState,
    angle_delta,
    jacobian_at,
    solve_power_flow,
)

from conftest import two_bus
from oracles import fd_jacobian, p_injection


class TestBaseCase:
    def test_converges(self, base39):
        assert base39.converged
        assert base39.iterations <= 10
        assert base39.residual <= 1e-8

    def test_matches_golden(self, net39, base39, golden39):
        assert list(net39.bus_ids) == golden39["bus"]
        np.testing.assert_allclose(np.degrees(base39.theta), golden39["theta_deg"], atol=1e-6, rtol=0)
        np.testing.assert_allclose(base39.vmag, golden39["vmag"], atol=1e-6, rtol=0)

    def test_reference_angle_is_zero(self, net39, base39):
        assert base39.theta[net39.reference - 1] == 0.0

    def test_injections_reproduce_specification(self, net39, base39):
        p = p_injection(net39, base39.theta, base39.vmag)
        slack = net39.reference - 1
        mask = np.arange(39) != slack
        assert np.max(np.abs(p[mask] - net39.p_spec[mask])) <= 1e-8
        np.testing.assert_allclose(p, base39.p, atol=1e-10)

    def test_deterministic(self, net39, base39):
        again = solve_power_flow(net39)
        assert np.array_equal(again.theta, base39.theta)
        assert np.array_equal(again.vmag, base39.vmag)


class TestTwoBus:
    def test_flat_case_one_iteration(self):
        s = solve_power_flow(two_bus())
        assert s.converged and s.iterations == 1
        np.testing.assert_array_equal(s.theta, 0.0)
        np.testing.assert_array_equal(s.vmag, 1.0)

    def test_beyond_nose_point_does_not_converge(self):
        # the line can carry at most V^2 / (2x) = 5 p.u. to a unity-factor load
        s = solve_power_flow(two_bus(pd=800))
        assert not s.converged

    def test_within_capacity_converges(self):
        s = solve_power_flow(two_bus(pd=200, qd=50))
        assert s.converged
        assert s.theta[1] < 0

    def test_jacobian_entry(self):
        m = two_bus()
        jac = jacobian_at(m, solve_power_flow(m))
        np.testing.assert_allclose(jac.j1, [[10.0]], atol=1e-12)
        np.testing.assert_allclose(jac.dp_dtheta, [[10.0, -10.0], [-10.0, 10.0]], atol=1e-12)


def test_full_angle_block_rows_sum_to_zero(net39, base39):
    jac = jacobian_at(net39, base39)
    assert np.max(np.abs(jac.dp_dtheta.sum(axis=1))) <= 1e-10
    assert jac.j1.shape == (38, 38)


def test_jacobian_matches_finite_differences(net39, base39, rng):
    for _ in range(20):
        theta = base39.theta + rng.normal(0, 0.05, 39)
        vmag = base39.vmag * (1 + rng.uniform(-0.03, 0.03, 39))
        state = SteadyState(theta, vmag, base39.p, base39.q, True, 0, 0.0, net39.reference)
        jac = jacobian_at(net39, state)
        dth, dv = fd_jacobian(net39, theta, vmag)
        k = jac.keep
        fd1, fd2 = dth[np.ix_(k, k)], dv[np.ix_(k, k)]
        assert np.max(np.abs(jac.j1 - fd1)) / np.max(np.abs(fd1)) <= 1e-5
        assert np.max(np.abs(jac.j2 - fd2)) / np.max(np.abs(fd2)) <= 1e-5


def test_jacobian_dimension_mismatch(net39, base39):
    bad = SteadyState(np.zeros(3), np.ones(3), np.zeros(3), np.zeros(3), True, 1, 0.0)
    with pytest.raises(ValueError, match="3 buses"):
        jacobian_at(net39, bad)


class TestAngleDelta:
    def test_same_state(self, base39):
        np.testing.assert_array_equal(angle_delta(base39, base39, [3, 7, 31]), 0.0)

    def test_full_observability(self, net39, base39):
        post = solve_power_flow(remove_lines(net39, {17, 25}))
        full = angle_delta(base39, post, range(1, 40))
        np.testing.assert_array_equal(full, post.theta - base39.theta)

    def test_order_is_ascending(self, net39, base39):
        post = solve_power_flow(remove_lines(net39, {5}))
        d = angle_delta(base39, post, [9, 2, 30])
        np.testing.assert_array_equal(d, (post.theta - base39.theta)[[1, 8, 29]])

    def test_rejects_unconverged(self, base39):
        bad = SteadyState(base39.theta, base39.vmag, base39.p, base39.q, False, 20, 1.0)
        with pytest.raises(PowerFlowError):
            angle_delta(base39, bad, [1])


def test_invalid_options(net39):
    with pytest.raises(ValueError):
        solve_power_flow(net39, tol=0)
    with pytest.raises(ValueError):
        solve_power_flow(net39, max_iter=0)
