import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinnworks.expr import parse_system
from pinnworks.loss import (
    AdaptiveConfig, LossAssembly, adaptive_update, boundary_loss, grid_plan,
    monte_carlo_plan, residual_loss, total_loss,
)
from pinnworks.models import preset
from pinnworks.net import SYMBOLIC, NetworkEnsemble, SubNetwork, init_ensemble, param_gradient


def unit_rate():
    return parse_system("d(x)/dt = 1; init x=0; domain 0 1")


def linear_net(slope, intercept):
    # a single affine layer: u(t) = slope * t + intercept
    return NetworkEnsemble(SYMBOLIC, [SubNetwork((1, 1))], np.array([slope, intercept]))


def zero_net(system, hidden=(4,)):
    ens = init_ensemble(SYMBOLIC, system.dim, hidden)
    return ens.with_theta(np.zeros(ens.param_count))


# --- sampling plans ---------------------------------------------------------

def test_grid_points_exclude_t0_and_reach_t1():
    plan = grid_plan(0.0, 1.0, 0.25)
    np.testing.assert_allclose(plan.points, [0.25, 0.5, 0.75, 1.0])
    np.testing.assert_array_equal(plan.weights, 0.25)


def test_default_grid_has_1000_points():
    plan = grid_plan(0.0, 10.0)
    assert len(plan.points) == 1000
    assert plan.points[0] == pytest.approx(0.01) and plan.points[-1] == pytest.approx(10.0)


def test_trapezoid_grid_halves_end_weights():
    plan = grid_plan(0.0, 1.0, 0.25, quadrature="trapezoid")
    np.testing.assert_allclose(plan.points, [0.0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(plan.weights, [0.125, 0.25, 0.25, 0.25, 0.125])
    assert plan.weights.sum() == pytest.approx(1.0)


def test_monte_carlo_plan_is_seeded_and_in_range():
    a = monte_carlo_plan(0.0, 10.0, 500, seed=3)
    b = monte_carlo_plan(0.0, 10.0, 500, seed=3)
    np.testing.assert_array_equal(a.points, b.points)
    assert np.all(a.points > 0.0) and np.all(a.points <= 10.0)
    assert a.alpha == pytest.approx(0.02)
    np.testing.assert_array_equal(a.weights, a.alpha)


@pytest.mark.parametrize("args", [(0.0, 1.0, 0.0), (0.0, 1.0, -0.1), (0.0, 1.0, 2.0)])
def test_bad_grids(args):
    with pytest.raises(ValueError):
        grid_plan(*args)


def test_bad_monte_carlo_and_quadrature():
    with pytest.raises(ValueError):
        monte_carlo_plan(0.0, 1.0, 0)
    with pytest.raises(ValueError):
        grid_plan(0.0, 1.0, 0.1, quadrature="simpson")


# --- residual and boundary terms -------------------------------------------

def test_hand_computed_grid_loss():
    # zero network against d(x)/dt = 1: four points, each 0.25 * (1 - 0)^2
    s = unit_rate()
    ens = zero_net(s)
    assert residual_loss(s, ens, ens.theta, grid_plan(0.0, 1.0, 0.25)) == [1.0]


def test_exact_solution_has_zero_residual():
    s = parse_system("d(x)/dt = 2; init x=0.5; domain 0 3")
    ens = linear_net(2.0, 0.5)
    for plan in (grid_plan(0, 3, 0.01), grid_plan(0, 3, 0.1, "trapezoid"), monte_carlo_plan(0, 3, 50, 1)):
        assert residual_loss(s, ens, ens.theta, plan) == [0.0]
    assert boundary_loss(s, ens, ens.theta) == [0.0]


def test_constant_network():
    s = parse_system("d(x)/dt = 0; init x=1.5; domain 0 1")
    ens = zero_net(s, hidden=(3,))
    theta = ens.theta.copy()
    theta[-1] = 4.0   # output bias
    assert residual_loss(s, ens, theta, grid_plan(0, 1, 0.1)) == [0.0]
    assert boundary_loss(s, ens, theta) == [(4.0 - 1.5) ** 2]


def test_zero_network_against_smib_initial_conditions():
    s, _ = preset("normal")
    ens = zero_net(s)
    assert boundary_loss(s, ens, ens.theta) == [1.0, 49.0]


def test_constant_residual_quadrature():
    s = unit_rate()
    ens = zero_net(s)
    (grid,) = residual_loss(s, ens, ens.theta, grid_plan(0, 1, 0.01))
    assert 0.99 <= grid <= 1.01
    (mc,) = residual_loss(s, ens, ens.theta, monte_carlo_plan(0, 1, 100_000, seed=0))
    assert mc == pytest.approx(1.0, rel=0.01)


def test_losses_are_non_negative():
    s, _ = preset("normal")
    for seed in range(5):
        ens = init_ensemble(SYMBOLIC, 2, seed=seed)
        plan = monte_carlo_plan(0, 10, 100, seed)
        assert min(residual_loss(s, ens, ens.theta, plan)) >= 0
        assert min(boundary_loss(s, ens, ens.theta)) >= 0


def test_wrong_theta_length():
    s = unit_rate()
    ens = zero_net(s)
    with pytest.raises(ValueError):
        residual_loss(s, ens, np.zeros(ens.param_count + 1), grid_plan(0, 1, 0.5))


# --- totals ----------------------------------------------------------------

def test_weighted_total_arithmetic():
    s, _ = preset("normal")
    asm = LossAssembly(s, init_ensemble(SYMBOLIC, 2), grid_plan(0, 10))
    assert asm.weighted_total([0.5, 0.25], [1.0, 49.0]) == 50.75


def test_total_matches_breakdown_and_doubling_adds_term():
    s, _ = preset("normal")
    ens = init_ensemble(SYMBOLIC, 2, seed=1)
    plan = grid_plan(0, 10, 0.1)
    asm = LossAssembly(s, ens, plan)
    total, b = total_loss(asm, ens.theta)
    assert total == pytest.approx(sum(b.residual) + sum(b.boundary), rel=1e-15)
    doubled = LossAssembly(s, ens, plan, boundary_weights=[1.0, 2.0])
    assert total_loss(doubled, ens.theta)[0] == pytest.approx(total + b.boundary[1], rel=1e-14)


def test_exact_network_zero_regardless_of_weights():
    s = parse_system("d(x)/dt = 2; init x=0.5; domain 0 3")
    ens = linear_net(2.0, 0.5)
    asm = LossAssembly(s, ens, grid_plan(0, 3), residual_weights=[7.0], boundary_weights=[1e6])
    assert total_loss(asm, ens.theta)[0] == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1e3), min_size=4, max_size=4), st.permutations(range(4)))
def test_total_invariant_under_term_order(values, order):
    s, _ = preset("normal")
    asm = LossAssembly(s, init_ensemble(SYMBOLIC, 2, hidden=(2,)), grid_plan(0, 10))
    a = asm.weighted_total(values[:2], values[2:])
    b = sum(values[i] for i in order)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-300)


def test_weights_must_be_positive():
    s = unit_rate()
    with pytest.raises(ValueError):
        LossAssembly(s, zero_net(s), grid_plan(0, 1), boundary_weights=[0.0])


def test_gradient_is_weighted_sum_of_term_gradients():
    s, _ = preset("normal")
    ens = init_ensemble(SYMBOLIC, 2, hidden=(5, 5), seed=4, domain=(0, 10))
    asm = LossAssembly(s, ens, grid_plan(0, 10, 0.1), residual_weights=[1.0, 3.0], boundary_weights=[2.0, 0.5])
    _, g = asm.value_and_grad(ens.theta)
    gf, gb = asm.term_gradients(ens.theta)
    expected = 1.0 * gf[0] + 3.0 * gf[1] + 2.0 * gb[0] + 0.5 * gb[1]
    np.testing.assert_allclose(g, expected, rtol=1e-10, atol=1e-12)
    closure = lambda th: sum(w * t for w, t in zip([1.0, 3.0, 2.0, 0.5], sum(asm.terms(th), [])))
    np.testing.assert_allclose(param_gradient(closure, ens.theta), g, rtol=1e-12, atol=1e-14)


def test_loss_gradient_matches_finite_differences():
    s, _ = preset("pole-slipping")
    ens = init_ensemble(SYMBOLIC, 2, hidden=(4,), seed=9, domain=(0, 10))
    asm = LossAssembly(s, ens, monte_carlo_plan(0, 10, 40, seed=2))
    _, g = asm.value_and_grad(ens.theta)
    h = 1e-6
    for i in range(0, ens.param_count, 3):
        e = np.zeros(ens.param_count)
        e[i] = h
        fd = (asm.value(ens.theta + e) - asm.value(ens.theta - e)) / (2 * h)
        assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)


# --- adaptive weights -------------------------------------------------------

def test_adaptive_arithmetic_example():
    # max |grad L_f| = 10, mean |grad L_b| = 0.5 -> w_hat = 20 -> 0.1 * 1 + 0.9 * 20
    gf = np.array([10.0, -3.0, 1.0, 0.0])
    gb = np.array([0.5, -0.5, 0.5, -0.5])
    (w,) = adaptive_update([1.0], gf, [gb], gamma=0.9)
    assert w == 18.1


def test_adaptive_fixed_point_and_gamma_zero():
    gf = np.array([4.0, 1.0])
    gb = np.array([1.0, 1.0])
    np.testing.assert_array_equal(adaptive_update([4.0], gf, [gb]), [4.0])
    np.testing.assert_array_equal(adaptive_update([2.5], gf, [gb], gamma=0.0), [2.5])


def test_zero_boundary_gradient_keeps_weight(caplog):
    with caplog.at_level("INFO"):
        w = adaptive_update([3.0, 1.0], np.ones(2), [np.zeros(2), np.ones(2)])
    assert w[0] == 3.0 and w[1] == pytest.approx(0.1 + 0.9)
    assert "zero gradient" in caplog.text


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-6, 1e6), min_size=2, max_size=2),
       st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3),
       st.floats(0, 1))
def test_weights_stay_positive(w, gf, gb, gamma):
    out = adaptive_update(w, np.array(gf), [np.array(gb), np.array(gb[::-1])], gamma)
    assert np.all(out > 0)


def test_assembly_adapt_changes_only_boundary_weights():
    s, _ = preset("normal")
    ens = init_ensemble(SYMBOLIC, 2, seed=0, domain=(0, 10))
    asm = LossAssembly(s, ens, grid_plan(0, 10, 0.1), AdaptiveConfig(True))
    assert asm.adapt(ens.theta)
    np.testing.assert_array_equal(asm.residual_weights, [1.0, 1.0])
    gf, gb = asm.term_gradients(ens.theta)
    w_hat = np.max(np.abs(gf[0] + gf[1])) / np.mean(np.abs(gb[0]))
    assert asm.boundary_weights[0] == pytest.approx(0.1 + 0.9 * w_hat, rel=1e-12)


def test_matched_pairing_uses_own_equation():
    s, _ = preset("normal")
    ens = init_ensemble(SYMBOLIC, 2, seed=0, domain=(0, 10))
    asm = LossAssembly(s, ens, grid_plan(0, 10, 0.1), AdaptiveConfig(True, pairing="matched"))
    gf, gb = asm.term_gradients(ens.theta)
    asm.adapt(ens.theta)
    w_hat = np.max(np.abs(gf[1])) / np.mean(np.abs(gb[1]))
    assert asm.boundary_weights[1] == pytest.approx(0.1 + 0.9 * w_hat, rel=1e-12)


@pytest.mark.parametrize("kwargs", [dict(period=0), dict(gamma=1.5), dict(pairing="any")])
def test_bad_adaptive_config(kwargs):
    with pytest.raises(ValueError):
        AdaptiveConfig(True, **kwargs)
