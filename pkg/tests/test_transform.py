import numpy as np
import pytest

from qtat.grid import build_grid
from qtat.operators import EllipticOperator
from qtat.transform import (
    TransformPlan,
    check_derivative_identity,
    default_t_targets,
    tail_bound,
    transform_signal,
    transform_trace,
    transform_value,
)
from qtat.wave import BoundaryTrace, FaceTrace, GrowthBound


def sampled(fn, tau_max, n):
    taus = np.linspace(0.0, tau_max, n)
    return np.asarray(fn(taus), dtype=float)


UNIT_GROWTH = GrowthBound(1.0, 0.0)


def test_constant_signal_has_unit_transform():
    # The kernel integrates to one; with tau_max >= 9 sqrt(t) the truncated
    # quadrature reproduces 1 within 1e-8.
    for t in (0.1, 0.5, 1.0):
        tau_max = 9.0 * np.sqrt(t)
        g = sampled(lambda tau: np.ones_like(tau), tau_max, 4097)
        value, tail = transform_value(g, tau_max, t)
        assert abs(value - 1.0) < 1e-8
        assert tail.bound < 1e-8


def test_cosine_closed_form():
    # T(cos(w tau))(t) = exp(-w^2 t), the Gaussian cosine integral.
    plan = TransformPlan(tau_max=12.0, t_targets=np.array([0.1, 0.5, 1.0]))
    for omega in (1.0, 2.0, 4.0):
        g = sampled(lambda tau: np.cos(omega * tau), plan.tau_max, 2 ** 16 + 1)
        values, tails = transform_signal(g, plan, UNIT_GROWTH)
        exact = np.exp(-omega ** 2 * plan.t_targets)
        rel = np.abs(values - exact) / exact
        assert rel.max() < 1e-6
        assert all(tb.bound < 1e-8 for tb in tails)


def test_brute_force_quadrature_oracle():
    # g = tau * exp(-tau) against a 1e6-point trapezoid oracle at t = 0.3.
    t, tau_max = 0.3, 10.0
    g_fn = lambda tau: tau * np.exp(-tau)
    value, _ = transform_value(sampled(g_fn, tau_max, 2 ** 15 + 1), tau_max, t)
    taus = np.linspace(0.0, tau_max, 10 ** 6 + 1)
    integrand = np.exp(-taus ** 2 / (4 * t)) * g_fn(taus) / np.sqrt(np.pi * t)
    oracle = np.trapezoid(integrand, taus)
    assert abs(value - oracle) < 1e-7


def test_moment_integral_tau_squared():
    # T(tau^2) = 2t from the Gaussian second moment.
    plan = TransformPlan(tau_max=12.0, t_targets=np.array([0.2, 0.7, 1.0]))
    g = sampled(lambda tau: tau ** 2, plan.tau_max, 2 ** 15 + 1)
    growth = GrowthBound(144.0, 0.0)
    values, _ = transform_signal(g, plan, growth)
    assert np.allclose(values, 2.0 * plan.t_targets, rtol=1e-7)


def test_positivity_and_sup_bound():
    rng = np.random.default_rng(11)
    coefs = rng.uniform(0.1, 1.0, 4)
    g_fn = lambda tau: sum(c * np.exp(-k * tau) for k, c in enumerate(coefs))
    g = sampled(g_fn, 10.0, 8193)
    plan = TransformPlan(tau_max=10.0, t_targets=default_t_targets(17))
    values, _ = transform_signal(g, plan, GrowthBound(float(g.max()), 0.0))
    assert values.min() >= 0.0
    assert values.max() <= g.max() * (1 + 1e-9)


def test_initial_value_recovery_small_t():
    # T g(t) -> g(0) as t -> 0+, exercised through the substitution branch
    # (t below the squared sampling step).
    g_fn = lambda tau: np.cos(3.0 * tau) + 0.5 * tau ** 2
    g = sampled(g_fn, 10.0, 501)  # h_tau = 0.02, h^2 = 4e-4 > 1e-4
    value, _ = transform_value(g, 10.0, 1e-4)
    g2_sup = 9.0 + 1.0
    assert abs(value - g_fn(0.0)) <= 1e-3 * (1 + g2_sup)


def test_linearity_node_wise():
    plan = TransformPlan(tau_max=8.0, t_targets=default_t_targets(9))
    a = sampled(np.sin, 8.0, 2049)
    b = sampled(np.cos, 8.0, 2049)
    va, _ = transform_signal(a, plan, UNIT_GROWTH)
    vb, _ = transform_signal(b, plan, UNIT_GROWTH)
    vab, _ = transform_signal(2.0 * a - 3.0 * b, plan, UNIT_GROWTH)
    assert np.allclose(vab, 2.0 * va - 3.0 * vb, rtol=0, atol=1e-13)


def test_tail_bound_monotonicity():
    growth = GrowthBound(2.0, 0.3)
    bounds_T = [tail_bound(growth, T, 0.5).bound for T in (6.0, 8.0, 12.0)]
    assert bounds_T[0] > bounds_T[1] > bounds_T[2]
    bounds_t = [tail_bound(growth, 10.0, t).bound for t in (0.1, 0.5, 1.0)]
    assert bounds_t[0] < bounds_t[1] < bounds_t[2]


def test_tail_bound_controls_truncation():
    # Doubling tau_max never moves the result by more than the old tail bound.
    g_fn = lambda tau: tau * np.exp(-0.5 * tau)
    growth = GrowthBound(1.0, 0.0)  # sup of g is 2/e < 1
    for t in (0.3, 1.0):
        short, tail = transform_value(sampled(g_fn, 6.0, 6 * 1024 + 1), 6.0, t, growth=growth)
        long, _ = transform_value(sampled(g_fn, 12.0, 12 * 1024 + 1), 12.0, t, growth=growth)
        assert abs(long - short) <= tail.bound + 1e-12


def test_derivative_identity_constant():
    plan = TransformPlan(tau_max=10.0, t_targets=np.array([0.2, 0.6, 1.0]))
    defect = check_derivative_identity(
        lambda tau: np.ones_like(tau), lambda tau: np.zeros_like(tau), plan
    )
    # both sides vanish up to the truncation tail of the g-side
    assert defect < 1e-9


def test_derivative_identity_cosine():
    plan = TransformPlan(tau_max=12.0, t_targets=np.array([0.1, 0.5, 1.0]))
    omega = 2.0
    defect = check_derivative_identity(
        lambda tau: np.cos(omega * tau),
        lambda tau: -omega ** 2 * np.cos(omega * tau),
        plan,
    )
    assert defect < 1e-5


def test_derivative_identity_tau_squared():
    # T(tau^2) = 2t so both sides equal 2 exactly.
    plan = TransformPlan(tau_max=12.0, t_targets=np.array([0.2, 0.5, 1.0]))
    defect = check_derivative_identity(
        lambda tau: tau ** 2, lambda tau: 2.0 * np.ones_like(tau), plan
    )
    assert defect < 1e-6


def trace_from_signal(signal, times):
    face = FaceTrace(axis=0, side="lo", position=0.0, origin=(), spacing=(),
                     values=np.asarray(signal))
    return BoundaryTrace(surface="P1", times=times, faces=[face])


def test_transform_trace_zero():
    times = np.linspace(0.0, 10.0, 2049)
    trace = trace_from_signal(np.zeros(2049), times)
    out = transform_trace(trace, TransformPlan(tau_max=10.0), GrowthBound(0.0, 0.0))
    assert np.all(out.faces[0].values == 0.0)
    assert np.array_equal(out.times, TransformPlan(tau_max=10.0).t_targets)


def test_transform_trace_constant_in_space():
    # Every surface node carrying cos(2 tau) maps to exp(-4t) at every node.
    times = np.linspace(0.0, 12.0, 2 ** 14 + 1)
    plan = TransformPlan(tau_max=12.0, t_targets=default_t_targets(17))
    values = np.cos(2.0 * times)[:, None, None] * np.ones((1, 5, 7))
    face = FaceTrace(axis=0, side="lo", position=0.0, origin=(0.0, 0.0),
                     spacing=(0.1, 0.1), values=values)
    trace = BoundaryTrace(surface="P1", times=times, faces=[face])
    out = transform_trace(trace, plan, UNIT_GROWTH)
    expected = np.exp(-4.0 * plan.t_targets)[:, None, None]
    assert np.allclose(out.faces[0].values, np.broadcast_to(expected, (17, 5, 7)), rtol=1e-5)
    assert len(out.tail_bounds) == 17


def test_transform_trace_linearity():
    times = np.linspace(0.0, 8.0, 1025)
    plan = TransformPlan(tau_max=8.0, t_targets=default_t_targets(9))
    a = trace_from_signal(np.sin(times), times)
    b = trace_from_signal(np.cos(0.5 * times), times)
    summed = trace_from_signal(np.sin(times) + np.cos(0.5 * times), times)
    va = transform_trace(a, plan, UNIT_GROWTH).faces[0].values
    vb = transform_trace(b, plan, UNIT_GROWTH).faces[0].values
    vs = transform_trace(summed, plan, UNIT_GROWTH).faces[0].values
    assert np.allclose(vs, va + vb, rtol=0, atol=1e-13)


def test_wave_to_heat_semigroup_compatibility():
    # End to end: the transformed wave solution of f = sin(pi x) on a box with
    # node boundaries at the zeros of the mode equals the heat solution
    # exp(-pi^2 t) sin(pi x) within solver + quadrature tolerance.
    from qtat.wave import leapfrog_frames

    op = EllipticOperator.laplacian(1)
    g = build_grid([(0.0, 2.0)], 513)
    x = g.axis(0)
    f = np.sin(np.pi * x)
    T = 12.0
    times, frames = leapfrog_frames(op, g, f, T=T, cfl=0.5, pin_boundary=True)
    plan = TransformPlan(tau_max=T, t_targets=default_t_targets(9))
    mid = slice(64, 449)  # compare away from the box edge
    values, _ = transform_signal(frames[:, mid], plan, UNIT_GROWTH)
    exact = np.exp(-np.pi ** 2 * plan.t_targets)[:, None] * f[None, mid]
    assert np.abs(values - exact).max() < 2e-4
