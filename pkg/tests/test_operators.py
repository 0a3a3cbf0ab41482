import numpy as np
import pytest

from qtat.errors import InvalidOperator
from qtat.grid import Field, build_grid
from qtat.operators import (
    EllipticOperator,
    apply,
    apply_principal,
    pseudoconvexity_indicator,
    symmetric_from_node_values,
    validate_ellipticity,
)


def test_apply_quadratic_1d_exact():
    g = build_grid([(0.0, 1.0)], 33)
    op = EllipticOperator.laplacian(1)
    x = g.axis(0)
    lu = apply(op, Field(g, x ** 2)).values
    assert np.allclose(lu, 2.0, rtol=0, atol=1e-11)


def test_apply_constant_is_zero():
    g = build_grid([(0.0, 1.0), (0.0, 1.0)], (17, 17))
    op = EllipticOperator(2, {(0, 0): 1.0, (1, 1): 2.0, (0, 1): 0.3}, b={0: 1.0}, mu1=0.5, mu2=2.5)
    u = Field(g, np.ones(g.shape))
    assert np.allclose(apply(op, u).values, 0.0, atol=1e-12)


def test_apply_2d_laplacian_richardson_ratio():
    # Interior error of the discrete Laplacian on sin(pi x)sin(pi y) shrinks
    # by 4x (+-10%) under 2x refinement.
    op = EllipticOperator.laplacian(2)
    errs = []
    for n in (33, 65):
        g = build_grid([(0.0, 1.0), (0.0, 1.0)], (n, n))
        xx, yy = g.meshgrid()
        u = np.sin(np.pi * xx) * np.sin(np.pi * yy)
        lu = apply(op, Field(g, u)).values
        err = np.abs(lu + 2 * np.pi ** 2 * u)[2:-2, 2:-2]
        errs.append(err.max())
    ratio = errs[0] / errs[1]
    assert 3.6 <= ratio <= 4.4


def test_apply_exact_on_degree_two_polynomials():
    g = build_grid([(0.0, 1.0), (-1.0, 1.0)], (21, 21))
    op = EllipticOperator(
        2, {(0, 0): 2.0, (1, 1): 1.5, (0, 1): 0.25}, b={0: 1.0, 1: -2.0}, b0=3.0,
        mu1=1.0, mu2=3.0,
    )
    xx, yy = g.meshgrid()
    u = 3 * xx ** 2 + 2 * xx * yy - yy ** 2 + xx - 4 * yy + 7
    expect = (
        2.0 * 6 + 1.5 * (-2) + 2 * 0.25 * 2
        + 1.0 * (6 * xx + 2 * yy + 1) - 2.0 * (2 * xx - 2 * yy - 4)
        + 3.0 * u
    )
    lu = apply(op, Field(g, u)).values
    assert np.allclose(lu, expect, rtol=0, atol=1e-9)


def test_apply_linear_in_field():
    rng = np.random.default_rng(7)
    g = build_grid([(0.0, 1.0)], 41)
    op = EllipticOperator(1, {(0, 0): lambda p: 1 + 0.3 * p[..., 0]}, b={0: 0.5}, mu1=1.0, mu2=1.3)
    u = Field(g, rng.standard_normal(g.shape))
    w = Field(g, rng.standard_normal(g.shape))
    alpha, beta = 1.7, -0.4
    combo = apply(op, Field(g, alpha * u.values + beta * w.values)).values
    split = alpha * apply(op, u).values + beta * apply(op, w).values
    assert np.allclose(combo, split, rtol=0, atol=1e-12 * np.abs(split).max())


def test_principal_part_drops_lower_order_terms():
    g = build_grid([(0.0, 1.0)], 33)
    full = EllipticOperator(1, {(0, 0): 1.0}, b={0: 2.0}, b0=-1.0)
    bare = EllipticOperator(1, {(0, 0): 1.0})
    x = g.axis(0)
    u = Field(g, x ** 2)
    assert np.allclose(apply_principal(full, u).values, apply(bare, u).values, atol=1e-12)


def test_apply_minus_principal_is_lower_order_part():
    rng = np.random.default_rng(3)
    g = build_grid([(0.0, 1.0), (0.0, 1.0)], (19, 19))
    op = EllipticOperator(
        2, {(0, 0): 1.0, (1, 1): 1.0, (0, 1): 0.2},
        b={0: lambda p: p[..., 1], 1: 1.0}, b0=0.7, mu1=0.7, mu2=1.3,
    )
    u = Field(g, rng.standard_normal(g.shape))
    diff = apply(op, u).values - apply_principal(op, u).values
    only_lower = EllipticOperator(
        2, {}, b={0: lambda p: p[..., 1], 1: 1.0}, b0=0.7, mu1=1.0, mu2=1.0
    )
    assert np.allclose(diff, apply(only_lower, u).values, rtol=0, atol=1e-10)


def test_validate_identity_passes():
    g = build_grid([(0.0, 1.0)], 9)
    op = EllipticOperator.laplacian(1, grid=g)
    report = validate_ellipticity(op)
    assert report.passed and report.min_eig == 1.0 and report.max_eig == 1.0


def test_validate_diagonal_bounds_violation():
    g = build_grid([(0.0, 1.0), (0.0, 1.0)], (9, 9))
    op = EllipticOperator(2, {(0, 0): 1.0, (1, 1): 3.0}, mu1=1.0, mu2=2.0, grid=g)
    report = validate_ellipticity(op)
    assert not report.passed
    assert report.max_eig == pytest.approx(3.0)


def test_validate_variable_coefficient_extrema():
    g = build_grid([(0.0, 1.0)], 101)
    op = EllipticOperator(
        1, {(0, 0): lambda p: 1 + 0.5 * np.sin(2 * np.pi * p[..., 0])},
        mu1=0.5, mu2=1.5, grid=g,
    )
    report = validate_ellipticity(op)
    assert report.min_eig == pytest.approx(0.5, abs=1e-12)
    assert report.max_eig == pytest.approx(1.5, abs=1e-12)
    assert report.passed


def test_validate_invariant_under_axis_relabeling():
    g = build_grid([(0.0, 1.0), (0.0, 1.0)], (15, 15))
    f1 = lambda p: 1 + 0.25 * p[..., 0]
    f2 = lambda p: 2 - 0.5 * p[..., 1]
    op = EllipticOperator(2, {(0, 0): f1, (1, 1): f2}, mu1=0.9, mu2=2.1, grid=g)
    swapped = EllipticOperator(
        2, {(0, 0): lambda p: f2(p[..., ::-1]), (1, 1): lambda p: f1(p[..., ::-1])},
        mu1=0.9, mu2=2.1, grid=g,
    )
    assert validate_ellipticity(op).passed == validate_ellipticity(swapped).passed


def test_asymmetric_node_values_rejected():
    g = build_grid([(0.0, 1.0), (0.0, 1.0)], (5, 5))
    a = np.zeros((2, 2, 5, 5))
    a[0, 0] = a[1, 1] = 1.0
    a[0, 1] = 0.3
    a[1, 0] = 0.2
    with pytest.raises(InvalidOperator):
        symmetric_from_node_values(g, a)


def test_pseudoconvexity_constant_speed_holds():
    g = build_grid([(0.0, 1.0)], 65)
    c = Field(g, np.ones(g.shape))
    ind = pseudoconvexity_indicator(c, x0=[0.0])
    assert np.allclose(ind.values, 0.0, atol=1e-12)


def test_pseudoconvexity_analytic_sign_cases():
    g = build_grid([(0.0, 1.0)], 257)
    x = g.axis(0)
    # c^2 = 1/(1+x): c^-2 = 1+x, indicator = x >= 0 (condition holds).
    c_hold = Field(g, (1.0 / (1.0 + x)) ** 0.5)
    ind_hold = pseudoconvexity_indicator(c_hold, x0=[0.0])
    assert np.allclose(ind_hold.values, x, atol=5e-4)
    assert ind_hold.values.min() >= -1e-9
    # c^2 = 1+x: c^-2 = 1/(1+x), indicator = -x/(1+x)^2 < 0 for x > 0.
    c_viol = Field(g, (1.0 + x) ** 0.5)
    ind_viol = pseudoconvexity_indicator(c_viol, x0=[0.0])
    assert np.allclose(ind_viol.values, -x / (1 + x) ** 2, atol=5e-4)
    assert ind_viol.values[5:].max() < 0


def test_pseudoconvexity_rejects_nonpositive_speed():
    g = build_grid([(0.0, 1.0)], 9)
    with pytest.raises(InvalidOperator):
        pseudoconvexity_indicator(Field(g, np.zeros(g.shape)), x0=[0.0])
