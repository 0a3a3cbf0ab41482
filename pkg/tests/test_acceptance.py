"""Acceptance suite: every gate criterion at its stated tolerance.

Each criterion prints one PASS/FAIL line (run with ``pytest -s`` to see them
live).  The final criterion repeats every computation with the same seeds and
requires bit-identical results, so all heavy work happens inside builder
functions that run exactly twice.
"""

import math
import time

import numpy as np
import pytest

from pulses import cut_gaussian
from qtat.carleman import (
    CarlemanParams,
    DomainLabel,
    domain_membership,
    measure_carleman_constant,
    psi_values,
    spatial_projection_membership,
    trig_family,
    weight_values,
)
from qtat.experiments import (
    BASELINE_BUMP_CENTER,
    BASELINE_BUMP_RADIUS,
    SweepConfig,
    baseline_ip2_geometry,
    d_half_mask,
    manufactured_ip2,
    reconstruction_error,
    run_holder_region,
    run_qrm_convergence,
    tapered_speed_operator,
)
from qtat.grid import Field, build_grid, domain_mask
from qtat.norms import spacetime_l2
from qtat.operators import EllipticOperator, pseudoconvexity_indicator
from qtat.parabolic import solve_parabolic
from qtat.qrm import QrmAssembly, extract_initial
from qtat.transform import (
    TransformPlan,
    check_derivative_identity,
    default_t_targets,
    transform_signal,
)
from qtat.wave import GrowthBound, solve_wave

BASELINE_H = 1.0 / 256.0
SWEEP_H = 1.0 / 128.0


def _announce(number, passed, detail):
    state = "PASS" if passed else "FAIL"
    print(f"criterion {number:2d}: {state} - {detail}")
    return passed


# -- builders (no assertions; run twice for the determinism criterion) -------


def build_transform_exactness():
    plan = TransformPlan(tau_max=12.0, t_targets=np.array([0.1, 0.5, 1.0]))
    taus = np.linspace(0.0, plan.tau_max, 2 ** 16 + 1)
    out = {}
    for omega in (1.0, 2.0, 4.0):
        values, tails = transform_signal(np.cos(omega * taus), plan, GrowthBound(1.0, 0.0))
        out[omega] = (values, np.array([tb.bound for tb in tails]))
    return plan, out


def build_derivative_identities():
    plan = TransformPlan(tau_max=12.0, t_targets=np.array([0.1, 0.5, 1.0]))
    signals = {
        "cos": (lambda tau: np.cos(2.0 * tau),
                lambda tau: -4.0 * np.cos(2.0 * tau)),
        "tau^2": (lambda tau: tau ** 2,
                  lambda tau: 2.0 * np.ones_like(tau)),
        "tau^2 exp(-tau)": (lambda tau: tau ** 2 * np.exp(-tau),
                            lambda tau: (2.0 - 4.0 * tau + tau ** 2) * np.exp(-tau)),
    }
    return {name: check_derivative_identity(g, g2, plan)
            for name, (g, g2) in signals.items()}


def build_consistency_pair():
    op = EllipticOperator.laplacian(1)
    n = int(round(1.0 / BASELINE_H)) + 1
    g = build_grid([(0.0, 1.0)], n)
    f = Field(g, cut_gaussian(g.axis(0), 0.5, 0.1, cut=4.5))
    T = 10.0
    run = solve_wave(op, f, T=T, cfl=0.5)
    targets = default_t_targets(33)
    plan = TransformPlan(tau_max=T, t_targets=targets)
    pad = run.padding[0]
    transformed, _ = transform_signal(run.u.values[:, pad:pad + n], plan,
                                      GrowthBound(1.0, 0.0))
    v = solve_parabolic(op, f, targets, onset_fraction=0.2)
    pad_p = (v.grid.counts[0] - n) // 2
    parabolic = v.values[:, pad_p:pad_p + n]
    return transformed, parabolic


def build_solver_orders():
    op = EllipticOperator.laplacian(1)
    wave_errs, heat_errs = [], []
    for n in (129, 257):
        g = build_grid([(0.0, 1.0)], n)
        x = g.axis(0)
        f = Field(g, cut_gaussian(x, 0.5, 0.08, cut=6.0))
        run = solve_wave(op, f, T=0.5, cfl=0.5)
        xp = run.u.grid.axis(0)
        exact = 0.5 * (cut_gaussian(xp + 0.5, 0.5, 0.08, cut=6.0)
                       + cut_gaussian(xp - 0.5, 0.5, 0.08, cut=6.0))
        wave_errs.append(float(np.abs(run.u.values[-1] - exact).max()))

        f2 = Field(g, cut_gaussian(x, 0.5, 0.08, cut=5.9))
        v = solve_parabolic(op, f2, np.array([0.25]), dt_max=g.spacing[0])
        xh = v.grid.axis(0)
        s2 = 0.08 ** 2 + 2 * 0.25
        heat_exact = 0.08 / np.sqrt(s2) * np.exp(-0.5 * (xh - 0.5) ** 2 / s2)
        heat_errs.append(float(np.abs(v.values[-1] - heat_exact).max()))
    return wave_errs, heat_errs


def build_reconstructions():
    solutions = {}
    errors = {}
    fhats = {}
    for name, op in (("constant", EllipticOperator.laplacian(1)),
                     ("variable", tapered_speed_operator())):
        bundle = manufactured_ip2(
            op, geometry=baseline_ip2_geometry(), h=BASELINE_H, n_targets=33,
            bump_center=BASELINE_BUMP_CENTER, bump_radius=BASELINE_BUMP_RADIUS,
        )
        assembly = QrmAssembly(bundle.op, bundle.grid, bundle.times)
        sol = assembly.solve(bundle.p.values, 1e-8)
        f_hat = extract_initial(sol, bundle.r, geometry=bundle.geometry)
        solutions[name] = sol
        errors[name] = reconstruction_error(bundle, f_hat)
        fhats[name] = f_hat.values
    # certificate for the variable case: the indicator is negative on the
    # closed support domain
    geo = baseline_ip2_geometry()
    lo, hi = geo.omega_box
    g = build_grid([(float(lo[0]), float(hi[0]))], 257)
    c = Field(g, np.sqrt(1.0 + g.axis(0)))
    indicator_max = float(pseudoconvexity_indicator(c, x0=[0.0]).values.max())
    return solutions, errors, fhats, indicator_max


def build_convergence_sweep():
    cfg = SweepConfig(scenario="qrm", ladder=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5),
                      seeds=(1, 2, 3, 4, 5), h=SWEEP_H, n_targets=33)
    return run_qrm_convergence(cfg)


def build_holder_sweep():
    ladder = tuple(np.geomspace(4.64e-4, 2.15e-5, 5))
    cfg = SweepConfig(scenario="holder", ladder=ladder, seeds=(1, 2, 3, 4, 5),
                      h=SWEEP_H, n_targets=33)
    return run_holder_region(cfg)


def build_carleman_geometry():
    params = CarlemanParams(nu=4.0, epsilon=0.05, lam=2.0)
    rng = np.random.default_rng(101)
    n = 100_000
    pts = np.stack([rng.uniform(0.0, 0.6, n), rng.uniform(-0.3, 1.3, n)], axis=-1)

    g12 = domain_membership(params, pts, DomainLabel.G12)
    g34 = domain_membership(params, pts, DomainLabel.G34)
    d12 = domain_membership(params, pts, DomainLabel.D12)
    d34 = domain_membership(params, pts, DomainLabel.D34)
    t = pts[..., -1]
    eps = params.epsilon

    nesting = int(np.sum(g12 & ~g34) + np.sum(d12 & ~d34))
    strip_g = int(np.sum(g34 & (np.abs(t - eps) >= eps / np.sqrt(2.0))))
    strip_d = int(np.sum(d34 & ((np.abs(t - 0.5) >= 0.5) | (t <= 0) | (t >= 1))))

    _, log_w, _ = weight_values(params, pts, "psi_phi")
    bound = 2.0 ** (params.nu + 1) / params.epsilon
    weight_violations = int(np.sum(g12 & (2.0 * log_w < bound)))

    geo = baseline_ip2_geometry()
    lo, hi = geo.omega_box
    omega_nodes = np.stack([rng.uniform(lo[0], hi[0], n)], axis=-1)
    in_rg12 = spatial_projection_membership(params, omega_nodes, params.levels[1])
    proj_violations = int(np.sum(~in_rg12))
    x_sample = np.stack([rng.uniform(-0.2, 0.8, n)], axis=-1)
    rg34 = spatial_projection_membership(params, x_sample, params.levels[2])
    rd34 = spatial_projection_membership(params, x_sample, params.levels[2])
    proj_violations += int(np.sum(rg34 != rd34))
    return dict(nesting=nesting, strip_g=strip_g, strip_d=strip_d,
                weight=weight_violations, projection=proj_violations)


def build_carleman_stability():
    params = CarlemanParams(nu=4.0, epsilon=0.05, lam=2.0)
    op = EllipticOperator.laplacian(1)
    eps = params.epsilon
    t_lo, t_hi = eps * (1 - 1 / np.sqrt(2.0)), eps * (1 + 1 / np.sqrt(2.0))
    out = []
    for resolution in ((97, 65), (193, 129)):
        grid = build_grid([(0.02, 0.5), (t_lo, t_hi)], resolution)
        family = trig_family(grid, count=20, seed=11)
        report = measure_carleman_constant(op, params, family, grid)
        out.append(report.family_log_constant)
    return tuple(out)


BUILDERS = {
    "transform": build_transform_exactness,
    "derivative": build_derivative_identities,
    "consistency": build_consistency_pair,
    "orders": build_solver_orders,
    "reconstruction": build_reconstructions,
    "convergence": build_convergence_sweep,
    "holder": build_holder_sweep,
    "carleman_geometry": build_carleman_geometry,
    "carleman_stability": build_carleman_stability,
}


@pytest.fixture(scope="module")
def runs():
    out = {}
    for name, builder in BUILDERS.items():
        t0 = time.time()
        out[name] = builder()
        out[name + "_time"] = time.time() - t0
    return out


def test_criterion_01_transform_exactness(runs):
    plan, results = runs["transform"]
    worst_rel, worst_tail = 0.0, 0.0
    for omega, (values, tails) in results.items():
        exact = np.exp(-omega ** 2 * plan.t_targets)
        worst_rel = max(worst_rel, float(np.max(np.abs(values - exact) / exact)))
        worst_tail = max(worst_tail, float(tails.max()))
    # closed form cross-checked by high-precision quadrature
    import mpmath

    mpmath.mp.dps = 30
    for omega in (1.0, 2.0, 4.0):
        for t in (0.1, 0.5, 1.0):
            integral = mpmath.quad(
                lambda tau: mpmath.exp(-tau ** 2 / (4 * t)) * mpmath.cos(omega * tau),
                [0, mpmath.inf],
            ) / mpmath.sqrt(mpmath.pi * t)
            assert abs(float(integral) - math.exp(-omega ** 2 * t)) < 1e-12
    # and by a 1e6-point brute-force quadrature at one point
    taus = np.linspace(0.0, 12.0, 10 ** 6 + 1)
    brute = np.trapezoid(np.exp(-taus ** 2 / 2.0) * np.cos(taus), taus) / np.sqrt(np.pi * 0.5)
    assert abs(brute - math.exp(-0.5)) < 1e-7

    ok = worst_rel <= 1e-6 and worst_tail <= 1e-8 and runs["transform_time"] < 1.0
    assert _announce(1, ok, f"rel={worst_rel:.2e} tail={worst_tail:.2e} "
                            f"time={runs['transform_time']:.2f}s")


def test_criterion_02_derivative_identity(runs):
    defects = runs["derivative"]
    worst = max(defects.values())
    ok = worst <= 1e-5 and runs["derivative_time"] < 1.0
    detail = " ".join(f"{k}={v:.2e}" for k, v in defects.items())
    assert _announce(2, ok, detail + f" time={runs['derivative_time']:.2f}s")


def test_criterion_03_hyperbolic_parabolic_consistency(runs):
    transformed, parabolic = runs["consistency"]
    rel = float(np.linalg.norm(transformed - parabolic) / np.linalg.norm(parabolic))
    ok = rel <= 1e-3 and runs["consistency_time"] < 30.0
    assert _announce(3, ok, f"rel={rel:.2e} time={runs['consistency_time']:.1f}s")


def test_criterion_04_solver_orders(runs):
    wave_errs, heat_errs = runs["orders"]
    wave_ratio = wave_errs[0] / wave_errs[1]
    heat_ratio = heat_errs[0] / heat_errs[1]
    ok = (3.0 <= wave_ratio <= 5.0 and 3.0 <= heat_ratio <= 5.0
          and runs["orders_time"] < 60.0)
    assert _announce(4, ok, f"wave ratio={wave_ratio:.2f} heat ratio={heat_ratio:.2f} "
                            f"time={runs['orders_time']:.1f}s")


def test_criterion_05_minimizer_bound_and_residual(runs):
    solutions, _, _, _ = runs["reconstruction"]
    checked = 0
    worst_res = 0.0
    for sol in solutions.values():
        assert sol.minimizer_bound_holds
        assert sol.norm_u_reg <= sol.norm_p_l2 / math.sqrt(sol.gamma) * (1 + 1e-10)
        worst_res = max(worst_res, sol.residual)
        checked += 1
    # every solve in the suite self-checks the bound (the solver raises on
    # violation); here the recorded values are asserted again explicitly
    ok = worst_res <= 1e-9 and checked >= 2
    assert _announce(5, ok, f"solves checked here={checked} worst residual={worst_res:.1e} "
                            "(every solve self-checks the bound)")


def test_criterion_06_noiseless_reconstruction(runs):
    _, errors, _, _ = runs["reconstruction"]
    err = errors["constant"]
    ok = err <= 0.05 and runs["reconstruction_time"] < 120.0
    assert _announce(6, ok, f"relative L2 error={err:.4f} "
                            f"time={runs['reconstruction_time']:.1f}s")


def test_criterion_07_arbitrary_principal_part(runs):
    _, errors, _, indicator_max = runs["reconstruction"]
    ratio = errors["variable"] / errors["constant"]
    ok = indicator_max < 0.0 and ratio <= 2.0 and runs["reconstruction_time"] < 120.0
    assert _announce(7, ok, f"error={errors['variable']:.4f} ratio={ratio:.2f} "
                            f"indicator max={indicator_max:.3f} (violated)")


def test_criterion_08_convergence_trend(runs):
    report = runs["convergence"]
    prods = [p for _, p in report.median_by_level("log_product")]
    errs = [e for _, e in report.median_by_level("error_l2")]
    bounded = max(prods) <= 2.0 * float(np.median(prods))
    monotone = all(a >= b * (1 - 0.05) for a, b in zip(errs, errs[1:]))
    inequality = all(r.ineq_lhs <= r.ineq_rhs * (1 + 1e-9) + 1e-12 for r in report.rows)
    ok = bounded and monotone and inequality and runs["convergence_time"] < 600.0
    assert _announce(8, ok, f"max/median={max(prods) / np.median(prods):.2f} "
                            f"monotone={monotone} inequality={inequality} "
                            f"time={runs['convergence_time']:.1f}s")


def test_criterion_09_holder_region(runs):
    report = runs["holder"]
    rho, r2 = report.fitted_rho, report.r_squared
    ok = rho is not None and 0.0 < rho < 0.5 and r2 >= 0.9 \
        and runs["holder_time"] < 600.0
    assert _announce(9, ok, f"rho={rho:.3f} R2={r2:.3f} time={runs['holder_time']:.1f}s")


def test_criterion_10_carleman_geometry(runs):
    v = runs["carleman_geometry"]
    total = sum(v.values())
    ok = total == 0 and runs["carleman_geometry_time"] < 10.0
    assert _announce(10, ok, f"violations={v} time={runs['carleman_geometry_time']:.1f}s")


def test_criterion_11_carleman_constant_stability(runs):
    log_coarse, log_fine = runs["carleman_stability"]
    ratio = math.exp(log_coarse - log_fine)
    ok = 0.5 <= ratio <= 2.0 and runs["carleman_stability_time"] < 300.0
    assert _announce(11, ok, f"family constant ratio={ratio:.3f} "
                             f"time={runs['carleman_stability_time']:.1f}s")


def test_criterion_12_determinism(runs):
    repeats = {name: builder() for name, builder in BUILDERS.items()}

    plan_a, res_a = runs["transform"]
    plan_b, res_b = repeats["transform"]
    same = all(np.array_equal(res_a[k][0], res_b[k][0]) for k in res_a)

    same &= runs["derivative"] == repeats["derivative"]

    ta, pa = runs["consistency"]
    tb, pb = repeats["consistency"]
    same &= np.array_equal(ta, tb) and np.array_equal(pa, pb)

    same &= runs["orders"] == repeats["orders"]

    _, err_a, fhat_a, ind_a = runs["reconstruction"]
    _, err_b, fhat_b, ind_b = repeats["reconstruction"]
    same &= err_a == err_b and ind_a == ind_b
    same &= all(np.array_equal(fhat_a[k], fhat_b[k]) for k in fhat_a)

    for key in ("convergence", "holder"):
        rows_a, rows_b = runs[key].rows, repeats[key].rows
        same &= len(rows_a) == len(rows_b)
        same &= all(a.error_l2 == b.error_l2 and a.holder_error == b.holder_error
                    and a.ineq_lhs == b.ineq_lhs for a, b in zip(rows_a, rows_b))

    same &= runs["carleman_geometry"] == repeats["carleman_geometry"]
    same &= runs["carleman_stability"] == repeats["carleman_stability"]

    assert _announce(12, bool(same), "all acceptance runs repeat bit-identically")
