"""Scripted experiments: manufactured problems, stability sweeps, convergence rates.

The sweeps reproduce, at desk scale and as trends, the logarithmic stability
of the full-boundary and hyperplane problems and the convergence rate of the
regularized reconstruction.  Absolute constants in those estimates are
unknowable, so acceptance is trend-based: boundedness of
``error * sqrt(log(1/level))`` across a noise ladder, regression exponents,
and per-row inequality checks.  All rows are reproducible from (config, seed)
and carry regime flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidData
from .grid import Field, GeometrySpec, Grid, MeasurementKind, SpaceTimeField, domain_mask
from .norms import h10_spacetime, trace_h1, trace_l2
from .operators import EllipticOperator
from .parabolic import NoiseSpec, add_noise, recover_neumann, solve_parabolic
from .qrm import (
    QrmAssembly,
    QrmProblem,
    apply_heat_residual,
    extract_initial,
    homogenize,
    onset_times,
    phi_discretization,
)
from .transform import SignalTransformer, TransformPlan, default_t_targets, transform_trace
from .wave import (
    BoundaryTrace,
    GrowthBound,
    extract_trace_ip1,
    extract_trace_ip2,
    growth_bound_from_trace,
    solve_wave,
)


def bump(x, center, radius):
    """Compactly supported C-infinity bump with unit peak."""
    x = np.asarray(x, dtype=float)
    r = (x - center) / radius
    out = np.zeros_like(x)
    inside = np.abs(r) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r[inside] ** 2))
    return out


def default_ip2_geometry(ndim: int = 1) -> GeometrySpec:
    lo = np.full(ndim, 0.05)
    hi = np.full(ndim, 0.20)
    if ndim > 1:
        lo[1:], hi[1:] = -0.15, 0.15
    return GeometrySpec(
        ndim=ndim,
        measurement_kind=MeasurementKind.HYPERPLANE,
        omega_box=(lo, hi),
    )


# Baseline 1-D hyperplane problem used by the acceptance suite: the widest
# bump that keeps a safety margin to both the hyperplane and the paraboloid
# bound x1 < 1/4 (sharper bumps push unrecoverable high frequencies into the
# initial condition and the reconstruction error above the 5% gate).
BASELINE_BUMP_CENTER = 0.125
BASELINE_BUMP_RADIUS = 0.10


def baseline_ip2_geometry() -> GeometrySpec:
    return GeometrySpec(
        ndim=1,
        measurement_kind=MeasurementKind.HYPERPLANE,
        omega_box=(np.array([0.015]), np.array([0.235])),
    )


def smoothstep7(u):
    """Septic smoothstep: C^3 transition from 0 at u<=0 to 1 at u>=1."""
    u = np.clip(u, 0.0, 1.0)
    return -20 * u ** 7 + 70 * u ** 6 - 84 * u ** 5 + 35 * u ** 4


def tapered_speed_squared(pts):
    """c^2(x) = 1 + x1 near the support domain, tapering to constants outside.

    On the closure of the baseline domain this equals 1 + x1 exactly, which
    the pseudoconvexity indicator certifies to violate the classical speed
    restriction.  Both tapers keep the squared speed in [0.9, 1.75] on the
    whole padded box: without the left taper, 1 + x turns negative on the
    padding and the wave operator loses hyperbolicity there.
    """
    x = np.asarray(pts)[..., 0]
    s_lo = smoothstep7((x + 0.25) / 0.25)   # 0 below -0.25, 1 above 0
    s_hi = smoothstep7((x - 0.35) / 0.40)   # 0 below 0.35, 1 above 0.75
    base = (1.0 - s_lo) + (1.0 + x) * s_lo
    return base * (1.0 - s_hi) + 1.75 * s_hi


def tapered_speed_operator() -> EllipticOperator:
    return EllipticOperator(1, {(0, 0): tapered_speed_squared}, mu1=0.9, mu2=1.8)


@dataclass
class ManufacturedIp2:
    """A complete synthetic hyperplane problem with every intermediate kept.

    Two homogenizations are carried: the PIPELINE one built from the measured
    chain (wave trace, transform, recovered flux) and a CLEAN one built from
    the diffusion solver's own surface values and flux.  The clean variant
    isolates the minimizer from data-generation error (its homogenized truth
    vanishes on the measurement layer to roundoff); the pipeline variant is
    what a real reconstruction sees.
    """

    op: EllipticOperator
    geometry: GeometrySpec
    f: Field                       # truth on the reconstruction grid
    grid: Grid                     # reconstruction (phi) spatial grid
    times: np.ndarray              # {0} + onset ladder + targets
    plan: TransformPlan
    work_plan: TransformPlan       # plan extended with the onset ladder
    growth: GrowthBound
    trace: BoundaryTrace           # hyperbolic Dirichlet data on the hyperplane
    transformed: BoundaryTrace     # diffusion-time Dirichlet data
    with_neumann: BoundaryTrace    # + recovered flux
    p: SpaceTimeField
    r: SpaceTimeField
    v_phi: np.ndarray              # true diffusion field on the phi grid, (nt, *shape)
    v_hat_star: np.ndarray         # pipeline-homogenized truth v - r
    clean_p: SpaceTimeField
    clean_r: SpaceTimeField
    clean_v_hat_star: np.ndarray   # clean-homogenized truth
    omega_mask: np.ndarray

    def p_star_exact(self, clean: bool = True) -> np.ndarray:
        """Discrete-exact noiseless right-hand side A(v_hat_star)."""
        v_hat = self.clean_v_hat_star if clean else self.v_hat_star
        return apply_heat_residual(self.op, self.grid, self.times, v_hat)

    def problem(self, gamma: float, clean: bool = True, reg_norm: str = "h21") -> QrmProblem:
        return QrmProblem(
            op=self.op, grid=self.grid, times=self.times,
            p=self.clean_p if clean else self.p,
            r=self.clean_r if clean else self.r,
            gamma=gamma, reg_norm=reg_norm,
        )


def manufactured_ip2(op: EllipticOperator, geometry: GeometrySpec | None = None,
                     h: float = 1.0 / 128.0, n_targets: int = 33,
                     bump_center: float = 0.125, bump_radius: float = 0.06,
                     amplitude: float = 1.0, cfl: float = 0.5,
                     plan: TransformPlan | None = None,
                     onset_floor: float = 1e-4, onset_ratio: float = 1.2,
                     onset_until: float = 0.2) -> ManufacturedIp2:
    """Build the full synthetic problem for a 1-D hyperplane measurement."""
    geometry = geometry or default_ip2_geometry(1)
    plan = plan or TransformPlan(t_targets=default_t_targets(n_targets))
    targets = np.unique(np.concatenate([
        onset_times(onset_until, onset_floor, onset_ratio), plan.t_targets,
    ]))
    work_plan = replace(plan, t_targets=targets)
    grid, times = phi_discretization(geometry, h, targets)
    x = grid.axis(0)
    f = Field(grid, amplitude * bump(x, bump_center, bump_radius))

    run = solve_wave(op, f, T=plan.tau_max, cfl=cfl)
    trace = extract_trace_ip2(run, geometry)
    growth = growth_bound_from_trace(trace)

    transformed = transform_trace(trace, work_plan, growth)
    transformers = [SignalTransformer(fc.values, work_plan) for fc in trace.faces]
    with_neumann = recover_neumann(
        op, transformed, geometry, h=h, data_fns=[tr.at for tr in transformers]
    )

    psi2 = BoundaryTrace(
        surface="P1",
        times=with_neumann.times.copy(),
        faces=[replace(with_neumann.faces[0], values=with_neumann.neumann[0])],
    )
    p, r = homogenize(with_neumann, psi2, op, grid, times)

    # Truth trajectory: ONE Crank-Nicolson step per reconstruction interval,
    # so the staggered residual operator annihilates it to solver precision
    # and the clean problem below is discretely self-consistent.  The time
    # grid (onset ladder + clustered targets) resolves the evolution, so this
    # is also a second-order-accurate solution of the continuum problem.
    v = solve_parabolic(op, f, times, dt_max=float("inf"))
    sl = (slice(None),) + tuple(
        slice(v.grid.index_of(grid.origin[ax], ax),
              v.grid.index_of(grid.origin[ax], ax) + grid.counts[ax])
        for ax in range(grid.ndim)
    )
    v_phi = v.values[sl].copy()
    v_hat_star = v_phi - r.values

    # clean traces from the diffusion solve itself (surface value and
    # one-sided flux from the exterior side of the padded box)
    k0 = v.grid.index_of(0.0, 0)
    clean_phi_vals = v.values[(slice(1, None), k0) + sl[2:]].copy()
    hx = grid.spacing[0]
    flux = (3.0 * v.values[:, k0] - 4.0 * v.values[:, k0 - 1] + v.values[:, k0 - 2]) / (2 * hx)
    clean_psi_vals = flux[(slice(1, None),) + sl[2:]].copy()
    base = with_neumann.faces[0]
    clean_phi = BoundaryTrace(
        surface="P1", times=times[1:].copy(),
        faces=[replace(base, values=clean_phi_vals)],
    )
    clean_psi = BoundaryTrace(
        surface="P1", times=times[1:].copy(),
        faces=[replace(base, values=clean_psi_vals)],
    )
    clean_p, clean_r = homogenize(clean_phi, clean_psi, op, grid, times)
    clean_v_hat_star = v_phi - clean_r.values

    mask = domain_mask(grid, geometry)
    return ManufacturedIp2(
        op=op, geometry=geometry, f=f, grid=grid, times=times, plan=plan,
        work_plan=work_plan, growth=growth, trace=trace, transformed=transformed,
        with_neumann=with_neumann, p=p, r=r, v_phi=v_phi,
        v_hat_star=v_hat_star, clean_p=clean_p, clean_r=clean_r,
        clean_v_hat_star=clean_v_hat_star,
        omega_mask=mask.inside | mask.boundary,
    )


def reconstruction_error(bundle: ManufacturedIp2, f_hat: Field) -> float:
    """Relative L2 error over the support domain."""
    mask = domain_mask(bundle.grid, bundle.geometry).inside
    err = np.linalg.norm((f_hat.values - bundle.f.values)[mask])
    ref = np.linalg.norm(bundle.f.values[mask])
    return float(err / ref)


# -- sweeps -----------------------------------------------------------------


@dataclass
class SweepConfig:
    """Configuration of one scripted experiment.

    ``ladder`` holds the noise levels (delta for trace noise, omega for
    right-hand-side noise), strictly decreasing inside (0, 1); a leading
    zero row is allowed for the noiseless baseline.  ``gamma_rule`` follows
    the convergence theorem by default (gamma = omega).
    """

    scenario: str                      # ip1 | ip2 | qrm | holder
    ladder: tuple
    seeds: tuple = (1, 2, 3, 4, 5)
    gamma_rule: str = "equal_omega"    # | "fixed" | "ladder"
    gamma: float | None = None
    h: float = 1.0 / 128.0
    n_targets: int = 33
    bump_center: float = BASELINE_BUMP_CENTER
    bump_radius: float = BASELINE_BUMP_RADIUS
    regime_cap: float = 1.0            # rows with F (or omega*sqrt(Y^2+1)) above are flagged

    def __post_init__(self):
        lad = [float(v) for v in self.ladder]
        positive = [v for v in lad if v > 0]
        if any(b >= a for a, b in zip(positive, positive[1:])):
            raise InvalidData("noise ladder must be strictly decreasing")
        if any(not (0.0 <= v < 1.0) for v in lad):
            raise InvalidData("noise levels must lie in [0, 1)")
        if self.gamma_rule not in ("equal_omega", "fixed", "ladder"):
            raise InvalidData(f"unknown gamma rule {self.gamma_rule!r}")
        if self.gamma_rule == "fixed" and self.gamma is None:
            raise InvalidData("fixed gamma rule needs a gamma value")
        self.ladder = tuple(lad)

    def resolve_gamma(self, level: float, measured_omega: float | None = None) -> float:
        if self.gamma_rule == "fixed":
            return float(self.gamma)
        if self.gamma_rule == "ladder":
            return max(level, 1e-12)
        omega = measured_omega if measured_omega is not None else level
        return max(float(omega), 1e-12)


@dataclass
class SweepRow:
    level: float
    seed: int
    gamma: float
    data_size: float               # F of the stability estimates (or omega*sqrt(Y^2+1))
    error_l2: float                # initial-condition error in L2 over the domain
    log_product: float             # error * sqrt(log(1/data_size))
    holder_error: float            # H^{1,0} error on the near region D_1/2
    ineq_lhs: float                # error-equation inequality, left side
    ineq_rhs: float                # and right side (omega^2 + gamma Y^2 form)
    in_regime: bool


@dataclass
class StabilityReport:
    scenario: str
    rows: list
    y_bound: float                      # reg-norm of the noiseless homogenized truth
    fitted_rho: float | None = None     # log-log slope of holder_error vs data_size
    r_squared: float | None = None

    def median_by_level(self, attr: str):
        levels = sorted({r.level for r in self.rows}, reverse=True)
        out = []
        for lv in levels:
            vals = [getattr(r, attr) for r in self.rows if r.level == lv and r.in_regime]
            if vals:
                out.append((lv, float(np.median(vals))))
        return out


def _log_product(error: float, size: float) -> float:
    if not (0.0 < size < 1.0):
        return float("nan")
    return error * math.sqrt(math.log(1.0 / size))


def d_half_mask(grid: Grid, times) -> np.ndarray:
    """Nodes of the wide-strip near region on a reconstruction grid."""
    pts = np.stack(grid.meshgrid(), axis=-1)
    x1 = pts[..., 0]
    xbar_sq = np.sum(pts[..., 1:] ** 2, axis=-1)
    times = np.asarray(times, dtype=float)
    shape = (times.size,) + grid.shape
    theta = x1[None] + xbar_sq[None] + ((times.reshape((-1,) + (1,) * grid.ndim) - 0.5) / 0.5) ** 2 + 0.25
    return (theta < 0.5) & (x1[None] > 0)


def noise_direction(assembly: QrmAssembly, seed: int) -> np.ndarray:
    """Unit-norm (in the solver's weighted residual norm) random field."""
    rng = np.random.default_rng(seed)
    shape = (assembly.times.size - 1,) + assembly.grid.shape
    xi = rng.standard_normal(shape)
    norm = np.linalg.norm(assembly.weight_p(xi))
    return xi / norm


def run_qrm_convergence(config: SweepConfig,
                        bundle: ManufacturedIp2 | None = None,
                        op: EllipticOperator | None = None) -> StabilityReport:
    """Convergence-rate sweep: exact data perturbed to ||p - p*|| = omega.

    The noiseless pair (p*, v_hat*) is the discrete-exact manufactured one,
    so the recorded error-equation inequality is a theorem of the discrete
    optimality system and must hold on every row.
    """
    bundle = bundle or manufactured_ip2(
        op or EllipticOperator.laplacian(1), geometry=baseline_ip2_geometry(),
        h=config.h, n_targets=config.n_targets,
        bump_center=config.bump_center, bump_radius=config.bump_radius,
    )
    assembly = QrmAssembly(bundle.op, bundle.grid, bundle.times)
    # the discrete-exact noiseless pair lives in the constrained subspace:
    # restrict the homogenized truth (its face layers are O(h^2), set to the
    # constraint's exact zeros) and take p* as the residual operator applied
    # to it, in weighted coordinates; then the recorded inequality is a
    # theorem of the optimality system
    x_true = assembly.restrict(bundle.clean_v_hat_star)
    v_hat = assembly.expand(x_true)
    p_star_w = assembly.a_u @ x_true
    y_bound = assembly.reg_norm_of(x_true)
    omega_mask = domain_mask(bundle.grid, bundle.geometry).inside
    near = d_half_mask(bundle.grid, bundle.times)
    cell = bundle.grid.cell_volume()

    rows = []
    for seed in config.seeds:
        xi_w = assembly.weight_p(noise_direction(assembly, seed))
        for omega in config.ladder:
            p_noisy_w = p_star_w + omega * xi_w
            gamma = config.resolve_gamma(omega if omega > 0 else config.ladder[-1])
            sol = assembly.solve_weighted(p_noisy_w, gamma)
            diff = sol.u_gamma.values - v_hat
            err_f = float(np.linalg.norm(diff[0][omega_mask]) * math.sqrt(cell))
            holder = h10_spacetime(diff, bundle.grid, bundle.times, near)
            x_dev = assembly.restrict(diff)
            lhs = float(np.linalg.norm(assembly.a_u @ x_dev) ** 2
                        + gamma * assembly.reg_norm_of(x_dev) ** 2)
            rhs = omega ** 2 + gamma * y_bound ** 2
            size = omega * math.sqrt(y_bound ** 2 + 1.0)
            rows.append(SweepRow(
                level=omega, seed=seed, gamma=gamma, data_size=size,
                error_l2=err_f, log_product=_log_product(err_f, omega),
                holder_error=holder, ineq_lhs=lhs, ineq_rhs=rhs,
                in_regime=size < config.regime_cap,
            ))
    report = StabilityReport(scenario=config.scenario, rows=rows, y_bound=y_bound)
    _fit_holder_exponent(report)
    return report


def run_holder_region(config: SweepConfig,
                      bundle: ManufacturedIp2 | None = None) -> StabilityReport:
    """Convergence sweep focused on the near-region exponent fit."""
    return run_qrm_convergence(config, bundle=bundle)


def _fit_holder_exponent(report: StabilityReport):
    pts = [(r.data_size, r.holder_error) for r in report.rows
           if r.in_regime and r.holder_error > 0 and 0 < r.data_size < 1]
    if len(pts) < 3:
        return
    sizes = sorted({s for s, _ in pts}, reverse=True)
    xs, ys = [], []
    for s in sizes:
        med = np.median([h for ss, h in pts if ss == s])
        xs.append(math.log(s))
        ys.append(math.log(med))
    if len(xs) < 3:
        return
    slope, intercept = np.polyfit(xs, ys, 1)
    fitted = np.polyval([slope, intercept], xs)
    ss_res = float(np.sum((np.asarray(ys) - fitted) ** 2))
    ss_tot = float(np.sum((np.asarray(ys) - np.mean(ys)) ** 2))
    report.fitted_rho = float(slope)
    report.r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def run_ip2_stability(config: SweepConfig,
                      op: EllipticOperator | None = None) -> StabilityReport:
    """Hyperplane-data stability sweep over a multiplicative trace-noise ladder.

    For each noise level the full pipeline runs on the corrupted trace; the
    stability functional F is computed from the transformed data perturbation
    plus the residual of the reconstructed space-time field against the
    noiseless truth, so the delta = 0 row measures the pure discretization
    floor.
    """
    op = op or EllipticOperator.laplacian(1)
    bundle = manufactured_ip2(
        op, geometry=baseline_ip2_geometry(), h=config.h, n_targets=config.n_targets,
        bump_center=config.bump_center, bump_radius=config.bump_radius,
    )
    assembly = QrmAssembly(bundle.op, bundle.grid, bundle.times)
    near = d_half_mask(bundle.grid, bundle.times)
    omega_mask = domain_mask(bundle.grid, bundle.geometry).inside
    cell = bundle.grid.cell_volume()
    y_bound = assembly.reg_norm_of_field(bundle.clean_v_hat_star)
    f_ref = np.linalg.norm(bundle.f.values[omega_mask]) * math.sqrt(cell)

    clean_phi = bundle.with_neumann.faces[0].values
    clean_psi = bundle.with_neumann.neumann[0]
    p_clean = bundle.p.values

    rows = []
    for seed in config.seeds:
        for delta in config.ladder:
            noisy = add_noise(bundle.trace, NoiseSpec(delta=delta, seed=seed))
            transformed, with_neumann, p, r = _ip2_data_chain(bundle, noisy)
            omega_meas = float(np.linalg.norm(assembly.weight_p(p.values - p_clean)))
            gamma = config.resolve_gamma(delta, measured_omega=max(omega_meas, 1e-10))
            sol = assembly.solve(p.values, gamma)
            f_hat = extract_initial(sol, r, geometry=bundle.geometry)

            err = float(np.linalg.norm((f_hat.values - bundle.f.values)[omega_mask])
                        * math.sqrt(cell)) / f_ref
            w = sol.u_gamma.values + r.values - bundle.v_phi
            residual_k = float(np.linalg.norm(
                assembly.weight_p(apply_heat_residual(bundle.op, bundle.grid,
                                                      bundle.times, w))))
            beta0 = with_neumann.faces[0].values - clean_phi
            beta1 = with_neumann.neumann[0] - clean_psi
            face = bundle.with_neumann.faces[0]
            f_size = (
                trace_h1([beta0], bundle.times[1:], [face.cell_measure()],
                         [face.spacing])
                + trace_l2([beta1], bundle.times[1:], [face.cell_measure()])
                + residual_k
            )
            holder = h10_spacetime(w, bundle.grid, bundle.times, near)
            rows.append(SweepRow(
                level=delta, seed=seed, gamma=gamma, data_size=f_size,
                error_l2=err, log_product=_log_product(err, f_size),
                holder_error=holder, ineq_lhs=residual_k ** 2,
                ineq_rhs=omega_meas ** 2 + gamma * y_bound ** 2,
                in_regime=f_size < config.regime_cap,
            ))
    report = StabilityReport(scenario=config.scenario, rows=rows, y_bound=y_bound)
    _fit_holder_exponent(report)
    return report


def _ip2_data_chain(bundle: ManufacturedIp2, trace: BoundaryTrace):
    """Transform, flux recovery, and homogenization for one (noisy) trace."""
    growth = growth_bound_from_trace(trace)
    transformed = transform_trace(trace, bundle.work_plan, growth)
    transformers = [SignalTransformer(fc.values, bundle.work_plan) for fc in trace.faces]
    with_neumann = recover_neumann(
        bundle.op, transformed, bundle.geometry, h=bundle.grid.spacing[0],
        data_fns=[tr.at for tr in transformers],
    )
    psi2 = BoundaryTrace(
        surface="P1", times=with_neumann.times.copy(),
        faces=[replace(with_neumann.faces[0], values=with_neumann.neumann[0])],
    )
    p, r = homogenize(with_neumann, psi2, bundle.op, bundle.grid, bundle.times)
    return transformed, with_neumann, p, r


# -- full-boundary (interval) stability sweep --------------------------------


def hermite_lift(grid: Grid, times, phi_lo, dx_lo, phi_hi, dx_hi) -> SpaceTimeField:
    """Cubic Hermite lift matching value and x-derivative on both interval ends.

    ``dx`` values are signed derivatives in the +x direction.  Data live on
    times[1:]; the lift vanishes on the initial slice.
    """
    x = grid.axis(0)
    span = x[-1] - x[0]
    s = (x - x[0]) / span
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = (s ** 3 - 2 * s ** 2 + s) * span
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = (s ** 3 - s ** 2) * span
    times = np.asarray(times, dtype=float)
    vals = np.zeros((times.size,) + grid.shape)
    for k in range(1, times.size):
        vals[k] = (h00 * phi_lo[k - 1] + h10 * dx_lo[k - 1]
                   + h01 * phi_hi[k - 1] + h11 * dx_hi[k - 1])
    return SpaceTimeField(grid, times, vals)


def default_ip1_geometry() -> GeometrySpec:
    return GeometrySpec(
        ndim=1,
        measurement_kind=MeasurementKind.FULL_BOUNDARY,
        omega_box=(np.array([0.25]), np.array([0.75])),
    )


@dataclass
class ManufacturedIp1:
    op: EllipticOperator
    geometry: GeometrySpec
    f: Field
    grid: Grid                     # reconstruction grid over the interval
    times: np.ndarray
    work_plan: TransformPlan
    trace: BoundaryTrace
    v_cyl: np.ndarray              # true diffusion field on the cylinder
    clean_faces: dict              # face -> (phi, dx) reference series


def manufactured_ip1(op: EllipticOperator, geometry: GeometrySpec | None = None,
                     h: float = 1.0 / 128.0, n_targets: int = 33,
                     bump_center: float = 0.5, bump_radius: float = 0.15,
                     cfl: float = 0.5, plan: TransformPlan | None = None,
                     onset_floor: float = 1e-4, onset_ratio: float = 1.2,
                     onset_until: float = 0.2) -> ManufacturedIp1:
    """Synthetic full-boundary problem on an interval."""
    geometry = geometry or default_ip1_geometry()
    plan = plan or TransformPlan(t_targets=default_t_targets(n_targets))
    targets = np.unique(np.concatenate([
        onset_times(onset_until, onset_floor, onset_ratio), plan.t_targets,
    ]))
    work_plan = replace(plan, t_targets=targets)
    lo, hi = geometry.omega_box
    n = int(round((hi[0] - lo[0]) / h)) + 1
    grid = Grid((float(lo[0]),), (h,), (n,))
    times = np.concatenate([[0.0], targets])
    f = Field(grid, bump(grid.axis(0), bump_center, bump_radius))

    run = solve_wave(op, f, T=plan.tau_max, cfl=cfl)
    trace = extract_trace_ip1(run, geometry)

    v = solve_parabolic(op, f, times, dt_max=float("inf"))
    off = v.grid.index_of(grid.origin[0], 0)
    v_cyl = v.values[:, off:off + n].copy()
    hx = grid.spacing[0]
    clean_faces = {
        "lo": (v_cyl[1:, 0].copy(),
               ((-3 * v.values[:, off] + 4 * v.values[:, off + 1]
                 - v.values[:, off + 2]) / (2 * hx))[1:].copy()),
        "hi": (v_cyl[1:, -1].copy(),
               ((3 * v.values[:, off + n - 1] - 4 * v.values[:, off + n - 2]
                 + v.values[:, off + n - 3]) / (2 * hx))[1:].copy()),
    }
    return ManufacturedIp1(op=op, geometry=geometry, f=f, grid=grid, times=times,
                           work_plan=work_plan, trace=trace, v_cyl=v_cyl,
                           clean_faces=clean_faces)


def _ip1_data_chain(bundle: ManufacturedIp1, trace: BoundaryTrace):
    """Transform, flux recovery, and two-sided homogenization for one trace."""
    growth = growth_bound_from_trace(trace)
    transformed = transform_trace(trace, bundle.work_plan, growth)
    transformers = [SignalTransformer(fc.values, bundle.work_plan) for fc in trace.faces]
    with_neumann = recover_neumann(
        bundle.op, transformed, bundle.geometry, h=bundle.grid.spacing[0],
        data_fns=[tr.at for tr in transformers],
    )
    data = {}
    for face, neumann in zip(with_neumann.faces, with_neumann.neumann):
        # outward normal derivative -> signed +x derivative
        dx = -neumann if face.side == "lo" else neumann
        data[face.side] = (face.values, dx)
    r = hermite_lift(bundle.grid, bundle.times,
                     data["lo"][0], data["lo"][1], data["hi"][0], data["hi"][1])
    p_vals = -apply_heat_residual(bundle.op, bundle.grid, bundle.times, r.values)
    p = SpaceTimeField(bundle.grid, 0.5 * (bundle.times[:-1] + bundle.times[1:]), p_vals)
    return with_neumann, p, r


def run_ip1_stability(config: SweepConfig,
                      op: EllipticOperator | None = None) -> StabilityReport:
    """Full-boundary stability sweep on an interval domain.

    All faces are homogenized through the Hermite lift, so the shifted
    unknown has zero Cauchy data on the whole lateral boundary; the
    reconstruction then follows the same minimization with both endpoint
    layers eliminated.  K = 0 for the underlying diffusion field, so the
    residual of the reconstructed cylinder field against the truth measures
    the discretization floor.
    """
    op = op or EllipticOperator.laplacian(1)
    bundle = manufactured_ip1(op, h=config.h, n_targets=config.n_targets)
    faces = ((0, "lo"), (0, "hi"))
    assembly = QrmAssembly(bundle.op, bundle.grid, bundle.times,
                           constrained_faces=faces)
    omega_mask = np.ones(bundle.grid.shape, dtype=bool)
    omega_mask[:2] = omega_mask[-2:] = False
    cell = bundle.grid.cell_volume()
    f_ref = np.linalg.norm(bundle.f.values[omega_mask]) * math.sqrt(cell)
    near = d_half_mask(bundle.grid, bundle.times)

    _, p_clean, r_clean = _ip1_data_chain(bundle, bundle.trace)
    v_hat_clean = bundle.v_cyl - r_clean.values
    y_bound = assembly.reg_norm_of_field(v_hat_clean)

    rows = []
    for seed in config.seeds:
        for delta in config.ladder:
            noisy = add_noise(bundle.trace, NoiseSpec(delta=delta, seed=seed))
            with_neumann, p, r = _ip1_data_chain(bundle, noisy)
            omega_meas = float(np.linalg.norm(assembly.weight_p(p.values - p_clean.values)))
            gamma = config.resolve_gamma(delta, measured_omega=max(omega_meas, 1e-10))
            sol = assembly.solve(p.values, gamma)
            f_hat_vals = sol.u_gamma.values[0] + r.values[0]
            err = float(np.linalg.norm((f_hat_vals - bundle.f.values)[omega_mask])
                        * math.sqrt(cell)) / f_ref
            w = sol.u_gamma.values + r.values - bundle.v_cyl
            residual_k = float(np.linalg.norm(
                assembly.weight_p(apply_heat_residual(bundle.op, bundle.grid,
                                                      bundle.times, w))))
            f_size = residual_k
            for face, neumann in zip(with_neumann.faces, with_neumann.neumann):
                phi_ref, dx_ref = bundle.clean_faces[face.side]
                beta0 = face.values - phi_ref
                dx = -neumann if face.side == "lo" else neumann
                beta1 = dx - dx_ref
                f_size += trace_h1([beta0], bundle.times[1:], [1.0], [()])
                f_size += trace_l2([beta1], bundle.times[1:], [1.0])
            holder = h10_spacetime(w, bundle.grid, bundle.times, near)
            rows.append(SweepRow(
                level=delta, seed=seed, gamma=gamma, data_size=f_size,
                error_l2=err, log_product=_log_product(err, f_size),
                holder_error=holder, ineq_lhs=residual_k ** 2,
                ineq_rhs=omega_meas ** 2 + gamma * y_bound ** 2,
                in_regime=f_size < config.regime_cap,
            ))
    report = StabilityReport(scenario=config.scenario, rows=rows, y_bound=y_bound)
    _fit_holder_exponent(report)
    return report


def run_sweep(config: SweepConfig, op: EllipticOperator | None = None) -> StabilityReport:
    """Dispatch a sweep by scenario name."""
    if config.scenario in ("qrm", "qrm_convergence"):
        return run_qrm_convergence(config, op=op)
    if config.scenario in ("holder", "holder_region"):
        return run_holder_region(config)
    if config.scenario in ("ip2", "ip2_stability"):
        return run_ip2_stability(config, op=op)
    if config.scenario in ("ip1", "ip1_stability"):
        return run_ip1_stability(config, op=op)
    raise InvalidData(f"unknown sweep scenario {config.scenario!r}")
