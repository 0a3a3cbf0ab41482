"""Command-line interface: one subcommand per pipeline stage.

Stages exchange artifacts on disk so experiments stay inspectable; a
composed ``reconstruct`` runs the whole chain in one shot.  Every invocation
writes a JSON manifest next to its first output recording inputs, digests,
seeds, and library versions.  Exit codes: 0 success, 1 domain error,
2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time


def _apply_thread_cap(threads):
    if threads is None:
        threads = os.environ.get("QTAT_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(threads)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qtat",
        description="initial-condition reconstruction from lateral boundary data",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS/OpenMP threads (also QTAT_THREADS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="solve the wave problem and record traces")
    p.add_argument("--op", required=True)
    p.add_argument("--f", required=True, dest="f_cfg")
    p.add_argument("--T", type=float, default=10.0)
    p.add_argument("--cfl", type=float, default=0.5)
    p.add_argument("--geometry", required=True)
    p.add_argument("--out", help="full space-time recording (large)")
    p.add_argument("--trace", required=True)

    p = sub.add_parser("transform", help="apply the diffusion-time transform to a trace")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tau-max", type=float, default=None)
    p.add_argument("--n-targets", type=int, default=33)
    p.add_argument("--onset-floor", type=float, default=1e-4)
    p.add_argument("--onset-ratio", type=float, default=1.2)
    p.add_argument("--onset-until", type=float, default=0.2)
    p.add_argument("--plain-targets", action="store_true",
                   help="skip the onset refinement ladder")
    p.add_argument("--out", required=True)
    p.add_argument("--tail-report")

    p = sub.add_parser("recover-neumann", help="recover the flux by exterior solves")
    p.add_argument("--op", required=True)
    p.add_argument("--trace", required=True, help="transformed trace")
    p.add_argument("--hyperbolic", help="original trace; enables exact-time data")
    p.add_argument("--geometry", required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--slab-width", type=float, default=2.0)
    p.add_argument("--dt-max", type=float, default=0.01)
    p.add_argument("--out", required=True)

    p = sub.add_parser("noise", help="apply multiplicative measurement noise")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("qrm", help="homogenize and minimize the regularized functional")
    p.add_argument("--op", required=True)
    p.add_argument("--trace", required=True, help="trace carrying dirichlet and flux")
    p.add_argument("--geometry", required=True)
    p.add_argument("--h", type=float, required=True,
                   help="spatial resolution of the reconstruction box")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--reg", choices=("h21", "h4"), default="h21")
    p.add_argument("--truth", help="field artifact for error reporting")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("reconstruct", help="composed pipeline from a hyperbolic trace")
    p.add_argument("--op", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--gamma", type=float)
    p.add_argument("--omega", type=float)
    p.add_argument("--n-targets", type=int, default=33)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sweep", help="run a scripted stability/convergence sweep")
    p.add_argument("--scenario", help="override the config scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--op")
    p.add_argument("--seed", type=int, required=True,
                   help="base seed shift applied to the config seeds")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("carleman-check", help="measure weighted-estimate constants")
    p.add_argument("--op", required=True)
    p.add_argument("--nu", type=float, default=4.0)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--lam", type=float, default=2.0)
    p.add_argument("--lemma", choices=("21", "22"), default="21")
    p.add_argument("--family", default="trig20")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--x1-range", type=float, nargs=2, default=(0.02, 0.5))
    p.add_argument("--resolution", type=int, nargs=2, default=(97, 65))
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("export-csv", help="dump an artifact to CSV")
    p.add_argument("infile")
    p.add_argument("outfile")

    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_thread_cap(args.threads)

    from .errors import ConfigError, QtatError

    t0 = time.time()
    try:
        inputs, outputs, seed = _dispatch(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QtatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    from .config import write_manifest

    if outputs:
        manifest_path = str(outputs[0]) + ".manifest.json"
        write_manifest(manifest_path, args.command, argv, inputs, outputs,
                       seed=seed, wall_time=round(time.time() - t0, 3))
    return 0


def _dispatch(args):
    from . import io as qio
    from .config import load_field, load_geometry, load_operator, load_sweep

    if args.command == "forward":
        from .grid import MeasurementKind
        from .wave import extract_trace_ip1, extract_trace_ip2, solve_wave

        op = load_operator(args.op)
        f = load_field(args.f_cfg)
        geometry = load_geometry(args.geometry)
        run = solve_wave(op, f, T=args.T, cfl=args.cfl)
        if geometry.measurement_kind is MeasurementKind.HYPERPLANE:
            trace = extract_trace_ip2(run, geometry)
        else:
            trace = extract_trace_ip1(run, geometry)
        outputs = []
        if args.out:
            qio.write_artifact(args.out, run.u)
            outputs.append(args.out)
        qio.write_artifact(args.trace, trace)
        outputs.append(args.trace)
        return [args.op, args.f_cfg, args.geometry], outputs, None

    if args.command == "transform":
        import numpy as np

        from .qrm import onset_times
        from .transform import TransformPlan, default_t_targets, transform_trace
        from .wave import growth_bound_from_trace

        trace = qio.read_artifact(args.infile)
        tau_max = args.tau_max if args.tau_max is not None else float(trace.times[-1])
        targets = default_t_targets(args.n_targets)
        if not args.plain_targets:
            targets = np.unique(np.concatenate([
                onset_times(args.onset_until, args.onset_floor, args.onset_ratio),
                targets,
            ]))
        plan = TransformPlan(tau_max=tau_max, t_targets=targets)
        growth = growth_bound_from_trace(trace)
        out = transform_trace(trace, plan, growth)
        qio.write_artifact(args.out, out)
        outputs = [args.out]
        if args.tail_report:
            qio.write_tail_csv(args.tail_report, out.tail_bounds)
            outputs.append(args.tail_report)
        return [args.infile], outputs, None

    if args.command == "recover-neumann":
        from .parabolic import recover_neumann
        from .transform import SignalTransformer, TransformPlan
        from .wave import BoundaryTrace

        op = load_operator(args.op)
        geometry = load_geometry(args.geometry)
        trace = qio.read_artifact(args.trace)
        data_fns = None
        inputs = [args.op, args.geometry, args.trace]
        if args.hyperbolic:
            hyper = qio.read_artifact(args.hyperbolic)
            plan = TransformPlan(tau_max=float(hyper.times[-1]),
                                 t_targets=trace.times)
            data_fns = [SignalTransformer(fc.values, plan).at for fc in hyper.faces]
            inputs.append(args.hyperbolic)
        out = recover_neumann(op, trace, geometry, h=args.h,
                              slab_width=args.slab_width, dt_max=args.dt_max,
                              data_fns=data_fns)
        qio.write_artifact(args.out, out)
        return inputs, [args.out], None

    if args.command == "noise":
        from .parabolic import NoiseSpec, add_noise

        trace = qio.read_artifact(args.infile)
        out = add_noise(trace, NoiseSpec(delta=args.delta, seed=args.seed))
        qio.write_artifact(args.out, out)
        return [args.infile], [args.out], args.seed

    if args.command == "qrm":
        from dataclasses import replace as dc_replace

        import numpy as np

        from .qrm import QrmProblem, assemble_and_minimize, extract_initial, homogenize, phi_discretization
        from .wave import BoundaryTrace

        op = load_operator(args.op)
        geometry = load_geometry(args.geometry)
        trace = qio.read_artifact(args.trace)
        if trace.neumann is None:
            from .errors import InvalidData

            raise InvalidData("qrm needs a trace with recovered flux "
                              "(run recover-neumann first)")
        grid, times = phi_discretization(geometry, args.h, trace.times)
        psi2 = BoundaryTrace(
            surface=trace.surface, times=trace.times.copy(),
            faces=[dc_replace(trace.faces[0], values=trace.neumann[0])],
        )
        p, r = homogenize(trace, psi2, op, grid, times)
        reg = "h21" if args.reg == "h21" else "h4_surrogate"
        problem = QrmProblem(op=op, grid=grid, times=times, p=p, r=r,
                             gamma=args.gamma, reg_norm=reg)
        solution = assemble_and_minimize(problem)
        f_hat = extract_initial(solution, r, geometry=geometry)
        qio.write_artifact(args.out, f_hat)
        outputs = [args.out]
        inputs = [args.op, args.geometry, args.trace]
        l2_error = None
        truth = None
        if args.truth:
            truth = qio.read_artifact(args.truth)
            inputs.append(args.truth)
            if truth.values.shape == f_hat.values.shape:
                denom = np.linalg.norm(truth.values)
                l2_error = float(np.linalg.norm(f_hat.values - truth.values)
                                 / (denom if denom else 1.0))
        if args.report:
            lemma_rhs = solution.norm_p_l2 / np.sqrt(solution.gamma)
            qio.write_qrm_csv(args.report, solution, solution.norm_u_reg,
                              lemma_rhs, l2_error)
            outputs.append(args.report)
            if not args.no_figures:
                from .report import render_field_figure

                fig_path = os.path.splitext(args.report)[0] + ".png"
                render_field_figure(f_hat, fig_path, truth=truth,
                                    title=f"gamma={args.gamma:g}")
                outputs.append(fig_path)
        return inputs, outputs, None

    if args.command == "reconstruct":
        from .qrm import ReconstructConfig, reconstruct
        from .transform import TransformPlan, default_t_targets

        if args.gamma is None and args.omega is None:
            from .errors import ConfigError

            raise ConfigError("reconstruct needs --gamma or a declared noise --omega")
        op = load_operator(args.op)
        geometry = load_geometry(args.geometry)
        trace = qio.read_artifact(args.trace)
        plan = TransformPlan(tau_max=float(trace.times[-1]),
                             t_targets=default_t_targets(args.n_targets))
        config = ReconstructConfig(op=op, geometry=geometry, h=args.h, plan=plan,
                                   gamma=args.gamma, omega=args.omega)
        f_hat = reconstruct(trace, config)
        qio.write_artifact(args.out, f_hat)
        return [args.op, args.geometry, args.trace], [args.out], None

    if args.command == "sweep":
        from dataclasses import replace as dc_replace

        from .experiments import run_sweep

        config = load_sweep(args.config)
        if args.scenario:
            config = dc_replace(config, scenario=args.scenario)
        if args.seed:
            config = dc_replace(config, seeds=tuple(s + args.seed for s in config.seeds))
        op = load_operator(args.op) if args.op else None
        report = run_sweep(config, op=op)
        qio.write_sweep_csv(args.out, report)
        outputs = [args.out]
        inputs = [args.config] + ([args.op] if args.op else [])
        if not args.no_figures:
            from .report import render_sweep_figure

            fig_path = os.path.splitext(args.out)[0] + ".png"
            render_sweep_figure(report, fig_path)
            outputs.append(fig_path)
        return inputs, outputs, args.seed

    if args.command == "carleman-check":
        import numpy as np

        from .carleman import CarlemanParams, measure_carleman_constant, trig_family
        from .errors import ConfigError
        from .grid import build_grid

        op = load_operator(args.op)
        params = CarlemanParams(nu=args.nu, epsilon=args.eps, lam=args.lam)
        if not args.family.startswith("trig"):
            raise ConfigError(f"unknown test family {args.family!r}")
        count = int(args.family[4:] or 20)
        if args.lemma == "21":
            eps = params.epsilon
            t_range = (eps * (1 - 1 / np.sqrt(2.0)), eps * (1 + 1 / np.sqrt(2.0)))
            lemma = "L21"
        else:
            t_range = (0.0, 1.0)
            lemma = "L22"
        grid = build_grid([tuple(args.x1_range), t_range], tuple(args.resolution))
        family = trig_family(grid, count=count, seed=args.seed)
        report = measure_carleman_constant(op, params, family, grid, lemma=lemma)
        qio.write_carleman_csv(args.out, report)
        outputs = [args.out]
        if not args.no_figures:
            from .report import render_carleman_figure

            fig_path = os.path.splitext(args.out)[0] + ".png"
            render_carleman_figure(report, fig_path)
            outputs.append(fig_path)
        return [args.op], outputs, args.seed

    if args.command == "export-csv":
        obj = qio.read_artifact(args.infile)
        qio.export_csv(args.outfile, obj)
        return [args.infile], [args.outfile], None

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
