"""Command-line entry point: ``hexpress run <fixture|file> [options]``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path


from . import io as hio
from .problems import BUILTINS, ProblemError, builtin, dump_problem, load_problem, resolve

log = logging.getLogger("hexpress")


def _mask_grid(text: str) -> tuple[int, int]:
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NXxNY, got {text!r}") from None
    if nx < 1 or ny < 1:
        raise argparse.ArgumentTypeError("mask counts must be positive")
    return nx, ny


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hexpress", description="Mask-based topology optimization "
                                "with design-dependent pressure loads on honeycomb meshes.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="optimize or analyse a built-in fixture or a problem file")
    r.add_argument("problem", help=f"one of {', '.join(BUILTINS)} or a YAML file")
    r.add_argument("--iters", type=int, help="maximum number of MMA iterations")
    r.add_argument("--seed-masks", type=_mask_grid, metavar="NXxNY", help="initial mask grid")
    r.add_argument("--step", type=float, metavar="S", help="step length S of the relaxed update")
    r.add_argument("--smooth", type=int, metavar="BETA", help="boundary smoothing passes")
    r.add_argument("--freeze-alpha", action="store_true", help="hold every alpha at its initial value")
    r.add_argument("--freeze-gamma", action="store_true", help="hold every gamma at its initial value")
    r.add_argument("--check-gradients", action="store_true",
                   help="run the finite-difference gradient checks on a reduced mesh and exit")
    r.add_argument("--analysis-only", action="store_true",
                   help="solve pressure and displacement for the background density, no optimization")
    r.add_argument("--nex", type=int, help="override the element count in x")
    r.add_argument("--ney", type=int, help="override the element count in y")
    r.add_argument("--out", type=Path, default=Path("out"), help="output directory (default ./out)")
    r.add_argument("-q", "--quiet", action="store_true", help="no progress output")

    s = sub.add_parser("show", help="print a problem as YAML")
    s.add_argument("problem")
    sub.add_parser("list", help="list the built-in fixtures")
    sub.add_parser("selftest", help="validate every built-in fixture")
    return p


def apply_overrides(spec, args):
    opt = spec.optimizer
    changes = {}
    if args.iters is not None:
        changes["max_iters"] = args.iters
    if args.step is not None:
        changes["step"] = args.step
    if args.seed_masks is not None:
        changes["n_mx"], changes["n_my"] = args.seed_masks
    if args.freeze_alpha:
        changes["freeze_alpha"] = True
    if args.freeze_gamma:
        changes["freeze_gamma"] = True
    spec = replace(spec, optimizer=replace(opt, **changes))
    if args.smooth is not None:
        spec = replace(spec, smoothing=replace(spec.smoothing, beta=args.smooth))
    if args.nex is not None or args.ney is not None:
        spec = spec.with_mesh(args.nex or spec.n_ex, args.ney or spec.n_ey)
    return spec


def _analysis_only(spec, out: Path) -> None:
    from .optimizer import make_analysis

    setup = resolve(spec)
    analysis = make_analysis(setup)
    rho = setup.analysis_density()
    state = analysis.solve(rho)
    hio.write_vtk(out / "final.vtk", setup.mesh, rho, state.p, state.u, state.F)
    hio.write_svg(out / "density.svg", setup.mesh, rho)
    p_in = spec.pressure.p_in
    log.info("pressure range [%.6g, %.6g] (p_in = %g), objective %.6g",
             state.p.min(), state.p.max(), p_in, analysis.objective_value(state))


def _optimize(spec, out: Path) -> None:
    from .optimizer import run

    def progress(it, rec, rho):
        if it % 10 == 0:
            log.info("iter %4d  f %.6g  V %.4f  GS_I %.4f", it, rec.objective, rec.vol_frac, rec.gsi)

    result = run(spec, callback=progress)
    hio.write_log(out / "log.csv", result.log)
    hio.write_vtk(out / "final.vtk", result.mesh, result.rho, result.state.p, result.state.u,
                  result.state.F)
    hio.write_svg(out / "density.svg", result.mesh, result.rho)
    hio.write_masks(out / "masks.txt", result.masks)
    f = result.analysis.objective_value(result.state)
    log.info("finished after %d iterations (%s): f %.6g", len(result.log), result.log.stop_reason, f)


def _limit_threads():
    n = os.environ.get("HEXPRESS_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.command == "list":
        for name in BUILTINS:
            print(name)
        return 0
    if args.command == "selftest":
        for name in BUILTINS:
            setup = resolve(builtin(name))
            print(f"{name}: {setup.mesh.n_el} elements, {len(setup.fixed_dofs)} fixed dofs, "
                  f"{len(setup.pressure_bc)} pressure nodes ok")
        return 0
    try:
        spec = load_problem(args.problem)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "show":
        sys.stdout.write(dump_problem(spec))
        return 0

    try:
        spec = apply_overrides(spec, args)
        resolve(spec)  # every selector must resolve before any work starts
    except (ValueError, ProblemError) as exc:
        print(f"error: invalid problem: {exc}", file=sys.stderr)
        return 2

    limiter = _limit_threads()
    try:
        if args.check_gradients:
            from .gradcheck import check_problem_gradients

            report = check_problem_gradients(spec)
            for line in report.lines():
                print(line)
            return 0
        args.out.mkdir(parents=True, exist_ok=True)
        if args.analysis_only:
            _analysis_only(spec, args.out)
        else:
            _optimize(spec, args.out)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if limiter is not None:
            limiter.unregister()
    return 0


if __name__ == "__main__":
    sys.exit(main())
