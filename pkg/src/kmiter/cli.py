"""Command-line entry point: ``kmiter {feasibility,tightness,run,inpaint,cournot}``.

CSV goes to ``--output`` (stdout by default).  The configuration echo,
warnings, verdicts and summary lines go to stdout when the CSV is written
to a file and to stderr otherwise, so stdout CSV stays parseable.

Exit codes: 0 success, 1 I/O failure, 2 usage error, 3 divergence abort.
"""

import argparse
import contextlib
import math
import sys
import warnings

import numpy as np

from . import operators as ops
from .errors import ConfigurationError, PPMFormatError
from .iteration import run
from .ppm import read_ppm, write_pgm, write_ppm
from .problems import (VARIANTS, build_cournot, build_inpainting, run_cournot,
                       run_inpainting, synthetic_image)
from .schedules import (ParameterSchedule, ParamSequence, PerturbationSchedule,
                        check_feasibility, lambda_bound)
from .tightness import DEFAULT_TOL, tightness_report

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3

REGIME_CHOICES = ("hb", "nesterov", "reflected", "general")


def _fmt(v):
    return f"{v:.15g}"


@contextlib.contextmanager
def _open_output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _info_stream(args):
    return sys.stderr if args.output in (None, "-") else sys.stdout


def _echo(args, info):
    items = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print("# kmiter " + " ".join(f"{k}={v}" for k, v in items.items()), file=info)


def cmd_feasibility(args):
    a = np.linspace(0.0, 1.0, args.alpha_steps, endpoint=False)
    b = np.linspace(0.0, 1.0, args.beta_steps)
    if args.regime == "hb":
        pts = [(x, 0.0) for x in a]
    elif args.regime == "nesterov":
        pts = [(x, x) for x in a]
    elif args.regime == "reflected":
        pts = [(0.0, y) for y in b]
    else:
        pts = [(x, y) for x in a for y in b]
    with _open_output(args.output) as fh:
        fh.write("alpha,beta,lambda_bound\n")
        for x, y in pts:
            fh.write(f"{_fmt(x)},{_fmt(y)},{_fmt(lambda_bound(x, y))}\n")
    return 0


def cmd_tightness(args):
    info = _info_stream(args)
    report = tightness_report(args.resolution, tol=args.tol,
                              general_resolution=args.general_resolution)
    with _open_output(args.output) as fh:
        report.to_csv(fh)
    report.summary_csv(info)
    return 0


def _make_operator(args):
    dim = args.dim
    e = np.ones(dim) / math.sqrt(dim)
    if args.operator == "contraction":
        family = ops.affine_contraction(np.zeros(dim), args.q)
        return family, e
    if args.operator == "rotation":
        if dim != 2:
            raise ConfigurationError("rotation acts on the plane; use --dim 2")
        return ops.rotation2d(args.phi), np.array([1.0, 0.0])
    p_inf = np.ones(dim)
    family = ops.constant_family(lambda k: p_inf + e / (k * k), limit_point=p_inf)
    return family, np.zeros(dim)


def cmd_run(args):
    info = _info_stream(args)
    try:
        perts = PerturbationSchedule.from_text(args.perturb, args.dim)
        family, x0 = _make_operator(args)
    except ConfigurationError as exc:
        print(f"kmiter run: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    q = args.q if args.operator == "contraction" else None
    schedule = ParameterSchedule(ParamSequence(args.alpha_kind, args.alpha),
                                 ParamSequence(args.beta_kind, args.beta), args.lam, q)
    _echo(args, info)
    verdict = check_feasibility(schedule, horizon=max(args.max_iter, 1))
    if not verdict.feasible_weak:
        print(f"warning: parameters not admissible (weak margin sup "
              f"{_fmt(verdict.weak_margin_sup)}; violations {verdict.violations}); running anyway",
              file=info)
    report = run(family, schedule, perts, x0, args.tol, args.max_iter)
    with _open_output(args.output) as fh:
        report.to_csv(fh)
    print(f"verdict: stop_reason={report.stop_reason} iterations={report.iterations} "
          f"final_residual={_fmt(report.residual[-1])} converged={report.converged} "
          f"feasible_weak={verdict.feasible_weak}", file=info)
    return EXIT_DIVERGED if report.stop_reason == "diverged" else 0


def _summary(info, variant, lam, rho, tag, report):
    print("variant,lambda,rho,ratio_or_seed,iterations,converged", file=info)
    print(f"{variant},{_fmt(lam)},{_fmt(rho)},{tag},{report.iterations},"
          f"{str(report.converged).lower()}", file=info)


def cmd_inpaint(args):
    info = _info_stream(args)
    if args.image:
        try:
            image = read_ppm(args.image)
        except (OSError, PPMFormatError) as exc:
            print(f"kmiter inpaint: cannot read {args.image}: {exc}", file=sys.stderr)
            return EXIT_IO
    else:
        image = synthetic_image(args.size)
    _echo(args, info)
    problem = build_inpainting(image, args.ratio, args.seed, args.sigma, args.rho)
    tol, factor = problem.tolerance(args.base_tol)
    if args.tol is not None:
        tol, factor = args.tol, float("nan")
    print(f"# tolerance={_fmt(tol)} rescale_factor={_fmt(factor)}", file=info)
    report = run_inpainting(problem, args.variant, args.lam, args.max_iter, tol)
    try:
        with _open_output(args.output) as fh:
            report.to_csv(fh)
        if args.recovered:
            write_ppm(args.recovered, problem.family.recover(report.x_final))
        if args.mask_out:
            write_pgm(args.mask_out, problem.mask.omega)
    except OSError as exc:
        print(f"kmiter inpaint: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    _summary(info, args.variant, args.lam, args.rho, _fmt(args.ratio), report)
    return EXIT_DIVERGED if report.stop_reason == "diverged" else 0


def cmd_cournot(args):
    info = _info_stream(args)
    _echo(args, info)
    problem = build_cournot(args.m, args.gamma, args.seed)
    rho = args.rho_frac / problem.L
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = run_cournot(problem, args.variant, args.lam, rho, args.tol, args.max_iter)
    for w in caught:
        print(f"warning: {w.message}", file=info)
    try:
        with _open_output(args.output) as fh:
            report.to_csv(fh)
    except OSError as exc:
        print(f"kmiter cournot: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    _summary(info, args.variant, args.lam, rho, str(args.seed), report)
    return EXIT_DIVERGED if report.stop_reason == "diverged" else 0


def _steps(text):
    n = int(text)
    if n < 2:
        raise argparse.ArgumentTypeError("need at least 2 steps")
    return n


def _resolution(text):
    n = int(text)
    if n < 10:
        raise argparse.ArgumentTypeError("resolution must be >= 10")
    return n


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="kmiter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("feasibility", help="closed-form relaxation bounds over an inertia grid")
    p.add_argument("--alpha-steps", type=_steps, default=11)
    p.add_argument("--beta-steps", type=_steps, default=11)
    p.add_argument("--regime", choices=REGIME_CHOICES, default="general")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("tightness", help="spectral thresholds vs closed-form bounds")
    p.add_argument("--resolution", type=_resolution, default=200)
    p.add_argument("--general-resolution", type=_resolution, default=50)
    p.add_argument("--tol", type=_positive, default=DEFAULT_TOL)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_tightness)

    p = sub.add_parser("run", help="iterate a test operator and write the traces")
    p.add_argument("--operator", choices=("contraction", "rotation", "constant-seq"),
                   default="contraction")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--alpha-kind", choices=("constant", "ramp"), default="constant")
    p.add_argument("--beta-kind", choices=("constant", "ramp"), default="constant")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--q", type=float, default=0.5, help="contraction modulus")
    p.add_argument("--phi", type=float, default=math.pi, help="rotation angle")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--perturb", default="", help='e.g. "eps=1/k^2,theta=0.5/k^3"')
    p.add_argument("--tol", type=_positive, default=1e-8)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("inpaint", help="three-operator splitting inpainting experiment")
    p.add_argument("--image", help="binary PPM (P6); a synthetic image is used if omitted")
    p.add_argument("--size", type=int, default=32, help="synthetic image side length")
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=_positive, default=0.5)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--variant", choices=VARIANTS, default="none")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--base-tol", type=_positive, default=0.5,
                   help="tolerance at 512x512, rescaled to the image size")
    p.add_argument("--tol", type=_positive, default=None, help="absolute tolerance override")
    p.add_argument("--recovered", help="write the recovered image as PPM")
    p.add_argument("--mask-out", help="write the mask as PGM")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_inpaint)

    p = sub.add_parser("cournot", help="Nash-Cournot equilibrium experiment")
    p.add_argument("--m", type=int, default=8)
    p.add_argument("--gamma", type=float, default=200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rho-frac", type=_positive, default=1.0, help="step size as a multiple of 1/L")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--variant", choices=VARIANTS, default="none")
    p.add_argument("--tol", type=_positive, default=1e-4)
    p.add_argument("--max-iter", type=int, default=800)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_cournot)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if hasattr(args, "lam") and not 0.0 < args.lam < 1.0:
        parser.error("--lambda must lie in (0, 1)")
    if getattr(args, "command", None) == "inpaint":
        if not 0.0 <= args.ratio < 1.0:
            parser.error("--ratio must lie in [0, 1)")
        if not 0.0 < args.rho < 2.0:
            parser.error("--rho must lie in (0, 2)")
    if getattr(args, "max_iter", 1) < 1:
        parser.error("--max-iter must be >= 1")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
