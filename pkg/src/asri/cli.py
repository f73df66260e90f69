"""Command line interface: ``asri scheme | verify | simulate | convergence``."""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .errors import AsriError
from .harness import ExperimentConfig, crossover, emit, fit_order, preset, refinement_check, simulate_paths
from .schemes import build_table, parse_scheme_name, serialize
from .verify import SUITES, run_suites
from .words import Alphabet, JumpSpec


def parse_jump(text: str) -> JumpSpec:
    """Parse ``INDEX:RATE`` or ``INDEX:RATE:SIZE=WEIGHT,SIZE=WEIGHT``.

    Args:
        text: jump description, rationals allowed (``1:5/2:1=1,-1=1``).

    Returns:
        The jump specification.
    """
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise argparse.ArgumentTypeError(f"bad jump {text!r}; expected INDEX:RATE[:SIZE=WEIGHT,...]")
    try:
        sizes = ((Fraction(1), Fraction(1)),)
        if len(parts) == 3:
            sizes = tuple(tuple(Fraction(x) for x in pair.split("=")) for pair in parts[2].split(","))
        return JumpSpec(int(parts[0]), Fraction(parts[1]), sizes)
    except (ValueError, ZeroDivisionError, AsriError) as exc:
        raise argparse.ArgumentTypeError(f"bad jump {text!r}: {exc}") from None


def _load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        config = ExperimentConfig.load(args.config)
    else:
        config = preset(args.preset)
    changes = {k: getattr(args, k) for k in ("paths", "seed") if getattr(args, k) is not None}
    return config.with_(**changes) if changes else config


def _print_report(report, config: ExperimentConfig, out) -> None:
    print(f"noise digest {report.noise_digest}", file=out)
    print(f"{'scheme':<14}{'h':>12}{'mse':>14}{'mse_se':>12}{'cpu_s':>10}{'p':>7}", file=out)
    for name in report.schemes:
        for r in report.by_scheme(name):
            print(f"{r.scheme:<14}{r.h:>12.6g}{r.mse:>14.6g}{r.mse_se:>12.4g}{r.cpu_seconds:>10.4g}{r.p:>7}", file=out)
    for name, fit in fit_order(report).items():
        print(f"order {name}: {fit.slope:.3f} +- {fit.stderr:.3f} (excluded h: {fit.excluded})", file=out)
    names = report.schemes
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            for h in config.steps:
                mean, lo, hi = report.paired(a, b, h)
                print(f"paired {a} - {b} at h={h:g}: {mean:.4g} [{lo:.4g}, {hi:.4g}]", file=out)
            if all(r.cpu_seconds > 0 for r in report.results):
                try:
                    c = crossover(report, a, b)
                    print(f"cpu ratio {b}/{a}: {c['ratio_at_largest_error']:.3g} at error {c['largest_error']:.3g}, "
                          f"{c['ratio_at_smallest_error']:.3g} at error {c['smallest_error']:.3g}", file=out)
                except AsriError as exc:
                    print(f"cpu ratio {b}/{a}: {exc}", file=out)


def cmd_scheme(args: argparse.Namespace) -> int:
    kind, n, grading = parse_scheme_name(args.name)
    alphabet = Alphabet(args.wiener, args.jump or [], max(n + 1, 2))
    table = build_table(kind, n, alphabet, grading)
    text = serialize(table)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_suites(args.suites, n=args.n, gram_seeds=args.gram_seed, max_grade=args.max_grade)
    failed = 0
    for res in results:
        for check in res.checks:
            if args.verbose or not check.passed or len(res.checks) <= 12:
                print(check)
        status = "PASS" if res.passed else "FAIL"
        print(f"{status}  suite {res.suite}: {sum(c.passed for c in res.checks)}/{len(res.checks)} checks in {res.seconds:.2f}s")
        failed += not res.passed
    return 1 if failed else 0


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config(args)
    report = simulate_paths(config, workers=args.workers, timing=not args.no_timing)
    _print_report(report, config, sys.stdout)
    if args.refinement:
        for (name, h), (delta, se, ok) in refinement_check(config, workers=args.workers).items():
            print(f"refinement {name} h={h:g}: |change|={delta:.3g} se={se:.3g} {'ok' if ok else 'UNDER-RESOLVED'}")
    return 0


def cmd_convergence(args: argparse.Namespace) -> int:
    config = _load_config(args)
    report = simulate_paths(config, workers=args.workers)
    fit_order(report)
    written = emit(report, args.out, formats=args.formats.split(","))
    (Path(args.out) / "config.json").write_text(json.dumps(config.to_json(), indent=2))
    _print_report(report, config, sys.stdout)
    for fmt, path in written.items():
        print(f"wrote {fmt}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asri", description="Quasi-shuffle integrators for jump-diffusion SDEs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scheme", help="print a scheme table")
    p.add_argument("name", help="taylor-ms-N, taylor-wl-N, asri-N or masri-N")
    p.add_argument("--wiener", type=int, default=1, help="number of Wiener drivers")
    p.add_argument("--jump", type=parse_jump, action="append", help="INDEX:RATE[:SIZE=WEIGHT,...], repeatable")
    p.add_argument("--out", help="write the table to this file")
    p.set_defaults(func=cmd_scheme)

    p = sub.add_parser("verify", help="run exact identity suites")
    p.add_argument("suites", nargs="+", choices=list(SUITES) + ["all"], metavar="SUITE",
                   help=f"one or more of: {', '.join(SUITES)}, all")
    p.add_argument("--n", type=int, action="append", help="scheme grade, repeatable")
    p.add_argument("--gram-seed", type=int, action="append", help="Gram seed, repeatable")
    p.add_argument("--max-grade", type=int, help="word length for the hopf and orthogonality suites")
    p.add_argument("--verbose", action="store_true", help="print every check")
    p.set_defaults(func=cmd_verify)

    for name, helptext in (("simulate", "run a Monte Carlo experiment"), ("convergence", "run and write CSV/SVG/gnuplot")):
        p = sub.add_parser(name, help=helptext)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="JSON experiment config")
        src.add_argument("--preset", choices=["trig", "trig-smoke", "trig-linear", "linear-jump"])
        p.add_argument("--paths", type=int, help="override the path count")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--workers", type=int, help="worker processes (default: ASRI_WORKERS or 1)")
        if name == "simulate":
            p.add_argument("--no-timing", action="store_true", help="skip CPU timing runs")
            p.add_argument("--refinement", action="store_true", help="also check the fine reference by halving its step")
            p.set_defaults(func=cmd_simulate)
        else:
            p.add_argument("--out", required=True, help="output directory")
            p.add_argument("--formats", default="csv,svg,gnuplot", help="comma-separated subset of csv,svg,gnuplot")
            p.set_defaults(func=cmd_convergence)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point.

    Args:
        argv: arguments without the program name.

    Returns:
        Process exit code.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AsriError as exc:
        print(f"asri: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
