"""Command-line front end.

    spdelab converge CONFIG   run a convergence study; writes CSV + JSON
                              reports and a log-log figure next to them
    spdelab simulate CONFIG   solve one trajectory and dump it as CSV
    spdelab check SUITE       run a module invariant suite
    spdelab gamma             one-off gamma-norm estimate, JSON on stdout

Exit codes: 0 success, 1 study/check failure, 2 configuration errors.
Output files are written to a temporary name and renamed into place, so a
failing run never leaves partial files behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import checks
from .config import load_raw, parse_study
from .errors import ConfigError, ValidationError
from .experiments import StudyError, run_convergence_study
from .gamma import FiniteRankOperator, audit_record, gamma_norm
from .grids import build_grid
from .noise import sample_path
from .solver import solve_exponential_euler

DEFAULT_THREADS_ENV = "SPDELAB_THREADS"


def _atomic_write(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as handle:
        handle.write(data)
    os.replace(tmp, path)


def _default_threads() -> int:
    value = os.environ.get(DEFAULT_THREADS_ENV, "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


def _stem(config_path: str) -> str:
    return os.path.splitext(os.path.basename(config_path))[0]


def cmd_converge(args) -> int:
    try:
        raw = load_raw(args.config)
        study = parse_study(raw, seed_override=args.seed, strict_override=args.strict,
                            threads_override=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run_convergence_study(
            study.mode, study.base, study.ensemble, study.norm_specs,
            seed=study.seed, strict=study.strict, threads=study.threads,
            config_digest=study.digest,
        )
    except (StudyError, ValidationError) as exc:
        print(f"study failed: {exc}", file=sys.stderr)
        return 1

    from .plots import convergence_figure_bytes

    os.makedirs(args.out_dir, exist_ok=True)
    stem = _stem(args.config)
    csv_bytes = report.to_csv_text().encode()
    json_bytes = report.to_json_text().encode()
    png_bytes = convergence_figure_bytes(report)
    _atomic_write(os.path.join(args.out_dir, f"{stem}_report.csv"), csv_bytes)
    _atomic_write(os.path.join(args.out_dir, f"{stem}_report.json"), json_bytes)
    _atomic_write(os.path.join(args.out_dir, f"{stem}_report.png"), png_bytes)
    for metric, verdict in sorted(report.verdicts.items()):
        slope = report.fits[metric].slope
        print(f"{metric}: {verdict} (fitted slope {slope:.3f})")
    print(f"reports written to {args.out_dir}/{stem}_report.{{csv,json,png}}")
    if study.strict and not report.all_passing():
        return 1
    return 0


def cmd_simulate(args) -> int:
    try:
        raw = load_raw(args.config)
        study = parse_study(raw, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    base = study.base
    try:
        path = sample_path(base.tgrid, base.K, study.seed, args.stream_id)
        out = solve_exponential_euler(base.generator, base.F, base.G, base.xi, path,
                                      ev=base.evaluator)
    except (StudyError, ValidationError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 1
    lines = ["t," + ",".join(f"x_{i + 1}" for i in range(base.sgrid.m))]
    for t, row in zip(base.tgrid.nodes, out.values):
        lines.append(f"{float(t)!r}," + ",".join(repr(float(v)) for v in row))
    os.makedirs(args.out_dir, exist_ok=True)
    target = os.path.join(args.out_dir, f"{_stem(args.config)}_trajectory_{args.stream_id}.csv")
    _atomic_write(target, ("\n".join(lines) + "\n").encode())
    print(f"trajectory written to {target}")
    return 0


def cmd_check(args) -> int:
    suite = checks.SUITES.get(args.suite)
    if suite is None:
        print(f"unknown suite {args.suite!r}; choose from {sorted(checks.SUITES)}",
              file=sys.stderr)
        return 2
    results = suite()
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_gamma(args) -> int:
    try:
        grid = build_grid(0.0, 1.0, args.m, args.r)
        if args.images:
            images = np.loadtxt(args.images, delimiter=",", ndmin=2)
            if images.shape[1] != args.m:
                raise ValidationError(
                    f"image rows must have m = {args.m} columns, got {images.shape[1]}"
                )
            rank = images.shape[0]
            R = FiniteRankOperator(np.eye(rank), images, np.ones(rank))
            inputs = {"images": args.images, "m": args.m, "r": args.r}
        else:
            rng = np.random.default_rng(args.seed)
            vectors = rng.normal(size=(args.rank, args.rank + 2))
            images = rng.normal(size=(args.rank, args.m))
            R = FiniteRankOperator.from_pairs(vectors, images, np.ones(args.rank + 2))
            inputs = {"rank": args.rank, "m": args.m, "r": args.r, "random": True}
        estimate = gamma_norm(R, grid, samples=args.samples, seed=args.seed)
    except (ValidationError, OSError) as exc:
        print(f"gamma estimate failed: {exc}", file=sys.stderr)
        return 2
    record = audit_record("gamma_norm", inputs, estimate, args.seed)
    print(json.dumps(record, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spdelab",
        description="Numerical laboratory for semilinear parabolic SPDE convergence studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    converge = sub.add_parser("converge", help="run a convergence study from a config file")
    converge.add_argument("config")
    converge.add_argument("--seed", type=int, default=None, help="override [run].seed")
    converge.add_argument("--out-dir", default=".", help="directory for report files")
    converge.add_argument("--threads", type=int, default=_default_threads(),
                          help=f"worker threads (default ${DEFAULT_THREADS_ENV} or 1)")
    strictness = converge.add_mutually_exclusive_group()
    strictness.add_argument("--strict", dest="strict", action="store_true", default=None)
    strictness.add_argument("--no-strict", dest="strict", action="store_false")
    converge.set_defaults(func=cmd_converge)

    simulate = sub.add_parser("simulate", help="solve and dump one trajectory")
    simulate.add_argument("config")
    simulate.add_argument("--stream-id", type=int, default=0)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--out-dir", default=".")
    simulate.set_defaults(func=cmd_simulate)

    check = sub.add_parser("check", help="run a module invariant suite")
    check.add_argument("suite")
    check.set_defaults(func=cmd_check)

    gamma = sub.add_parser("gamma", help="one-off gamma-norm estimate")
    gamma.add_argument("--m", type=int, default=8, help="spatial nodes")
    gamma.add_argument("--r", type=float, default=2.0, help="Lebesgue exponent")
    gamma.add_argument("--rank", type=int, default=3, help="rank of the random operator")
    gamma.add_argument("--samples", type=int, default=100_000)
    gamma.add_argument("--seed", type=int, default=0)
    gamma.add_argument("--images", default=None,
                       help="CSV of image vectors (rows); basis is the standard one")
    gamma.set_defaults(func=cmd_gamma)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
