"""Command line interface: ``hrigid <subcommand>``.

Exit codes: 0 when every executed check passes, 1 on a failed check, 2 on
configuration or argument errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .. import __version__
from ..domains import build_chain, make_ball_domain, make_box_domain, make_dumbbell, whitney_cover
from ..hgroup import Ball, origin
from ..kerq import coercive_fit, oracle_fit, sup_deviation
from .growth import embedding_suite, isometry_growth_suite
from .config import ConfigError, load_config
from .experiment import run_rigidity, write_report
from .families import make_family
from .selftest import run_suites

__all__ = ["main", "parse_ball", "parse_domain", "parse_map", "parse_point"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(ValueError):
    """Malformed command line value."""


def parse_point(text: str) -> np.ndarray:
    """Comma separated real coordinates of odd length ``2n + 1``."""
    try:
        x = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}; expected comma separated numbers") from None
    if len(x) < 3 or len(x) % 2 == 0:
        raise UsageError(f"point {text!r} must have 2n+1 >= 3 coordinates")
    return x


def parse_ball(text: str) -> Ball:
    """``"x1,...,x(2n+1):r"``."""
    center, sep, radius = text.rpartition(":")
    if not sep:
        raise UsageError(f"ball {text!r} must look like 'x1,...,x5:r'")
    try:
        r = float(radius)
    except ValueError:
        raise UsageError(f"cannot parse ball radius {radius!r}") from None
    if not r > 0:
        raise UsageError("ball radius must be positive")
    return Ball(parse_point(center), r)


def parse_map(text: str) -> tuple[str, float]:
    """``"family[(seed)]:eps"``, for example ``conjugated_dilation(3):0.01``."""
    spec, sep, eps = text.rpartition(":")
    if not sep:
        raise UsageError(f"map {text!r} must look like 'family:eps'")
    try:
        e = float(eps)
    except ValueError:
        raise UsageError(f"cannot parse eps {eps!r}") from None
    if e < 0:
        raise UsageError("eps must be non-negative")
    return spec, e


def parse_domain(text: str, n: int = 2):
    """``ball``, ``box`` or ``dumbbell`` centred at the origin with unit size."""
    if text == "ball":
        return make_ball_domain(origin(n), 1.0)
    if text == "box":
        return make_box_domain(origin(n), 1.0)
    if text == "dumbbell":
        c2 = origin(n)
        c2[0] = 2.0
        return make_dumbbell(origin(n), c2, 1.0, 1.0, 0.4)
    raise UsageError(f"unknown domain {text!r}; expected ball, box or dumbbell")


def _cmd_selftest(args) -> int:
    results = run_suites()
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} suites passed")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def _cmd_rigidity(args) -> int:
    config = load_config(args.config)
    report = run_rigidity(config)
    jpath, cpath = write_report(report, args.output)
    print(report.to_csv(), end="")
    ex = report.exponents
    fmt = lambda v: "undefined" if v is None else f"{v:.6f}"  # noqa: E731
    print(f"sup_slope {fmt(ex['sup_slope'])}  sobolev_slope {fmt(ex['sobolev_slope'])}  r2 {fmt(ex['r2'])}")
    print(f"wrote {jpath} and {cpath}")
    bad = [r for r in report.records if r.error is not None or r.flagged]
    for r in bad:
        print(f"check failed at eps={r.epsilon:g}: {r.error or 'fitters disagree beyond a factor 2'}")
    return EXIT_OK if not bad else EXIT_FAIL


def _cmd_chain(args) -> int:
    x = parse_point(args.x)
    U = parse_domain(args.domain, (len(x) - 1) // 2)
    if not U.contains(x):
        raise UsageError("point lies outside the domain")
    try:
        chain = build_chain(U, x)
    except RuntimeError as exc:
        print(json.dumps({"certified": False, "error": str(exc)}))
        return EXIT_FAIL
    print(chain.to_json(indent=2 if args.pretty else None))
    return EXIT_OK if chain.certified else EXIT_FAIL


def _cmd_cover(args) -> int:
    U = parse_domain(args.domain, args.n)
    fam = whitney_cover(U, args.resolution)
    d = fam.to_dict()
    if not args.balls:
        d["balls"] = len(d["balls"])
    print(json.dumps(d, indent=2 if args.pretty else None))
    return EXIT_OK if fam.covered and fam.disjoint else EXIT_FAIL


def _cmd_fit(args) -> int:
    spec, eps = parse_map(args.map)
    B = parse_ball(args.ball)
    try:
        f = make_family(spec, B.n, args.seed)(eps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    inner = B.scaled(args.q)
    rows = []
    if B.n > 1:
        t = time.perf_counter()
        res = coercive_fit(f, B)
        label = "coercive->oracle" if res.fallback else "coercive"
        rows.append((label, sup_deviation(f, res.isometry, inner, args.samples), time.perf_counter() - t))
    t = time.perf_counter()
    res = oracle_fit(f, B, seed=args.seed)
    rows.append(("oracle", sup_deviation(f, res.isometry, inner, args.samples), time.perf_counter() - t))
    print(f"{'fitter':<18}{'sup_dev':>16}{'seconds':>10}")
    for name, sup, sec in rows:
        print(f"{name:<18}{sup:>16.6e}{sec:>10.2f}")
    sups = [r[1] for r in rows]
    agree = max(sups) <= 2.0 * min(sups) or max(sups) <= 1e-7
    print("fitters agree within a factor 2" if agree else "fitters disagree beyond a factor 2")
    return EXIT_OK if agree else EXIT_FAIL


def _cmd_growth(args) -> int:
    table = isometry_growth_suite(args.seed, args.trials, args.n)
    print(table.format())
    emb = embedding_suite(args.seed, max(1, args.trials // 5), args.n)
    print(f"embedding constant {emb.constant:.6f}, max spread {float(np.max(emb.spread)):.4f}")
    ok = table.passed and emb.passed
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hrigid", description="Heisenberg rigidity numerics")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("selftest", help="run all module invariant suites").set_defaults(func=_cmd_selftest)

    s = sub.add_parser("rigidity", help="run a rigidity experiment from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--output", help="override the report path prefix")
    s.set_defaults(func=_cmd_rigidity)

    s = sub.add_parser("chain", help="build and certify a chain of balls (JSON)")
    s.add_argument("--domain", default="ball")
    s.add_argument("--x", required=True, help="comma separated coordinates")
    s.add_argument("--pretty", action="store_true")
    s.set_defaults(func=_cmd_chain)

    s = sub.add_parser("cover", help="greedy Whitney-type cover (JSON)")
    s.add_argument("--domain", default="ball")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--resolution", type=int, default=7)
    s.add_argument("--balls", action="store_true", help="list every ball instead of the count")
    s.add_argument("--pretty", action="store_true")
    s.set_defaults(func=_cmd_cover)

    s = sub.add_parser("fit", help="compare the isometry fitters")
    s.add_argument("--map", required=True, help="family[(seed)]:eps")
    s.add_argument("--ball", required=True, help="x1,...,x(2n+1):r")
    s.add_argument("--q", type=float, default=0.5)
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=_cmd_fit)

    s = sub.add_parser("growth", help="isometry growth and embedding suites")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--n", type=int, default=2)
    s.set_defaults(func=_cmd_growth)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
