"""Command line: ``greedyco run|suite|check-modulus|majorant``.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure,
3 acceptance-check failure (majorant or certificate).
"""
from __future__ import annotations

import argparse
import sys

from . import analysis, harness
from .core import ConfigError, GreedyError, parse_schedule


def _cmd_run(args) -> int:
    config = harness.parse_config(args.config)
    report = harness.run_experiment(config, args.out)
    print(f"config {report.config_hash}  {report.algorithm}  iterations={report.iterations}")
    if report.trace.iterations:
        print(f"E(G_m) final = {float(report.trace.values[-1])!r}")
    if report.slope is not None:
        print(f"slope = {report.slope:.4f}  (residual {report.slope_residual:.3g})")
    elif report.slope_error:
        print(f"slope: {report.slope_error}")
    print(f"majorant_ok = {report.majorant_ok}  certificate_ok = {report.certificate_ok}")
    for kind, path in report.paths.items():
        print(f"{kind}: {path}")
    if report.aborted:
        print(f"aborted: {report.error}", file=sys.stderr)
    return harness.EXIT_NUMERIC if report.aborted else harness.EXIT_OK


def _cmd_suite(args) -> int:
    rows, code = harness.run_suite(args.dir, args.out, args.jobs)
    for r in rows:
        print(f"{r['config']:<32} {r['algorithm']:<6} slope={r['slope'] or '-':<22} "
              f"majorant={r['majorant_ok'] or '-':<5} exit={r['exit_code']}  {r['status']}")
    print(f"summary: {args.out}/summary.csv")
    return code


def _cmd_check_modulus(args) -> int:
    config = harness.parse_config(args.config)
    est, report = harness.modulus_check(config)
    if est is None:
        print("objective has no smoothness certificate")
        return harness.EXIT_CONFIG
    cert = config.objective().smoothness
    print(f"sampler: {est.sampler}  samples={est.samples}  cert: gamma={cert.gamma!r} q={cert.q!r}")
    print("u,rho_estimate,gamma_u^q")
    for u, r in zip(est.u, est.rho):
        print(f"{float(u)!r},{float(r)!r},{float(cert.gamma * u ** cert.q)!r}")
    print(f"max ratio {report.max_ratio:.6g}: {'ok' if report.ok else 'FAILED'}")
    return harness.EXIT_OK if report.ok else harness.EXIT_ACCEPTANCE


def _cmd_majorant(args) -> int:
    params = analysis.MajorantParams(args.v, args.B, args.q, args.a0, parse_schedule(args.schedule))
    a = analysis.majorant_sequence(params, args.m)
    print("m,a_m")
    for m, v in enumerate(a):
        print(f"{m},{float(v)!r}")
    return harness.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="greedyco", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("config")
    p.add_argument("--out", default="out")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("suite", help="run every *.ini in a directory")
    p.add_argument("dir")
    p.add_argument("--out", default="out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_suite)

    p = sub.add_parser("check-modulus", help="sample the modulus of smoothness of a config's E")
    p.add_argument("config")
    p.set_defaults(func=_cmd_check_modulus)

    p = sub.add_parser("majorant", help="print a majorant sequence")
    p.add_argument("--v", type=float, required=True)
    p.add_argument("--B", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--a0", type=float, required=True)
    p.add_argument("--schedule", default="zero")
    p.add_argument("--m", type=int, required=True)
    p.set_defaults(func=_cmd_majorant)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return harness.EXIT_CONFIG if exc.code else harness.EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return harness.EXIT_CONFIG
    except GreedyError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return harness.EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
