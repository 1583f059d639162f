"""Command-line entry points.

Subcommands: run, converge, dump-filters, dump-operator. Exit codes:
0 success, 1 configuration error, 2 runtime failure, 3 tolerance breach
when --check is given. Set MRPDE_THREADS to cap BLAS/OpenMP threads.
"""
from __future__ import annotations

import argparse
import os
import sys


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; keep 2 reserved for runtime failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    ap = _Parser(prog="mrpde", description=__doc__,
                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="solve one configured problem")
    p_run.add_argument("config", help="TOML run configuration")
    p_run.add_argument("--outdir", help="override output.dir")
    p_run.add_argument("--check", action="store_true",
                       help="exit 3 unless the final error (closed-form "
                            "problems) stays within 10x the threshold")

    p_cv = sub.add_parser("converge",
                          help="threshold sweep against the closed form")
    p_cv.add_argument("config", help="TOML run configuration")
    p_cv.add_argument("--eps", required=True,
                      help="comma-separated thresholds")
    p_cv.add_argument("--p", required=True, dest="orders",
                      help="comma-separated interpolation orders")
    p_cv.add_argument("--outdir", help="override output.dir")
    p_cv.add_argument("--check", action="store_true",
                      help="exit 3 unless slopes land in the expected bands")

    p_df = sub.add_parser("dump-filters", help="print the filter bank")
    p_df.add_argument("--p", type=int, required=True)

    p_do = sub.add_parser("dump-operator", help="print derivative stencils")
    p_do.add_argument("--p", type=int, required=True)
    p_do.add_argument("--alpha", type=int, default=1)
    return ap


def _cmd_run(args) -> int:
    from . import config as cfgmod
    from .driver import solve
    from .report import OutputSink, fmt

    cfg = cfgmod.from_toml(args.config)
    if args.outdir:
        cfg = cfgmod.replace(cfg, outdir=args.outdir)
    sink = OutputSink(cfg.outdir, figures=cfg.figures)
    res = solve(cfg, sink=sink)
    for line in res.log_lines:
        print(line)
    print(f"wrote {len(sink.emitted)} snapshots to {cfg.outdir}")
    if res.failed:
        print(f"run failed: {res.failed}", file=sys.stderr)
        return 2
    if args.check and res.errors:
        worst = max(res.errors.values())
        bound = 10.0 * cfg.eps
        print(f"self-check: max error {fmt(worst)} vs bound {fmt(bound)}")
        if worst > bound:
            return 3
    return 0


def _cmd_converge(args) -> int:
    from . import config as cfgmod
    from .driver import converge
    from .report import (OutputSink, fmt, render_convergence_figure,
                         write_key_values, write_lines)

    cfg = cfgmod.from_toml(args.config)
    if args.outdir:
        cfg = cfgmod.replace(cfg, outdir=args.outdir)
    try:
        eps_list = [float(s) for s in args.eps.split(",") if s]
        p_list = [int(s) for s in args.orders.split(",") if s]
    except ValueError:
        raise cfgmod.ConfigError("--eps and --p must be comma-separated "
                                 "numbers")
    if not eps_list or not p_list:
        raise cfgmod.ConfigError("--eps and --p must be nonempty")

    rows, slopes = converge(cfg, eps_list, p_list)
    os.makedirs(cfg.outdir, exist_ok=True)
    header = "p,eps,error,deriv_error,points,steps"
    lines = [header] + [
        f"{r['p']},{fmt(r['eps'])},{fmt(r['error'])},"
        f"{fmt(r['deriv_error'])},{r['points']},{r['steps']}" for r in rows]
    write_lines(os.path.join(cfg.outdir, "convergence.csv"), lines)
    flat = {}
    for p, s in slopes.items():
        flat[f"field_slope_p{p}"] = "undefined" if s is None else s[0]
        flat[f"deriv_slope_p{p}"] = "undefined" if s is None else s[1]
    write_key_values(os.path.join(cfg.outdir, "slopes.txt"), flat)
    if cfg.figures:
        render_convergence_figure(os.path.join(cfg.outdir,
                                               "convergence.png"), rows)
    for line in lines:
        print(line)
    for k, v in flat.items():
        print(f"{k} = {v}")

    if args.check:
        ok = True
        for p, s in slopes.items():
            if s is None:
                continue
            field_slope, deriv_slope = s
            if abs(field_slope - 1.0) > 0.15:
                print(f"self-check: field slope {field_slope:.3f} for "
                      f"p={p} outside 1.0 +- 0.15", file=sys.stderr)
                ok = False
            want = 1.0 - 1.0 / p
            if abs(deriv_slope - want) > 0.2:
                print(f"self-check: derivative slope {deriv_slope:.3f} for "
                      f"p={p} outside {want:.3f} +- 0.2", file=sys.stderr)
                ok = False
        if not ok:
            return 3
    return 0


def _cmd_dump_filters(args) -> int:
    from .filters import build_filter_bank, filter_table_text
    print(filter_table_text(build_filter_bank(args.p)))
    return 0


def _cmd_dump_operator(args) -> int:
    from .derivative import build_diff_operator, operator_table_text
    from .filters import build_filter_bank
    fb = build_filter_bank(args.p)
    for axis in (0, 1):
        print(operator_table_text(build_diff_operator(fb, axis, args.alpha)))
    return 0


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    handler = {"run": _cmd_run, "converge": _cmd_converge,
               "dump-filters": _cmd_dump_filters,
               "dump-operator": _cmd_dump_operator}[args.command]
    try:
        return handler(args)
    except Exception as e:
        from .config import ConfigError
        if isinstance(e, ConfigError):
            print(f"configuration error: {e}", file=sys.stderr)
            return 1
        if isinstance(e, (ValueError, RuntimeError)):
            print(f"runtime failure: {e}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
