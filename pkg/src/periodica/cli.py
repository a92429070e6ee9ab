"""Command-line entry point: ``periodica {check,solve,refine,reproduce}``.

Exit codes: 0 success, 1 a numerical or hypothesis check failed, 2 bad usage
or configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import InvalidSpecError
from .expr import ExpressionError
from .pipeline import ConfigError, RunConfig, dump_report, refine_csv, run_check, run_refine, run_solve, steps_from_dt

log = logging.getLogger("periodica")
_UNSET = object()

# Order violations are recorded, not fatal: the first sweep steps of both
# examples break pathwise order on a few percent of entries (see README).
REPRODUCE = {
    "example51": {"problem": "example51", "params": {"c": 3.0}, "order_breakdown": None, "n_outer_max": 300},
    "example52": {"problem": "example52", "params": {}, "order_breakdown": None, "n_outer_max": 300},
    "ou": {"problem": "ou", "params": {}},
}


def _breakdown(v):
    if v.lower() in ("off", "none"):
        return None
    try:
        x = float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive number or 'off', got {v!r}") from None
    if not x > 0:
        raise argparse.ArgumentTypeError("order breakdown threshold must be positive")
    return x


def _common(p):
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--dt", type=float, help="time step; must divide the period")
    p.add_argument("--paths", type=int, help="number of sample paths")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--clamp", action="store_true", help="project iterates onto a box around [alpha, beta]")
    p.add_argument("--beta-drift-sign", choices=("plus", "minus"))
    p.add_argument("--order-breakdown", type=_breakdown, default=_UNSET, metavar="FRAC|off")
    p.add_argument("--periods", type=int, help="periods to glue for the periodicity scan")
    p.add_argument("--outer-max", type=int, help="maximum monotone sweep iterations")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="periodica", description="Periodic-in-distribution solutions of periodic SDEs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("check", "verify the boundary pair and hypothesis constants"),
                       ("solve", "run the monotone iteration and produce a periodic law"),
                       ("refine", "dt refinement study (CSV)")):
        _common(sub.add_parser(name, help=text))
    rep = sub.add_parser("reproduce", help="run a built-in example end to end")
    rep.add_argument("example", choices=sorted(REPRODUCE))
    _common(rep)
    return parser


def resolve_config(args):
    if args.command == "reproduce":
        doc = json.loads(json.dumps(REPRODUCE[args.example]))
    elif args.config is not None:
        try:
            doc = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    else:
        raise ConfigError(f"{args.command} needs --config")
    cfg = RunConfig.from_dict(doc)
    overrides = {"seed": args.seed, "n_paths": args.paths, "beta_drift_sign": args.beta_drift_sign,
                 "n_periods": args.periods, "n_outer_max": args.outer_max}
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.dt is not None:
        cfg.steps_per_period = steps_from_dt(cfg.theta, args.dt)
    if args.clamp:
        cfg.clamp = True
    if args.order_breakdown is not _UNSET:
        cfg.order_breakdown = args.order_breakdown
    # re-run validation after overrides
    return RunConfig.from_dict(cfg.to_dict())


def _emit_record(record):
    print(json.dumps(record, sort_keys=True), flush=True)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "check":
            code, payload = run_check(cfg)
            text = dump_report(payload)
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / "check.json").write_text(text, encoding="utf-8")
            print(text)
            return code
        if args.command == "refine":
            csv_text = refine_csv(run_refine(cfg))
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                (args.out / "refine.csv").write_text(csv_text, encoding="utf-8")
            sys.stdout.write(csv_text)
            return 0
        out = args.out
        if out is None and args.command == "reproduce":
            out = Path("out") / args.example
        code, payload, _ = run_solve(cfg, out, on_record=_emit_record)
        summary = {k: payload.get(k) for k in ("problem", "success", "error", "warning")}
        summary["periodicity_max"] = payload.get("periodicity", {}).get("max")
        print(json.dumps(summary, sort_keys=True))
        return code
    except (ConfigError, InvalidSpecError, ExpressionError) as exc:
        print(f"periodica: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
