"""Command-line front end: ``kvwave run|validate|list-presets|reference``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import KVWaveError
from . import scenario as scn


def _resolve_path(arg):
    # bare names fall back to the bundled scenarios
    p = Path(arg)
    if p.exists() or p.suffix:
        return p
    return scn.bundled_path(arg)


def _parse(args):
    return scn.parse_scenario(_resolve_path(args.scenario), strict=args.strict)


def cmd_run(args):
    sc = _parse(args)
    if args.retry_halving:
        sc.integrator.retry_halving = True
    res = scn.run_scenario(sc, output_dir=args.output_dir, seed=args.seed, threads=args.threads,
                           plots=not args.no_plots)
    print(res.summary)
    return res.status


def cmd_validate(args):
    sc = _parse(args)
    print(f"{sc.name}: valid {sc.experiment} scenario")
    return 0


def cmd_list(args):
    from .fields import COEFFICIENT_PRESETS
    from .geometry import ANALYTIC_METRICS

    print("scenarios:          " + ", ".join(scn.bundled_scenarios()))
    print("coefficient presets: " + ", ".join(sorted(COEFFICIENT_PRESETS)))
    print("initial data:        " + ", ".join(scn.INITIAL_PRESETS))
    print("damping profiles:    " + ", ".join(scn.DAMPING_PROFILES))
    print("analytic metrics:    " + ", ".join(sorted(ANALYTIC_METRICS)))
    print("experiments:         " + ", ".join(scn.EXPERIMENTS))
    return 0


def cmd_reference(args):
    text = scn.reference_markdown()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="kvwave", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--strict", action=argparse.BooleanOptionalAction, default=True,
                        help="reject unknown scenario keys (default on)")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run a scenario file (or bundled scenario name)")
    r.add_argument("scenario")
    r.add_argument("--output-dir", default=None)
    r.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    r.add_argument("--threads", type=int, default=int(os.environ.get("KVWAVE_THREADS", 1)))
    r.add_argument("--retry-halving", action="store_true",
                   help="halve dt (up to 10 times) when a step fails instead of stopping")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", parents=[common], help="check a scenario file without running it")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)

    lp = sub.add_parser("list-presets", help="list bundled scenarios and presets")
    lp.set_defaults(func=cmd_list)

    ref = sub.add_parser("reference", help="print the scenario key reference (markdown)")
    ref.add_argument("--out", default=None)
    ref.set_defaults(func=cmd_reference)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KVWaveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
