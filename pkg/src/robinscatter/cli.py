"""Command-line entry point.

Every subcommand reads an optional flat key-value config (``--config``);
``--set key=value`` (repeatable) and the dedicated flags override it.
``pipeline`` runs the configured stages; the other subcommands run a single
stage, reading its inputs from the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import RobinScatterError
from .pipeline import SCHEMA, STAGES, PipelineConfig, run_pipeline


def _overrides(args) -> dict:
    out: dict = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        out.setdefault(k, []).append(v)
    for flag, key in (("seed", "seed"), ("workers", "workers"), ("output", "output"),
                      ("epsilon", "epsilon")):
        val = getattr(args, flag)
        if val is not None:
            out[key] = [str(val)]
    if args.emit_plots:
        out["emit_plots"] = ["true"]
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robinscatter",
                                 description="Random Robin boundary scattering: simulation and recovery.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STAGES + ("pipeline",):
        sp = sub.add_parser(name, help="run all configured stages" if name == "pipeline"
                            else f"run the {name} stage")
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--output", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--workers", type=int)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--emit-plots", action="store_true", help="write CSV traces of diagnostics")
    keys = sub.add_parser("keys", help="list config keys")
    keys.set_defaults(keys=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "keys":
        for k, (kind, default, rep, doc) in SCHEMA.items():
            print(f"{k:24s} {'(repeated) ' if rep else ''}{doc} [default: {default}]")
        return 0
    try:
        ov = _overrides(args)
        text = open(args.config).read() if args.config else ""
        cfg = PipelineConfig.from_text(text, ov)
        stages = None if args.command == "pipeline" else [args.command]
        status, manifest = run_pipeline(cfg, stages)
    except (RobinScatterError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(manifest.hashes(), indent=2, sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
