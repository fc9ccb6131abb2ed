"""Command-line entry point: ``mhrstyle <command> --out RUN_DIR [--config F] [--seed N]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig
from .errors import ConfigurationError, MhrStyleError


USAGE_EXIT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        print(json.dumps({"status": "error", "error_class": "UsageError", "message": message}), file=sys.stderr)
        sys.exit(USAGE_EXIT)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mhrstyle", description=__doc__)
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in pipeline.STAGES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="RunConfig JSON (defaults to <out>/config.json)")
        sp.add_argument("--out", type=Path, required=True, help="run directory")
        sp.add_argument("--seed", type=int, help="override the root seed")
        if name == "steer":
            sp.add_argument("--strength", type=float, help="multiplier on the style delta")
        if name == "interpolate":
            sp.add_argument("--games", type=int, help="games per interpolation point")
    sub.add_parser("all", help="run every stage in order").add_argument("--out", type=Path, required=True)
    all_p = sub.choices["all"]
    all_p.add_argument("--config", type=Path)
    all_p.add_argument("--seed", type=int)
    return p


def _load_config(args) -> RunConfig:
    if args.config is not None:
        cfg = RunConfig.load(args.config)
    elif (args.out / "config.json").exists():
        cfg = RunConfig.load(args.out / "config.json")
    elif args.command in ("gen-population", "all"):
        cfg = RunConfig()
    else:
        raise ConfigurationError(f"no --config given and {args.out / 'config.json'} does not exist")
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = _load_config(args)
        run = pipeline.Run(cfg, args.out)
        if args.command == "all":
            doc = {name: res["result"] for name, res in pipeline.run_all(cfg, args.out).items()}
        elif args.command == "steer":
            doc = pipeline.steer(run, args.strength)
        elif args.command == "interpolate":
            doc = pipeline.interpolate(run, args.games)
        else:
            doc = pipeline.STAGES[args.command](run)
    except MhrStyleError as e:
        print(json.dumps({"status": "error", "error_class": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return e.exit_code
    print(json.dumps(doc, indent=1, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
