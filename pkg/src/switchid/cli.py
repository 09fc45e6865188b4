"""Command line: ``switchid <verb> --config cfg.yaml [--out DIR] [--seed N]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig, load_config
from .errors import ConfigError, MissingArtifact, NumericalError, SchemaMismatch

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ARTIFACT = 3
EXIT_NUMERICAL = 4

VERBS = {
    "simulate": "generate the drop-down and torque-step training data",
    "cluster": "split samples into sticking/slipping by a Gaussian mixture",
    "classify": "learn the switching surface with a decision tree",
    "identify": "fit sparse regime models and bundle them with the tree",
    "validate": "compare a free-running model rollout with the simulator",
    "estimate": "run the moving-horizon observer on a fresh release",
    "pipeline": "all of the above, then figures and summary.json",
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="switchid", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True, metavar="verb")
    for verb, text in VERBS.items():
        p = sub.add_parser(verb, help=text, description=text)
        p.add_argument("--config", type=Path, help="YAML run configuration (defaults if omitted)")
        p.add_argument("--out", type=Path, help="run directory (overrides the config's output)")
        p.add_argument("--seed", type=int, help="replace every seed in the configuration")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = args.out if args.out is not None else Path(cfg.output)
    return cfg, out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.verb
    try:
        cfg, out = resolve(args)
        out.mkdir(parents=True, exist_ok=True)
        if args.verb == "pipeline":
            result = pipeline.run_all(cfg, out)
            metrics = result["stages"]
        else:
            metrics = pipeline.run_stage(args.verb, cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifact, SchemaMismatch) as exc:
        print(f"{getattr(exc, 'stage', stage)}: artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except NumericalError as exc:
        print(f"{getattr(exc, 'stage', stage)}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(metrics, indent=1, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
