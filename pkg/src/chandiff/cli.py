"""``chandiff`` command line: one verb per pipeline stage."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .pipeline import STAGES, ExperimentConfig, ManifestError, resolve_output


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chandiff", description="Channel generation and superimposed-pilot receiver pipeline.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in STAGES:
        p = sub.add_parser(verb)
        p.add_argument("--config", type=Path, help="JSON experiment config (defaults apply when omitted)")
        p.add_argument("--seed", type=int, help="master seed, overrides the config")
        p.add_argument("--out", help="output directory, overrides CHANDIFF_OUT and the config")
        p.add_argument("--threads", type=int, default=1, help="worker threads for simulation (default 1)")
        p.add_argument("-v", "--verbose", action="store_true")
        if verb == "report":
            p.add_argument("--runs", nargs="*", type=Path, help="run directories to join (default: the output directory)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            config.seed = args.seed
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
        out = resolve_output(config, args.out)
        kw = {"runs": args.runs} if args.verb == "report" else {}
        written = STAGES[args.verb](config, out, args.threads, **kw)
    except (ManifestError, ValueError, FileNotFoundError, KeyError) as err:
        print(f"chandiff {args.verb}: error: {err}", file=sys.stderr)
        return 2
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
