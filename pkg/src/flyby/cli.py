"""Command-line entry point: ``flyby run <config>`` and ``flyby validate <config>``."""

from __future__ import annotations

import argparse
import json
import sys

from .config import dump_config, load_config
from .errors import ConfigurationError
from .runner import EXIT_CONFIG, EXIT_OK, run_config


def _emit_list(value: str) -> tuple[str, ...]:
    items = tuple(s.strip() for s in value.split(",") if s.strip())
    bad = [s for s in items if s not in ("csv", "json")]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"--emit takes a comma list of csv,json (got {value!r})")
    return items


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flyby", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--output-dir", default=None)
    run.add_argument("--emit", type=_emit_list, default=None)
    run.add_argument("--workers", type=int, default=None)
    val = sub.add_parser("validate", help="check a config and print its normalised form")
    val.add_argument("config")
    return p


def _fail(code: int, exc: Exception) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigurationError as exc:
        return _fail(EXIT_CONFIG, exc)
    if args.command == "validate":
        sys.stdout.write(dump_config(cfg))
        return EXIT_OK
    if args.workers is not None and args.workers < 1:
        return _fail(EXIT_CONFIG, ConfigurationError("--workers must be >= 1"))
    outcome = run_config(cfg, output_dir=args.output_dir, emit=args.emit, workers=args.workers)
    if outcome.exit_code != EXIT_OK:
        print(json.dumps(outcome.manifest), file=sys.stderr)
    else:
        print(json.dumps({"kind": cfg.kind, "files": [str(f) for f in outcome.files]}))
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
