"""Command line entry point: camexport export --config <file>."""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import ExportError
from .export import export_run, export_verb_pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camexport",
        description="Capture model activations and write run bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    export_cmd = sub.add_parser("export", help="run a capture described by a config file")
    export_cmd.add_argument("--config", required=True, help="capture config JSON file")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if config.worklist is not None:
            out = export_verb_pass(config.worklist, config)
        else:
            out = export_run(config)
    except ExportError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
