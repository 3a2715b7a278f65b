"""Command-line interface.

Subcommands:

* ``validate <bundle>``: load and fully check a bundle directory.
* ``eval-instrument --bundle --annotations [--tau]``: tau-AC / tau-AA /
  per-class F1 report.
* ``eval-triplet --pass1 [--pass2] --annotations [--tau]``: IVT/IV/IT
  report; without ``--pass2`` also writes the verb worklist, with it adds
  ARS, V/T, Z/V.
* ``render --bundle --annotations --out-dir``: heatmap overlay PNGs.
* ``report --in <structured.json> --format <fmt>``: re-render a stored
  structured report.

Evaluation subcommands print an aligned text table; ``--out`` stores the
same report in the structured form that ``report`` re-renders.

Exit code 0 on success; on failure a typed one-line error
(``ErrorName: detail``) goes to stderr and the exit code is 1.
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

from .annotations import load_annotations
from .bundle_io import load_bundle
from .errors import CamgroundError
from .pipeline import DEFAULT_TAU, heatmap_for_frame, run_instrument_eval, run_triplet_eval
from .prompts import select_prediction, write_worklist
from .reports import REPORT_FORMATS, emit_report, parse_structured

_SAFE_STEM = re.compile(r"[^A-Za-z0-9_.-]")


def _add_common_eval_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--annotations", required=True, help="annotation JSON file")
    parser.add_argument("--tau", type=float, default=DEFAULT_TAU, help="attention threshold")
    parser.add_argument("--workers", type=int, default=1, help="parallel frame workers")
    parser.add_argument(
        "--merge", action="store_true", help="append a merged ALL row over every video"
    )
    parser.add_argument("--out", help="write the structured report to this file")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camground",
        description="Heatmap-grounding evaluation of VLM predictions from capture bundles.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a bundle directory")
    p_validate.add_argument("bundle", help="bundle directory")

    p_instr = sub.add_parser("eval-instrument", help="instrument grounding evaluation")
    p_instr.add_argument("--bundle", required=True, help="instrument bundle directory")
    _add_common_eval_args(p_instr)

    p_trip = sub.add_parser("eval-triplet", help="triplet evaluation (two-pass)")
    p_trip.add_argument("--pass1", required=True, help="triplet bundle directory")
    p_trip.add_argument("--pass2", help="verb_reprompt bundle directory")
    p_trip.add_argument(
        "--worklist-out",
        default="worklist.json",
        help="where to write the verb worklist when --pass2 is absent",
    )
    _add_common_eval_args(p_trip)

    p_render = sub.add_parser("render", help="render heatmap overlays")
    p_render.add_argument("--bundle", required=True, help="bundle directory")
    p_render.add_argument("--annotations", required=True, help="annotation JSON file")
    p_render.add_argument("--out-dir", required=True, help="directory for overlay PNGs")

    p_report = sub.add_parser("report", help="re-render a stored structured report")
    p_report.add_argument("--in", dest="in_path", required=True, help="structured report JSON")
    p_report.add_argument(
        "--format", choices=REPORT_FORMATS, default="table-text", help="output format"
    )
    p_report.add_argument("--out", help="also write the rendered report to this file")

    return parser


def _cmd_validate(args) -> int:
    bundle = load_bundle(args.bundle)
    tensors = sum(len(frame.tensors()) for frame in bundle.frames)
    print(
        f"ok: task={bundle.task} frames={len(bundle.frames)} "
        f"prompts={len(bundle.prompt_pool)} tensors={tensors}"
    )
    return 0


def _cmd_eval_instrument(args) -> int:
    result = run_instrument_eval(
        args.bundle,
        args.annotations,
        tau=args.tau,
        workers=args.workers,
        merge=args.merge,
    )
    sys.stdout.write(emit_report(result.reports, "table-text"))
    if args.out is not None:
        emit_report(result.reports, "structured", args.out)
    return 0


def _cmd_eval_triplet(args) -> int:
    result = run_triplet_eval(
        args.pass1,
        args.pass2,
        args.annotations,
        tau=args.tau,
        workers=args.workers,
        merge=args.merge,
    )
    if args.pass2 is None:
        write_worklist(result.worklist, args.worklist_out)
        print(f"worklist: {len(result.worklist)} frames -> {args.worklist_out}", file=sys.stderr)
    sys.stdout.write(emit_report(result.reports, "table-text"))
    if args.out is not None:
        emit_report(result.reports, "structured", args.out)
    return 0


def _cmd_render(args) -> int:
    from .overlay import render_overlay

    bundle_dir = Path(args.bundle)
    bundle = load_bundle(bundle_dir)
    annotations = load_annotations(args.annotations)
    out_dir = Path(args.out_dir)
    for frame in bundle.frames:
        index = frame.target_prompt_index
        if index is None:
            index = select_prediction(frame.similarity_scores, len(bundle.prompt_pool))
        heatmap = heatmap_for_frame(frame, index)
        annotation = annotations.get(frame.frame_id)
        boxes = annotation.boxes if annotation is not None else []
        image_path = None
        if frame.image_path is not None:
            image_path = Path(frame.image_path)
            if not image_path.is_absolute():
                image_path = bundle_dir / image_path
        stem = _SAFE_STEM.sub("_", frame.frame_id)
        written = render_overlay(image_path, heatmap, boxes, out_dir / f"{stem}.png")
        print(f"wrote {written}")
    return 0


def _cmd_report(args) -> int:
    try:
        text = Path(args.in_path).read_text(encoding="utf-8")
    except FileNotFoundError:
        print(f"MissingFile: report not found: {args.in_path}", file=sys.stderr)
        return 1
    reports = parse_structured(text)
    sys.stdout.write(emit_report(reports, args.format, args.out))
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "eval-instrument": _cmd_eval_instrument,
    "eval-triplet": _cmd_eval_triplet,
    "render": _cmd_render,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CamgroundError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
