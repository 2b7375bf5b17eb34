"""Batch command-line interface mirroring the HTTP API.

Subcommands: detect | filter | convert | extract | evaluate | labels | stats
| serve | synth. Exit codes: 0 success, 1 domain error, 2 usage error.
LOOPCURATE_ROOT overrides --root for project storage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from .detect import DetectorKind, DetectorSpec, detect
from .errors import LoopcurateError
from .evaluation import GeometryMode, average_precision
from .formats.canonical import canonical_json
from .formats.imagescope import import_imagescope_xml, write_imagescope_xml
from .formats.native_xml import parse_native_xml, write_native_xml
from .formats.patch_labels import query_labels, read_patch_labels, write_patch_labels
from .model import filter_by_threshold
from .slides import extract_patches, open_slide
from .synthetic import SynthSpec, make_synthetic_slide

DEFAULT_ROOT = "~/.loopcurate"


def _formatter(prog):
    return argparse.HelpFormatter(prog, width=80)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loopcurate",
        description="Curate machine-proposed circle detections on tiled slide images.",
        formatter_class=_formatter,
    )
    parser.add_argument("--format", choices=["json", "table"], default="table", help="output format")
    parser.add_argument(
        "--root",
        default=None,
        help=f"project storage root (default {DEFAULT_ROOT}, env LOOPCURATE_ROOT overrides)",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("synth", help="generate a deterministic synthetic slide", formatter_class=_formatter)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--disks", type=int, default=50)
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--height", type=int, default=2048)
    p.add_argument("--radius-min", type=int, default=20)
    p.add_argument("--radius-max", type=int, default=60)
    p.add_argument("--out", required=True, help="output slide directory")

    p = sub.add_parser("detect", help="run a detector over a slide", formatter_class=_formatter)
    p.add_argument("--slide", required=True, help="slide directory")
    p.add_argument("--detector", default="builtin", help="'builtin' or a command to run")
    p.add_argument("--threshold", type=float, default=None, help="builtin intensity threshold")
    p.add_argument("--min-radius", type=float, default=None)
    p.add_argument("--max-radius", type=float, default=None)
    p.add_argument("--out", default=None, help="output XML path (default stdout)")

    p = sub.add_parser("filter", help="keep annotations at or above a score threshold", formatter_class=_formatter)
    p.add_argument("--in", dest="input", required=True, help="native XML input")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("convert", help="convert between native and ImageScope XML", formatter_class=_formatter)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--to", dest="target", choices=["imagescope", "native"], required=True)
    p.add_argument("--mpp", type=float, default=0.25, help="microns per pixel for ImageScope export")
    p.add_argument("--slide-id", default="imported", help="slide id to stamp on imported sets")
    p.add_argument("--out", default=None)

    p = sub.add_parser("extract", help="crop one patch per kept annotation", formatter_class=_formatter)
    p.add_argument("--slide", required=True)
    p.add_argument("--annotations", required=True, help="native XML")
    p.add_argument("--padding", type=float, default=0.2)
    p.add_argument("--out", required=True, help="patch output directory")

    p = sub.add_parser("evaluate", help="AP family for detections vs ground truth", formatter_class=_formatter)
    p.add_argument("--dets", required=True, help="native XML detections")
    p.add_argument("--gt", required=True, help="native XML ground truth")
    p.add_argument("--geometry", choices=["circle", "box"], default="circle")

    p = sub.add_parser("labels", help="query a patch-label database", formatter_class=_formatter)
    p.add_argument("--in", dest="input", required=True, help="labels JSON")
    p.add_argument("--class", dest="class_code", default=None, help="filter by class code")

    p = sub.add_parser("stats", help="labor and curation stats for a project", formatter_class=_formatter)
    p.add_argument("--project", required=True)

    p = sub.add_parser("serve", help="run the HTTP API", formatter_class=_formatter)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)

    return parser


def _storage_root(args) -> Path:
    root = os.environ.get("LOOPCURATE_ROOT") or args.root or DEFAULT_ROOT
    return Path(root).expanduser()


def _emit(args, payload: dict, table: str) -> None:
    if args.format == "json":
        sys.stdout.write(canonical_json(payload).decode("utf-8"))
    else:
        sys.stdout.write(table if table.endswith("\n") else table + "\n")


def _write_bytes(out: str | None, data: bytes) -> None:
    if out is None:
        sys.stdout.write(data.decode("utf-8"))
    else:
        Path(out).write_bytes(data)


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        width=args.width,
        height=args.height,
        n_disks=args.disks,
        radius_range=(args.radius_min, args.radius_max),
        seed=args.seed,
    )
    result = make_synthetic_slide(spec, args.out)
    gt_path = Path(args.out) / "ground_truth.xml"
    gt_path.write_bytes(write_native_xml(result.ground_truth))
    payload = {
        "slide_id": result.ground_truth.slide_id,
        "path": str(result.path),
        "disks": len(result.ground_truth.annotations),
        "ground_truth": str(gt_path),
    }
    _emit(args, payload, f"wrote {payload['slide_id']} ({payload['disks']} disks) to {payload['path']}")
    return 0


def _cmd_detect(args) -> int:
    slide = open_slide(args.slide)
    if args.detector == "builtin":
        params = {}
        if args.threshold is not None:
            params["intensity_threshold"] = args.threshold
        if args.min_radius is not None:
            params["min_radius"] = args.min_radius
        if args.max_radius is not None:
            params["max_radius"] = args.max_radius
        spec = DetectorSpec(kind=DetectorKind.BUILTIN_BLOB, params=params, version_tag="builtin-1")
    else:
        spec = DetectorSpec(
            kind=DetectorKind.EXTERNAL, params={"command": args.detector.split()}, version_tag=args.detector
        )
    result = detect(slide, spec)
    _write_bytes(args.out, write_native_xml(result))
    if args.out is not None:
        _emit(
            args,
            {"slide_id": result.slide_id, "detections": len(result.annotations), "out": args.out},
            f"{len(result.annotations)} detections -> {args.out}",
        )
    return 0


def _cmd_filter(args) -> int:
    parsed = parse_native_xml(Path(args.input).read_bytes())
    kept = filter_by_threshold(parsed, args.threshold)
    _write_bytes(args.out, write_native_xml(kept))
    if args.out is not None:
        _emit(
            args,
            {"kept": len(kept.annotations), "total": len(parsed.annotations), "threshold": args.threshold},
            f"kept {len(kept.annotations)}/{len(parsed.annotations)} at threshold {args.threshold}",
        )
    return 0


def _cmd_convert(args) -> int:
    data = Path(args.input).read_bytes()
    if args.target == "imagescope":
        parsed = parse_native_xml(data)
        _write_bytes(args.out, write_imagescope_xml(parsed, args.mpp))
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            imported = import_imagescope_xml(data, slide_id=args.slide_id)
        _write_bytes(args.out, write_native_xml(imported))
    return 0


def _cmd_extract(args) -> int:
    slide = open_slide(args.slide)
    parsed = parse_native_xml(Path(args.annotations).read_bytes())
    manifest = extract_patches(slide, parsed, args.padding, args.out)
    payload = {
        "patches": len(manifest.entries),
        "out": args.out,
        "files": [e.patch_file for e in manifest.entries],
    }
    _emit(args, payload, f"extracted {len(manifest.entries)} patches to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    dets = parse_native_xml(Path(args.dets).read_bytes())
    gts = parse_native_xml(Path(args.gt).read_bytes())
    mode = GeometryMode.CIRCLE if args.geometry == "circle" else GeometryMode.BOX
    report = average_precision(dets.annotations, gts.annotations, mode)
    table = "\n".join(
        [
            f"AP      {report.ap:.4f}",
            f"AP50    {report.ap50:.4f}",
            f"AP75    {report.ap75:.4f}",
            f"AP_S    {'-' if report.ap_small is None else f'{report.ap_small:.4f}'}",
            f"AP_M    {'-' if report.ap_medium is None else f'{report.ap_medium:.4f}'}",
            f"AP_L    {'-' if report.ap_large is None else f'{report.ap_large:.4f}'}",
        ]
    )
    _emit(args, report.to_dict(), table)
    return 0


def _cmd_labels(args) -> int:
    records = read_patch_labels(Path(args.input).read_bytes())
    if args.class_code is not None:
        records = query_labels(records, args.class_code)
    if args.format == "json":
        sys.stdout.buffer.write(write_patch_labels(records))
    else:
        for rec in records:
            sys.stdout.write(f"{rec.patch_file}\t{rec.class_code}\t{rec.labeler}\n")
        sys.stdout.write(f"{len(records)} record(s)\n")
    return 0


def _cmd_stats(args) -> int:
    from .service.store import ProjectStore

    store = ProjectStore(_storage_root(args))
    payload = store.project_stats(args.project)
    timing = payload["timing"]
    lines = [f"project {args.project}"]
    for mode, spo in timing["seconds_per_object"].items():
        lines.append(f"  {mode}: {'-' if spo is None else f'{spo:.2f} s/object'}")
    if timing["labor_reduction"] is not None:
        lines.append(f"  labor reduction: {timing['labor_reduction'] * 100:.1f}%")
    for loop, slides in payload["curation_diffs"].items():
        for sid, d in slides.items():
            lines.append(
                f"  loop {loop} {sid}: +{d['added']} -{d['deleted']} ~{d['moved']} ={d['unchanged']}"
            )
    _emit(args, payload, "\n".join(lines))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service.api import create_app

    app = create_app(_storage_root(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "detect": _cmd_detect,
    "filter": _cmd_filter,
    "convert": _cmd_convert,
    "extract": _cmd_extract,
    "evaluate": _cmd_evaluate,
    "labels": _cmd_labels,
    "stats": _cmd_stats,
    "serve": _cmd_serve,
}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return _HANDLERS[args.command](args)
    except LoopcurateError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
