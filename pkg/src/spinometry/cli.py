"""Command-line interface.

Subcommands: compute, evaluate, compare, crop, serve, split. Batch commands
collect per-row errors instead of aborting, and every command is
deterministic for fixed inputs and flags.

Exit codes: 0 success, 1 partial row failures or a data-level error,
2 invalid invocation, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .dataset import (
    AnnotationRecord,
    AnnotationStore,
    crop_lumbosacral,
    load_record,
    make_split,
    save_record,
    save_split,
    DEFAULT_CROP_MARGIN,
)
from .errors import SpinometryError
from .geometry import PARAMETER_ORDER, View, compute_parameters
from .metrics import compare_sources
from .report import (
    DEFAULT_THRESHOLDS_MM,
    RADAR_CSV_HEADER,
    align_records,
    build_report,
    render_text_report,
    write_report_files,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ROW_FAILURES = 1
EXIT_USAGE = 2
EXIT_IO = 3

ENV_DATA_DIR = "SPINOMETRY_DATA_DIR"
DEFAULT_BIND = "127.0.0.1:8731"
ABSENT = "NA"


def parse_thresholds(spec: str) -> List[float]:
    """Threshold list: "1..10" (inclusive integer range) or "1,2.5,5"."""
    spec = spec.strip()
    if ".." in spec:
        lo_text, hi_text = spec.split("..", 1)
        lo, hi = int(lo_text), int(hi_text)
        if hi < lo:
            raise ValueError(f"empty threshold range {spec!r}")
        return [float(t) for t in range(lo, hi + 1)]
    return [float(part) for part in spec.split(",") if part.strip()]


def _find_annotations(root: Path) -> List[Path]:
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    paths = [p for p in root.rglob("*") if p.is_file()
             and (p.name.endswith(".ann") or p.name.endswith(".ann.ls"))]
    return sorted(paths)


def _load_cohort(root: Path) -> List[AnnotationRecord]:
    return [load_record(p) for p in _find_annotations(root)]


def _param_cell(value: Optional[float]) -> str:
    return ABSENT if value is None else f"{value:.1f}"


def cmd_compute(args: argparse.Namespace) -> int:
    rows: List[str] = []
    header = ["study_id", "rater_id", "view", *PARAMETER_ORDER, "error"]
    rows.append(",".join(header))
    failures = 0
    for path in args.paths:
        try:
            record = load_record(path)
            params = compute_parameters(record.keypoints)
            values = params.as_dict()
            rows.append(",".join([
                record.study_id, record.rater_id, params.view.value,
                *[_param_cell(values[label]) for label in PARAMETER_ORDER],
                "",
            ]))
        except SpinometryError as exc:
            failures += 1
            rows.append(",".join([str(path), "", "", *[ABSENT] * 7,
                                  f"{exc.name}: {exc}".replace(",", ";")]))
    output = "\n".join(rows) + "\n"
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    else:
        sys.stdout.write(output)
    if failures:
        print(f"{failures} of {len(args.paths)} rows failed", file=sys.stderr)
        return EXIT_ROW_FAILURES
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    preds = _load_cohort(Path(args.pred))
    gts = _load_cohort(Path(args.gt))
    report = build_report(
        preds, gts,
        thresholds_mm=args.thresholds,
        cohort_id=args.cohort_id,
        pred_source=args.pred_source,
        gt_source=args.gt_source,
        seed=args.seed,
    )
    outdir = Path(args.out)
    written = write_report_files(report, outdir)
    if not args.no_figures:
        from .figures import render_report_figures
        written += render_report_figures(report, outdir / "figures")
    for path in written:
        logger.info("wrote %s", path)
    if args.format == "doc":
        sys.stdout.write(render_text_report(report))
    else:
        sys.stdout.write((outdir / "error_summary.csv").read_text())
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    label_a, label_b = args.labels.split(",", 1) if "," in args.labels \
        else (args.labels + "_a", args.labels + "_b")
    cohort_a = _load_cohort(Path(args.a))
    cohort_b = _load_cohort(Path(args.b))
    gts = _load_cohort(Path(args.gt))
    pairs_a = align_records(cohort_a, gts)
    pairs_b = align_records(cohort_b, gts)
    rows = compare_sources(
        [compute_parameters(p.keypoints) for p, _ in pairs_a],
        [compute_parameters(p.keypoints) for p, _ in pairs_b],
        [compute_parameters(g.keypoints) for _, g in pairs_a],
        labels=(label_a, label_b),
    )
    lines = [",".join(RADAR_CSV_HEADER)]
    lines += [f"{r['source']},{r['parameter']},{r['median_error']!r}"
              for r in rows]
    output = "\n".join(lines) + "\n"
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "radar_medians.csv").write_text(output, encoding="utf-8")
        if not args.no_figures:
            from .figures import render_radar
            render_radar(rows, outdir / "radar_medians.png")
    else:
        sys.stdout.write(output)
    return EXIT_OK


def cmd_crop(args: argparse.Namespace) -> int:
    failures = 0
    for path in args.paths:
        path = Path(path)
        try:
            record = load_record(path)
            if record.keypoints.view is View.LUMBOSACRAL:
                raise SpinometryError(
                    f"{path}: already a lumbosacral record; refusing to re-crop")
            cropped = crop_lumbosacral(record, margin_fraction=args.margin)
            out_path = path.with_name(path.name + ".ls")
            save_record(cropped, out_path)
            print(out_path)
        except SpinometryError as exc:
            failures += 1
            print(f"{path}: {getattr(exc, 'name', 'error')}: {exc}",
                  file=sys.stderr)
    return EXIT_ROW_FAILURES if failures else EXIT_OK


def _resolve_data_dir(arg: Optional[str]) -> Path:
    candidate = arg or os.environ.get(ENV_DATA_DIR)
    if not candidate:
        raise FileNotFoundError(
            f"no data directory given and {ENV_DATA_DIR} is unset")
    path = Path(candidate)
    if not path.is_dir():
        raise FileNotFoundError(f"data directory does not exist: {path}")
    return path


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    data_dir = _resolve_data_dir(args.data_dir)
    host, _, port_text = args.bind.rpartition(":")
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"invalid bind address {args.bind!r}") from None
    store = AnnotationStore(data_dir)
    print(f"serving {len(store.study_ids())} studies from {data_dir} "
          f"on {host or '127.0.0.1'}:{port}"
          + (" (read-only)" if args.readonly else ""), flush=True)
    app = create_app(data_dir, readonly=args.readonly,
                     cors_origins=args.cors.split(",") if args.cors else None)
    uvicorn.run(app, host=host or "127.0.0.1", port=port, log_level="warning")
    return EXIT_OK


def cmd_split(args: argparse.Namespace) -> int:
    if args.ids:
        ids = [line.strip() for line in
               Path(args.ids).read_text(encoding="utf-8").splitlines()
               if line.strip()]
    else:
        data_dir = _resolve_data_dir(args.data_dir)
        ids = AnnotationStore(data_dir).study_ids()
    manifest = make_split(ids, train_fraction=args.train_fraction,
                          seed=args.seed)
    if args.out:
        save_split(manifest, Path(args.out))
        print(args.out)
    else:
        import json
        print(json.dumps({
            "seed": manifest.seed,
            "fractions": dict(manifest.fractions),
            "train_ids": list(manifest.train_ids),
            "val_ids": list(manifest.val_ids),
            "test_ids": list(manifest.test_ids),
        }, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinometry",
        description="spinopelvic parameter engine and evaluation harness")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_compute = sub.add_parser(
        "compute", help="compute parameters from annotation files")
    p_compute.add_argument("paths", nargs="+", help="annotation files (.ann)")
    p_compute.add_argument("--out", help="write the table here instead of stdout")
    p_compute.set_defaults(func=cmd_compute)

    p_eval = sub.add_parser(
        "evaluate", help="evaluate a prediction cohort against ground truth")
    p_eval.add_argument("--pred", required=True, help="prediction cohort dir")
    p_eval.add_argument("--gt", required=True, help="ground-truth cohort dir")
    p_eval.add_argument("--out", default="evaluation_report",
                        help="report output directory")
    p_eval.add_argument("--thresholds", type=parse_thresholds,
                        default=list(DEFAULT_THRESHOLDS_MM),
                        help='PCK thresholds in mm, e.g. "1..10" or "1,2.5,5"')
    p_eval.add_argument("--format", choices=("csv", "doc"), default="csv",
                        help="what to print to stdout")
    p_eval.add_argument("--seed", type=int, default=None,
                        help="recorded in report metadata")
    p_eval.add_argument("--cohort-id", default="cohort")
    p_eval.add_argument("--pred-source", default="prediction")
    p_eval.add_argument("--gt-source", default="ground_truth")
    p_eval.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cmp = sub.add_parser(
        "compare", help="compare two prediction sources against ground truth")
    p_cmp.add_argument("--a", required=True, help="first source dir")
    p_cmp.add_argument("--b", required=True, help="second source dir")
    p_cmp.add_argument("--gt", required=True, help="ground-truth dir")
    p_cmp.add_argument("--labels", default="source_a,source_b",
                       help="comma-separated source labels")
    p_cmp.add_argument("--out", help="write radar csv/figure into this dir")
    p_cmp.add_argument("--no-figures", action="store_true")
    p_cmp.set_defaults(func=cmd_compare)

    p_crop = sub.add_parser(
        "crop", help="derive lumbosacral records from whole-spine ones")
    p_crop.add_argument("paths", nargs="+", help="whole-spine annotation files")
    p_crop.add_argument("--margin", type=float, default=DEFAULT_CROP_MARGIN,
                        help="window margin per side as a fraction of its size")
    p_crop.set_defaults(func=cmd_crop)

    p_serve = sub.add_parser("serve", help="run the review service")
    p_serve.add_argument("data_dir", nargs="?",
                         help=f"data root (default: ${ENV_DATA_DIR})")
    p_serve.add_argument("--bind", default=DEFAULT_BIND,
                         help=f"host:port (default {DEFAULT_BIND})")
    p_serve.add_argument("--readonly", action="store_true",
                         help="disable write endpoints")
    p_serve.add_argument("--cors", help="comma-separated allowed origins")
    p_serve.set_defaults(func=cmd_serve)

    p_split = sub.add_parser("split", help="make a train/validation split")
    p_split.add_argument("data_dir", nargs="?",
                         help=f"data root (default: ${ENV_DATA_DIR})")
    p_split.add_argument("--ids", help="file with one study id per line")
    p_split.add_argument("--train-fraction", type=float, default=0.92)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--out", help="write the manifest here")
    p_split.set_defaults(func=cmd_split)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors and 0 for --help/--version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, PermissionError, IsADirectoryError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid invocation: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SpinometryError as exc:
        print(f"{exc.name}: {exc}", file=sys.stderr)
        return EXIT_ROW_FAILURES


if __name__ == "__main__":
    sys.exit(main())
