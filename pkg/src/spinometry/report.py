"""Cohort evaluation reports: error tables, PCK curves, ICC, rank-sum tests.

One builder produces the full report; the CLI and the review service both
serialize it through the same functions, so the structured document is
byte-identical whichever way it is requested. Reports embed the method
decisions they were computed under (quartile rule, ICC form, exact-vs-
approximate rank-sum policy) so every number is auditable.

Table layout mirrors the clinical reporting convention: a whole-spine block
with all seven parameters, then a lumbosacral block with SS and LL, each
with overall statistics plus with/without-instrumentation strata. Parameter
values are rounded to one decimal in the delimited tables; the structured
document keeps full precision.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from . import __version__
from .dataset import AnnotationRecord
from .errors import AlignmentError, DegenerateVariance, EmptyCohort
from .geometry import (
    LUMBOSACRAL_PARAMETERS,
    PARAMETER_ORDER,
    PARAMETER_UNITS,
    View,
    compute_parameters,
)
from .metrics import (
    ErrorSummary,
    PckCurve,
    StratifiedErrors,
    error_summary,
    pck,
)
from .stats import (
    ICC_FORM,
    QUARTILE_RULE,
    EXACT_CUTOFF,
    RankSumResult,
    descriptive,
    icc_a1,
    wilcoxon_rank_sum,
)

DEFAULT_THRESHOLDS_MM = tuple(float(t) for t in range(1, 11))
STRATUM_LABELS = ("with_instrumentation", "without_instrumentation")

PCK_CSV_HEADER = ("landmark", "threshold_mm", "fraction", "n_pairs")
ICC_CSV_HEADER = ("rater_a", "rater_b", "parameter", "icc")
RADAR_CSV_HEADER = ("source", "parameter", "median_error")
ERROR_CSV_HEADER = (
    "view", "parameter", "unit", "n",
    "overall_mean", "overall_sd", "overall_median", "overall_iqr",
    "median_with_instrumentation", "iqr_with_instrumentation",
    "median_without_instrumentation", "iqr_without_instrumentation",
    "wilcoxon_p",
)
VALUE_CSV_HEADER = ("view", "source", "parameter", "unit", "n",
                    "mean", "sd", "median", "iqr")


@dataclass(frozen=True)
class ViewBlock:
    """All statistics of one view stratum of the cohort."""

    view: View
    n_pairs: int
    errors: StratifiedErrors
    wilcoxon: Mapping[str, RankSumResult]
    icc: Mapping[str, Optional[float]]
    #: per-source descriptive statistics of the parameter values themselves
    values: Mapping[str, Mapping[str, Dict[str, float]]]

    def parameters(self) -> Tuple[str, ...]:
        if self.view is View.LUMBOSACRAL:
            return LUMBOSACRAL_PARAMETERS
        return PARAMETER_ORDER


@dataclass(frozen=True)
class EvaluationReport:
    cohort_id: str
    pred_source: str
    gt_source: str
    n_studies: int
    metadata: Mapping[str, object]
    blocks: Tuple[ViewBlock, ...]
    pck: Optional[PckCurve]
    icc_rows: Tuple[Dict[str, object], ...]
    radar_rows: Tuple[Dict[str, object], ...]


def _is_instrumented(record: AnnotationRecord) -> bool:
    return record.metadata.spinal_instrumentation


def align_records(preds: Sequence[AnnotationRecord],
                  gts: Sequence[AnnotationRecord],
                  strict: bool = True) -> List[Tuple[AnnotationRecord,
                                                     AnnotationRecord]]:
    """Pair records by (study_id, view), sorted for deterministic reduction.

    ``strict`` raises AlignmentError listing ids present on only one side;
    otherwise the intersection is used.
    """
    def keyed(records: Sequence[AnnotationRecord]):
        out: Dict[Tuple[str, str], AnnotationRecord] = {}
        for rec in records:
            key = (rec.study_id, rec.keypoints.view.value)
            if key in out:
                raise AlignmentError(
                    f"duplicate record for study {key[0]} ({key[1]})")
            out[key] = rec
        return out

    pred_map, gt_map = keyed(preds), keyed(gts)
    unmatched = sorted(
        f"{sid} ({view})" for sid, view in
        set(pred_map).symmetric_difference(gt_map))
    if unmatched and strict:
        raise AlignmentError("unmatched study ids", unmatched)
    common = sorted(set(pred_map) & set(gt_map))
    if not common:
        raise EmptyCohort("prediction and ground-truth cohorts share no study")
    return [(pred_map[k], gt_map[k]) for k in common]


def _block(view: View,
           pairs: Sequence[Tuple[AnnotationRecord, AnnotationRecord]],
           pred_source: str, gt_source: str) -> ViewBlock:
    preds = [p for p, _ in pairs]
    gts = [g for _, g in pairs]
    errors = error_summary(preds, gts, stratifier=_is_instrumented,
                           stratum_labels=STRATUM_LABELS)

    pred_params = [compute_parameters(p.keypoints) for p in preds]
    gt_params = [compute_parameters(g.keypoints) for g in gts]
    labels = (LUMBOSACRAL_PARAMETERS if view is View.LUMBOSACRAL
              else PARAMETER_ORDER)
    wilcoxon: Dict[str, RankSumResult] = {}
    icc: Dict[str, Optional[float]] = {}
    values: Dict[str, Dict[str, Dict[str, float]]] = {
        pred_source: {}, gt_source: {}}
    for label in labels:
        pred_values = [p.as_dict()[label] for p in pred_params]
        gt_values = [g.as_dict()[label] for g in gt_params]
        wilcoxon[label] = wilcoxon_rank_sum(pred_values, gt_values)
        try:
            icc[label] = icc_a1(list(zip(pred_values, gt_values))).icc
        except (DegenerateVariance, ValueError):
            # undefined agreement (zero subject variance or n < 2 pairs)
            icc[label] = None
        values[pred_source][label] = descriptive(pred_values)
        values[gt_source][label] = descriptive(gt_values)
    return ViewBlock(view=view, n_pairs=len(pairs), errors=errors,
                     wilcoxon=wilcoxon, icc=icc, values=values)


def build_report(preds: Sequence[AnnotationRecord],
                 gts: Sequence[AnnotationRecord],
                 thresholds_mm: Sequence[float] = DEFAULT_THRESHOLDS_MM,
                 cohort_id: str = "cohort",
                 pred_source: str = "prediction",
                 gt_source: str = "ground_truth",
                 strict_alignment: bool = True,
                 seed: Optional[int] = None) -> EvaluationReport:
    """Evaluate an aligned prediction cohort against ground truth."""
    pairs = align_records(preds, gts, strict=strict_alignment)

    blocks: List[ViewBlock] = []
    for view in (View.WHOLE_SPINE, View.LUMBOSACRAL):
        view_pairs = [pair for pair in pairs
                      if pair[1].keypoints.view is view]
        if view_pairs:
            blocks.append(_block(view, view_pairs, pred_source, gt_source))

    curve = pck([p.keypoints for p, _ in pairs],
                [g.keypoints for _, g in pairs], thresholds_mm)

    # Heatmap and radar data files keep their documented four/three-column
    # headers, so they draw from the leading block (whole-spine when present,
    # lumbosacral otherwise); per-block ICCs for every view live in the
    # structured document.
    primary = blocks[0]
    icc_rows: List[Dict[str, object]] = []
    for parameter in primary.parameters():
        for pair in ((pred_source, pred_source), (pred_source, gt_source),
                     (gt_source, gt_source)):
            icc_rows.append({
                "rater_a": pair[0],
                "rater_b": pair[1],
                "parameter": parameter,
                "icc": 1.0 if pair[0] == pair[1] else primary.icc[parameter],
            })

    radar_rows: List[Dict[str, object]] = []
    for parameter in primary.parameters():
        stats = primary.errors.overall.per_parameter.get(parameter)
        if stats is not None:
            radar_rows.append({
                "source": pred_source,
                "parameter": parameter,
                "median_error": stats["median"],
            })

    metadata: Dict[str, object] = {
        "tool": "spinometry",
        "version": __version__,
        "quartile_rule": QUARTILE_RULE,
        "icc_form": ICC_FORM,
        "rank_sum_policy": (f"exact enumeration when min(n1, n2) <= "
                            f"{EXACT_CUTOFF} and tie-free; otherwise normal "
                            f"approximation, tie-corrected, 0.5 continuity"),
        "thresholds_mm": [float(t) for t in thresholds_mm],
        "seed": seed,
    }
    return EvaluationReport(
        cohort_id=cohort_id,
        pred_source=pred_source,
        gt_source=gt_source,
        n_studies=len(pairs),
        metadata=metadata,
        blocks=tuple(blocks),
        pck=curve,
        icc_rows=tuple(icc_rows),
        radar_rows=tuple(radar_rows),
    )


# serialization

def _summary_dict(summary: Optional[ErrorSummary]) -> Optional[Dict[str, object]]:
    if summary is None:
        return None
    return {
        "stratum": summary.stratum,
        "n": summary.n,
        "per_parameter": {label: dict(stats) for label, stats
                          in summary.per_parameter.items()},
    }


def report_to_dict(report: EvaluationReport) -> Dict[str, object]:
    blocks = []
    for block in report.blocks:
        strata = {s.stratum: _summary_dict(s) for s in block.errors.strata}
        blocks.append({
            "view": block.view.value,
            "n_pairs": block.n_pairs,
            "overall": _summary_dict(block.errors.overall),
            "strata": strata,
            "empty_strata": list(block.errors.empty_strata),
            "wilcoxon": {
                label: {
                    "u_statistic": r.u_statistic,
                    "z_value": r.z_value,
                    "p_two_sided": r.p_two_sided,
                    "n1": r.n1,
                    "n2": r.n2,
                    "tie_correction_applied": r.tie_correction_applied,
                    "method": r.method,
                }
                for label, r in block.wilcoxon.items()
            },
            "icc": dict(block.icc),
            "values": {source: {label: dict(stats)
                                for label, stats in per_param.items()}
                       for source, per_param in block.values.items()},
        })
    curve = report.pck
    pck_doc = None
    if curve is not None:
        pck_doc = {
            "thresholds_mm": list(curve.thresholds_mm),
            "per_landmark": {name.value: list(fracs)
                             for name, fracs in curve.per_landmark.items()},
            "overall": list(curve.overall),
            "overall_macro": list(curve.overall_macro),
            "n_images": curve.n_images,
            "excluded": {name.value: count
                         for name, count in curve.excluded.items()},
        }
    return {
        "cohort_id": report.cohort_id,
        "pred_source": report.pred_source,
        "gt_source": report.gt_source,
        "n_studies": report.n_studies,
        "generation": dict(report.metadata),
        "blocks": blocks,
        "pck": pck_doc,
        "icc_matrix": list(report.icc_rows),
        "radar": list(report.radar_rows),
    }


def report_json(report: EvaluationReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False) + "\n"


def _fmt(value: Optional[float], digits: int = 1) -> str:
    return "" if value is None else f"{value:.{digits}f}"


def error_table_rows(report: EvaluationReport) -> List[Dict[str, str]]:
    rows: List[Dict[str, str]] = []
    for block in report.blocks:
        strata = {s.stratum: s for s in block.errors.strata}
        with_s = strata.get(STRATUM_LABELS[0])
        without_s = strata.get(STRATUM_LABELS[1])
        for parameter in block.parameters():
            overall = block.errors.overall.per_parameter.get(parameter)
            if overall is None:
                continue

            def stratum_stats(summary: Optional[ErrorSummary], key: str
                              ) -> Optional[float]:
                if summary is None:
                    return None
                stats = summary.per_parameter.get(parameter)
                return None if stats is None else stats[key]

            rows.append({
                "view": block.view.value,
                "parameter": parameter,
                "unit": PARAMETER_UNITS[parameter],
                "n": str(int(overall["n"])),
                "overall_mean": _fmt(overall["mean"]),
                "overall_sd": _fmt(overall["sd"]),
                "overall_median": _fmt(overall["median"]),
                "overall_iqr": _fmt(overall["iqr"]),
                "median_with_instrumentation": _fmt(stratum_stats(with_s, "median")),
                "iqr_with_instrumentation": _fmt(stratum_stats(with_s, "iqr")),
                "median_without_instrumentation": _fmt(
                    stratum_stats(without_s, "median")),
                "iqr_without_instrumentation": _fmt(
                    stratum_stats(without_s, "iqr")),
                "wilcoxon_p": _fmt(block.wilcoxon[parameter].p_two_sided, 2),
            })
    return rows


def _write_csv(path: Path, header: Sequence[str],
               rows: Sequence[Mapping[str, object]]) -> None:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(header), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row[k])
                         for k in header})
    path.write_text(buffer.getvalue(), encoding="utf-8")


def pck_table_rows(curve: PckCurve) -> List[Dict[str, object]]:
    rows: List[Dict[str, object]] = []
    for name, fracs in curve.per_landmark.items():
        n_pairs = curve.n_images - curve.excluded.get(name, 0)
        for threshold, frac in zip(curve.thresholds_mm, fracs):
            rows.append({"landmark": name.value, "threshold_mm": threshold,
                         "fraction": repr(frac), "n_pairs": n_pairs})
    pooled = curve.n_images * len(curve.per_landmark) - sum(
        curve.excluded.values())
    for label, fracs in (("OVERALL", curve.overall),
                         ("OVERALL_MACRO", curve.overall_macro)):
        for threshold, frac in zip(curve.thresholds_mm, fracs):
            rows.append({"landmark": label, "threshold_mm": threshold,
                         "fraction": repr(frac),
                         "n_pairs": pooled if label == "OVERALL" else ""})
    return rows


def write_report_files(report: EvaluationReport, outdir: Path) -> List[Path]:
    """Write the delimited tables and the structured document; return paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []

    json_path = outdir / "report.json"
    json_path.write_text(report_json(report), encoding="utf-8")
    written.append(json_path)

    errors_path = outdir / "error_summary.csv"
    _write_csv(errors_path, ERROR_CSV_HEADER, error_table_rows(report))
    written.append(errors_path)

    values_path = outdir / "value_summary.csv"
    value_rows = []
    for block in report.blocks:
        for source in (report.gt_source, report.pred_source):
            for parameter in block.parameters():
                stats = block.values[source].get(parameter)
                if stats is None:
                    continue
                value_rows.append({
                    "view": block.view.value,
                    "source": source,
                    "parameter": parameter,
                    "unit": PARAMETER_UNITS[parameter],
                    "n": str(int(stats["n"])),
                    "mean": _fmt(stats["mean"]),
                    "sd": _fmt(stats["sd"]),
                    "median": _fmt(stats["median"]),
                    "iqr": _fmt(stats["iqr"]),
                })
    _write_csv(values_path, VALUE_CSV_HEADER, value_rows)
    written.append(values_path)

    if report.pck is not None:
        pck_path = outdir / "pck_curve.csv"
        _write_csv(pck_path, PCK_CSV_HEADER, pck_table_rows(report.pck))
        written.append(pck_path)

    icc_path = outdir / "icc_matrix.csv"
    _write_csv(icc_path, ICC_CSV_HEADER,
               [{**row, "icc": ("" if row["icc"] is None else repr(row["icc"]))}
                for row in report.icc_rows])
    written.append(icc_path)

    radar_path = outdir / "radar_medians.csv"
    _write_csv(radar_path, RADAR_CSV_HEADER,
               [{**row, "median_error": repr(row["median_error"])}
                for row in report.radar_rows])
    written.append(radar_path)
    return written


def render_text_report(report: EvaluationReport) -> str:
    """Human-readable block layout of the error table."""
    lines = [f"cohort: {report.cohort_id}  "
             f"({report.pred_source} vs {report.gt_source}, "
             f"n={report.n_studies})"]
    for block in report.blocks:
        title = ("Whole Spine Images" if block.view is View.WHOLE_SPINE
                 else "Lumbosacral Images")
        lines.append("")
        lines.append(f"== {title} (n={block.n_pairs}) ==")
        header = (f"{'parameter':<10} {'mean (SD)':>16} {'median (IQR)':>16} "
                  f"{'with instr.':>16} {'without instr.':>16} {'p':>6}")
        lines.append(header)
        for row in error_table_rows(report):
            if row["view"] != block.view.value:
                continue
            unit = "mm" if row["unit"] == "mm" else "deg"
            lines.append(
                f"{row['parameter'] + ' (' + unit + ')':<10} "
                f"{row['overall_mean'] + ' (' + row['overall_sd'] + ')':>16} "
                f"{row['overall_median'] + ' (' + row['overall_iqr'] + ')':>16} "
                f"{(row['median_with_instrumentation'] or '-') + ' (' + (row['iqr_with_instrumentation'] or '-') + ')':>16} "
                f"{(row['median_without_instrumentation'] or '-') + ' (' + (row['iqr_without_instrumentation'] or '-') + ')':>16} "
                f"{row['wilcoxon_p']:>6}")
    return "\n".join(lines) + "\n"
