"""Cohort-level keypoint accuracy and parameter error aggregation.

Keypoint accuracy is the fraction of predicted landmarks whose distance
from ground truth falls within a millimeter threshold, evaluated per
landmark and pooled over all landmark-image pairs. The two femoral head
landmarks are merged into one midpoint landmark beforehand, since left and
right are hard to tell apart on a sagittal film.

Landmark pairs missing on either side are excluded from denominators (not
counted as failures); exclusion counts are carried on the curve so reports
stay transparent about coverage. Because the pooled curve and the mean of
per-landmark curves answer slightly different questions, both are emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .dataset import AnnotationRecord
from .errors import EmptyCohort, MissingLandmark, SpacingMismatch
from .geometry import (
    KeypointSet,
    LandmarkName,
    PARAMETER_ORDER,
    SpinopelvicParameters,
    compute_parameters,
)
from .stats import descriptive

Point = Tuple[float, float]


class EvalLandmarkName(str, Enum):
    """Evaluation landmarks: the femoral pair collapses to its midpoint."""

    C7 = "C7"
    T1 = "T1"
    L1_ANT = "L1_ANT"
    L1_POST = "L1_POST"
    L1_MID = "L1_MID"
    S1_ANT = "S1_ANT"
    S1_POST = "S1_POST"
    FEM_MID = "FEM_MID"

    def __str__(self) -> str:
        return self.value


_PASSTHROUGH = {
    EvalLandmarkName.C7: LandmarkName.C7,
    EvalLandmarkName.T1: LandmarkName.T1,
    EvalLandmarkName.L1_ANT: LandmarkName.L1_ANT,
    EvalLandmarkName.L1_POST: LandmarkName.L1_POST,
    EvalLandmarkName.L1_MID: LandmarkName.L1_MID,
    EvalLandmarkName.S1_ANT: LandmarkName.S1_ANT,
    EvalLandmarkName.S1_POST: LandmarkName.S1_POST,
}


@dataclass(frozen=True)
class PckCurve:
    """Correct-keypoint fractions per landmark over ascending thresholds."""

    thresholds_mm: Tuple[float, ...]
    per_landmark: Mapping[EvalLandmarkName, Tuple[float, ...]]
    overall: Tuple[float, ...]
    overall_macro: Tuple[float, ...]  # mean of per-landmark fractions
    n_images: int
    excluded: Mapping[EvalLandmarkName, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(t <= 0 for t in self.thresholds_mm):
            raise ValueError("thresholds must be positive")
        if list(self.thresholds_mm) != sorted(self.thresholds_mm):
            raise ValueError("thresholds must be ascending")
        for name, fracs in list(self.per_landmark.items()) + [
                (None, self.overall), (None, self.overall_macro)]:
            if any(not (0.0 <= f <= 1.0) for f in fracs):
                raise ValueError(f"fraction out of [0, 1] for {name}")
            if any(b < a for a, b in zip(fracs, fracs[1:])):
                raise ValueError(f"fractions not monotone for {name}")


def merge_femoral(ks: KeypointSet) -> Dict[EvalLandmarkName, Point]:
    """Collapse FEM_L/FEM_R to FEM_MID; pass the other landmarks through.

    Requires both femoral landmarks; invisible landmarks are omitted from
    the returned map.
    """
    missing = [n for n in (LandmarkName.FEM_L, LandmarkName.FEM_R)
               if not ks.visible(n)]
    if missing:
        raise MissingLandmark([n.value for n in missing])
    return _eval_points(ks)


def _eval_points(ks: KeypointSet) -> Dict[EvalLandmarkName, Point]:
    # Relaxed variant used by cohort metrics: whatever is visible is mapped;
    # FEM_MID appears only when both femoral landmarks are visible.
    out: Dict[EvalLandmarkName, Point] = {}
    for eval_name, source in _PASSTHROUGH.items():
        if ks.visible(source):
            kp = ks.keypoints[source]
            out[eval_name] = (kp.x_px, kp.y_px)
    if ks.visible(LandmarkName.FEM_L) and ks.visible(LandmarkName.FEM_R):
        left = ks.keypoints[LandmarkName.FEM_L]
        right = ks.keypoints[LandmarkName.FEM_R]
        out[EvalLandmarkName.FEM_MID] = ((left.x_px + right.x_px) / 2.0,
                                         (left.y_px + right.y_px) / 2.0)
    return out


def pck(preds: Sequence[KeypointSet], gts: Sequence[KeypointSet],
        thresholds_mm: Sequence[float]) -> PckCurve:
    """Percent-correct-keypoints curve over an aligned cohort.

    ``preds`` and ``gts`` are aligned index-by-index (same image order) and
    must agree on pixel spacing per image. Distances are Euclidean pixel
    distances divided by the image's pixel spacing, in millimeters.
    """
    if len(preds) != len(gts):
        raise ValueError(f"cohorts differ in length: {len(preds)} vs {len(gts)}")
    if not preds:
        raise EmptyCohort("no image pairs to evaluate")
    thresholds = tuple(float(t) for t in thresholds_mm)

    hits: Dict[EvalLandmarkName, List[int]] = {
        name: [0] * len(thresholds) for name in EvalLandmarkName}
    totals: Dict[EvalLandmarkName, int] = {name: 0 for name in EvalLandmarkName}
    excluded: Dict[EvalLandmarkName, int] = {name: 0 for name in EvalLandmarkName}

    for pred, gt in zip(preds, gts):
        if pred.pixel_spacing_px_per_mm != gt.pixel_spacing_px_per_mm:
            raise SpacingMismatch(
                f"{pred.pixel_spacing_px_per_mm} != {gt.pixel_spacing_px_per_mm}")
        spacing = gt.pixel_spacing_px_per_mm
        pred_pts = _eval_points(pred)
        gt_pts = _eval_points(gt)
        for name in EvalLandmarkName:
            if name in pred_pts and name in gt_pts:
                (px, py), (gx, gy) = pred_pts[name], gt_pts[name]
                dist_mm = math.hypot(px - gx, py - gy) / spacing
                totals[name] += 1
                for ti, threshold in enumerate(thresholds):
                    if dist_mm <= threshold:
                        hits[name][ti] += 1
            else:
                excluded[name] += 1

    per_landmark: Dict[EvalLandmarkName, Tuple[float, ...]] = {}
    for name in EvalLandmarkName:
        if totals[name]:
            per_landmark[name] = tuple(h / totals[name] for h in hits[name])

    pooled_total = sum(totals.values())
    if pooled_total == 0:
        raise EmptyCohort("no landmark pairs present on both sides")
    overall = tuple(
        sum(hits[name][ti] for name in EvalLandmarkName) / pooled_total
        for ti in range(len(thresholds)))
    overall_macro = tuple(
        sum(fracs[ti] for fracs in per_landmark.values()) / len(per_landmark)
        for ti in range(len(thresholds)))

    return PckCurve(
        thresholds_mm=thresholds,
        per_landmark=per_landmark,
        overall=overall,
        overall_macro=overall_macro,
        n_images=len(preds),
        excluded={n: c for n, c in excluded.items() if c},
    )


@dataclass(frozen=True)
class ErrorSummary:
    """Absolute-error statistics per parameter for one stratum."""

    stratum: Optional[str]
    n: int
    per_parameter: Mapping[str, Dict[str, float]]  # label -> descriptive()

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("empty summary")


@dataclass(frozen=True)
class StratifiedErrors:
    """Overall error summary plus any non-empty strata."""

    overall: ErrorSummary
    strata: Tuple[ErrorSummary, ...]
    empty_strata: Tuple[str, ...]


def _absolute_errors(pairs: Sequence[Tuple[SpinopelvicParameters,
                                           SpinopelvicParameters]]
                     ) -> Dict[str, List[float]]:
    errs: Dict[str, List[float]] = {}
    for pred, gt in pairs:
        dp, dg = pred.as_dict(), gt.as_dict()
        for label in PARAMETER_ORDER:
            if dp[label] is not None and dg[label] is not None:
                errs.setdefault(label, []).append(abs(dp[label] - dg[label]))
    return errs


def _summarize(pairs, stratum: Optional[str]) -> ErrorSummary:
    per_parameter = {label: descriptive(values)
                     for label, values in _absolute_errors(pairs).items()}
    return ErrorSummary(stratum=stratum, n=len(pairs), per_parameter=per_parameter)


def summarize_parameter_errors(
        pairs: Sequence[Tuple[SpinopelvicParameters, SpinopelvicParameters]],
        stratum: Optional[str] = None) -> ErrorSummary:
    """Summarize |prediction - ground truth| over aligned parameter pairs."""
    if not pairs:
        raise EmptyCohort("no aligned parameter pairs")
    return _summarize(pairs, stratum)


def error_summary(preds: Sequence[AnnotationRecord],
                  gts: Sequence[AnnotationRecord],
                  stratifier: Optional[Callable[[AnnotationRecord], bool]] = None,
                  stratum_labels: Tuple[str, str] = ("with_instrumentation",
                                                     "without_instrumentation")
                  ) -> StratifiedErrors:
    """Per-parameter error statistics over an aligned record cohort.

    ``preds`` and ``gts`` are aligned index-by-index and must compute under
    the same view pairwise. ``stratifier`` is a predicate over the
    ground-truth record's metadata; the true/false groups become the two
    labelled strata, computed independently of the overall row. A stratum
    left empty by the predicate is reported by name, not raised.
    """
    if len(preds) != len(gts):
        raise ValueError(f"cohorts differ in length: {len(preds)} vs {len(gts)}")
    if not preds:
        raise EmptyCohort("no aligned record pairs")
    pairs = [(compute_parameters(p.keypoints), compute_parameters(g.keypoints))
             for p, g in zip(preds, gts)]
    for (pp, gp) in pairs:
        if pp.view is not gp.view:
            raise ValueError("aligned records disagree on view")

    overall = _summarize(pairs, None)
    strata: List[ErrorSummary] = []
    empty: List[str] = []
    if stratifier is not None:
        in_stratum = [bool(stratifier(g)) for g in gts]
        for label, wanted in zip(stratum_labels, (True, False)):
            members = [pair for pair, flag in zip(pairs, in_stratum)
                       if flag is wanted]
            if members:
                strata.append(_summarize(members, label))
            else:
                empty.append(label)
    return StratifiedErrors(overall=overall, strata=tuple(strata),
                            empty_strata=tuple(empty))


def compare_sources(a_preds: Sequence[SpinopelvicParameters],
                    b_preds: Sequence[SpinopelvicParameters],
                    gts: Sequence[SpinopelvicParameters],
                    labels: Tuple[str, str] = ("source_a", "source_b")
                    ) -> List[Dict[str, object]]:
    """Median absolute error of two sources against shared ground truth.

    Returns radar-plot-ready rows {source, parameter, median_error}, one per
    source and parameter with at least one valid pair.
    """
    if not gts or len(a_preds) != len(gts) or len(b_preds) != len(gts):
        raise EmptyCohort("all three cohorts must be aligned and non-empty")
    rows: List[Dict[str, object]] = []
    for label, preds in zip(labels, (a_preds, b_preds)):
        errs = _absolute_errors(list(zip(preds, gts)))
        for parameter in PARAMETER_ORDER:
            if parameter in errs:
                rows.append({
                    "source": label,
                    "parameter": parameter,
                    "median_error": descriptive(errs[parameter])["median"],
                })
    return rows
