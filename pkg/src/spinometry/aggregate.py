"""Merging region-detector outputs into one keypoint set.

Three detectors cover disjoint landmark subsets: a top-down L1 detector and
S1 detector (box first, then keypoints inside the box) and a bottom-up
detector for the remaining landmarks (no box). Any detector that writes the
schema_version "1" interchange file plugs in; no inference code lives here.

Selection takes the highest-scoring candidate per region, with ties broken
by larger box area and then by file order, so aggregation is deterministic.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .dataset import Box
from .errors import (
    DuplicateLandmark,
    InvariantViolation,
    MissingLandmark,
    NoDetection,
    ParseError,
    RegionMismatch,
    SchemaVersionError,
)
from .geometry import Keypoint, KeypointSet, LandmarkName, View

logger = logging.getLogger(__name__)

INTERCHANGE_SCHEMA_VERSION = "1"


class Region(str, Enum):
    L1 = "L1"
    S1 = "S1"
    GLOBAL = "GLOBAL"

    def __str__(self) -> str:
        return self.value


#: Disjoint landmark subsets; together they cover all nine landmarks.
REGION_LANDMARKS: Dict[Region, frozenset] = {
    Region.L1: frozenset({LandmarkName.L1_ANT, LandmarkName.L1_POST,
                          LandmarkName.L1_MID}),
    Region.S1: frozenset({LandmarkName.S1_ANT, LandmarkName.S1_POST}),
    Region.GLOBAL: frozenset({LandmarkName.C7, LandmarkName.T1,
                              LandmarkName.FEM_L, LandmarkName.FEM_R}),
}


@dataclass(frozen=True)
class DetectionCandidate:
    """One scored region proposal with its keypoints."""

    region: Region
    score: float
    keypoints: Tuple[Keypoint, ...]
    box: Optional[Box] = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.score <= 1.0):
            raise InvariantViolation([("score", f"{self.score} outside [0, 1]")])
        failures: List[Tuple[str, str]] = []
        allowed = REGION_LANDMARKS[self.region]
        seen = set()
        for kp in self.keypoints:
            if kp.name not in allowed:
                failures.append(("keypoints",
                                 f"{kp.name.value} outside region {self.region}"))
            if kp.name in seen:
                failures.append(("keypoints", f"duplicate {kp.name.value}"))
            seen.add(kp.name)
        if self.region in (Region.L1, Region.S1):
            if self.box is None:
                failures.append(("box", f"region {self.region} requires a box"))
            else:
                for kp in self.keypoints:
                    if not self.box.contains(kp.x_px, kp.y_px):
                        failures.append(
                            ("box", f"{kp.name.value} lies outside the box"))
        if failures:
            raise InvariantViolation(failures)

    @property
    def box_area(self) -> float:
        return self.box.w * self.box.h if self.box is not None else 0.0


@dataclass(frozen=True)
class DetectorOutput:
    """All candidates one detector produced for one study."""

    study_id: str
    region: Region
    candidates: Tuple[DetectionCandidate, ...] = ()

    def __post_init__(self) -> None:
        for cand in self.candidates:
            if cand.region is not self.region:
                raise RegionMismatch(
                    f"candidate region {cand.region} in a {self.region} output")


def select_candidate(out: DetectorOutput) -> DetectionCandidate:
    """Highest-scoring candidate; ties favor larger box area, then file order."""
    if not out.candidates:
        raise NoDetection(out.region.value)
    best = out.candidates[0]
    for cand in out.candidates[1:]:
        if (cand.score, cand.box_area) > (best.score, best.box_area):
            best = cand
    return best


def aggregate(l1: Optional[DetectorOutput], s1: Optional[DetectorOutput],
              global_out: Optional[DetectorOutput],
              pixel_spacing_px_per_mm: float,
              view: View = View.WHOLE_SPINE) -> KeypointSet:
    """Combine per-region detector outputs into one aggregate keypoint set.

    Whole-spine aggregation needs all three regions; the lumbosacral view
    accepts L1 and S1 only. Missing or empty outputs raise NoDetection
    naming the region.
    """
    outputs: List[Tuple[Region, Optional[DetectorOutput]]] = [
        (Region.L1, l1), (Region.S1, s1), (Region.GLOBAL, global_out)]
    required = [Region.L1, Region.S1]
    if view is View.WHOLE_SPINE:
        required.append(Region.GLOBAL)

    keypoints: Dict[LandmarkName, Keypoint] = {}
    for region, out in outputs:
        if out is None:
            if region in required:
                raise NoDetection(region.value)
            continue
        if out.region is not region:
            raise RegionMismatch(f"{out.region} output passed as {region}")
        if not out.candidates and region not in required:
            continue
        candidate = select_candidate(out)
        for kp in candidate.keypoints:
            if kp.name in keypoints:
                raise DuplicateLandmark(kp.name.value)
            keypoints[kp.name] = kp
    aggregate_set = KeypointSet(keypoints=keypoints,
                                pixel_spacing_px_per_mm=pixel_spacing_px_per_mm,
                                view=view)
    missing = aggregate_set.missing_landmarks()
    if missing:
        raise MissingLandmark([n.value for n in missing])
    return aggregate_set


def load_detector_output(path: os.PathLike) -> DetectorOutput:
    """Read and validate one schema_version "1" interchange file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path=str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), line=exc.lineno) from None

    version = doc.get("schema_version")
    if version != INTERCHANGE_SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema_version {version!r} unsupported")
    try:
        region = Region(doc["region"])
    except KeyError:
        raise ParseError("missing field", path=str(path), field="region") from None
    except ValueError as exc:
        raise ParseError(str(exc), path=str(path), field="region") from None

    candidates: List[DetectionCandidate] = []
    for i, cand_doc in enumerate(doc.get("candidates") or []):
        cand_region_raw = cand_doc.get("region", region.value)
        try:
            cand_region = Region(cand_region_raw)
        except ValueError:
            raise ParseError(f"unknown region {cand_region_raw!r}",
                             path=str(path), field=f"candidates[{i}].region") from None
        if cand_region is not region:
            raise RegionMismatch(
                f"{path}: candidate {i} is {cand_region}, file is {region}")
        box_doc = cand_doc.get("box")
        box: Optional[Box] = None
        if box_doc is not None:
            if region is Region.GLOBAL:
                # bottom-up detector has no box; tolerate but ignore
                logger.warning("%s: GLOBAL candidate %d carries a box; ignored",
                               path, i)
            else:
                box = Box(x=float(box_doc["x"]), y=float(box_doc["y"]),
                          w=float(box_doc["w"]), h=float(box_doc["h"]))
        keypoints = []
        for kp_doc in cand_doc.get("keypoints") or []:
            raw_name = kp_doc.get("name")
            try:
                name = LandmarkName(raw_name)
            except ValueError:
                raise ParseError(f"unknown landmark {raw_name!r}", path=str(path),
                                 field=f"candidates[{i}].keypoints") from None
            keypoints.append(Keypoint(
                name=name, x_px=float(kp_doc["x_px"]), y_px=float(kp_doc["y_px"]),
                visible=bool(kp_doc.get("visible", True))))
        try:
            score = float(cand_doc["score"])
        except KeyError:
            raise ParseError("missing field", path=str(path),
                             field=f"candidates[{i}].score") from None
        if not math.isfinite(score):
            raise ParseError("score must be finite", path=str(path),
                             field=f"candidates[{i}].score")
        candidates.append(DetectionCandidate(
            region=region, score=score, keypoints=tuple(keypoints), box=box))

    study_id = doc.get("study_id")
    if study_id is None:
        raise ParseError("missing field", path=str(path), field="study_id")
    return DetectorOutput(study_id=str(study_id), region=region,
                          candidates=tuple(candidates))


def dumps_detector_output(out: DetectorOutput) -> str:
    """Canonical interchange serialization (inverse of load_detector_output)."""
    doc = {
        "schema_version": INTERCHANGE_SCHEMA_VERSION,
        "study_id": out.study_id,
        "region": out.region.value,
        "candidates": [
            {
                "score": cand.score,
                "box": (None if cand.box is None else
                        {"x": cand.box.x, "y": cand.box.y,
                         "w": cand.box.w, "h": cand.box.h}),
                "keypoints": [
                    {"name": kp.name.value, "x_px": kp.x_px, "y_px": kp.y_px,
                     "visible": kp.visible}
                    for kp in cand.keypoints
                ],
            }
            for cand in out.candidates
        ],
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def save_detector_output(out: DetectorOutput, path: os.PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_detector_output(out), encoding="utf-8")
