"""Synthetic-but-plausible sagittal anatomies for tests.

Keypoints are constructed in an anatomic millimeter frame around the S1
endplate midpoint, then rendered to raster pixels at a chosen spacing with
a random patient facing direction, comfortably inside the image bounds so
Gaussian keypoint noise never has to be clipped.
"""

from __future__ import annotations

import math
from typing import Dict, Optional, Tuple

import numpy as np

from spinometry.aggregate import (
    REGION_LANDMARKS,
    DetectionCandidate,
    DetectorOutput,
    Region,
)
from spinometry.dataset import (
    AnnotationRecord,
    Box,
    ClinicalMetadata,
    ImageInfo,
    Source,
)
from spinometry.geometry import Keypoint, KeypointSet, LandmarkName, View

SPACING = 3.730  # px/mm
MARGIN_PX = 60.0
BOX_PAD_PX = 10.0

DIAGNOSES = ("degenerative disc disease", "scoliosis", "stenosis",
             "spondylosis")


def random_anatomy_mm(rng: np.random.Generator) -> Dict[str, Tuple[float, float]]:
    """Landmarks in anatomic mm (X anterior, Y superior), S1 midpoint at 0."""
    ss = rng.uniform(22.0, 52.0)
    pt = rng.uniform(4.0, 28.0)
    ll = rng.uniform(32.0, 64.0)

    half_s1 = rng.uniform(18.0, 26.0)
    s1_dir = (math.cos(math.radians(ss)), -math.sin(math.radians(ss)))
    s1_ant = (half_s1 * s1_dir[0], half_s1 * s1_dir[1])
    s1_post = (-half_s1 * s1_dir[0], -half_s1 * s1_dir[1])

    d_ha = rng.uniform(48.0, 72.0)
    ha = (d_ha * math.sin(math.radians(pt)), -d_ha * math.cos(math.radians(pt)))
    fem_dx, fem_dy = rng.uniform(-8.0, 8.0), rng.uniform(-8.0, 8.0)
    fem_l = (ha[0] + fem_dx, ha[1] + fem_dy)
    fem_r = (ha[0] - fem_dx, ha[1] - fem_dy)

    l1_center = (rng.uniform(-12.0, 22.0), rng.uniform(115.0, 170.0))
    l1_tilt = math.radians(ss - ll)
    half_l1 = rng.uniform(14.0, 21.0)
    l1_dir = (math.cos(l1_tilt), -math.sin(l1_tilt))
    l1_ant = (l1_center[0] + half_l1 * l1_dir[0],
              l1_center[1] + half_l1 * l1_dir[1])
    l1_post = (l1_center[0] - half_l1 * l1_dir[0],
               l1_center[1] - half_l1 * l1_dir[1])
    l1_mid = (l1_center[0] + rng.uniform(-3.0, 3.0),
              l1_center[1] - rng.uniform(10.0, 16.0))

    t1 = (rng.uniform(-6.0, 42.0), rng.uniform(300.0, 410.0))
    c7 = (t1[0] + rng.uniform(-8.0, 12.0), t1[1] + rng.uniform(18.0, 32.0))
    return {
        "C7": c7, "T1": t1,
        "L1_ANT": l1_ant, "L1_POST": l1_post, "L1_MID": l1_mid,
        "S1_ANT": s1_ant, "S1_POST": s1_post,
        "FEM_L": fem_l, "FEM_R": fem_r,
    }


def anatomy_to_raster(anatomy_mm: Dict[str, Tuple[float, float]],
                      anterior_sign: int = 1,
                      spacing: float = SPACING,
                      margin_px: float = MARGIN_PX
                      ) -> Tuple[Dict[str, Tuple[float, float]], int, int]:
    """Render anatomic mm to raster px; returns (points, width, height)."""
    raw = {name: (anterior_sign * x * spacing, -y * spacing)
           for name, (x, y) in anatomy_mm.items()}
    min_x = min(p[0] for p in raw.values())
    min_y = min(p[1] for p in raw.values())
    raster = {name: (x - min_x + margin_px, y - min_y + margin_px)
              for name, (x, y) in raw.items()}
    width = int(math.ceil(max(p[0] for p in raster.values()) + margin_px))
    height = int(math.ceil(max(p[1] for p in raster.values()) + margin_px))
    return raster, width, height


def keypoint_set_from_raster(raster: Dict[str, Tuple[float, float]],
                             spacing: float = SPACING,
                             view: View = View.WHOLE_SPINE) -> KeypointSet:
    keypoints = {
        LandmarkName(name): Keypoint(LandmarkName(name), x, y)
        for name, (x, y) in raster.items()
    }
    return KeypointSet(keypoints=keypoints, pixel_spacing_px_per_mm=spacing,
                       view=view)


def random_keypoint_set(rng: np.random.Generator,
                        anterior_sign: Optional[int] = None,
                        spacing: float = SPACING) -> KeypointSet:
    if anterior_sign is None:
        anterior_sign = 1 if rng.random() < 0.5 else -1
    raster, _, _ = anatomy_to_raster(random_anatomy_mm(rng),
                                     anterior_sign=anterior_sign,
                                     spacing=spacing)
    return keypoint_set_from_raster(raster, spacing=spacing)


def _boxes_for(raster: Dict[str, Tuple[float, float]],
               width: int, height: int) -> Dict[str, Box]:
    boxes = {}
    for region, names in (("L1", ("L1_ANT", "L1_POST", "L1_MID")),
                          ("S1", ("S1_ANT", "S1_POST"))):
        xs = [raster[n][0] for n in names if n in raster]
        ys = [raster[n][1] for n in names if n in raster]
        if not xs:
            continue
        x0 = max(0.0, min(xs) - BOX_PAD_PX)
        y0 = max(0.0, min(ys) - BOX_PAD_PX)
        x1 = min(float(width), max(xs) + BOX_PAD_PX)
        y1 = min(float(height), max(ys) + BOX_PAD_PX)
        boxes[region] = Box(x=x0, y=y0, w=x1 - x0, h=y1 - y0)
    return boxes


def random_metadata(rng: np.random.Generator) -> ClinicalMetadata:
    instrumented = bool(rng.random() < 0.5)
    n_tags = int(rng.integers(0, 3))
    tags = tuple(sorted(rng.choice(DIAGNOSES, size=n_tags, replace=False)
                        .tolist())) if n_tags else ()
    return ClinicalMetadata(
        spinal_instrumentation=instrumented,
        brace=bool(rng.random() < 0.1),
        hip_arthroplasty=bool(rng.random() < 0.12),
        levels_instrumented=int(rng.integers(1, 13)) if instrumented else None,
        transitional_anatomy=bool(rng.random() < 0.08),
        diagnoses=tags,
    )


def random_record(rng: np.random.Generator, study_id: str,
                  rater_id: str = "GT", source: Source = Source.HUMAN,
                  spacing: float = SPACING,
                  metadata: Optional[ClinicalMetadata] = None
                  ) -> AnnotationRecord:
    anterior_sign = 1 if rng.random() < 0.5 else -1
    raster, width, height = anatomy_to_raster(
        random_anatomy_mm(rng), anterior_sign=anterior_sign, spacing=spacing)
    return AnnotationRecord(
        study_id=study_id,
        image=ImageInfo(file_path=f"images/{study_id}.png", width_px=width,
                        height_px=height, pixel_spacing_px_per_mm=spacing),
        rater_id=rater_id,
        source=source,
        keypoints=keypoint_set_from_raster(raster, spacing=spacing),
        boxes=_boxes_for(raster, width, height),
        metadata=metadata if metadata is not None else random_metadata(rng),
    )


def detector_outputs_for(ks: KeypointSet, study_id: str,
                         regions: Tuple[Region, ...] = (
                             Region.L1, Region.S1, Region.GLOBAL),
                         score: float = 1.0,
                         box_pad_px: float = BOX_PAD_PX
                         ) -> Dict[Region, DetectorOutput]:
    """Single-candidate detector outputs carrying the set's exact keypoints."""
    outputs: Dict[Region, DetectorOutput] = {}
    for region in regions:
        keypoints = tuple(
            ks.keypoints[name] for name in LandmarkName
            if name in REGION_LANDMARKS[region] and ks.visible(name))
        box = None
        if region in (Region.L1, Region.S1):
            xs = [kp.x_px for kp in keypoints]
            ys = [kp.y_px for kp in keypoints]
            box = Box(x=min(xs) - box_pad_px, y=min(ys) - box_pad_px,
                      w=max(xs) - min(xs) + 2 * box_pad_px,
                      h=max(ys) - min(ys) + 2 * box_pad_px)
        outputs[region] = DetectorOutput(
            study_id=study_id, region=region,
            candidates=(DetectionCandidate(region=region, score=score,
                                           keypoints=keypoints, box=box),))
    return outputs


def noisy_record(record: AnnotationRecord, rng: np.random.Generator,
                 sigma_mm: float, rater_id: str = "model",
                 source: Source = Source.MODEL) -> AnnotationRecord:
    """Copy of ``record`` with isotropic Gaussian keypoint noise.

    Boxes are re-derived around the perturbed keypoints so containment
    invariants keep holding.
    """
    sigma_px = sigma_mm * record.image.pixel_spacing_px_per_mm
    raster: Dict[str, Tuple[float, float]] = {}
    keypoints = {}
    for name, kp in record.keypoints.keypoints.items():
        x = kp.x_px + rng.normal(0.0, sigma_px)
        y = kp.y_px + rng.normal(0.0, sigma_px)
        keypoints[name] = Keypoint(name, x, y, visible=kp.visible)
        if kp.visible:
            raster[name.value] = (x, y)
    return AnnotationRecord(
        study_id=record.study_id,
        image=record.image,
        rater_id=rater_id,
        source=source,
        keypoints=KeypointSet(
            keypoints=keypoints,
            pixel_spacing_px_per_mm=record.keypoints.pixel_spacing_px_per_mm,
            view=record.keypoints.view),
        boxes=_boxes_for(raster, record.image.width_px, record.image.height_px),
        metadata=record.metadata,
    )
