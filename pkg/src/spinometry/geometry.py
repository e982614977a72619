"""Sagittal spinopelvic parameters from 2-D radiograph landmarks.

Raster inputs follow image convention: x rightward, y downward, both in
pixels. All geometry is evaluated in an anatomic frame (X anterior-positive,
Y superior-positive) inferred per image from the S1 endplate orientation, so
mirrored films need no orientation flags.

Sign conventions fixed by this module:

* SS positive when the anterior endplate edge sits inferior to the
  posterior edge (normal sacral anatomy).
* PT positive when the S1 endplate midpoint lies posterior to the hip axis.
* SVA positive when the C7 plumb line falls anterior to the posterosuperior
  corner of S1.
* LL positive for lordosis.
* T1PA / L1PA positive when the vertebral centroid lies anterior to the ray
  from the hip axis to the S1 endplate midpoint.

These reproduce the usual clinical normals (SS ~ 35 deg, PT ~ 15 deg,
PI ~ 50 deg, positive LL). Angles are degrees in (-180, 180]; distances are
millimeters via the per-image pixel spacing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Tuple

from .errors import (
    CoincidentPoints,
    DegenerateEndplate,
    DegenerateFrame,
    MissingLandmark,
    ViewMismatch,
)

Point = Tuple[float, float]


class LandmarkName(str, Enum):
    """The nine annotated landmarks."""

    C7 = "C7"
    T1 = "T1"
    L1_ANT = "L1_ANT"
    L1_POST = "L1_POST"
    L1_MID = "L1_MID"
    S1_ANT = "S1_ANT"
    S1_POST = "S1_POST"
    FEM_L = "FEM_L"
    FEM_R = "FEM_R"

    def __str__(self) -> str:  # serialization is the bare member name
        return self.value


class View(str, Enum):
    WHOLE_SPINE = "WHOLE_SPINE"
    LUMBOSACRAL = "LUMBOSACRAL"

    def __str__(self) -> str:
        return self.value


#: Landmarks that must be visible for each view to be complete.
WHOLE_SPINE_LANDMARKS = frozenset(LandmarkName)
LUMBOSACRAL_LANDMARKS = frozenset({
    LandmarkName.L1_ANT,
    LandmarkName.L1_POST,
    LandmarkName.S1_ANT,
    LandmarkName.S1_POST,
})

#: Canonical parameter labels, report order, and units.
PARAMETER_ORDER = ("SVA", "PT", "SS", "PI", "LL", "T1PA", "L1PA")
PARAMETER_UNITS = {
    "SVA": "mm",
    "PT": "deg",
    "SS": "deg",
    "PI": "deg",
    "LL": "deg",
    "T1PA": "deg",
    "L1PA": "deg",
}
LUMBOSACRAL_PARAMETERS = ("SS", "LL")


@dataclass(frozen=True)
class Keypoint:
    """One named landmark position in raster pixels."""

    name: LandmarkName
    x_px: float
    y_px: float
    visible: bool = True

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_px) and math.isfinite(self.y_px)):
            raise ValueError(f"{self.name}: coordinates must be finite")


@dataclass(frozen=True)
class KeypointSet:
    """Landmarks of one image/rater/source plus the image pixel spacing."""

    keypoints: Mapping[LandmarkName, Keypoint]
    pixel_spacing_px_per_mm: float
    view: View = View.WHOLE_SPINE

    def __post_init__(self) -> None:
        spacing = self.pixel_spacing_px_per_mm
        if not (math.isfinite(spacing) and spacing > 0):
            raise ValueError("pixel spacing must be positive and finite")
        for name, kp in self.keypoints.items():
            if kp.name is not name:
                raise ValueError(f"keypoint stored under {name} is named {kp.name}")
        object.__setattr__(self, "keypoints", dict(self.keypoints))

    def visible(self, name: LandmarkName) -> bool:
        kp = self.keypoints.get(name)
        return kp is not None and kp.visible

    def required_landmarks(self) -> frozenset:
        if self.view is View.LUMBOSACRAL:
            return LUMBOSACRAL_LANDMARKS
        return WHOLE_SPINE_LANDMARKS

    def missing_landmarks(self) -> Tuple[LandmarkName, ...]:
        """Required-but-invisible landmarks, in enum declaration order."""
        return tuple(n for n in LandmarkName
                     if n in self.required_landmarks() and not self.visible(n))

    def is_complete(self) -> bool:
        return not self.missing_landmarks()


@dataclass(frozen=True)
class AnatomicFrame:
    """Per-image anatomic frame: +X anterior iff anterior_sign = +1."""

    anterior_sign: int
    origin: Point

    def __post_init__(self) -> None:
        if self.anterior_sign not in (1, -1):
            raise ValueError("anterior_sign must be +1 or -1")


@dataclass(frozen=True)
class SpinopelvicParameters:
    """The seven computed values; lumbosacral views carry SS and LL only.

    Absent parameters are None, never zero. Whenever PT, SS and PI are all
    present they satisfy PI = PT + SS to within 1e-9 degrees.
    """

    view: View
    sva_mm: Optional[float] = None
    pt_deg: Optional[float] = None
    ss_deg: Optional[float] = None
    pi_deg: Optional[float] = None
    ll_deg: Optional[float] = None
    t1pa_deg: Optional[float] = None
    l1pa_deg: Optional[float] = None

    def __post_init__(self) -> None:
        if self.view is View.WHOLE_SPINE:
            absent = [k for k, v in self.as_dict().items() if v is None]
            if absent:
                raise ValueError(f"whole-spine parameters missing: {absent}")
        else:
            extra = [k for k, v in self.as_dict().items()
                     if v is not None and k not in LUMBOSACRAL_PARAMETERS]
            if extra:
                raise ValueError(f"lumbosacral view must not carry: {extra}")
            if self.ss_deg is None or self.ll_deg is None:
                raise ValueError("lumbosacral view requires SS and LL")
        if None not in (self.pt_deg, self.ss_deg, self.pi_deg):
            residual = wrap_degrees(self.pt_deg + self.ss_deg - self.pi_deg)
            if abs(residual) >= 1e-9:
                raise ValueError(f"PI != PT + SS (residual {residual:g} deg)")

    def as_dict(self) -> Dict[str, Optional[float]]:
        """Values keyed by canonical label, in report order."""
        return {
            "SVA": self.sva_mm,
            "PT": self.pt_deg,
            "SS": self.ss_deg,
            "PI": self.pi_deg,
            "LL": self.ll_deg,
            "T1PA": self.t1pa_deg,
            "L1PA": self.l1pa_deg,
        }


def wrap_degrees(angle: float) -> float:
    """Normalize an angle in degrees to (-180, 180]."""
    wrapped = (angle + 180.0) % 360.0 - 180.0
    return 180.0 if wrapped == -180.0 else wrapped


def _require(ks: KeypointSet, *names: LandmarkName) -> None:
    missing = [n for n in names if not ks.visible(n)]
    if missing:
        raise MissingLandmark([n.value for n in missing])


def infer_anatomic_frame(ks: KeypointSet) -> AnatomicFrame:
    """Infer anterior direction and origin from the S1 endplate.

    The anterior corner of S1 sits on the patient's front, so the raster
    x-ordering of S1_ANT vs S1_POST decides which way the patient faces.
    The origin is the S1 endplate midpoint.
    """
    _require(ks, LandmarkName.S1_ANT, LandmarkName.S1_POST)
    ant = ks.keypoints[LandmarkName.S1_ANT]
    post = ks.keypoints[LandmarkName.S1_POST]
    dx = ant.x_px - post.x_px
    if dx == 0.0:
        raise DegenerateFrame(
            "S1 endplate is vertical in the raster; anterior direction undecidable")
    origin = ((ant.x_px + post.x_px) / 2.0, (ant.y_px + post.y_px) / 2.0)
    return AnatomicFrame(anterior_sign=1 if dx > 0 else -1, origin=origin)


def to_anatomic(ks: KeypointSet, frame: AnatomicFrame, name: LandmarkName) -> Point:
    """Raster landmark -> anatomic point (X anterior+, Y superior+), pixels."""
    _require(ks, name)
    kp = ks.keypoints[name]
    return (frame.anterior_sign * (kp.x_px - frame.origin[0]),
            -(kp.y_px - frame.origin[1]))


def endplate_angle(ant: Point, post: Point) -> float:
    """Tilt of an endplate given its anatomic-frame corner points.

    Positive when the anterior edge is inferior to the posterior edge.
    """
    ex = ant[0] - post[0]
    ey = ant[1] - post[1]
    if ex == 0.0 and ey == 0.0:
        raise DegenerateEndplate("endplate corners coincide")
    return wrap_degrees(math.degrees(math.atan2(-ey, ex)))


def _midpoint(a: Point, b: Point) -> Point:
    return ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)


def _tilt_from_vertical(w: Point) -> float:
    # angle of w against the superior axis, positive toward posterior
    return wrap_degrees(math.degrees(math.atan2(-w[0], w[1])))


def compute_parameters(ks: KeypointSet) -> SpinopelvicParameters:
    """Compute the spinopelvic parameters for one keypoint set.

    Whole-spine sets yield all seven parameters; lumbosacral sets yield SS
    and LL only. Pure function: identical input gives bit-identical output.
    """
    missing = ks.missing_landmarks()
    if missing:
        raise MissingLandmark([n.value for n in missing])
    frame = infer_anatomic_frame(ks)

    def pt_at(name: LandmarkName) -> Point:
        return to_anatomic(ks, frame, name)

    s1_ant = pt_at(LandmarkName.S1_ANT)
    s1_post = pt_at(LandmarkName.S1_POST)
    ss = endplate_angle(s1_ant, s1_post)
    ll = wrap_degrees(
        ss - endplate_angle(pt_at(LandmarkName.L1_ANT), pt_at(LandmarkName.L1_POST)))

    if ks.view is View.LUMBOSACRAL:
        return SpinopelvicParameters(view=View.LUMBOSACRAL, ss_deg=ss, ll_deg=ll)

    hip_axis = _midpoint(pt_at(LandmarkName.FEM_L), pt_at(LandmarkName.FEM_R))
    s1_mid = _midpoint(s1_ant, s1_post)
    v = (s1_mid[0] - hip_axis[0], s1_mid[1] - hip_axis[1])
    if v == (0.0, 0.0):
        raise CoincidentPoints("hip axis coincides with the S1 endplate midpoint")
    pt = _tilt_from_vertical(v)

    # superiorly directed endplate normal: endplate direction rotated +90deg
    e = (s1_ant[0] - s1_post[0], s1_ant[1] - s1_post[1])
    n = (-e[1], e[0])
    pi = wrap_degrees(math.degrees(
        math.atan2(n[0] * v[1] - n[1] * v[0], n[0] * v[0] + n[1] * v[1])))

    def pelvic_angle(name: LandmarkName) -> float:
        centroid = pt_at(name)
        u = (centroid[0] - hip_axis[0], centroid[1] - hip_axis[1])
        if u == (0.0, 0.0):
            raise CoincidentPoints(f"{name.value} coincides with the hip axis")
        return wrap_degrees(pt - _tilt_from_vertical(u))

    t1pa = pelvic_angle(LandmarkName.T1)
    l1pa = pelvic_angle(LandmarkName.L1_MID)

    c7 = ks.keypoints[LandmarkName.C7]
    sva = (frame.anterior_sign * (c7.x_px - ks.keypoints[LandmarkName.S1_POST].x_px)
           / ks.pixel_spacing_px_per_mm)

    return SpinopelvicParameters(
        view=View.WHOLE_SPINE,
        sva_mm=sva,
        pt_deg=pt,
        ss_deg=ss,
        pi_deg=pi,
        ll_deg=ll,
        t1pa_deg=t1pa,
        l1pa_deg=l1pa,
    )


def parameter_difference(a: SpinopelvicParameters,
                         b: SpinopelvicParameters) -> Dict[str, Optional[float]]:
    """Signed per-parameter differences a - b, keyed by canonical label.

    Parameters absent on either side yield None.
    """
    if a.view is not b.view:
        raise ViewMismatch(f"cannot subtract {b.view} from {a.view}")
    da, db = a.as_dict(), b.as_dict()
    return {
        label: (da[label] - db[label]
                if da[label] is not None and db[label] is not None else None)
        for label in PARAMETER_ORDER
    }
