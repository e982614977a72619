"""Annotation records, the file-backed cohort store, and dataset experiments.

On-disk layout (no database; the cohorts are small):

    <root>/studies/<study_id>/<rater_id>.ann   one record per study per rater
    <root>/studies/<study_id>/<rater_id>.rev   revision sidecar (integer)
    <root>/images/<study_id>.(tiff|png)        8/16-bit grayscale source image

An ``.ann`` file is a structured-text (JSON) document with schema_version
"1", a fixed key order, and the landmark array sorted canonically, so
save -> load -> save is byte-identical and coordinates round-trip exactly.

Raster origin is the top-left corner with y downward, matching image-file
convention; anatomic-frame logic lives entirely in the geometry module.
"""

from __future__ import annotations

import csv
import json
import math
import os
import random
import tempfile
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import (
    DuplicateIds,
    EmptyWindow,
    InvariantViolation,
    MissingColumn,
    MissingLandmark,
    ParseError,
    SchemaVersionError,
    SpinometryError,
    UnknownLandmark,
)
from .geometry import Keypoint, KeypointSet, LandmarkName, View

SCHEMA_VERSION = "1"
ANNOTATION_SUFFIX = ".ann"
DEFAULT_CROP_MARGIN = 0.10

#: Landmarks that define the lumbosacral crop window.
CROP_KEEP = (
    LandmarkName.L1_ANT, LandmarkName.L1_POST, LandmarkName.L1_MID,
    LandmarkName.S1_ANT, LandmarkName.S1_POST,
    LandmarkName.FEM_L, LandmarkName.FEM_R,
)
_CROP_DROP = (LandmarkName.C7, LandmarkName.T1)


class Source(str, Enum):
    HUMAN = "HUMAN"
    MODEL = "MODEL"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ImageInfo:
    file_path: str
    width_px: int
    height_px: int
    pixel_spacing_px_per_mm: float


@dataclass(frozen=True)
class Box:
    """Raster-pixel rectangle, top-left anchored."""

    x: float
    y: float
    w: float
    h: float

    def contains(self, x: float, y: float) -> bool:
        return self.x <= x <= self.x + self.w and self.y <= y <= self.y + self.h


@dataclass(frozen=True)
class ClinicalMetadata:
    spinal_instrumentation: bool = False
    brace: bool = False
    hip_arthroplasty: bool = False
    levels_instrumented: Optional[int] = None
    transitional_anatomy: bool = False
    diagnoses: Tuple[str, ...] = ()


@dataclass(frozen=True)
class AnnotationRecord:
    """One persisted study annotation (image reference, rater, landmarks)."""

    study_id: str
    image: ImageInfo
    rater_id: str
    source: Source
    keypoints: KeypointSet
    boxes: Mapping[str, Box] = field(default_factory=dict)
    metadata: ClinicalMetadata = field(default_factory=ClinicalMetadata)
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self) -> None:
        failures = self.check_invariants()
        if failures:
            raise InvariantViolation(failures)

    def check_invariants(self) -> List[Tuple[str, str]]:
        """All failed invariant checks as (field, message) pairs."""
        failures: List[Tuple[str, str]] = []
        if self.schema_version != SCHEMA_VERSION:
            failures.append(("schema_version",
                             f"unsupported version {self.schema_version!r}"))
        if self.image.width_px <= 0 or self.image.height_px <= 0:
            failures.append(("image", "image dimensions must be positive"))
        spacing = self.image.pixel_spacing_px_per_mm
        if not (math.isfinite(spacing) and spacing > 0):
            failures.append(("image.pixel_spacing_px_per_mm",
                             "pixel spacing must be positive and finite"))
        elif self.keypoints.pixel_spacing_px_per_mm != spacing:
            failures.append(("keypoints.pixel_spacing_px_per_mm",
                             "keypoint spacing must match the image spacing"))
        for name, kp in self.keypoints.keypoints.items():
            if not kp.visible:
                continue  # invisible coordinates are ignored by computations
            if not (0 <= kp.x_px <= self.image.width_px
                    and 0 <= kp.y_px <= self.image.height_px):
                failures.append((f"keypoints.{name.value}",
                                 f"({kp.x_px}, {kp.y_px}) outside image bounds"))
        for region, box in self.boxes.items():
            if region not in ("L1", "S1"):
                failures.append((f"boxes.{region}", "box regions are L1 and S1"))
                continue
            if box.w <= 0 or box.h <= 0:
                failures.append((f"boxes.{region}", "box must have positive size"))
                continue
            prefix = region + "_"
            for name, kp in self.keypoints.keypoints.items():
                if kp.visible and name.value.startswith(prefix) \
                        and not box.contains(kp.x_px, kp.y_px):
                    failures.append((f"boxes.{region}",
                                     f"does not contain {name.value}"))
        meta = self.metadata
        if meta.levels_instrumented is not None:
            if not meta.spinal_instrumentation:
                failures.append(("metadata.levels_instrumented",
                                 "present without spinal_instrumentation"))
            elif meta.levels_instrumented < 0:
                failures.append(("metadata.levels_instrumented",
                                 "must be non-negative"))
        return failures


# serialization

def record_to_dict(rec: AnnotationRecord) -> Dict[str, object]:
    """Canonical JSON-ready form with a fixed key and landmark order."""
    keypoints = [
        {"name": name.value, "x_px": kp.x_px, "y_px": kp.y_px,
         "visible": kp.visible}
        for name in LandmarkName
        if (kp := rec.keypoints.keypoints.get(name)) is not None
    ]
    doc: Dict[str, object] = {
        "schema_version": rec.schema_version,
        "study_id": rec.study_id,
        "rater_id": rec.rater_id,
        "source": rec.source.value,
        "image": {
            "file_path": rec.image.file_path,
            "width_px": rec.image.width_px,
            "height_px": rec.image.height_px,
            "pixel_spacing_px_per_mm": rec.image.pixel_spacing_px_per_mm,
        },
        "view": rec.keypoints.view.value,
        "keypoints": keypoints,
        "boxes": {
            region: {"x": b.x, "y": b.y, "w": b.w, "h": b.h}
            for region, b in sorted(rec.boxes.items())
        },
        "metadata": {
            "spinal_instrumentation": rec.metadata.spinal_instrumentation,
            "brace": rec.metadata.brace,
            "hip_arthroplasty": rec.metadata.hip_arthroplasty,
            "levels_instrumented": rec.metadata.levels_instrumented,
            "transitional_anatomy": rec.metadata.transitional_anatomy,
            "diagnoses": list(rec.metadata.diagnoses),
        },
    }
    return doc


def _field(doc: Mapping, name: str, path: str):
    if name not in doc:
        raise ParseError("missing field", path=path, field=name)
    return doc[name]


def record_from_dict(doc: Mapping, path: str = "<memory>") -> AnnotationRecord:
    version = _field(doc, "schema_version", path)
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"{path}: schema_version {version!r} unsupported")
    try:
        view = View(_field(doc, "view", path))
    except ValueError as exc:
        raise ParseError(str(exc), path=path, field="view") from None
    try:
        source = Source(_field(doc, "source", path))
    except ValueError as exc:
        raise ParseError(str(exc), path=path, field="source") from None
    image_doc = _field(doc, "image", path)
    image = ImageInfo(
        file_path=str(_field(image_doc, "file_path", path)),
        width_px=int(_field(image_doc, "width_px", path)),
        height_px=int(_field(image_doc, "height_px", path)),
        pixel_spacing_px_per_mm=float(
            _field(image_doc, "pixel_spacing_px_per_mm", path)),
    )
    keypoints: Dict[LandmarkName, Keypoint] = {}
    for i, kp_doc in enumerate(_field(doc, "keypoints", path)):
        raw = _field(kp_doc, "name", path)
        try:
            name = LandmarkName(raw)
        except ValueError:
            raise UnknownLandmark(f"{path}: unknown landmark {raw!r}") from None
        if name in keypoints:
            raise ParseError(f"duplicate landmark {raw}", path=path,
                             field=f"keypoints[{i}]")
        keypoints[name] = Keypoint(
            name=name,
            x_px=float(_field(kp_doc, "x_px", path)),
            y_px=float(_field(kp_doc, "y_px", path)),
            visible=bool(kp_doc.get("visible", True)),
        )
    boxes = {
        region: Box(x=float(_field(b, "x", path)), y=float(_field(b, "y", path)),
                    w=float(_field(b, "w", path)), h=float(_field(b, "h", path)))
        for region, b in dict(doc.get("boxes") or {}).items()
    }
    meta_doc = dict(doc.get("metadata") or {})
    levels = meta_doc.get("levels_instrumented")
    metadata = ClinicalMetadata(
        spinal_instrumentation=bool(meta_doc.get("spinal_instrumentation", False)),
        brace=bool(meta_doc.get("brace", False)),
        hip_arthroplasty=bool(meta_doc.get("hip_arthroplasty", False)),
        levels_instrumented=None if levels is None else int(levels),
        transitional_anatomy=bool(meta_doc.get("transitional_anatomy", False)),
        diagnoses=tuple(str(d) for d in meta_doc.get("diagnoses") or ()),
    )
    return AnnotationRecord(
        study_id=str(_field(doc, "study_id", path)),
        image=image,
        rater_id=str(_field(doc, "rater_id", path)),
        source=source,
        keypoints=KeypointSet(
            keypoints=keypoints,
            pixel_spacing_px_per_mm=image.pixel_spacing_px_per_mm,
            view=view,
        ),
        boxes=boxes,
        metadata=metadata,
    )


def dumps_record(rec: AnnotationRecord) -> str:
    return json.dumps(record_to_dict(rec), indent=2, ensure_ascii=False) + "\n"


def save_record(rec: AnnotationRecord, path: os.PathLike) -> None:
    _atomic_write(Path(path), dumps_record(rec).encode("utf-8"))


def load_record(path: os.PathLike) -> AnnotationRecord:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc}", path=str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path=str(path), line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("top-level document must be an object", path=str(path))
    return record_from_dict(doc, path=str(path))


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# train/validation split bookkeeping

@dataclass(frozen=True)
class SplitManifest:
    train_ids: Tuple[str, ...]
    val_ids: Tuple[str, ...]
    test_ids: Tuple[str, ...]
    seed: int
    fractions: Mapping[str, float]

    def __post_init__(self) -> None:
        pools = (set(self.train_ids), set(self.val_ids), set(self.test_ids))
        if pools[0] & pools[1] or pools[0] & pools[2] or pools[1] & pools[2]:
            raise ValueError("split pools must be pairwise disjoint")
        if abs(self.fractions["train"] + self.fractions["val"] - 1.0) > 1e-12:
            raise ValueError("train/val fractions must sum to 1")


def make_split(ids: Sequence[str], train_fraction: float, seed: int,
               test_ids: Sequence[str] = ()) -> SplitManifest:
    """Deterministic train/validation split of the non-test id pool.

    |train| = round(train_fraction * n); the remainder is validation.
    """
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must be in (0, 1)")
    ids = [str(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise DuplicateIds("split ids must be unique")
    shuffled = list(ids)
    random.Random(seed).shuffle(shuffled)
    n_train = int(round(train_fraction * len(ids)))
    return SplitManifest(
        train_ids=tuple(shuffled[:n_train]),
        val_ids=tuple(shuffled[n_train:]),
        test_ids=tuple(str(i) for i in test_ids),
        seed=seed,
        fractions={"train": train_fraction, "val": 1.0 - train_fraction},
    )


def save_split(manifest: SplitManifest, path: os.PathLike) -> None:
    doc = {
        "seed": manifest.seed,
        "fractions": dict(manifest.fractions),
        "train_ids": list(manifest.train_ids),
        "val_ids": list(manifest.val_ids),
        "test_ids": list(manifest.test_ids),
    }
    _atomic_write(Path(path), (json.dumps(doc, indent=2) + "\n").encode("utf-8"))


# lumbosacral crop simulation

def crop_lumbosacral(rec: AnnotationRecord,
                     margin_fraction: float = DEFAULT_CROP_MARGIN) -> AnnotationRecord:
    """Simulate a lumbosacral film by cropping a record around L1..femur.

    The crop window is the bounding box of the visible L1/S1/femoral
    landmarks, expanded by ``margin_fraction`` of its size per side and
    clamped to the image. C7 and T1 are marked not-visible, coordinates are
    re-expressed relative to the window origin, and the view flips to
    LUMBOSACRAL; pixel spacing is unchanged. Cropping an already-cropped
    record with margin 0 is a pure translation.
    """
    if margin_fraction < 0:
        raise ValueError("margin_fraction must be >= 0")
    ks = rec.keypoints
    if ks.view is View.LUMBOSACRAL:
        required: Tuple[LandmarkName, ...] = (
            LandmarkName.L1_ANT, LandmarkName.L1_POST,
            LandmarkName.S1_ANT, LandmarkName.S1_POST)
    else:
        required = CROP_KEEP
    missing = [n.value for n in required if not ks.visible(n)]
    if missing:
        raise MissingLandmark(missing)

    kept = [ks.keypoints[n] for n in CROP_KEEP if ks.visible(n)]
    min_x = min(kp.x_px for kp in kept)
    max_x = max(kp.x_px for kp in kept)
    min_y = min(kp.y_px for kp in kept)
    max_y = max(kp.y_px for kp in kept)
    margin_x = margin_fraction * (max_x - min_x)
    margin_y = margin_fraction * (max_y - min_y)
    x0 = max(0.0, min_x - margin_x)
    y0 = max(0.0, min_y - margin_y)
    x1 = min(float(rec.image.width_px), max_x + margin_x)
    y1 = min(float(rec.image.height_px), max_y + margin_y)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise EmptyWindow(f"crop window collapsed to {x1 - x0} x {y1 - y0}")

    keypoints: Dict[LandmarkName, Keypoint] = {}
    for name, kp in ks.keypoints.items():
        keypoints[name] = Keypoint(
            name=name,
            x_px=kp.x_px - x0,
            y_px=kp.y_px - y0,
            visible=kp.visible and name not in _CROP_DROP,
        )
    boxes: Dict[str, Box] = {}
    for region, box in rec.boxes.items():
        bx0 = max(box.x - x0, 0.0)
        by0 = max(box.y - y0, 0.0)
        bx1 = min(box.x + box.w - x0, x1 - x0)
        by1 = min(box.y + box.h - y0, y1 - y0)
        if bx1 - bx0 > 0 and by1 - by0 > 0:
            boxes[region] = Box(x=bx0, y=by0, w=bx1 - bx0, h=by1 - by0)

    width = int(math.ceil(x1 - x0))
    height = int(math.ceil(y1 - y0))
    return AnnotationRecord(
        study_id=rec.study_id,
        image=ImageInfo(
            file_path=rec.image.file_path,
            width_px=width,
            height_px=height,
            pixel_spacing_px_per_mm=rec.image.pixel_spacing_px_per_mm,
        ),
        rater_id=rec.rater_id,
        source=rec.source,
        keypoints=KeypointSet(
            keypoints=keypoints,
            pixel_spacing_px_per_mm=ks.pixel_spacing_px_per_mm,
            view=View.LUMBOSACRAL,
        ),
        boxes=boxes,
        metadata=rec.metadata,
    )


# third-party table import

REQUIRED_TABLE_FIELDS = ("study_id", "landmark", "x_px", "y_px",
                         "width_px", "height_px", "pixel_spacing_px_per_mm")
OPTIONAL_TABLE_FIELDS = ("rater_id", "source", "visible", "view", "file_path")


def import_keypoint_table(path: os.PathLike,
                          column_map: Mapping[str, str]) -> List[AnnotationRecord]:
    """Assemble records from a delimited landmark table.

    The table holds one landmark per row; ``column_map`` maps the logical
    field names (study_id, landmark, x_px, y_px, width_px, height_px,
    pixel_spacing_px_per_mm, and optionally rater_id, source, visible,
    view, file_path) to the file's header names. Rows are grouped by
    (study_id, rater_id) and validated as whole records.
    """
    path = Path(path)
    for logical in REQUIRED_TABLE_FIELDS:
        if logical not in column_map:
            raise MissingColumn(f"column_map lacks required field {logical!r}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for logical, column in column_map.items():
            if column not in header:
                raise MissingColumn(f"{path}: column {column!r} "
                                    f"(mapped from {logical!r}) not in header")
        groups: Dict[Tuple[str, str], Dict[str, object]] = {}
        order: List[Tuple[str, str]] = []
        for line_no, row in enumerate(reader, start=2):
            def cell(logical: str, default=None):
                column = column_map.get(logical)
                if column is None:
                    return default
                value = row.get(column)
                return default if value in (None, "") else value

            study_id = str(cell("study_id"))
            rater_id = str(cell("rater_id", "table"))
            raw_name = str(cell("landmark"))
            try:
                name = LandmarkName(raw_name)
            except ValueError:
                raise UnknownLandmark(
                    f"{path}:{line_no}: unknown landmark {raw_name!r}") from None
            try:
                kp = Keypoint(name=name, x_px=float(cell("x_px")),
                              y_px=float(cell("y_px")),
                              visible=str(cell("visible", "true")).lower()
                              in ("1", "true", "yes"))
                image = ImageInfo(
                    file_path=str(cell("file_path", f"images/{study_id}.png")),
                    width_px=int(float(cell("width_px"))),
                    height_px=int(float(cell("height_px"))),
                    pixel_spacing_px_per_mm=float(cell("pixel_spacing_px_per_mm")),
                )
                view = View(str(cell("view", View.WHOLE_SPINE.value)))
                source = Source(str(cell("source", Source.HUMAN.value)))
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), path=str(path), line=line_no) from None
            key = (study_id, rater_id)
            if key not in groups:
                groups[key] = {"image": image, "view": view, "source": source,
                               "keypoints": {}}
                order.append(key)
            if name in groups[key]["keypoints"]:
                raise ParseError(f"duplicate landmark {name.value} for {key}",
                                 path=str(path), line=line_no)
            groups[key]["keypoints"][name] = kp

    records: List[AnnotationRecord] = []
    for study_id, rater_id in order:
        group = groups[(study_id, rater_id)]
        image: ImageInfo = group["image"]  # type: ignore[assignment]
        records.append(AnnotationRecord(
            study_id=study_id,
            image=image,
            rater_id=rater_id,
            source=group["source"],  # type: ignore[arg-type]
            keypoints=KeypointSet(
                keypoints=group["keypoints"],  # type: ignore[arg-type]
                pixel_spacing_px_per_mm=image.pixel_spacing_px_per_mm,
                view=group["view"],  # type: ignore[arg-type]
            ),
        ))
    return records


# file-backed store with optimistic revisions

class AnnotationStore:
    """Annotation files under one data root, with per-(study, rater) revisions.

    Reads are freely concurrent. Writes to one (study, rater) pair are
    serialized by a per-key lock and guarded by an optimistic revision
    check; files are written atomically (temp file + rename + fsync), so a
    successful save is durable across restarts.
    """

    def __init__(self, root: os.PathLike):
        self.root = Path(root)
        self.studies_dir = self.root / "studies"
        self.images_dir = self.root / "images"
        self._locks: Dict[Tuple[str, str], threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, study_id: str, rater_id: str) -> threading.Lock:
        key = (study_id, rater_id)
        with self._locks_guard:
            if key not in self._locks:
                self._locks[key] = threading.Lock()
            return self._locks[key]

    def record_path(self, study_id: str, rater_id: str) -> Path:
        return self.studies_dir / study_id / f"{rater_id}{ANNOTATION_SUFFIX}"

    def _revision_path(self, study_id: str, rater_id: str) -> Path:
        return self.studies_dir / study_id / f"{rater_id}.rev"

    def study_ids(self) -> List[str]:
        if not self.studies_dir.is_dir():
            return []
        return sorted(p.name for p in self.studies_dir.iterdir() if p.is_dir())

    def rater_ids(self, study_id: str) -> List[str]:
        study = self.studies_dir / study_id
        if not study.is_dir():
            return []
        return sorted(p.stem for p in study.glob(f"*{ANNOTATION_SUFFIX}"))

    def exists(self, study_id: str, rater_id: str) -> bool:
        return self.record_path(study_id, rater_id).is_file()

    def revision(self, study_id: str, rater_id: str) -> int:
        rev_path = self._revision_path(study_id, rater_id)
        if rev_path.is_file():
            return int(rev_path.read_text().strip())
        # imported datasets may lack sidecars; any existing record is rev 1
        return 1 if self.exists(study_id, rater_id) else 0

    def load(self, study_id: str, rater_id: str) -> Tuple[AnnotationRecord, int]:
        record = load_record(self.record_path(study_id, rater_id))
        return record, self.revision(study_id, rater_id)

    def save(self, record: AnnotationRecord, expected_revision: int) -> int:
        """Durably store ``record`` if ``expected_revision`` is current.

        Returns the new revision. Raises RevisionConflict on a stale write.
        """
        key = (record.study_id, record.rater_id)
        with self._lock(*key):
            current = self.revision(*key)
            if expected_revision != current:
                raise RevisionConflict(
                    f"expected revision {expected_revision}, store has {current}")
            save_record(record, self.record_path(*key))
            new_revision = current + 1
            _atomic_write(self._revision_path(*key),
                          f"{new_revision}\n".encode("ascii"))
            return new_revision

    def image_path(self, study_id: str) -> Optional[Path]:
        for ext in (".png", ".tiff", ".tif"):
            candidate = self.images_dir / f"{study_id}{ext}"
            if candidate.is_file():
                return candidate
        return None


class RevisionConflict(SpinometryError):
    """A write cited a revision that is no longer current."""
