"""HTTP API over the annotation store and the measurement engine.

Serves the annotation/review UI: study listings, windowed images, versioned
annotation reads/writes with optimistic concurrency, live parameter
recomputation, and cohort reports. Report responses reuse the CLI's
serializer byte-for-byte, so HTTP and CLI reports on the same data are
identical in structured form.

Image conversion maps the source file's min..max range linearly onto 8-bit
grayscale; display enhancements beyond that belong to the UI layer.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from fastapi import Body, FastAPI, Query, Response
from fastapi.responses import JSONResponse
from PIL import Image

from .dataset import (
    AnnotationRecord,
    AnnotationStore,
    RevisionConflict,
    record_from_dict,
    record_to_dict,
)
from .errors import EmptyCohort, InvariantViolation, SpinometryError
from .geometry import (
    Keypoint,
    KeypointSet,
    LandmarkName,
    SpinopelvicParameters,
    View,
    compute_parameters,
)
from .report import build_report, report_json

logger = logging.getLogger(__name__)


def _error_body(name: str, detail: object) -> Dict[str, object]:
    return {"error": name, "detail": detail}


def _error_response(status: int, name: str, detail: object) -> JSONResponse:
    return JSONResponse(status_code=status, content=_error_body(name, detail))


def parameters_to_dict(params: SpinopelvicParameters) -> Dict[str, object]:
    return {"view": params.view.value, **params.as_dict()}


def keypoint_set_from_dict(doc: Dict) -> KeypointSet:
    """Parse the wire form of a keypoint set (mirrors the .ann schema)."""
    keypoints: Dict[LandmarkName, Keypoint] = {}
    for kp_doc in doc.get("keypoints") or []:
        name = LandmarkName(kp_doc["name"])
        keypoints[name] = Keypoint(
            name=name,
            x_px=float(kp_doc["x_px"]),
            y_px=float(kp_doc["y_px"]),
            visible=bool(kp_doc.get("visible", True)),
        )
    return KeypointSet(
        keypoints=keypoints,
        pixel_spacing_px_per_mm=float(doc["pixel_spacing_px_per_mm"]),
        view=View(doc.get("view", View.WHOLE_SPINE.value)),
    )


def _study_summary(store: AnnotationStore, study_id: str) -> Dict[str, object]:
    raters = store.rater_ids(study_id)
    summary: Dict[str, object] = {
        "study_id": study_id,
        "rater_ids": raters,
        "image": None,
        "metadata": None,
        "completeness": {},
    }
    completeness: Dict[str, bool] = {}
    for rater in raters:
        try:
            record, _ = store.load(study_id, rater)
        except SpinometryError as exc:
            logger.warning("skipping unreadable annotation %s/%s: %s",
                           study_id, rater, exc)
            completeness[rater] = False
            continue
        completeness[rater] = record.keypoints.is_complete()
        if summary["image"] is None:
            summary["image"] = {
                "file_path": record.image.file_path,
                "width_px": record.image.width_px,
                "height_px": record.image.height_px,
                "pixel_spacing_px_per_mm": record.image.pixel_spacing_px_per_mm,
            }
            summary["metadata"] = {
                "spinal_instrumentation": record.metadata.spinal_instrumentation,
                "brace": record.metadata.brace,
                "hip_arthroplasty": record.metadata.hip_arthroplasty,
                "levels_instrumented": record.metadata.levels_instrumented,
                "transitional_anatomy": record.metadata.transitional_anatomy,
                "diagnoses": list(record.metadata.diagnoses),
            }
    summary["completeness"] = completeness
    return summary


def _window_to_png(path: Path) -> bytes:
    with Image.open(path) as img:
        pixels = np.asarray(img, dtype=np.float64)
    if pixels.ndim == 3:  # collapse any accidental channel dimension
        pixels = pixels.mean(axis=2)
    low, high = float(pixels.min()), float(pixels.max())
    if high > low:
        scaled = (pixels - low) / (high - low) * 255.0
    else:
        scaled = np.zeros_like(pixels)
    out = Image.fromarray(np.round(scaled).astype(np.uint8), mode="L")
    buffer = io.BytesIO()
    out.save(buffer, format="PNG")
    return buffer.getvalue()


def create_app(data_dir: Path, readonly: bool = False,
               cors_origins: Optional[List[str]] = None) -> FastAPI:
    store = AnnotationStore(Path(data_dir))
    app = FastAPI(title="spinometry review service")
    if cors_origins:
        from fastapi.middleware.cors import CORSMiddleware
        app.add_middleware(CORSMiddleware, allow_origins=cors_origins,
                           allow_methods=["*"], allow_headers=["*"])

    @app.get("/studies")
    def list_studies() -> List[Dict[str, object]]:
        return [_study_summary(store, sid) for sid in store.study_ids()]

    @app.get("/studies/{study_id}/image")
    def study_image(study_id: str):
        path = store.image_path(study_id)
        if path is None:
            return _error_response(404, "NotFound",
                                   f"no image for study {study_id}")
        return Response(content=_window_to_png(path), media_type="image/png")

    @app.get("/studies/{study_id}/annotations/{rater_id}")
    def get_annotation(study_id: str, rater_id: str):
        if not store.exists(study_id, rater_id):
            return _error_response(404, "NotFound",
                                   f"no annotation {study_id}/{rater_id}")
        record, revision = store.load(study_id, rater_id)
        return {"revision": revision, "record": record_to_dict(record)}

    @app.put("/studies/{study_id}/annotations/{rater_id}")
    def put_annotation(study_id: str, rater_id: str, body: Dict = Body(...)):
        if readonly:
            return _error_response(403, "ReadOnly", "service is read-only")
        if "record" not in body or "expected_revision" not in body:
            return _error_response(
                422, "InvariantViolation",
                [{"field": f, "message": "required"} for f in
                 ("record", "expected_revision") if f not in body])
        try:
            record = record_from_dict(body["record"], path="<request>")
        except InvariantViolation as exc:
            return _error_response(
                422, exc.name,
                [{"field": f, "message": m} for f, m in exc.failures])
        except (SpinometryError, ValueError, TypeError, KeyError) as exc:
            return _error_response(422, getattr(exc, "name", "ParseError"),
                                   str(exc))
        if record.study_id != study_id or record.rater_id != rater_id:
            return _error_response(
                422, "InvariantViolation",
                [{"field": "study_id/rater_id",
                  "message": "record ids must match the URL"}])
        try:
            revision = store.save(record, int(body["expected_revision"]))
        except RevisionConflict as exc:
            return _error_response(409, "RevisionConflict", str(exc))
        return {"revision": revision}

    @app.post("/compute")
    def compute(body: Dict = Body(...)):
        try:
            ks = keypoint_set_from_dict(body)
            params = compute_parameters(ks)
        except SpinometryError as exc:
            return _error_response(422, exc.name, str(exc))
        except (ValueError, TypeError, KeyError) as exc:
            return _error_response(422, "ParseError", str(exc))
        return parameters_to_dict(params)

    @app.get("/cohort/report")
    def cohort_report(pred: str = Query(...), gt: str = Query(...)):
        preds: List[AnnotationRecord] = []
        gts: List[AnnotationRecord] = []
        for study_id in store.study_ids():
            raters = store.rater_ids(study_id)
            if pred in raters and gt in raters:
                preds.append(store.load(study_id, pred)[0])
                gts.append(store.load(study_id, gt)[0])
        try:
            report = build_report(
                preds, gts, cohort_id=str(store.root.name or "cohort"),
                pred_source=pred, gt_source=gt, strict_alignment=False)
        except EmptyCohort as exc:
            return _error_response(422, exc.name, str(exc))
        except SpinometryError as exc:
            return _error_response(422, exc.name, str(exc))
        return Response(content=report_json(report),
                        media_type="application/json")

    @app.get("/health")
    def health():
        return {"status": "ok", "studies": len(store.study_ids()),
                "readonly": readonly}

    return app
