import io

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from spinometry.dataset import AnnotationStore
from spinometry.service import create_app

from conftest import FIXTURE_EXPECTED, FIXTURE_RASTER, FIXTURE_SPACING
from synth import noisy_record, random_record


def _compute_body(raster=FIXTURE_RASTER, spacing=FIXTURE_SPACING,
                  view="WHOLE_SPINE", only=None):
    names = only if only is not None else list(raster)
    return {
        "pixel_spacing_px_per_mm": spacing,
        "view": view,
        "keypoints": [
            {"name": name, "x_px": raster[name][0], "y_px": raster[name][1],
             "visible": True}
            for name in names
        ],
    }


@pytest.fixture
def store(tmp_path, rng):
    store = AnnotationStore(tmp_path)
    for i in range(5):
        gt = random_record(rng, f"S{i:04d}", rater_id="R1")
        store.save(gt, expected_revision=0)
        store.save(noisy_record(gt, rng, 0.8, rater_id="model"),
                   expected_revision=0)
    return store


@pytest.fixture
def client(store):
    return TestClient(create_app(store.root))


class TestStudies:
    def test_empty_dir(self, tmp_path):
        client = TestClient(create_app(tmp_path))
        response = client.get("/studies")
        assert response.status_code == 200
        assert response.json() == []

    def test_listing_sorted_with_completeness(self, client):
        listing = client.get("/studies").json()
        assert [s["study_id"] for s in listing] == sorted(
            s["study_id"] for s in listing)
        assert len(listing) == 5
        for summary in listing:
            assert set(summary["rater_ids"]) == {"R1", "model"}
            assert summary["completeness"] == {"R1": True, "model": True}
            assert summary["image"]["pixel_spacing_px_per_mm"] == 3.730

    def test_forty_study_dir(self, tmp_path, rng):
        store = AnnotationStore(tmp_path / "big")
        for i in range(40):
            store.save(random_record(rng, f"T{i:04d}", rater_id="R1"),
                       expected_revision=0)
        client = TestClient(create_app(store.root))
        assert len(client.get("/studies").json()) == 40


class TestImageEndpoint:
    def _write_tiff(self, store, study_id, pixels):
        store.images_dir.mkdir(parents=True, exist_ok=True)
        Image.fromarray(pixels).save(store.images_dir / f"{study_id}.tiff")

    def test_16bit_tiff_full_range(self, store, client):
        pixels = np.linspace(1000, 30000, 64 * 64,
                             dtype=np.uint16).reshape(64, 64)
        self._write_tiff(store, "S0000", pixels)
        response = client.get("/studies/S0000/image")
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        out = np.asarray(Image.open(io.BytesIO(response.content)))
        assert out.dtype == np.uint8
        assert out.min() == 0 and out.max() == 255

    def test_byte_stable_conversion(self, store, client):
        pixels = (np.arange(32 * 32, dtype=np.uint16) * 7 % 4096).reshape(32, 32)
        self._write_tiff(store, "S0001", pixels)
        first = client.get("/studies/S0001/image").content
        second = client.get("/studies/S0001/image").content
        assert first == second

    def test_flat_image_maps_to_zero(self, store, client):
        self._write_tiff(store, "S0002",
                         np.full((16, 16), 777, dtype=np.uint16))
        out = np.asarray(Image.open(io.BytesIO(
            client.get("/studies/S0002/image").content)))
        assert out.max() == 0

    def test_missing_study_404(self, client):
        response = client.get("/studies/NOPE/image")
        assert response.status_code == 404
        assert response.json()["error"] == "NotFound"


class TestAnnotationEndpoints:
    def test_get_annotation(self, client):
        response = client.get("/studies/S0000/annotations/R1")
        assert response.status_code == 200
        body = response.json()
        assert body["revision"] == 1
        assert body["record"]["study_id"] == "S0000"
        assert len(body["record"]["keypoints"]) == 9

    def test_get_missing_404(self, client):
        assert client.get("/studies/S0000/annotations/nobody").status_code == 404

    def test_put_increments_revision(self, client):
        record_doc = client.get("/studies/S0000/annotations/R1").json()["record"]
        response = client.put("/studies/S0000/annotations/R1",
                              json={"record": record_doc,
                                    "expected_revision": 1})
        assert response.status_code == 200
        assert response.json()["revision"] == 2
        assert client.get("/studies/S0000/annotations/R1").json()["revision"] == 2

    def test_stale_revision_conflicts(self, client):
        record_doc = client.get("/studies/S0000/annotations/R1").json()["record"]
        first = client.put("/studies/S0000/annotations/R1",
                           json={"record": record_doc, "expected_revision": 1})
        assert first.status_code == 200
        second = client.put("/studies/S0000/annotations/R1",
                            json={"record": record_doc, "expected_revision": 1})
        assert second.status_code == 409
        assert second.json()["error"] == "RevisionConflict"

    def test_fresh_rater_starts_at_zero(self, client):
        record_doc = client.get("/studies/S0000/annotations/R1").json()["record"]
        record_doc["rater_id"] = "R9"
        response = client.put("/studies/S0000/annotations/R9",
                              json={"record": record_doc,
                                    "expected_revision": 0})
        assert response.status_code == 200
        assert response.json()["revision"] == 1

    def test_out_of_bounds_rejected_with_fields(self, client):
        record_doc = client.get("/studies/S0000/annotations/R1").json()["record"]
        record_doc["keypoints"][0]["x_px"] = 1e7
        response = client.put("/studies/S0000/annotations/R1",
                              json={"record": record_doc,
                                    "expected_revision": 1})
        assert response.status_code == 422
        body = response.json()
        assert body["error"] == "InvariantViolation"
        assert any("keypoints" in failure["field"] for failure in body["detail"])

    def test_durability_across_restart(self, store, client):
        record_doc = client.get("/studies/S0000/annotations/R1").json()["record"]
        record_doc["keypoints"][0]["x_px"] += 1.0
        assert client.put(
            "/studies/S0000/annotations/R1",
            json={"record": record_doc, "expected_revision": 1}).status_code == 200
        fresh = TestClient(create_app(store.root))
        body = fresh.get("/studies/S0000/annotations/R1").json()
        assert body["revision"] == 2
        assert body["record"]["keypoints"][0]["x_px"] == \
            record_doc["keypoints"][0]["x_px"]

    def test_readonly_blocks_writes(self, store):
        client = TestClient(create_app(store.root, readonly=True))
        record_doc = client.get("/studies/S0000/annotations/R1").json()["record"]
        response = client.put("/studies/S0000/annotations/R1",
                              json={"record": record_doc,
                                    "expected_revision": 1})
        assert response.status_code == 403


class TestComputeEndpoint:
    def test_fixture_round_trip(self, client):
        response = client.post("/compute", json=_compute_body())
        assert response.status_code == 200
        body = response.json()
        for label, expected in FIXTURE_EXPECTED.items():
            assert body[label] == pytest.approx(expected, abs=1e-9)

    def test_lumbosacral_body(self, client):
        body = _compute_body(view="LUMBOSACRAL",
                             only=["L1_ANT", "L1_POST", "S1_ANT", "S1_POST"])
        response = client.post("/compute", json=body)
        assert response.status_code == 200
        out = response.json()
        assert out["SS"] == pytest.approx(FIXTURE_EXPECTED["SS"], abs=1e-9)
        assert out["LL"] == pytest.approx(FIXTURE_EXPECTED["LL"], abs=1e-9)
        assert out["PT"] is None and out["SVA"] is None

    def test_degenerate_frame_names_error(self, client):
        raster = dict(FIXTURE_RASTER, S1_ANT=(100.0, 95.0),
                      S1_POST=(100.0, 85.0))
        response = client.post("/compute", json=_compute_body(raster=raster))
        assert response.status_code == 422
        assert response.json()["error"] == "DegenerateFrame"

    def test_missing_landmark_names_error(self, client):
        body = _compute_body(only=[n for n in FIXTURE_RASTER if n != "C7"])
        response = client.post("/compute", json=body)
        assert response.status_code == 422
        assert response.json()["error"] == "MissingLandmark"


class TestCohortReport:
    def test_self_report_zero_errors(self, client):
        response = client.get("/cohort/report",
                              params={"pred": "R1", "gt": "R1"})
        assert response.status_code == 200
        report = response.json()
        block = report["blocks"][0]
        for stats in block["overall"]["per_parameter"].values():
            assert stats["median"] == 0.0
        # identical raters: ICC undefined (degenerate) or 1.0
        for value in block["icc"].values():
            assert value is None or value == pytest.approx(1.0, abs=1e-12)
            if value is not None:
                assert value <= 1.0

    def test_disjoint_raters_422(self, client):
        response = client.get("/cohort/report",
                              params={"pred": "R1", "gt": "ghost"})
        assert response.status_code == 422
        assert response.json()["error"] == "EmptyCohort"

    def test_model_vs_gt_report(self, client):
        response = client.get("/cohort/report",
                              params={"pred": "model", "gt": "R1"})
        assert response.status_code == 200
        report = response.json()
        assert report["n_studies"] == 5
        assert report["pred_source"] == "model"
        block = report["blocks"][0]
        assert set(block["icc"]) == {"SVA", "PT", "SS", "PI", "LL",
                                     "T1PA", "L1PA"}

    def test_matches_cli_report_bytes(self, store, client):
        from spinometry.report import build_report, report_json

        preds = [store.load(sid, "model")[0] for sid in store.study_ids()]
        gts = [store.load(sid, "R1")[0] for sid in store.study_ids()]
        expected = report_json(build_report(
            preds, gts, cohort_id=store.root.name or "cohort",
            pred_source="model", gt_source="R1", strict_alignment=False))
        response = client.get("/cohort/report",
                              params={"pred": "model", "gt": "R1"})
        assert response.content.decode("utf-8") == expected

    def test_report_pure_function_of_store(self, client):
        before = client.get("/cohort/report",
                            params={"pred": "model", "gt": "R1"}).content
        annotation = client.get("/studies/S0000/annotations/model").json()
        record_doc = annotation["record"]
        original_x = record_doc["keypoints"][0]["x_px"]
        record_doc["keypoints"][0]["x_px"] = original_x + 2.0
        assert client.put("/studies/S0000/annotations/model",
                          json={"record": record_doc,
                                "expected_revision": 1}).status_code == 200
        changed = client.get("/cohort/report",
                             params={"pred": "model", "gt": "R1"}).content
        assert changed != before
        record_doc["keypoints"][0]["x_px"] = original_x
        assert client.put("/studies/S0000/annotations/model",
                          json={"record": record_doc,
                                "expected_revision": 2}).status_code == 200
        restored = client.get("/cohort/report",
                              params={"pred": "model", "gt": "R1"}).content
        assert restored == before
