"""End-to-end tests for the HTTP service, run in-process via TestClient."""

from __future__ import annotations

import base64
import dataclasses
import io
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from diffusion_service import ServiceConfig, create_app


def _png_b64(array: np.ndarray) -> str:
    buf = io.BytesIO()
    mode = "RGB" if array.ndim == 3 else "L"
    Image.fromarray(array.astype(np.uint8), mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _decode_rgb(text: str) -> np.ndarray:
    img = Image.open(io.BytesIO(base64.b64decode(text)))
    return np.asarray(img.convert("RGB"), dtype=np.uint8)


def _decode_gray(text: str) -> np.ndarray:
    img = Image.open(io.BytesIO(base64.b64decode(text)))
    return np.asarray(img.convert("L"), dtype=np.uint8)


def _inpaint_payload(image: np.ndarray, mask: np.ndarray, **overrides) -> dict:
    payload = {
        "image_b64": _png_b64(image),
        "mask_b64": _png_b64(mask.astype(np.uint8) * 255),
        "prompt": "a glass perfume bottle on a table",
        "negative_prompt": "blurry",
        "seed": 7,
        "steps": 4,
        "guidance": 6.5,
    }
    payload.update(overrides)
    return payload


def _edge_payload(edges: np.ndarray, **overrides) -> dict:
    payload = {
        "edge_map_b64": _png_b64(np.clip(np.rint(edges * 255.0), 0, 255)),
        "prompt": "a censer emitting smoke",
        "negative_prompt": "",
        "seed": 3,
        "steps": 4,
        "guidance": 7.5,
    }
    payload.update(overrides)
    return payload


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app(ServiceConfig())) as c:
        yield c


@pytest.fixture()
def sample():
    rng = np.random.default_rng(42)
    image = rng.integers(0, 256, size=(24, 20, 3), dtype=np.uint8)
    mask = np.zeros((24, 20), dtype=bool)
    mask[6:18, 5:15] = True
    return image, mask


class TestHealth:
    def test_unhealthy_before_models_load(self):
        # No lifespan context: startup never ran, so nothing is loaded.
        bare = TestClient(create_app(ServiceConfig()))
        resp = bare.get("/health")
        assert resp.status_code == 503
        assert resp.json()["models_loaded"] is False

    def test_endpoints_refuse_before_models_load(self):
        bare = TestClient(create_app(ServiceConfig()))
        rng = np.random.default_rng(0)
        image = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
        resp = bare.post("/v1/edge_map", json={"image_b64": _png_b64(image)})
        assert resp.status_code == 503

    def test_healthy_after_startup(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["models_loaded"] is True

    def test_health_is_stable_across_polls(self, client):
        results = [client.get("/health") for _ in range(3)]
        assert all(r.status_code == 200 for r in results)
        assert len({r.text for r in results}) == 1


class TestInpaint:
    def test_preserves_dimensions_and_unmasked_pixels(self, client, sample):
        image, mask = sample
        resp = client.post("/v1/inpaint", json=_inpaint_payload(image, mask))
        assert resp.status_code == 200
        out = _decode_rgb(resp.json()["image_b64"])
        assert out.shape == image.shape
        assert np.array_equal(out[~mask], image[~mask])
        assert (out[mask] != image[mask]).any()

    def test_full_mask_repaints_everything(self, client, sample):
        image, _ = sample
        mask = np.ones(image.shape[:2], dtype=bool)
        resp = client.post("/v1/inpaint", json=_inpaint_payload(image, mask))
        assert resp.status_code == 200
        out = _decode_rgb(resp.json()["image_b64"])
        assert out.shape == image.shape

    def test_same_seed_same_bytes(self, client, sample):
        image, mask = sample
        payload = _inpaint_payload(image, mask)
        first = client.post("/v1/inpaint", json=payload)
        second = client.post("/v1/inpaint", json=payload)
        assert first.status_code == second.status_code == 200
        assert first.json()["image_b64"] == second.json()["image_b64"]

    def test_different_seed_differs(self, client, sample):
        image, mask = sample
        first = client.post("/v1/inpaint", json=_inpaint_payload(image, mask, seed=1))
        second = client.post("/v1/inpaint", json=_inpaint_payload(image, mask, seed=2))
        assert first.json()["image_b64"] != second.json()["image_b64"]

    def test_mismatched_mask_rejected(self, client, sample):
        image, _ = sample
        small_mask = np.ones((10, 10), dtype=bool)
        resp = client.post("/v1/inpaint", json=_inpaint_payload(image, small_mask))
        assert resp.status_code == 400
        assert "mask" in resp.json()["detail"]

    def test_empty_prompt_rejected(self, client, sample):
        image, mask = sample
        resp = client.post("/v1/inpaint", json=_inpaint_payload(image, mask, prompt=""))
        assert resp.status_code == 400
        assert "prompt" in resp.json()["detail"]

    def test_invalid_base64_rejected(self, client, sample):
        image, mask = sample
        payload = _inpaint_payload(image, mask, image_b64="@@@not-base64@@@")
        resp = client.post("/v1/inpaint", json=payload)
        assert resp.status_code == 400

    def test_non_image_bytes_rejected(self, client, sample):
        image, mask = sample
        junk = base64.b64encode(b"plainly not a png").decode("ascii")
        resp = client.post("/v1/inpaint", json=_inpaint_payload(image, mask, image_b64=junk))
        assert resp.status_code == 400
        assert "image_b64" in resp.json()["detail"]

    def test_missing_field_rejected(self, client, sample):
        image, mask = sample
        payload = _inpaint_payload(image, mask)
        del payload["mask_b64"]
        resp = client.post("/v1/inpaint", json=payload)
        assert resp.status_code == 400
        assert resp.json()["detail"].startswith("malformed request")

    def test_wrong_type_rejected(self, client, sample):
        image, mask = sample
        resp = client.post("/v1/inpaint", json=_inpaint_payload(image, mask, seed="abc"))
        assert resp.status_code == 400

    def test_nonpositive_steps_rejected(self, client, sample):
        image, mask = sample
        resp = client.post("/v1/inpaint", json=_inpaint_payload(image, mask, steps=0))
        assert resp.status_code == 400


class TestPayloadLimit:
    def test_oversized_image_rejected(self):
        config = ServiceConfig(max_payload_bytes=2048)
        with TestClient(create_app(config)) as small_client:
            rng = np.random.default_rng(5)
            big = rng.integers(0, 256, size=(128, 128, 3), dtype=np.uint8)
            mask = np.ones((128, 128), dtype=bool)
            resp = small_client.post("/v1/inpaint", json=_inpaint_payload(big, mask))
            assert resp.status_code == 400
            assert "byte limit" in resp.json()["detail"]


class TestEdgeConditioned:
    def test_dimensions_follow_edge_map(self, client):
        rng = np.random.default_rng(11)
        edges = rng.random((20, 28))
        resp = client.post("/v1/generate_edge_conditioned", json=_edge_payload(edges))
        assert resp.status_code == 200
        out = _decode_rgb(resp.json()["image_b64"])
        assert out.shape == (20, 28, 3)

    def test_same_seed_same_bytes(self, client):
        edges = np.zeros((16, 16))
        edges[4:12, 8] = 1.0
        payload = _edge_payload(edges)
        first = client.post("/v1/generate_edge_conditioned", json=payload)
        second = client.post("/v1/generate_edge_conditioned", json=payload)
        assert first.json()["image_b64"] == second.json()["image_b64"]

    def test_empty_prompt_rejected(self, client):
        edges = np.zeros((8, 8))
        resp = client.post(
            "/v1/generate_edge_conditioned", json=_edge_payload(edges, prompt="")
        )
        assert resp.status_code == 400


class TestEdgeMap:
    def test_dimensions_and_value_range(self, client):
        rng = np.random.default_rng(9)
        image = rng.integers(0, 256, size=(18, 26, 3), dtype=np.uint8)
        resp = client.post("/v1/edge_map", json={"image_b64": _png_b64(image)})
        assert resp.status_code == 200
        edges = _decode_gray(resp.json()["edge_map_b64"])
        assert edges.shape == (18, 26)
        values = edges.astype(np.float64) / 255.0
        assert values.min() >= 0.0 and values.max() <= 1.0
        assert values.max() == 1.0  # strengths are normalized to the peak

    def test_constant_image_has_near_zero_edges(self, client):
        flat = np.full((22, 30, 3), 170, dtype=np.uint8)
        resp = client.post("/v1/edge_map", json={"image_b64": _png_b64(flat)})
        assert resp.status_code == 200
        values = _decode_gray(resp.json()["edge_map_b64"]).astype(np.float64) / 255.0
        assert values.mean() < 0.05

    def test_sharp_boundary_detected(self, client):
        image = np.zeros((20, 20, 3), dtype=np.uint8)
        image[:, 10:] = 255
        resp = client.post("/v1/edge_map", json={"image_b64": _png_b64(image)})
        values = _decode_gray(resp.json()["edge_map_b64"]).astype(np.float64) / 255.0
        boundary = values[:, 9:12]
        elsewhere = np.concatenate([values[:, :6], values[:, 14:]], axis=1)
        assert boundary.mean() > 10 * max(elsewhere.mean(), 1e-9)


class TestConcurrency:
    def test_parallel_requests_all_succeed(self, client, sample):
        image, mask = sample
        payload = _inpaint_payload(image, mask)

        def post():
            return client.post("/v1/inpaint", json=payload)

        with ThreadPoolExecutor(max_workers=4) as pool:
            responses = list(pool.map(lambda _: post(), range(4)))
        assert all(r.status_code == 200 for r in responses)
        bodies = {r.json()["image_b64"] for r in responses}
        assert len(bodies) == 1  # identical payloads give identical images


class TestServiceConfig:
    def test_defaults_are_valid(self):
        config = ServiceConfig()
        assert config.engine == "procedural"
        assert config.max_payload_bytes == 16 * 1024 * 1024

    def test_is_immutable(self):
        config = ServiceConfig()
        with pytest.raises(dataclasses.FrozenInstanceError):
            config.port = 9999  # type: ignore[misc]

    def test_unknown_engine_rejected(self):
        with pytest.raises(ValueError):
            ServiceConfig(engine="magic")

    @pytest.mark.parametrize("port", [0, -1, 65536])
    def test_bad_port_rejected(self, port):
        with pytest.raises(ValueError):
            ServiceConfig(port=port)

    def test_empty_model_identifier_rejected(self):
        with pytest.raises(ValueError):
            ServiceConfig(inpaint_model="")

    def test_tiny_payload_limit_rejected(self):
        with pytest.raises(ValueError):
            ServiceConfig(max_payload_bytes=512)
