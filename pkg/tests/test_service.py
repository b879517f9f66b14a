import base64
import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from posterdiff.canvas import Raster, save_png
from posterdiff.data import SynthConfig, generate_synthetic
from posterdiff.diffusion import DiffusionSchedule
from posterdiff.metrics import evaluate_layout
from posterdiff.geometry import Layout
from posterdiff.model import ModelConfig, NoiseModel
from posterdiff.service import InferenceEngine, create_app

CFG = ModelConfig.tiny(max_elements=8, timesteps=12)


def png_b64(raster: Raster) -> str:
    buf = io.BytesIO()
    arr = np.round(raster.data * 255).astype(np.uint8)
    from PIL import Image

    if raster.channels == 1:
        Image.fromarray(arr[:, :, 0], mode="L").save(buf, format="PNG")
    else:
        Image.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@pytest.fixture(scope="module")
def sample_data():
    return generate_synthetic(SynthConfig(num_samples=2, resolution=CFG.resolution, seed=31)).samples[0]


@pytest.fixture(scope="module")
def client(sample_data):
    engine = InferenceEngine(NoiseModel(CFG, seed=0), DiffusionSchedule.linear(CFG.timesteps))
    app = create_app(engine=engine, max_inflight=2)
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def canvas_payload(sample_data):
    return {
        "canvas_png": png_b64(sample_data.canvas),
        "saliency_png": png_b64(sample_data.saliency),
    }


def test_health_without_model():
    app = create_app()
    with TestClient(app) as c:
        assert c.get("/v1/health").json() == {"ready": False}
        assert c.post("/v1/generate", json={"num_samples": 1}).status_code == 503


def test_health_ready(client):
    assert client.get("/v1/health").json() == {"ready": True}


def test_model_info(client):
    info = client.get("/v1/model").json()
    assert info["parameter_count"] == NoiseModel(CFG, seed=0).num_parameters()
    assert info["config"]["max_elements"] == CFG.max_elements
    again = client.get("/v1/model").json()
    assert again == info


def test_generate_validation(client, canvas_payload):
    assert client.post("/v1/generate", json={"num_samples": 0, **canvas_payload}).status_code == 400
    assert client.post("/v1/generate", json={"num_samples": 1}).status_code == 400
    too_many = {"task": "c_to_sp", "elements": [{"category": "text"}] * 9, "num_samples": 1, **canvas_payload}
    assert client.post("/v1/generate", json=too_many).status_code == 400
    bad_cat = {"elements": [{"category": "banner"}], **canvas_payload}
    assert client.post("/v1/generate", json=bad_cat).status_code == 400


def test_generate_cs_to_p_requires_size(client, canvas_payload):
    req = {"task": "cs_to_p", "elements": [{"category": "text"}], "num_samples": 1, **canvas_payload}
    assert client.post("/v1/generate", json=req).status_code == 400
    req["elements"] = [{"category": "text", "w": 0.4, "h": 0.1}]
    assert client.post("/v1/generate", json=req).status_code == 200


def test_generate_deterministic_and_counted(client, canvas_payload):
    req = {"task": "unconstrained", "num_samples": 3, "seed": 42, **canvas_payload}
    r1 = client.post("/v1/generate", json=req).json()
    r2 = client.post("/v1/generate", json=req).json()
    assert len(r1["samples"]) == 3
    assert [s["seed"] for s in r1["samples"]] == [42, 43, 44]
    for a, b in zip(r1["samples"], r2["samples"]):
        assert a == b
    assert r1["canvas_id"] == r2["canvas_id"]


def test_generate_canvas_id_reuse(client, canvas_payload):
    first = client.post("/v1/generate", json={"num_samples": 1, "seed": 1, **canvas_payload}).json()
    cid = first["canvas_id"]
    again = client.post("/v1/generate", json={"num_samples": 1, "seed": 1, "canvas_id": cid}).json()
    assert again["samples"] == first["samples"]
    assert client.post("/v1/generate", json={"num_samples": 1, "canvas_id": "nope"}).status_code == 400


def test_generate_completion_echo(client, canvas_payload):
    elements = [
        {"category": "logo", "cx": 0.2, "cy": 0.2, "w": 0.12, "h": 0.1, "anchored": True},
        {"category": "text", "cx": 0.6, "cy": 0.6, "w": 0.3, "h": 0.08, "anchored": True},
    ]
    req = {"task": "completion", "elements": elements, "num_samples": 2, "seed": 5, **canvas_payload}
    res = client.post("/v1/generate", json=req).json()
    for s in res["samples"]:
        got = {(e["category"], round(e["cx"], 4), round(e["w"], 4)) for e in s["layout"]["elements"]}
        assert ("logo", 0.2, 0.12) in got
        assert ("text", 0.6, 0.3) in got


def test_generate_c_to_sp_categories(client, canvas_payload):
    elements = [{"category": "logo"}, {"category": "text"}, {"category": "text"}]
    req = {"task": "c_to_sp", "elements": elements, "num_samples": 2, "seed": 9, **canvas_payload}
    res = client.post("/v1/generate", json=req).json()
    for s in res["samples"]:
        cats = sorted(e["category"] for e in s["layout"]["elements"])
        assert cats == ["logo", "text", "text"]


def test_stream_events(client, canvas_payload):
    req = {"task": "c_to_sp", "elements": [{"category": "text"}], "num_samples": 1, "seed": 3, **canvas_payload}
    events = []
    with client.stream("POST", "/v1/generate/stream", json=req) as r:
        assert r.status_code == 200
        assert r.headers["content-type"].startswith("text/event-stream")
        for line in r.iter_lines():
            if line.startswith("data:"):
                events.append(json.loads(line[5:]))
    assert len(events) == CFG.timesteps + 1
    assert events[-1].get("final") is True
    # terminal layout matches the non-streaming endpoint at the same seed
    direct = client.post("/v1/generate", json=req).json()
    assert events[-1]["layout"] == direct["samples"][0]["layout"]
    assert events[-1]["metrics"] == direct["samples"][0]["metrics"]
    # constrained categories stay pinned in every intermediate event
    for ev in events[:-1]:
        cats = [e["category"] for e in ev["layout"]["elements"]]
        assert cats.count("text") == 1
    assert client.post(
        "/v1/generate/stream", json={**req, "num_samples": 2}
    ).status_code == 400


def test_refine_endpoint(client, canvas_payload, sample_data):
    req = {
        "layout": sample_data.layout.to_dict(),
        "strength": 0.25,
        "seed": 11,
        **canvas_payload,
    }
    r1 = client.post("/v1/refine", json=req).json()
    r2 = client.post("/v1/refine", json=req).json()
    assert r1["samples"] == r2["samples"]
    assert client.post("/v1/refine", json={**req, "strength": 0.0}).status_code == 400
    assert client.post("/v1/refine", json={**req, "layout": {"elements": []}}).status_code == 400


def test_evaluate_endpoint(client, canvas_payload, sample_data):
    res = client.post(
        "/v1/evaluate", json={"layout": sample_data.layout.to_dict(), **canvas_payload}
    )
    assert res.status_code == 200
    direct = evaluate_layout(sample_data.layout, sample_data.canvas, sample_data.saliency)
    assert res.json() == direct.to_dict()

    empty = client.post("/v1/evaluate", json={"layout": {"elements": []}, **canvas_payload}).json()
    assert empty["occ"] == 0.0 and empty["und_l"] == 1.0 and empty["ove"] == 0.0

    no_sal = {"layout": sample_data.layout.to_dict(), "canvas_png": canvas_payload["canvas_png"]}
    assert client.post("/v1/evaluate", json=no_sal).status_code == 400


def test_concurrency_limit(client, canvas_payload):
    slots = client.app.state.slots
    assert slots.acquire(blocking=False)
    assert slots.acquire(blocking=False)
    try:
        res = client.post("/v1/generate", json={"num_samples": 1, "seed": 0, **canvas_payload})
        assert res.status_code == 429
    finally:
        slots.release()
        slots.release()
    ok = client.post("/v1/generate", json={"num_samples": 1, "seed": 0, **canvas_payload})
    assert ok.status_code == 200
