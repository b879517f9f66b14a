import base64
import io
import json
import signal
import socket
import subprocess
import sys
import threading
import time

import httpx
import numpy as np
import pytest
from PIL import Image

from posterdiff.data import SynthConfig, generate_synthetic
from posterdiff.diffusion import DiffusionSchedule
from posterdiff.model import ModelConfig, NoiseModel
from posterdiff.training import save_model


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def b64_png(data: np.ndarray, mode: str) -> str:
    buf = io.BytesIO()
    Image.fromarray(data, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    cfg = ModelConfig.tiny(max_elements=6, timesteps=15)
    model = NoiseModel(cfg, seed=0)
    sched = DiffusionSchedule.linear(cfg.timesteps)
    path = tmp_path_factory.mktemp("serve") / "model.ckpt"
    save_model(path, model, sched)
    return path


@pytest.fixture(scope="module")
def payload():
    sample = generate_synthetic(SynthConfig(num_samples=1, resolution=32, seed=13)).samples[0]
    canvas = np.round(sample.canvas.data * 255).astype(np.uint8)
    sal = np.round(sample.saliency.data[:, :, 0] * 255).astype(np.uint8)
    return {
        "canvas_png": b64_png(canvas, "RGB"),
        "saliency_png": b64_png(sal, "L"),
        "num_samples": 1,
        "seed": 0,
    }


def launch(checkpoint, port):
    return subprocess.Popen(
        [sys.executable, "-m", "posterdiff.cli", "serve", "--ckpt", str(checkpoint), "--port", str(port)],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )


def wait_ready(port, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        try:
            r = httpx.get(f"http://127.0.0.1:{port}/v1/health", timeout=1.0)
            if r.status_code == 200 and r.json()["ready"]:
                return
        except httpx.HTTPError:
            pass
        time.sleep(0.1)
    raise TimeoutError("server did not become ready")


def test_serve_health_generate_and_sigterm_drain(checkpoint, payload):
    port = free_port()
    proc = launch(checkpoint, port)
    try:
        wait_ready(port)
        r = httpx.get(f"http://127.0.0.1:{port}/v1/model", timeout=5.0)
        assert r.status_code == 200
        assert r.json()["checkpoint_hash"]

        # fire a request, then SIGTERM mid-flight: the run must drain
        result = {}

        def call():
            result["resp"] = httpx.post(
                f"http://127.0.0.1:{port}/v1/generate", json=payload, timeout=60.0
            )

        worker = threading.Thread(target=call)
        worker.start()
        time.sleep(0.15)
        proc.send_signal(signal.SIGTERM)
        worker.join(timeout=60)
        assert not worker.is_alive()
        assert result["resp"].status_code == 200
        body = result["resp"].json()
        assert len(body["samples"]) == 1
        # uvicorn drains, then re-raises the signal per POSIX convention
        assert proc.wait(timeout=30) in (0, -signal.SIGTERM)
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()


def test_serve_port_conflict_exits_nonzero(checkpoint):
    blocker = socket.socket()
    blocker.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    blocker.bind(("127.0.0.1", 0))
    port = blocker.getsockname()[1]
    blocker.listen(1)
    try:
        proc = launch(checkpoint, port)
        code = proc.wait(timeout=30)
        assert code != 0
        stderr = proc.stderr.read()
        assert "failed to start" in stderr or "error" in stderr.lower()
    finally:
        blocker.close()
