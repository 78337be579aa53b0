from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest


class StubEncoder:
    """In-process encoder service speaking the /encode wire protocol.

    Vectors are a deterministic function of the text (seeded per text), so
    client behavior (normalization, chunking, dim pinning) is testable
    without a real model. Configurable to misbehave for error-path tests.
    """

    def __init__(self, dim: int = 32, model: str = "stub-encoder"):
        self.dim = dim
        self.model = model
        self.requests: list[list[str]] = []
        self.normalize = False
        self.wrong_dim_after: int | None = None  # start returning dim+1 vectors
        self.fail_with: tuple[int, str] | None = None
        self.zero_vectors = False
        self._server: ThreadingHTTPServer | None = None

    def vector_for(self, text: str) -> np.ndarray:
        seed = abs(hash(text)) % (2**32)
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec) if self.normalize else vec

    def start(self) -> str:
        stub = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                texts = body.get("texts", [])
                if self.path != "/encode":
                    self._reply(404, {"error": "not found"})
                    return
                if stub.fail_with is not None:
                    self._reply(stub.fail_with[0], {"error": stub.fail_with[1]})
                    return
                if len(texts) > 64:
                    self._reply(413, {"error": "too many texts"})
                    return
                stub.requests.append(texts)
                dim = stub.dim
                if stub.wrong_dim_after is not None and len(stub.requests) > stub.wrong_dim_after:
                    dim = stub.dim + 1
                if stub.zero_vectors:
                    vectors = [[0.0] * dim for _ in texts]
                else:
                    vectors = [list(stub.vector_for(t))[:dim] + [0.0] * max(0, dim - stub.dim) for t in texts]
                self._reply(200, {"model": stub.model, "dim": dim, "vectors": vectors})

            def _reply(self, status, payload):
                raw = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=self._server.serve_forever, daemon=True).start()
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()


@pytest.fixture
def stub_encoder():
    stub = StubEncoder()
    endpoint = stub.start()
    yield stub, endpoint
    stub.stop()


def make_profile_doc(agent_id: str, skills: list[str], roles: list[str] | None = None, **over) -> dict:
    doc = {
        "agent_id": agent_id,
        "skills": skills,
        "roles": roles if roles is not None else ["assistant"],
        "constraints": {
            "latency_tolerance_ms": 200,
            "placement": "cloud",
            "memory_capacity_mb": 2048,
            "current_load": 0.25,
        },
        "credibility": 0.8,
        "availability": "available",
    }
    doc.update(over)
    return doc


def random_unit_vectors(n: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    mat = rng.standard_normal((n, dim))
    return mat / np.linalg.norm(mat, axis=1, keepdims=True)
