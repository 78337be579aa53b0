"""Sentence-encoder service: pretrained model behind the /encode protocol.

Protocol (shared with the registry's remote embedding client):
    POST /encode  {"texts": [... up to 64 ...]}
        -> {"model": "<id>", "dim": <int>, "vectors": [[...], ...]}
    GET /healthz  -> {"model": "<id>", "dim": <int>}

Vectors are mean-pooled token representations, L2-normalized, in request
order. Texts longer than MAX_TEXT_CHARS are truncated and flagged in the
response metadata. An empty text yields a per-element error entry (vector
slot null) while the rest of the batch is served.
"""
from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

MAX_BATCH = 64
MAX_TEXT_CHARS = 2048
DEFAULT_MODEL = "sentence-transformers/all-MiniLM-L6-v2"


class Encoder:
    """Loads a sentence-transformer once; serializes inference calls.

    If the hub is unreachable, retries against the local cache so an already
    downloaded model keeps serving in offline environments.
    """

    def __init__(self, model_id: str = DEFAULT_MODEL):
        from sentence_transformers import SentenceTransformer  # import cost only when serving

        self.model_id = model_id
        try:
            self.model = SentenceTransformer(model_id)
        except Exception:
            # hub unreachable; a previously downloaded model still serves
            self.model = SentenceTransformer(model_id, local_files_only=True)
        get_dim = getattr(self.model, "get_embedding_dimension", None)
        if get_dim is None:  # older sentence-transformers
            get_dim = self.model.get_sentence_embedding_dimension
        self.dim = int(get_dim())
        self._lock = threading.Lock()

    def encode(self, texts: list[str]) -> dict:
        """Encode a batch; returns the response payload dict."""
        truncated: list[int] = []
        errors: list[dict] = []
        clean: list[str] = []
        positions: list[int] = []
        for i, text in enumerate(texts):
            if not isinstance(text, str) or not text.strip():
                errors.append({"index": i, "error": "empty text"})
                continue
            if len(text) > MAX_TEXT_CHARS:
                text = text[:MAX_TEXT_CHARS]
                truncated.append(i)
            clean.append(text)
            positions.append(i)

        vectors: list[list[float] | None] = [None] * len(texts)
        if clean:
            with self._lock:
                raw = self.model.encode(clean, convert_to_numpy=True, normalize_embeddings=False)
            raw = np.asarray(raw, dtype=np.float64)
            norms = np.linalg.norm(raw, axis=1, keepdims=True)
            unit = raw / np.maximum(norms, 1e-12)
            for pos, vec in zip(positions, unit):
                vectors[pos] = [float(x) for x in vec]

        payload: dict = {"model": self.model_id, "dim": self.dim, "vectors": vectors}
        if truncated:
            payload["truncated"] = truncated
        if errors:
            payload["errors"] = errors
        return payload


def make_server(encoder: Encoder, listen: str = "127.0.0.1:8600") -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):
            pass

        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path == "/healthz":
                self._reply(200, {"model": encoder.model_id, "dim": encoder.dim})
            else:
                self._reply(404, {"error": f"no such route: GET {self.path}"})

        def do_POST(self):
            if self.path != "/encode":
                self._reply(404, {"error": f"no such route: POST {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) if length else b"")
            except (ValueError, json.JSONDecodeError) as exc:
                self._reply(400, {"error": f"malformed body: {exc}"})
                return
            texts = body.get("texts") if isinstance(body, dict) else None
            if not isinstance(texts, list):
                self._reply(400, {"error": "body must be a JSON object with a 'texts' list"})
                return
            if len(texts) > MAX_BATCH:
                self._reply(413, {"error": f"at most {MAX_BATCH} texts per request, got {len(texts)}"})
                return
            self._reply(200, encoder.encode(texts))

    host, _, port = listen.rpartition(":")
    return ThreadingHTTPServer((host or "127.0.0.1", int(port)), Handler)


def serve_in_thread(encoder: Encoder, listen: str = "127.0.0.1:0") -> tuple[ThreadingHTTPServer, str]:
    server = make_server(encoder, listen)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    return server, f"http://{host}:{port}"
