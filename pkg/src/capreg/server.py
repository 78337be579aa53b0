"""HTTP endpoints over a Registry: JSON in, JSON out, stdlib server.

Routes:
    POST   /agents                    register (body: profile document)
    PUT    /agents/{id}               update
    DELETE /agents/{id}               deregister
    POST   /agents/{id}/endorsements  body {"score": s}
    POST   /query                     body: QuerySpec fields, task_text required
    GET    /events?since=<seq>        pull-based synchronization feed
    GET    /healthz
"""
from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .index import DuplicateId, QuerySpec, RankWeights, RequiredConstraints, UnknownId
from .profile import ProfileError
from .registry import EmbedderUnavailable, Registry

_AGENT_PATH = re.compile(r"^/agents/([^/]+)$")
_ENDORSE_PATH = re.compile(r"^/agents/([^/]+)/endorsements$")


def parse_query_spec(body: dict) -> QuerySpec:
    if not isinstance(body, dict) or not isinstance(body.get("task_text"), str) or not body["task_text"].strip():
        raise ValueError("task_text is required")
    weights = body.get("weights")
    required = body.get("required")
    return QuerySpec(
        task_text=body["task_text"],
        top_k=int(body.get("top_k", 10)),
        strict_constraints=bool(body.get("strict_constraints", False)),
        required=RequiredConstraints(
            max_latency_ms=required.get("max_latency_ms"),
            placement=required.get("placement"),
            min_free_memory_mb=required.get("min_free_memory_mb"),
        )
        if isinstance(required, dict)
        else None,
        weights=RankWeights(
            w_sem=float(weights.get("w_sem", 0.7)),
            w_cred=float(weights.get("w_cred", 0.1)),
            w_ctx=float(weights.get("w_ctx", 0.1)),
            w_avail=float(weights.get("w_avail", 0.1)),
        )
        if isinstance(weights, dict)
        else RankWeights(),
    )


class _Handler(BaseHTTPRequestHandler):
    registry: Registry  # set on the server class by make_server

    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return {}
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(parsed, dict):
            raise ValueError("request body must be a JSON object")
        return parsed

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send(status, {"error": message})

    def _dispatch(self, method: str) -> None:
        registry = self.server.registry  # type: ignore[attr-defined]
        url = urlparse(self.path)
        try:
            if method == "GET" and url.path == "/healthz":
                state = registry.state
                self._send(
                    200,
                    {
                        "status": "ok",
                        "agents": len(state.index),
                        "last_seq": state.last_seq,
                        "codebook_version": state.codebook.version,
                        "dim": registry.config.dim,
                    },
                )
            elif method == "GET" and url.path == "/events":
                since = int(parse_qs(url.query).get("since", ["0"])[0])
                events = registry.event_feed(since)
                self._send(
                    200,
                    {
                        "events": [
                            {"seq": e.seq, "kind": e.kind, "agent_id": e.agent_id, "payload": e.payload, "ts": e.ts}
                            for e in events
                        ]
                    },
                )
            elif method == "POST" and url.path == "/agents":
                result = registry.register_agent(self._body())
                self._send(
                    201,
                    {"agent_id": result.agent_id, "code": list(result.code.indices), "seq": result.seq},
                )
            elif method == "POST" and url.path == "/query":
                spec = parse_query_spec(self._body())
                results = registry.query(spec)
                self._send(200, {"results": [r.as_dict() for r in results]})
            elif method == "PUT" and _AGENT_PATH.match(url.path):
                agent_id = _AGENT_PATH.match(url.path).group(1)
                result = registry.update_agent(agent_id, self._body())
                self._send(200, {"agent_id": agent_id, "code": list(result.code.indices), "seq": result.seq})
            elif method == "DELETE" and _AGENT_PATH.match(url.path):
                agent_id = _AGENT_PATH.match(url.path).group(1)
                seq = registry.deregister_agent(agent_id)
                self._send(200, {"agent_id": agent_id, "seq": seq})
            elif method == "POST" and _ENDORSE_PATH.match(url.path):
                agent_id = _ENDORSE_PATH.match(url.path).group(1)
                body = self._body()
                credibility = registry.record_endorsement(agent_id, body.get("score"))
                self._send(200, {"agent_id": agent_id, "credibility": credibility})
            else:
                self._error(404, f"no such route: {method} {url.path}")
        except DuplicateId as exc:
            self._error(409, str(exc))
        except UnknownId as exc:
            self._error(404, str(exc))
        except EmbedderUnavailable as exc:
            self._error(503, str(exc))
        except (ProfileError, ValueError) as exc:
            self._error(400, str(exc))
        except Exception as exc:  # pragma: no cover - last resort
            self._error(500, f"internal error: {exc}")

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")


def make_server(registry: Registry, listen: str = "127.0.0.1:8300") -> ThreadingHTTPServer:
    host, _, port = listen.rpartition(":")
    server = ThreadingHTTPServer((host or "127.0.0.1", int(port)), _Handler)
    server.registry = registry  # type: ignore[attr-defined]
    return server


def serve_in_thread(registry: Registry, listen: str = "127.0.0.1:0") -> tuple[ThreadingHTTPServer, str]:
    """Start the server on a daemon thread; returns (server, bound address)."""
    server = make_server(registry, listen)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    host, port = server.server_address[:2]
    return server, f"http://{host}:{port}"
