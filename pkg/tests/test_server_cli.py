from __future__ import annotations

import json
import subprocess
import sys
import urllib.error
import urllib.request

import pytest

from capreg.cli import build_parser, main
from capreg.embed import EmbedderConfig
from capreg.registry import Registry, RegistryConfig
from capreg.server import serve_in_thread

from conftest import make_profile_doc


@pytest.fixture
def live_server():
    config = RegistryConfig(dim=32, subspaces=4, anchors=4, embedder=EmbedderConfig(kind="hash", dim=32))
    registry = Registry(config)
    server, base = serve_in_thread(registry)
    yield registry, base
    server.shutdown()
    server.server_close()


def call(base: str, method: str, path: str, body: dict | None = None):
    data = json.dumps(body).encode() if body is not None else None
    request = urllib.request.Request(base + path, data=data, method=method)
    if data:
        request.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            return response.status, json.loads(response.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def test_register_query_update_delete_cycle(live_server):
    _, base = live_server
    status, body = call(base, "POST", "/agents", make_profile_doc("web-1", ["route planning"]))
    assert status == 201
    assert body["agent_id"] == "web-1" and body["seq"] == 1
    assert isinstance(body["code"], list) and len(body["code"]) == 4

    status, body = call(base, "POST", "/query", {"task_text": "route planning", "top_k": 5})
    assert status == 200
    assert body["results"][0]["agent_id"] == "web-1"
    assert set(body["results"][0]) == {"agent_id", "sem_score", "cred_score", "ctx_score", "avail_score", "fused"}

    status, body = call(base, "PUT", "/agents/web-1", make_profile_doc("web-1", ["sentiment analysis"]))
    assert status == 200 and body["seq"] == 2

    status, body = call(base, "DELETE", "/agents/web-1")
    assert status == 200 and body["seq"] == 3

    status, body = call(base, "POST", "/query", {"task_text": "route planning"})
    assert status == 200 and body["results"] == []


def test_endorsements_endpoint(live_server):
    _, base = live_server
    call(base, "POST", "/agents", make_profile_doc("e-1", ["x"], credibility=0.5))
    status, body = call(base, "POST", "/agents/e-1/endorsements", {"score": 1.0})
    assert status == 200
    assert body["credibility"] == pytest.approx(0.55)
    status, body = call(base, "POST", "/agents/e-1/endorsements", {"score": 2.0})
    assert status == 400


def test_error_statuses(live_server):
    _, base = live_server
    call(base, "POST", "/agents", make_profile_doc("dup", ["x"]))
    status, body = call(base, "POST", "/agents", make_profile_doc("dup", ["x"]))
    assert status == 409
    status, body = call(base, "DELETE", "/agents/ghost")
    assert status == 404 and "error" in body
    status, body = call(base, "POST", "/agents", {"agent_id": "bad", "skills": []})
    assert status == 400
    status, body = call(base, "POST", "/query", {"top_k": 3})
    assert status == 400
    status, body = call(base, "GET", "/nowhere")
    assert status == 404


def test_embedder_unavailable_maps_to_503():
    config = RegistryConfig(
        dim=32, subspaces=4, anchors=4, embedder=EmbedderConfig(kind="remote", endpoint="http://127.0.0.1:1")
    )
    registry = Registry(config)
    registry.embedder.timeout = 0.2
    server, base = serve_in_thread(registry)
    try:
        status, body = call(base, "POST", "/agents", make_profile_doc("r-1", ["x"]))
        assert status == 503
    finally:
        server.shutdown()
        server.server_close()


def test_events_and_healthz(live_server):
    _, base = live_server
    for i in range(4):
        call(base, "POST", "/agents", make_profile_doc(f"ev-{i}", ["x"]))
    status, body = call(base, "GET", "/events?since=2")
    assert status == 200
    assert [e["seq"] for e in body["events"]] == [3, 4]
    assert all(e["kind"] == "register" for e in body["events"])

    status, body = call(base, "GET", "/healthz")
    assert status == 200
    assert body["agents"] == 4 and body["last_seq"] == 4 and body["dim"] == 32


def test_query_with_constraints_and_weights(live_server):
    _, base = live_server
    doc = make_profile_doc("edge-1", ["thermal imaging"])
    doc["constraints"]["placement"] = "edge"
    call(base, "POST", "/agents", doc)
    cloud = make_profile_doc("cloud-1", ["thermal imaging"])
    call(base, "POST", "/agents", cloud)
    status, body = call(
        base,
        "POST",
        "/query",
        {
            "task_text": "thermal imaging",
            "strict_constraints": True,
            "required": {"placement": "edge"},
            "weights": {"w_sem": 1.0, "w_cred": 0.0, "w_ctx": 0.0, "w_avail": 0.0},
        },
    )
    assert status == 200
    assert [r["agent_id"] for r in body["results"]] == ["edge-1"]


# -- CLI ---------------------------------------------------------------------


def test_cli_snapshot_and_config_merge(tmp_path, monkeypatch):
    data_dir = tmp_path / "data"
    registry = Registry(
        RegistryConfig(dim=32, subspaces=4, anchors=4, embedder=EmbedderConfig(kind="hash", dim=32)),
        data_dir=data_dir,
    )
    registry.register_agent(make_profile_doc("snap-1", ["x"]))

    config_file = tmp_path / "registryd.json"
    config_file.write_text(json.dumps({"data_dir": str(data_dir), "dim": 32, "subspaces": 4, "anchors": 4}))
    monkeypatch.setenv("REGISTRYD_CONFIG", str(config_file))
    assert main(["snapshot"]) == 0
    assert (data_dir / "snapshot" / "manifest.json").exists()

    restored = Registry.restore(data_dir)
    assert restored.agent_count() == 1


def test_cli_flags_override_config(tmp_path, monkeypatch):
    config_file = tmp_path / "cfg.json"
    config_file.write_text(json.dumps({"dim": 64, "data_dir": str(tmp_path / "a")}))
    monkeypatch.setenv("REGISTRYD_CONFIG", str(config_file))
    parser = build_parser()
    args = parser.parse_args(["snapshot", "--data-dir", str(tmp_path / "b")])
    from capreg.cli import _load_config_file, _merge

    merged = _merge(_load_config_file(None), args)
    assert merged["data_dir"] == str(tmp_path / "b")
    assert merged["dim"] == 64


def test_console_scripts_exist():
    out = subprocess.run(
        [sys.executable, "-m", "capreg.cli", "--help"], capture_output=True, text=True, timeout=30
    )
    assert out.returncode == 0
    assert "serve" in out.stdout and "snapshot" in out.stdout


def test_serve_cli_end_to_end(tmp_path):
    script = (
        "import threading, json, urllib.request, sys\n"
        "from capreg.cli import _open_registry\n"
        "from capreg.server import serve_in_thread\n"
        "registry = _open_registry({'data_dir': sys.argv[1], 'dim': 32, 'subspaces': 4, 'anchors': 4})\n"
        "server, base = serve_in_thread(registry)\n"
        "req = urllib.request.Request(base + '/healthz')\n"
        "print(json.loads(urllib.request.urlopen(req, timeout=5).read())['status'])\n"
        "server.shutdown()\n"
    )
    out = subprocess.run(
        [sys.executable, "-c", script, str(tmp_path / "srv")], capture_output=True, text=True, timeout=60
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "ok"
