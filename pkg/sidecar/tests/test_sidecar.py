from __future__ import annotations

import json
import urllib.error
import urllib.request

import numpy as np
import pytest

from encoder_sidecar import MAX_BATCH, Encoder, serve_in_thread


@pytest.fixture(scope="module")
def live():
    encoder = Encoder()
    server, base = serve_in_thread(encoder)
    yield encoder, base
    server.shutdown()
    server.server_close()


def call(base: str, method: str, path: str, body: dict | None = None):
    data = json.dumps(body).encode() if body is not None else None
    request = urllib.request.Request(base + path, data=data, method=method)
    if data:
        request.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(request, timeout=120) as response:
            return response.status, json.loads(response.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


def encode(base: str, texts: list[str]) -> dict:
    status, payload = call(base, "POST", "/encode", {"texts": texts})
    assert status == 200
    return payload


def assert_wire_schema(payload: dict, n_texts: int):
    assert isinstance(payload["model"], str) and payload["model"]
    assert isinstance(payload["dim"], int) and payload["dim"] > 0
    vectors = payload["vectors"]
    assert isinstance(vectors, list) and len(vectors) == n_texts
    for vec in vectors:
        assert isinstance(vec, list) and len(vec) == payload["dim"]
        norm = float(np.linalg.norm(vec))
        assert abs(norm - 1.0) <= 1e-5


def test_healthz(live):
    _, base = live
    status, payload = call(base, "GET", "/healthz")
    assert status == 200
    assert payload["dim"] > 0
    assert payload["model"]


def test_protocol_schema_on_fifty_random_batches(live):
    """Wire-schema conformance and unit norm within 1e-5 on 50 random batches."""
    _, base = live
    rng = np.random.default_rng(11)
    words = [
        "route", "planning", "thermal", "imaging", "translation", "sentiment",
        "navigation", "inventory", "scheduling", "detection", "analysis", "parsing",
        "speech", "terrain", "contract", "forecasting", "monitoring", "grasping",
    ]
    for _ in range(50):
        n = int(rng.integers(1, 7))
        texts = [
            " ".join(words[int(j)] for j in rng.integers(0, len(words), size=rng.integers(2, 6)))
            for _ in range(n)
        ]
        payload = encode(base, texts)
        assert_wire_schema(payload, n)


def test_semantic_matching_without_shared_vocabulary(live):
    """Paraphrase pairs land closer than unrelated capabilities."""
    _, base = live
    payload = encode(base, ["path planning", "route optimization", "sentiment classification"])
    pp, ro, sc = (np.asarray(v) for v in payload["vectors"])
    assert float(pp @ ro) > float(pp @ sc)


def test_order_preserved_and_deterministic(live):
    _, base = live
    first = encode(base, ["alpha probe", "beta probe"])
    second = encode(base, ["beta probe", "alpha probe"])
    assert first["vectors"][0] == second["vectors"][1]
    assert first["vectors"][1] == second["vectors"][0]
    again = encode(base, ["alpha probe", "beta probe"])
    assert again["vectors"] == first["vectors"]


def test_same_text_twice_in_one_batch_identical(live):
    _, base = live
    payload = encode(base, ["duplicate text", "duplicate text"])
    assert payload["vectors"][0] == payload["vectors"][1]


def test_batch_cap_413(live):
    _, base = live
    status, payload = call(base, "POST", "/encode", {"texts": ["x"] * (MAX_BATCH + 1)})
    assert status == 413
    assert "error" in payload


def test_malformed_body_400(live):
    _, base = live
    request = urllib.request.Request(base + "/encode", data=b"{not json", method="POST")
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(request, timeout=30)
    assert err.value.code == 400
    status, payload = call(base, "POST", "/encode", {"texts": "not a list"})
    assert status == 400


def test_empty_element_reported_batch_served(live):
    _, base = live
    payload = encode(base, ["fine text", "", "also fine"])
    assert payload["vectors"][0] is not None
    assert payload["vectors"][1] is None
    assert payload["vectors"][2] is not None
    assert payload["errors"] == [{"index": 1, "error": "empty text"}]


def test_long_text_truncated_and_flagged(live):
    _, base = live
    payload = encode(base, ["word " * 1000])  # 5000 chars
    assert payload["truncated"] == [0]
    assert abs(float(np.linalg.norm(payload["vectors"][0])) - 1.0) <= 1e-5


def test_unit_norm_on_100_random_texts(live):
    _, base = live
    rng = np.random.default_rng(13)
    texts = [f"capability probe number {int(rng.integers(1_000_000))}" for _ in range(100)]
    worst = 0.0
    for start in range(0, 100, 50):
        payload = encode(base, texts[start : start + 50])
        for vec in payload["vectors"]:
            worst = max(worst, abs(float(np.linalg.norm(vec)) - 1.0))
    assert worst <= 1e-5
