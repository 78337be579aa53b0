"""Text-to-vector providers for the shared semantic space.

Two providers behind one interface: a dependency-free feature-hash embedder
(bit-exact, offline) and a client for a remote encoder service speaking the
``/encode`` wire protocol. Every returned vector is unit L2 norm.
"""
from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np

ENCODE_PATH = "/encode"
MAX_BATCH = 64

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = (1 << 64) - 1


class EmbedError(Exception):
    """Base class for embedding failures."""


class EmptyText(EmbedError):
    pass


class DegenerateEmbedding(EmbedError):
    """All-zero vector before normalization; no usable features."""


class DimensionMismatch(EmbedError):
    """Vector dimensions disagree with what the consumer expects."""


class RemoteUnavailable(EmbedError):
    """Encoder endpoint unreachable, timed out, or returned an error."""


@dataclass(frozen=True)
class EmbeddingVector:
    """Unit-norm vector in the shared semantic space, tagged with its provider."""

    values: np.ndarray
    provider_id: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str = "hash"  # "hash" | "remote"
    dim: int = 64  # hash only
    endpoint: str = ""  # remote only

    def __post_init__(self):
        if self.kind not in ("hash", "remote"):
            raise ValueError(f"unknown embedder kind: {self.kind!r}")
        if self.kind == "hash" and self.dim < 8:
            raise ValueError("hash embedder needs dim >= 8")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote embedder needs an endpoint")


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash; the bucket/sign source for the hash embedder."""
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _U64
    return h


def _features(text: str) -> set[str]:
    tokens = _TOKEN.findall(text.lower())
    feats = set(tokens)
    feats.update(f"{a}_{b}" for a, b in zip(tokens, tokens[1:]))
    return feats


class HashEmbedder:
    """Deterministic feature-hash embedder.

    Algorithm (frozen; golden-vector tested): lowercase, tokenize on
    non-alphanumeric runs, features = unigrams plus adjacent bigrams joined
    by "_", FNV-1a 64 over UTF-8 bytes of each feature, bucket = hash mod D,
    sign from bit 63, accumulate, L2-normalize.
    """

    def __init__(self, dim: int = 64):
        if dim < 8:
            raise ValueError("hash embedder needs dim >= 8")
        self.dim = dim
        self.provider_id = f"hash64/{dim}"

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyText("cannot embed empty text")
        counts = np.zeros(self.dim, dtype=np.int64)
        for feat in _features(text):
            h = fnv1a64(feat.encode("utf-8"))
            sign = 1 if (h >> 63) == 0 else -1
            counts[h % self.dim] += sign
        norm = float(np.sqrt(np.dot(counts, counts)))
        if norm == 0.0:
            raise DegenerateEmbedding(f"no usable features in text: {text!r}")
        return EmbeddingVector(counts / norm, self.provider_id)

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        return _batch(self, texts)


class RemoteEmbedder:
    """Client for an encoder service speaking the /encode wire protocol.

    The service dimension is discovered from the first response and pinned;
    later disagreement raises DimensionMismatch. Requests are chunked to at
    most MAX_BATCH texts, with one retry per chunk on transport failure.
    """

    def __init__(self, endpoint: str, timeout: float = 5.0, retries: int = 1):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.dim: int | None = None
        self.provider_id = f"remote/{self.endpoint}"

    def _post(self, texts: list[str]) -> dict:
        body = json.dumps({"texts": texts}).encode("utf-8")
        request = urllib.request.Request(
            self.endpoint + ENCODE_PATH,
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    return json.loads(response.read())
            except urllib.error.HTTPError as exc:
                try:
                    message = json.loads(exc.read()).get("error", str(exc))
                except Exception:
                    message = str(exc)
                raise RemoteUnavailable(f"encoder error {exc.code}: {message}") from exc
            except Exception as exc:  # URLError, timeout, bad JSON
                last_error = exc
        raise RemoteUnavailable(f"encoder unreachable at {self.endpoint}: {last_error}") from last_error

    def _encode_chunk(self, texts: list[str]) -> list[EmbeddingVector]:
        payload = self._post(texts)
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise RemoteUnavailable("encoder response malformed: vectors missing or miscounted")
        dim = int(payload.get("dim", 0)) or (len(vectors[0]) if vectors else 0)
        if self.dim is None:
            self.dim = dim
            self.provider_id = f"remote/{payload.get('model', self.endpoint)}"
        out = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64)
            if arr.ndim != 1 or arr.shape[0] != self.dim:
                raise DimensionMismatch(
                    f"encoder returned length {arr.shape} but dimension is pinned to {self.dim}"
                )
            norm = float(np.linalg.norm(arr))
            if norm < 1e-12:
                raise DegenerateEmbedding("encoder returned an all-zero vector")
            out.append(EmbeddingVector(arr / norm, self.provider_id))
        return out

    def embed_text(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyText("cannot embed empty text")
        return self._encode_chunk([text])[0]

    def embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        if not texts:
            return []
        for i, text in enumerate(texts):
            if not text:
                raise EmptyText(f"texts[{i}] is empty")
        out: list[EmbeddingVector] = []
        for start in range(0, len(texts), MAX_BATCH):
            out.extend(self._encode_chunk(texts[start : start + MAX_BATCH]))
        return out


def _batch(embedder, texts: list[str]) -> list[EmbeddingVector]:
    out = []
    for i, text in enumerate(texts):
        try:
            out.append(embedder.embed_text(text))
        except EmbedError as exc:
            raise type(exc)(f"texts[{i}]: {exc}") from exc
    return out


def build_embedder(cfg: EmbedderConfig) -> HashEmbedder | RemoteEmbedder:
    if cfg.kind == "hash":
        return HashEmbedder(cfg.dim)
    return RemoteEmbedder(cfg.endpoint)


def embed_text(cfg: EmbedderConfig, text: str) -> EmbeddingVector:
    return build_embedder(cfg).embed_text(text)


def embed_batch(cfg: EmbedderConfig, texts: list[str]) -> list[EmbeddingVector]:
    return build_embedder(cfg).embed_batch(texts)


def as_matrix(vectors: list[EmbeddingVector] | list[np.ndarray] | np.ndarray) -> np.ndarray:
    """Stack embedding vectors (or raw rows) into an (n, d) float64 matrix."""
    if isinstance(vectors, np.ndarray):
        return np.asarray(vectors, dtype=np.float64)
    rows = [v.values if isinstance(v, EmbeddingVector) else np.asarray(v, dtype=np.float64) for v in vectors]
    return np.stack(rows).astype(np.float64, copy=False)
