"""Registry state machine: announcement pipelines, event log, snapshots.

All mutations run the full pipeline (validate -> canonical text -> embed ->
quantize -> index) under a single writer lock, append one event to the log,
and atomically publish a new immutable state. Readers (queries, event feeds)
take the published state without locking. Replaying the event log from an
empty registry with the same config reproduces the state exactly.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import codebook as cbk
from .continual import QueryAdapter, adapt_query, load_adapter, save_adapter
from .embed import (
    DimensionMismatch,
    EmbedderConfig,
    EmbeddingVector,
    HashEmbedder,
    RemoteEmbedder,
    RemoteUnavailable,
    build_embedder,
)
from .index import (
    AgentIndex,
    DuplicateId,
    IndexEntry,
    QuerySpec,
    RankedResult,
    RankWeights,
    UnknownId,
    rank,
    search,
)
from .profile import (
    AgentProfile,
    OutOfRangeValue,
    canonical_task_text,
    canonical_text,
    profile_from_document,
    to_document,
    validate_profile,
)

EVENT_KINDS = ("register", "update", "deregister", "endorse")
SNAPSHOT_FORMAT = "capreg-snapshot"
SNAPSHOT_FORMAT_VERSION = 1
CODES_MAGIC = b"COD1"


class RegistryError(Exception):
    pass


class EmbedderUnavailable(RegistryError):
    """The configured embedding provider could not produce a vector."""


class CorruptSnapshot(RegistryError):
    pass


class VersionSkew(RegistryError):
    pass


@dataclass(frozen=True)
class RegistryConfig:
    dim: int = 64
    subspaces: int = 8
    anchors: int = 16
    k_max: int | None = None  # default 4 * anchors
    seed: int = 0
    retrain_at: int | None = None  # default 4 * anchors; 0 disables
    tau_percentile: float = 95.0
    overfetch: int = 4
    embedder: EmbedderConfig = EmbedderConfig(kind="hash", dim=64)

    def __post_init__(self):
        if self.dim % self.subspaces != 0:
            raise ValueError("dim must be divisible by subspaces")
        if self.embedder.kind == "hash" and self.embedder.dim != self.dim:
            raise ValueError("hash embedder dim must match registry dim")

    @property
    def effective_k_max(self) -> int:
        return self.k_max if self.k_max is not None else 4 * self.anchors

    @property
    def effective_retrain_at(self) -> int:
        return self.retrain_at if self.retrain_at is not None else 4 * self.anchors

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "subspaces": self.subspaces,
            "anchors": self.anchors,
            "k_max": self.k_max,
            "seed": self.seed,
            "retrain_at": self.retrain_at,
            "tau_percentile": self.tau_percentile,
            "overfetch": self.overfetch,
            "embedder": {
                "kind": self.embedder.kind,
                "dim": self.embedder.dim,
                "endpoint": self.embedder.endpoint,
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegistryConfig":
        emb = data.get("embedder", {})
        return cls(
            dim=data.get("dim", 64),
            subspaces=data.get("subspaces", 8),
            anchors=data.get("anchors", 16),
            k_max=data.get("k_max"),
            seed=data.get("seed", 0),
            retrain_at=data.get("retrain_at"),
            tau_percentile=data.get("tau_percentile", 95.0),
            overfetch=data.get("overfetch", 4),
            embedder=EmbedderConfig(
                kind=emb.get("kind", "hash"),
                dim=emb.get("dim", data.get("dim", 64)),
                endpoint=emb.get("endpoint", ""),
            ),
        )


@dataclass(frozen=True)
class RegistryEvent:
    seq: int
    kind: str
    agent_id: str
    payload: dict | None
    ts: int  # UTC milliseconds

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "kind": self.kind, "agent_id": self.agent_id, "payload": self.payload, "ts": self.ts},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "RegistryEvent":
        obj = json.loads(line)
        return cls(obj["seq"], obj["kind"], obj["agent_id"], obj.get("payload"), obj["ts"])


@dataclass(frozen=True)
class RegistryState:
    codebook: cbk.Codebook
    index: AgentIndex
    adapter: QueryAdapter
    last_seq: int
    retrained: bool


@dataclass(frozen=True)
class RegistrationResult:
    agent_id: str
    code: cbk.AgentCode
    seq: int
    codebook_version: int


class Registry:
    """Single-node capability registry with an append-only event log."""

    def __init__(
        self,
        config: RegistryConfig | None = None,
        data_dir: str | Path | None = None,
        embedder: HashEmbedder | RemoteEmbedder | None = None,
    ):
        self.config = config or RegistryConfig()
        self.embedder = embedder if embedder is not None else build_embedder(self.config.embedder)
        self.data_dir = Path(data_dir) if data_dir is not None else None
        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._events: list[RegistryEvent] = []
        self._state = RegistryState(
            codebook=cbk.bootstrap_codebook(
                self.config.dim, self.config.subspaces, self.config.anchors, self.config.effective_k_max
            ),
            index=AgentIndex(),
            adapter=QueryAdapter.identity(self.config.dim),
            last_seq=0,
            retrained=False,
        )

    # -- read side -------------------------------------------------------

    @property
    def state(self) -> RegistryState:
        return self._state

    def agent_count(self) -> int:
        return len(self._state.index)

    def get_profile(self, agent_id: str) -> AgentProfile:
        entry = self._state.index.get(agent_id)
        if entry is None:
            raise UnknownId(f"unknown agent: {agent_id}")
        return entry.profile

    def reconstruction(self, agent_id: str) -> np.ndarray:
        state = self._state
        entry = state.index.get(agent_id)
        if entry is None:
            raise UnknownId(f"unknown agent: {agent_id}")
        return cbk.reconstruct(state.codebook, entry.code)

    def event_feed(self, since_seq: int = 0) -> list[RegistryEvent]:
        if since_seq < 0:
            raise ValueError("since_seq must be >= 0")
        return self._events[since_seq:]

    def query(self, spec: QuerySpec) -> list[RankedResult]:
        state = self._state
        if len(state.index) == 0:
            return []
        text = canonical_task_text(spec.task_text)
        q = self._embed(text)
        adapted = adapt_query(state.adapter, q)
        n = max(spec.top_k * self.config.overfetch, 50)
        hits = search(state.index, state.codebook, adapted, n)
        profiles = {h.agent_id: state.index.get(h.agent_id).profile for h in hits}
        return rank(hits, profiles, spec)

    # -- write side ------------------------------------------------------

    def register_agent(self, doc: dict | bytes | str) -> RegistrationResult:
        profile = self._parse(doc)
        with self._lock:
            state = self._state
            if profile.agent_id in state.index:
                raise DuplicateId(f"agent already registered: {profile.agent_id}")
            vec = self._embed(canonical_text(profile))
            new_state, code, seq = self._do_register(state, profile, vec)
            self._commit(new_state, RegistryEvent(seq, "register", profile.agent_id, to_document(profile), self._now()))
        return RegistrationResult(profile.agent_id, code, seq, new_state.codebook.version)

    def update_agent(self, agent_id: str, doc: dict | bytes | str) -> RegistrationResult:
        profile = self._parse(doc)
        if profile.agent_id != agent_id:
            raise OutOfRangeValue("agent_id", "document id does not match the update target")
        with self._lock:
            state = self._state
            if agent_id not in state.index:
                raise UnknownId(f"unknown agent: {agent_id}")
            vec = self._embed(canonical_text(profile))
            new_state, code, seq = self._do_update(state, profile, vec)
            self._commit(new_state, RegistryEvent(seq, "update", agent_id, to_document(profile), self._now()))
        return RegistrationResult(agent_id, code, seq, new_state.codebook.version)

    def deregister_agent(self, agent_id: str) -> int:
        with self._lock:
            state = self._state
            if agent_id not in state.index:
                raise UnknownId(f"unknown agent: {agent_id}")
            new_state, seq = self._do_deregister(state, agent_id)
            self._commit(new_state, RegistryEvent(seq, "deregister", agent_id, None, self._now()))
        return seq

    def record_endorsement(self, agent_id: str, score: float) -> float:
        if not isinstance(score, (int, float)) or isinstance(score, bool) or not 0.0 <= score <= 1.0:
            raise OutOfRangeValue("score", "endorsement score must be in [0, 1]")
        with self._lock:
            state = self._state
            if agent_id not in state.index:
                raise UnknownId(f"unknown agent: {agent_id}")
            new_state, seq, credibility = self._do_endorse(state, agent_id, float(score))
            self._commit(new_state, RegistryEvent(seq, "endorse", agent_id, {"score": float(score)}, self._now()))
        return credibility

    def set_adapter(self, adapter: QueryAdapter) -> None:
        """Publish a trained query adapter (offline training, atomic swap)."""
        if adapter.dim != self.config.dim:
            raise DimensionMismatch(f"adapter dim {adapter.dim} != registry dim {self.config.dim}")
        with self._lock:
            self._state = replace(self._state, adapter=adapter)

    def rebuild_codebook(self) -> int:
        """Explicit retrain over all live agents; every code is re-issued."""
        with self._lock:
            self._state = self._retrain(self._state)
        return self._state.codebook.version

    # -- core state transitions (shared by live ops and replay) ----------

    def _do_register(self, state: RegistryState, profile: AgentProfile, vec: EmbeddingVector):
        cb, _ = cbk.incremental_update(state.codebook, [vec], self.config.effective_k_max)
        code, _ = cbk.assign_code(cb, vec)
        seq = state.last_seq + 1
        index = state.index.insert(IndexEntry(profile.agent_id, code, profile, seq))
        new_state = replace(state, codebook=cb, index=index, last_seq=seq)
        retrain_at = self.config.effective_retrain_at
        if not new_state.retrained and retrain_at and len(index) >= retrain_at:
            new_state = self._retrain(new_state)
        return new_state, new_state.index.get(profile.agent_id).code, seq

    def _do_update(self, state: RegistryState, profile: AgentProfile, vec: EmbeddingVector):
        cb, _ = cbk.incremental_update(state.codebook, [vec], self.config.effective_k_max)
        code, _ = cbk.assign_code(cb, vec)
        seq = state.last_seq + 1
        index = state.index.replace(IndexEntry(profile.agent_id, code, profile, seq))
        return replace(state, codebook=cb, index=index, last_seq=seq), code, seq

    def _do_deregister(self, state: RegistryState, agent_id: str):
        seq = state.last_seq + 1
        return replace(state, index=state.index.remove(agent_id), last_seq=seq), seq

    def _do_endorse(self, state: RegistryState, agent_id: str, score: float):
        entry = state.index.get(agent_id)
        credibility = 0.9 * entry.profile.credibility + 0.1 * score
        profile = replace(entry.profile, credibility=credibility)
        seq = state.last_seq + 1
        index = state.index.replace(replace(entry, profile=profile))
        return replace(state, index=index, last_seq=seq), seq, credibility

    def _retrain(self, state: RegistryState) -> RegistryState:
        entries = state.index.entries()  # sorted by agent_id: deterministic order
        texts = [canonical_text(e.profile) for e in entries]
        vectors = self._embed_batch(texts)
        cb = cbk.rebuild(
            vectors,
            self.config.subspaces,
            self.config.anchors,
            self.config.seed,
            prev_version=state.codebook.version,
            k_max=self.config.effective_k_max,
            tau_percentile=self.config.tau_percentile,
        )
        # refinement sweep: members the fresh codebook quantizes poorly grow
        # anchors right away, exactly as a new arrival would
        poor = [vec for vec in vectors if cbk.assign_code(cb, vec)[1].total_error > cb.tau]
        if poor:
            cb, _ = cbk.incremental_update(cb, poor, self.config.effective_k_max)
        codes = {}
        for entry, vec in zip(entries, vectors):
            code, _ = cbk.assign_code(cb, vec)
            codes[entry.agent_id] = code
        return replace(state, codebook=cb, index=state.index.reassign_codes(codes), retrained=True)

    # -- plumbing --------------------------------------------------------

    def _parse(self, doc: dict | bytes | str) -> AgentProfile:
        if isinstance(doc, (bytes, str)) and not isinstance(doc, dict):
            return profile_from_document(doc)
        return validate_profile(doc)

    def _embed(self, text: str) -> EmbeddingVector:
        try:
            vec = self.embedder.embed_text(text)
        except RemoteUnavailable as exc:
            raise EmbedderUnavailable(str(exc)) from exc
        if vec.dim != self.config.dim:
            raise DimensionMismatch(f"embedder produced dim {vec.dim}, registry configured for {self.config.dim}")
        return vec

    def _embed_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        try:
            vectors = self.embedder.embed_batch(texts)
        except RemoteUnavailable as exc:
            raise EmbedderUnavailable(str(exc)) from exc
        for vec in vectors:
            if vec.dim != self.config.dim:
                raise DimensionMismatch(f"embedder produced dim {vec.dim}, registry configured for {self.config.dim}")
        return vectors

    def _now(self) -> int:
        now = int(time.time() * 1000)
        if self._events and now < self._events[-1].ts:
            now = self._events[-1].ts
        return now

    def _commit(self, new_state: RegistryState, event: RegistryEvent) -> None:
        if self.data_dir is not None:
            with open(self.data_dir / "events.log", "a", encoding="utf-8") as fh:
                fh.write(event.to_json() + "\n")
        self._events.append(event)
        self._state = new_state

    # -- persistence -----------------------------------------------------

    def snapshot(self, directory: str | Path | None = None) -> Path:
        """Write a checksummed snapshot; the event log itself is left in place."""
        if directory is None:
            if self.data_dir is None:
                raise RegistryError("no snapshot directory given and registry has no data dir")
            directory = self.data_dir / "snapshot"
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with self._lock:
            state = self._state
            cbk.save_codebook(state.codebook, directory / "codebook.bin")
            save_adapter(state.adapter, directory / "adapter.bin")
            entries = state.index.entries()
            agents = [
                {
                    "agent_id": e.agent_id,
                    "registered_seq": e.registered_seq,
                    "profile": to_document(e.profile),
                    "code_version": e.code.codebook_version,
                }
                for e in entries
            ]
            (directory / "agents.json").write_text(json.dumps(agents, sort_keys=True))
            _write_codes(directory / "codes.bin", [e.code.indices for e in entries], state.codebook)
            manifest = {
                "format": SNAPSHOT_FORMAT,
                "format_version": SNAPSHOT_FORMAT_VERSION,
                "last_seq": state.last_seq,
                "retrained": state.retrained,
                "config": self.config.to_dict(),
                "checksums": {
                    name: _sha256(directory / name)
                    for name in ("codebook.bin", "adapter.bin", "agents.json", "codes.bin")
                },
            }
            (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
        return directory

    @classmethod
    def restore(
        cls,
        data_dir: str | Path,
        config: RegistryConfig | None = None,
        embedder: HashEmbedder | RemoteEmbedder | None = None,
    ) -> "Registry":
        """Rebuild a registry from data_dir: snapshot (if any) plus log replay."""
        data_dir = Path(data_dir)
        snapshot_dir = data_dir / "snapshot"
        log_path = data_dir / "events.log"
        events: list[RegistryEvent] = []
        if log_path.exists():
            with open(log_path, encoding="utf-8") as fh:
                events = [RegistryEvent.from_json(line) for line in fh if line.strip()]

        if (snapshot_dir / "manifest.json").exists():
            registry = cls._from_snapshot(snapshot_dir, embedder=embedder)
            registry.data_dir = data_dir
        else:
            if config is None:
                raise RegistryError("no snapshot found; restore needs a config to replay the log")
            registry = cls(config=config, embedder=embedder)
            registry.data_dir = data_dir

        registry._events = events
        for event in events:
            if event.seq > registry._state.last_seq:
                registry._apply(event)
        return registry

    @classmethod
    def _from_snapshot(cls, snapshot_dir: Path, embedder=None) -> "Registry":
        manifest = json.loads((snapshot_dir / "manifest.json").read_text())
        if manifest.get("format") != SNAPSHOT_FORMAT or manifest.get("format_version") != SNAPSHOT_FORMAT_VERSION:
            raise VersionSkew(f"unknown snapshot format: {manifest.get('format')}/{manifest.get('format_version')}")
        for name, digest in manifest["checksums"].items():
            path = snapshot_dir / name
            if not path.exists() or _sha256(path) != digest:
                raise CorruptSnapshot(f"checksum mismatch for {name}")
        config = RegistryConfig.from_dict(manifest["config"])
        registry = cls(config=config, embedder=embedder)
        codebook = cbk.load_codebook(snapshot_dir / "codebook.bin")
        adapter = load_adapter(snapshot_dir / "adapter.bin")
        agents = json.loads((snapshot_dir / "agents.json").read_text())
        codes = _read_codes(snapshot_dir / "codes.bin")
        if len(codes) != len(agents):
            raise CorruptSnapshot("codes.bin and agents.json disagree on agent count")
        index = AgentIndex()
        for record, indices in zip(agents, codes):
            profile = validate_profile(record["profile"])
            code = cbk.AgentCode(tuple(indices), record["code_version"])
            index = index.insert(IndexEntry(record["agent_id"], code, profile, record["registered_seq"]))
        registry._state = RegistryState(
            codebook=codebook,
            index=index,
            adapter=adapter,
            last_seq=manifest["last_seq"],
            retrained=manifest["retrained"],
        )
        return registry

    def _apply(self, event: RegistryEvent) -> None:
        """Replay one logged event through the live state transitions."""
        state = self._state
        if event.seq != state.last_seq + 1:
            raise RegistryError(f"event gap: expected seq {state.last_seq + 1}, got {event.seq}")
        if event.kind == "register":
            profile = validate_profile(event.payload)
            vec = self._embed(canonical_text(profile))
            new_state, _, _ = self._do_register(state, profile, vec)
        elif event.kind == "update":
            profile = validate_profile(event.payload)
            vec = self._embed(canonical_text(profile))
            new_state, _, _ = self._do_update(state, profile, vec)
        elif event.kind == "deregister":
            new_state, _ = self._do_deregister(state, event.agent_id)
        elif event.kind == "endorse":
            new_state, _, _ = self._do_endorse(state, event.agent_id, event.payload["score"])
        else:
            raise RegistryError(f"unknown event kind: {event.kind}")
        self._state = new_state


def _write_codes(path: Path, codes: list[tuple[int, ...]], cb: cbk.Codebook) -> None:
    """Pure code storage: a tiny header plus one unsigned integer per subspace
    per agent. At the default geometry this is 8 bytes per agent."""
    max_anchor = max(cb.anchor_counts())
    dtype = "u1" if max_anchor <= 256 else ("<u2" if max_anchor <= 65536 else "<u4")
    header = json.dumps(
        {"count": len(codes), "subspaces": cb.subspaces, "dtype": dtype}, separators=(",", ":")
    ).encode()
    arr = np.array(codes, dtype=dtype) if codes else np.empty((0, cb.subspaces), dtype=dtype)
    with open(path, "wb") as fh:
        fh.write(CODES_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(arr.tobytes())


def _read_codes(path: Path) -> list[tuple[int, ...]]:
    with open(path, "rb") as fh:
        if fh.read(4) != CODES_MAGIC:
            raise CorruptSnapshot("codes.bin has a bad magic number")
        header_len = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(header_len))
        arr = np.frombuffer(fh.read(), dtype=header["dtype"]).reshape(header["count"], header["subspaces"])
    return [tuple(int(x) for x in row) for row in arr]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


__all__ = [
    "Registry",
    "RegistryConfig",
    "RegistryEvent",
    "RegistryState",
    "RegistrationResult",
    "RegistryError",
    "EmbedderUnavailable",
    "CorruptSnapshot",
    "VersionSkew",
    "QuerySpec",
    "RankWeights",
]
