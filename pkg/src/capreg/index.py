"""Agent index: id -> code -> profile table, ADC search, multi-criteria ranking.

Search never touches raw embeddings: a query builds per-subspace inner-product
lookup tables against the codebook anchors, and each stored code is scored by
summing M table entries. For any stored code this equals the inner product of
the query with the code's reconstruction, so the scan is exact over
reconstructed vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .codebook import AgentCode, Codebook, reconstruction_norm
from .embed import DimensionMismatch, EmbeddingVector
from .profile import AgentProfile


class IndexLookupError(Exception):
    pass


class DuplicateId(IndexLookupError):
    pass


class UnknownId(IndexLookupError):
    pass


@dataclass(frozen=True)
class IndexEntry:
    agent_id: str
    code: AgentCode
    profile: AgentProfile
    registered_seq: int


@dataclass(frozen=True)
class RankWeights:
    """Fusion weights over (semantic, credibility, context, availability); sum to 1."""

    w_sem: float = 0.7
    w_cred: float = 0.1
    w_ctx: float = 0.1
    w_avail: float = 0.1

    def __post_init__(self):
        for name, w in self.as_dict().items():
            if w < 0:
                raise ValueError(f"{name} must be non-negative")
        if abs(self.w_sem + self.w_cred + self.w_ctx + self.w_avail - 1.0) > 1e-9:
            raise ValueError("rank weights must sum to 1")

    def as_dict(self) -> dict[str, float]:
        return {
            "w_sem": self.w_sem,
            "w_cred": self.w_cred,
            "w_ctx": self.w_ctx,
            "w_avail": self.w_avail,
        }


SEM_ONLY = RankWeights(1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class RequiredConstraints:
    """Optional hard requirements a task places on candidates."""

    max_latency_ms: int | None = None
    placement: str | None = None
    min_free_memory_mb: int | None = None

    def specified(self) -> int:
        return sum(v is not None for v in (self.max_latency_ms, self.placement, self.min_free_memory_mb))

    def satisfied(self, profile: AgentProfile) -> int:
        c = profile.constraints
        count = 0
        if self.max_latency_ms is not None and c.latency_tolerance_ms <= self.max_latency_ms:
            count += 1
        if self.placement is not None and c.placement == self.placement:
            count += 1
        if self.min_free_memory_mb is not None and c.free_memory_mb() >= self.min_free_memory_mb:
            count += 1
        return count


@dataclass(frozen=True)
class QuerySpec:
    task_text: str
    top_k: int = 10
    strict_constraints: bool = False
    required: RequiredConstraints | None = None
    weights: RankWeights = field(default_factory=RankWeights)

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class SearchHit:
    agent_id: str
    sem: float  # raw inner product of query with the code's reconstruction
    recon_norm: float


@dataclass(frozen=True)
class RankedResult:
    agent_id: str
    sem_score: float
    cred_score: float
    ctx_score: float
    avail_score: float
    fused: float

    def as_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "sem_score": self.sem_score,
            "cred_score": self.cred_score,
            "ctx_score": self.ctx_score,
            "avail_score": self.avail_score,
            "fused": self.fused,
        }


_AVAILABILITY_SCORE = {"available": 1.0, "busy": 0.5, "offline": 0.0}


class AgentIndex:
    """Immutable snapshot of the id -> entry table with a compiled scan cache.

    Mutations return a new AgentIndex; readers holding an old snapshot are
    never disturbed. The compiled (ids, codes, norms) arrays are built lazily
    on first search and are safe to cache because the snapshot never changes.
    """

    def __init__(self, entries: dict[str, IndexEntry] | None = None):
        self._entries: dict[str, IndexEntry] = dict(entries) if entries else {}
        self._compiled: tuple | None = None

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, agent_id: str) -> bool:
        return agent_id in self._entries

    def get(self, agent_id: str) -> IndexEntry | None:
        return self._entries.get(agent_id)

    def entries(self) -> list[IndexEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def insert(self, entry: IndexEntry) -> "AgentIndex":
        if entry.agent_id in self._entries:
            raise DuplicateId(f"agent already registered: {entry.agent_id}")
        updated = dict(self._entries)
        updated[entry.agent_id] = entry
        return AgentIndex(updated)

    def remove(self, agent_id: str) -> "AgentIndex":
        if agent_id not in self._entries:
            raise UnknownId(f"unknown agent: {agent_id}")
        updated = dict(self._entries)
        del updated[agent_id]
        return AgentIndex(updated)

    def replace(self, entry: IndexEntry) -> "AgentIndex":
        if entry.agent_id not in self._entries:
            raise UnknownId(f"unknown agent: {entry.agent_id}")
        updated = dict(self._entries)
        updated[entry.agent_id] = entry
        return AgentIndex(updated)

    def reassign_codes(self, codes: dict[str, AgentCode]) -> "AgentIndex":
        """Bulk re-issue after a codebook rebuild."""
        updated = {}
        for agent_id, entry in self._entries.items():
            updated[agent_id] = replace(entry, code=codes[agent_id])
        return AgentIndex(updated)

    def _compile(self, cb: Codebook) -> tuple:
        if self._compiled is None or self._compiled[0] != cb.version:
            ids = sorted(self._entries)
            if ids:
                codes = np.array([self._entries[a].code.indices for a in ids], dtype=np.int64)
                norms_sq_table = _padded_anchor_norms_sq(cb)
                norms = np.sqrt(
                    norms_sq_table[np.arange(cb.subspaces)[None, :], codes].sum(axis=1)
                )
            else:
                codes = np.empty((0, cb.subspaces), dtype=np.int64)
                norms = np.empty(0)
            self._compiled = (cb.version, ids, codes, norms)
        return self._compiled


def _padded_anchor_norms_sq(cb: Codebook) -> np.ndarray:
    width = max(cb.anchor_counts())
    table = np.zeros((cb.subspaces, width))
    for m, anchors in enumerate(cb.anchors):
        table[m, : anchors.shape[0]] = (anchors**2).sum(axis=1)
    return table


def adc_tables(cb: Codebook, q: EmbeddingVector | np.ndarray) -> list[np.ndarray]:
    """Per-subspace lookup tables: tables[m][j] = <q_m, anchor_j>."""
    arr = q.values if isinstance(q, EmbeddingVector) else np.asarray(q, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != cb.dim:
        raise DimensionMismatch(f"query has shape {arr.shape}, codebook dimension is {cb.dim}")
    d = cb.sub_dim
    return [cb.anchors[m] @ arr[m * d : (m + 1) * d] for m in range(cb.subspaces)]


def adc_score(tables: list[np.ndarray], code: AgentCode) -> float:
    return float(sum(tables[m][j] for m, j in enumerate(code.indices)))


def search(index: AgentIndex, cb: Codebook, q: EmbeddingVector | np.ndarray, n: int) -> list[SearchHit]:
    """Exact top-n by ADC semantic score over all entries; ties order by agent_id.

    An empty index yields an empty list, not an error.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(index) == 0:
        return []
    _, ids, codes, norms = index._compile(cb)
    tables = adc_tables(cb, q)
    width = max(cb.anchor_counts())
    padded = np.zeros((cb.subspaces, width))
    for m, t in enumerate(tables):
        padded[m, : t.shape[0]] = t
    sems = padded[np.arange(cb.subspaces)[None, :], codes].sum(axis=1)

    order = np.lexsort((ids, -sems))  # primary: sem desc; ties: agent_id asc
    top = order[:n]
    return [SearchHit(ids[i], float(sems[i]), float(norms[i])) for i in top]


def rank(
    candidates: list[SearchHit],
    profiles: dict[str, AgentProfile],
    spec: QuerySpec,
) -> list[RankedResult]:
    """Fuse semantic, credibility, context and availability scores.

    sem_score maps the raw inner product to (1 + cosine)/2 using the
    reconstruction norm (queries are unit norm), independent of the candidate
    set. With strict_constraints, candidates violating any specified
    requirement are dropped before ranking.
    """
    required = spec.required or RequiredConstraints()
    specified = required.specified()
    results = []
    for hit in candidates:
        p = profiles[hit.agent_id]
        satisfied = required.satisfied(p) if specified else 0
        if spec.strict_constraints and satisfied < specified:
            continue
        cos = hit.sem / hit.recon_norm if hit.recon_norm > 1e-12 else 0.0
        sem_score = min(1.0, max(0.0, (1.0 + cos) / 2.0))
        ctx_score = satisfied / specified if specified else 1.0
        avail_score = _AVAILABILITY_SCORE[p.availability]
        w = spec.weights
        fused = (
            w.w_sem * sem_score
            + w.w_cred * p.credibility
            + w.w_ctx * ctx_score
            + w.w_avail * avail_score
        )
        results.append(
            RankedResult(
                agent_id=hit.agent_id,
                sem_score=sem_score,
                cred_score=p.credibility,
                ctx_score=ctx_score,
                avail_score=avail_score,
                fused=fused,
            )
        )
    results.sort(key=lambda r: (-r.fused, r.agent_id))
    return results[: spec.top_k]


def insert_entry(index: AgentIndex, entry: IndexEntry) -> AgentIndex:
    return index.insert(entry)


def remove_entry(index: AgentIndex, agent_id: str) -> AgentIndex:
    return index.remove(agent_id)


def replace_entry(index: AgentIndex, entry: IndexEntry) -> AgentIndex:
    return index.replace(entry)


def reconstruction_norm_of(cb: Codebook, code: AgentCode) -> float:
    return reconstruction_norm(cb, code)
