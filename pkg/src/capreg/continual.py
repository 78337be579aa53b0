"""Continual query adaptation: affine adapter, replay buffer, damped updates.

The adapter maps task-query embeddings toward the reconstruction space of the
correct agents (q' = normalize(A q + b)) and is trained contrastively against
in-batch negatives. A bounded replay buffer and Fisher-style per-parameter
importance keep long-registered agents retrievable as the population drifts.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .embed import EmbeddingVector

ADAPTER_MAGIC = b"ADP1"


class ContinualError(Exception):
    pass


class NoNegatives(ContinualError):
    pass


class DegenerateOutput(ContinualError):
    pass


@dataclass(frozen=True)
class QueryAdapter:
    matrix: np.ndarray  # (D, D)
    bias: np.ndarray  # (D,)
    version: int = 0

    def __post_init__(self):
        self.matrix.setflags(write=False)
        self.bias.setflags(write=False)

    @property
    def dim(self) -> int:
        return int(self.bias.shape[0])

    @classmethod
    def identity(cls, dim: int) -> "QueryAdapter":
        return cls(np.eye(dim), np.zeros(dim), version=0)

    def is_identity(self) -> bool:
        return self.version == 0 and not self.bias.any() and np.array_equal(self.matrix, np.eye(self.dim))


@dataclass(frozen=True)
class AdapterGradient:
    matrix: np.ndarray
    bias: np.ndarray


@dataclass(frozen=True)
class ImportanceVector:
    """Non-negative accumulated squared gradients, one per adapter parameter."""

    matrix: np.ndarray
    bias: np.ndarray

    @classmethod
    def zeros(cls, dim: int) -> "ImportanceVector":
        return cls(np.zeros((dim, dim)), np.zeros(dim))


@dataclass(frozen=True)
class TrainSample:
    """One supervision record: a query embedding and its agent's reconstruction."""

    query: np.ndarray
    target_agent_id: str
    target_reconstruction: np.ndarray


@dataclass
class ReplayEntry:
    query: np.ndarray
    target_agent_id: str
    target_reconstruction: np.ndarray
    insert_round: int


@dataclass(frozen=True)
class AdapterTrainConfig:
    lr: float = 1e-2
    temperature: float = 0.1
    replay_m: int = 4
    damping: float = 1.0
    steps: int = 1
    buffer_capacity: int = 512


@dataclass(frozen=True)
class RoundReport:
    round_index: int
    loss_before: float
    loss_after: float
    replay_count: int
    batch_size: int
    adapter_version: int

    def as_dict(self) -> dict:
        return {
            "round": self.round_index,
            "loss_before": self.loss_before,
            "loss_after": self.loss_after,
            "replay_count": self.replay_count,
            "batch_size": self.batch_size,
            "adapter_version": self.adapter_version,
        }


def _as_array(q: EmbeddingVector | np.ndarray) -> np.ndarray:
    return q.values if isinstance(q, EmbeddingVector) else np.asarray(q, dtype=np.float64)


def adapt_query(adapter: QueryAdapter, q: EmbeddingVector) -> EmbeddingVector:
    """q' = normalize(A q + b); the identity adapter returns q unchanged."""
    arr = _as_array(q)
    z = adapter.matrix @ arr + adapter.bias
    norm = float(np.linalg.norm(z))
    if norm < 1e-9:
        raise DegenerateOutput("adapted query collapsed to (near) zero")
    provider = q.provider_id if isinstance(q, EmbeddingVector) else "raw"
    return EmbeddingVector(z / norm, provider)


def _sample_loss_grad(
    adapter: QueryAdapter,
    query: np.ndarray,
    candidates: np.ndarray,
    temperature: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Softmax cross-entropy with the positive at row 0 of candidates.

    Scores are s_j = <u, r_j>/T with u = z/||z||, z = A q + b. The gradient
    flows through the normalization: du/dz = (I - u u^T)/||z||.
    """
    z = adapter.matrix @ query + adapter.bias
    norm = float(np.linalg.norm(z))
    if norm < 1e-12:
        raise DegenerateOutput("adapter output is zero during training")
    u = z / norm
    scores = candidates @ u / temperature
    shifted = scores - scores.max()
    exp = np.exp(shifted)
    probs = exp / exp.sum()
    loss = float(-np.log(max(probs[0], 1e-300)))
    dscore = probs.copy()
    dscore[0] -= 1.0
    du = candidates.T @ dscore / temperature
    dz = (du - u * float(u @ du)) / norm
    return loss, np.outer(dz, query), dz


def loss_and_grad(
    adapter: QueryAdapter,
    batch: list[tuple[np.ndarray, np.ndarray, list[np.ndarray]]],
    temperature: float = 0.1,
) -> tuple[float, AdapterGradient]:
    """Mean contrastive loss and exact analytic gradients over a batch.

    Each batch element is (query, positive reconstruction, negative
    reconstructions); every element needs at least one negative.
    """
    if not batch:
        raise ContinualError("empty training batch")
    dim = adapter.dim
    g_matrix = np.zeros((dim, dim))
    g_bias = np.zeros(dim)
    total = 0.0
    for i, (query, positive, negatives) in enumerate(batch):
        if len(negatives) == 0:
            raise NoNegatives(f"batch[{i}] has no negative reconstructions")
        candidates = np.vstack([np.asarray(positive, dtype=np.float64)] + [np.asarray(n) for n in negatives])
        loss, gm, gb = _sample_loss_grad(adapter, _as_array(query), candidates, temperature)
        total += loss
        g_matrix += gm
        g_bias += gb
    n = len(batch)
    return total / n, AdapterGradient(g_matrix / n, g_bias / n)


class ReplayBuffer:
    """Bounded memory of past (query, target) records, reservoir-sampled.

    Every streamed record has admission probability capacity/total_seen, so
    the buffer stays an unbiased sample of everything observed.
    """

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("buffer capacity must be >= 1")
        self.capacity = capacity
        self.entries: list[ReplayEntry] = []
        self.total_seen = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, entry: ReplayEntry) -> None:
        self.total_seen += 1
        if len(self.entries) < self.capacity:
            self.entries.append(entry)
        else:
            j = int(self._rng.integers(self.total_seen))
            if j < self.capacity:
                self.entries[j] = entry

    def query_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.empty((0, 0))
        return np.stack([e.query for e in self.entries])


def select_replay(buffer: ReplayBuffer, new_samples: list[TrainSample], m: int) -> list[ReplayEntry]:
    """For each new sample, its m nearest buffer entries by query cosine.

    Deduplicated across samples; ordered by best similarity descending, then
    insert_round ascending, then target id (total determinism).
    """
    if m <= 0 or not buffer.entries or not new_samples:
        return []
    queries = np.stack([_as_array(s.query) for s in new_samples])
    stored = buffer.query_matrix()
    q_norms = np.linalg.norm(queries, axis=1)
    s_norms = np.linalg.norm(stored, axis=1)
    sims = (queries @ stored.T) / np.outer(np.maximum(q_norms, 1e-12), np.maximum(s_norms, 1e-12))

    best: dict[int, float] = {}
    take = min(m, stored.shape[0])
    for row in sims:
        top = np.argsort(-row, kind="stable")[:take]
        for j in top:
            j = int(j)
            if j not in best or row[j] > best[j]:
                best[j] = float(row[j])
    chosen = sorted(
        best.items(),
        key=lambda item: (
            -item[1],
            buffer.entries[item[0]].insert_round,
            buffer.entries[item[0]].target_agent_id,
        ),
    )
    return [buffer.entries[j] for j, _ in chosen]


def update_importance(
    omega: ImportanceVector,
    adapter: QueryAdapter,
    historical_pairs: list[tuple[np.ndarray, np.ndarray, list[np.ndarray]]],
    temperature: float = 0.1,
) -> ImportanceVector:
    """Fisher-style accumulation: omega += mean over pairs of squared gradients."""
    if not historical_pairs:
        raise ContinualError("historical_pairs must be non-empty")
    dim = adapter.dim
    acc_matrix = np.zeros((dim, dim))
    acc_bias = np.zeros(dim)
    for pair in historical_pairs:
        _, grad = loss_and_grad(adapter, [pair], temperature)
        acc_matrix += grad.matrix**2
        acc_bias += grad.bias**2
    n = len(historical_pairs)
    return ImportanceVector(omega.matrix + acc_matrix / n, omega.bias + acc_bias / n)


def _with_negatives(samples: list[TrainSample]) -> list[tuple[np.ndarray, np.ndarray, list[np.ndarray]]]:
    """In-batch negatives: every other sample's reconstruction with a different target."""
    batch = []
    for i, sample in enumerate(samples):
        negatives = [
            other.target_reconstruction
            for j, other in enumerate(samples)
            if j != i and other.target_agent_id != sample.target_agent_id
        ]
        batch.append((_as_array(sample.query), sample.target_reconstruction, negatives))
    return batch


def inbatch_loss_and_grad(
    adapter: QueryAdapter,
    queries: np.ndarray,
    positives: np.ndarray,
    target_ids: list[str],
    temperature: float,
) -> tuple[float, AdapterGradient]:
    """Vectorized equivalent of loss_and_grad with in-batch negatives.

    Candidates for row i are its own positive plus every other row whose
    target differs; agrees with the per-sample reference to float precision
    (equivalence is regression-tested).
    """
    n = queries.shape[0]
    z = queries @ adapter.matrix.T + adapter.bias
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateOutput("adapter output is zero during training")
    u = z / norms[:, None]
    scores = u @ positives.T / temperature

    ids = np.asarray(target_ids)
    valid = ids[None, :] != ids[:, None]
    np.fill_diagonal(valid, True)
    if not np.all(valid.sum(axis=1) >= 2):
        bad = int(np.argmin(valid.sum(axis=1)))
        raise NoNegatives(f"batch[{bad}] has no negative reconstructions")

    scores = np.where(valid, scores, -np.inf)
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    own = np.clip(np.diag(probs), 1e-300, None)
    loss = float(-np.log(own).mean())

    dscore = probs.copy()
    dscore[np.arange(n), np.arange(n)] -= 1.0
    du = dscore @ positives / temperature
    dz = (du - u * (u * du).sum(axis=1, keepdims=True)) / norms[:, None]
    g_matrix = dz.T @ queries / n
    g_bias = dz.mean(axis=0)
    return loss, AdapterGradient(g_matrix, g_bias)


def train_round(
    adapter: QueryAdapter,
    omega: ImportanceVector,
    buffer: ReplayBuffer,
    new_samples: list[TrainSample],
    cfg: AdapterTrainConfig,
    round_index: int = 0,
) -> tuple[QueryAdapter, RoundReport]:
    """One training round: new samples plus replayed neighbors, damped descent.

    The update is theta <- theta - lr * g / (1 + damping * omega), so
    parameters important for historical retrieval move less. New samples are
    afterwards offered to the buffer via reservoir sampling.
    """
    if not new_samples:
        raise ContinualError("new_samples must be non-empty")
    replayed = select_replay(buffer, new_samples, cfg.replay_m)
    combined = list(new_samples) + [
        TrainSample(e.query, e.target_agent_id, e.target_reconstruction) for e in replayed
    ]
    queries = np.stack([_as_array(s.query) for s in combined])
    positives = np.stack([np.asarray(s.target_reconstruction, dtype=np.float64) for s in combined])
    targets = [s.target_agent_id for s in combined]

    loss_before = None
    matrix = adapter.matrix.copy()
    bias = adapter.bias.copy()
    current = adapter
    for _ in range(max(1, cfg.steps)):
        step_loss, grad = inbatch_loss_and_grad(current, queries, positives, targets, cfg.temperature)
        if loss_before is None:
            loss_before = step_loss
        matrix -= cfg.lr * grad.matrix / (1.0 + cfg.damping * omega.matrix)
        bias -= cfg.lr * grad.bias / (1.0 + cfg.damping * omega.bias)
        current = QueryAdapter(matrix.copy(), bias.copy(), adapter.version)
    updated = QueryAdapter(matrix, bias, adapter.version + 1)
    loss_after, _ = inbatch_loss_and_grad(updated, queries, positives, targets, cfg.temperature)

    for sample in new_samples:
        buffer.add(
            ReplayEntry(
                query=_as_array(sample.query).copy(),
                target_agent_id=sample.target_agent_id,
                target_reconstruction=np.asarray(sample.target_reconstruction, dtype=np.float64).copy(),
                insert_round=round_index,
            )
        )

    report = RoundReport(
        round_index=round_index,
        loss_before=loss_before,
        loss_after=loss_after,
        replay_count=len(replayed),
        batch_size=len(combined),
        adapter_version=updated.version,
    )
    return updated, report


def save_adapter(adapter: QueryAdapter, path) -> None:
    """Binary snapshot: magic, JSON header {dim, version}, row-major A then b."""
    header = json.dumps({"dim": adapter.dim, "version": adapter.version}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(ADAPTER_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(adapter.matrix, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(adapter.bias, dtype="<f8").tobytes())


def load_adapter(path) -> QueryAdapter:
    with open(path, "rb") as fh:
        if fh.read(4) != ADAPTER_MAGIC:
            raise ContinualError("not an adapter snapshot")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len))
        dim = header["dim"]
        matrix = np.frombuffer(fh.read(dim * dim * 8), dtype="<f8").reshape(dim, dim).copy()
        bias = np.frombuffer(fh.read(dim * 8), dtype="<f8").copy()
    return QueryAdapter(matrix, bias, header["version"])


def append_round_report(path, report: RoundReport) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(report.as_dict(), sort_keys=True) + "\n")
