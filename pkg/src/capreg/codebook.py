"""Product-quantization codebook: subspace anchors, compact codes, incremental growth.

Embeddings are split into M contiguous subspaces; within each, k-means
centroids act as anchors. An agent's code is the M-tuple of nearest-anchor
indices. Between explicit rebuilds the anchor lists only grow, so codes
issued earlier stay valid and score identically under ADC lookup.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .embed import DimensionMismatch, EmbeddingVector, as_matrix

SNAPSHOT_MAGIC = b"CBK1"


class CodebookError(Exception):
    pass


class TooFewVectors(CodebookError):
    pass


class DimensionNotDivisible(CodebookError):
    pass


class StaleCode(CodebookError):
    """Code references anchors that do not exist at this codebook version."""


class DuplicateCollapseWarning(UserWarning):
    """A subspace produced fewer distinct centroids than requested."""


@dataclass(frozen=True)
class AgentCode:
    """Compact semantic ID: one anchor index per subspace, pinned to a codebook version."""

    indices: tuple[int, ...]
    codebook_version: int


@dataclass(frozen=True)
class QuantizationReport:
    per_subspace_error: tuple[float, ...]

    @property
    def total_error(self) -> float:
        return float(sum(self.per_subspace_error))


@dataclass(frozen=True)
class UpdateReport:
    appended: tuple[tuple[int, int], ...]  # (subspace, new anchor index)
    skipped_full: int
    examined: int


@dataclass(frozen=True)
class TrainStats:
    wcss_history: tuple[tuple[float, ...], ...]  # per subspace, per iteration


@dataclass(frozen=True)
class Codebook:
    dim: int
    subspaces: int
    anchors: tuple[np.ndarray, ...]  # per subspace: (n_anchors, sub_dim), float64
    version: int
    tau: float
    k: int
    k_max: int
    train_stats: TrainStats | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for arr in self.anchors:
            arr.setflags(write=False)

    @property
    def sub_dim(self) -> int:
        return self.dim // self.subspaces

    def anchor_counts(self) -> tuple[int, ...]:
        return tuple(int(a.shape[0]) for a in self.anchors)


def _check_dim(dim: int, subspaces: int) -> None:
    if subspaces < 1 or dim % subspaces != 0:
        raise DimensionNotDivisible(f"dimension {dim} is not divisible by {subspaces} subspaces")


def _sub_views(matrix: np.ndarray, subspaces: int) -> list[np.ndarray]:
    return np.split(matrix, subspaces, axis=1)


def _farthest_point_seeds(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic farthest-point seeding: rng picks the first point, every
    later seed maximizes its distance to the chosen set (ties -> lowest index)."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    min_dist = ((points - points[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, ((points - points[nxt]) ** 2).sum(axis=1))
    return points[chosen].copy()


def _lloyd(points: np.ndarray, seeds: np.ndarray, max_iter: int = 50, tol: float = 1e-6):
    """Lloyd iterations; returns (centroids, wcss_history). Empty clusters keep
    their previous centroid, which preserves objective monotonicity."""
    centroids = seeds.copy()
    history: list[float] = []
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(points.shape[0]), labels].sum()))
        new_centroids = centroids.copy()
        for j in range(centroids.shape[0]):
            members = points[labels == j]
            if members.shape[0]:
                new_centroids[j] = members.mean(axis=0)
        shift = float(np.abs(new_centroids - centroids).max())
        centroids = new_centroids
        if shift < tol:
            break
    return centroids, tuple(history)


def _dedupe_rows(rows: np.ndarray) -> np.ndarray:
    keep: list[int] = []
    for i in range(rows.shape[0]):
        if not any(np.array_equal(rows[i], rows[j]) for j in keep):
            keep.append(i)
    return rows[keep]


def train_codebook(
    vectors: list[EmbeddingVector] | np.ndarray,
    subspaces: int,
    k: int,
    seed: int,
    k_max: int | None = None,
    tau_percentile: float = 95.0,
) -> Codebook:
    """Cluster each subspace into k anchors; tau becomes the given percentile
    (default 95th) of training quantization errors. Lower percentiles trade
    memory for fidelity: more vectors trigger anchor growth later on.
    Deterministic given (vector order, M, k, seed)."""
    matrix = as_matrix(vectors)
    n, dim = matrix.shape
    _check_dim(dim, subspaces)
    if n < k:
        raise TooFewVectors(f"need at least {k} vectors to train, got {n}")

    anchors: list[np.ndarray] = []
    histories: list[tuple[float, ...]] = []
    for m, sub in enumerate(_sub_views(matrix, subspaces)):
        rng = np.random.default_rng([seed, m])
        seeds = _farthest_point_seeds(sub, k, rng)
        centroids, history = _lloyd(sub, seeds)
        distinct = _dedupe_rows(centroids)
        if distinct.shape[0] < k:
            warnings.warn(
                f"subspace {m}: only {distinct.shape[0]} of {k} centroids distinct",
                DuplicateCollapseWarning,
                stacklevel=2,
            )
        anchors.append(np.ascontiguousarray(distinct))
        histories.append(history)

    cb = Codebook(
        dim=dim,
        subspaces=subspaces,
        anchors=tuple(anchors),
        version=1,
        tau=0.0,
        k=k,
        k_max=k_max if k_max is not None else 4 * k,
        train_stats=TrainStats(tuple(histories)),
    )
    _, errors = assign_many(cb, matrix)
    tau = float(np.percentile(errors.sum(axis=1), tau_percentile))
    return Codebook(
        dim=cb.dim,
        subspaces=cb.subspaces,
        anchors=cb.anchors,
        version=1,
        tau=tau,
        k=k,
        k_max=cb.k_max,
        train_stats=cb.train_stats,
    )


def rebuild(
    vectors: list[EmbeddingVector] | np.ndarray,
    subspaces: int,
    k: int,
    seed: int,
    prev_version: int = 0,
    k_max: int | None = None,
    tau_percentile: float = 95.0,
) -> Codebook:
    """Retrain from scratch; the version lands above any prior version so stale
    codes are rejected until callers re-assign them."""
    trained = train_codebook(vectors, subspaces, k, seed, k_max=k_max, tau_percentile=tau_percentile)
    return Codebook(
        dim=trained.dim,
        subspaces=trained.subspaces,
        anchors=trained.anchors,
        version=max(prev_version, 0) + 1,
        tau=trained.tau,
        k=trained.k,
        k_max=trained.k_max,
        train_stats=trained.train_stats,
    )


def _vector_array(v: EmbeddingVector | np.ndarray, cb: Codebook) -> np.ndarray:
    arr = v.values if isinstance(v, EmbeddingVector) else np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != cb.dim:
        raise DimensionMismatch(f"vector has shape {arr.shape}, codebook dimension is {cb.dim}")
    return arr


def assign_code(cb: Codebook, v: EmbeddingVector | np.ndarray) -> tuple[AgentCode, QuantizationReport]:
    """Nearest anchor per subspace by squared Euclidean distance; ties break to
    the lowest anchor index."""
    arr = _vector_array(v, cb)
    indices: list[int] = []
    errors: list[float] = []
    d = cb.sub_dim
    for m in range(cb.subspaces):
        sub = arr[m * d : (m + 1) * d]
        d2 = ((cb.anchors[m] - sub) ** 2).sum(axis=1)
        j = int(np.argmin(d2))
        indices.append(j)
        errors.append(float(d2[j]))
    return AgentCode(tuple(indices), cb.version), QuantizationReport(tuple(errors))


def assign_many(cb: Codebook, matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized assignment: returns (codes (n, M) int64, per-subspace errors (n, M))."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != cb.dim:
        raise DimensionMismatch(f"matrix has shape {matrix.shape}, codebook dimension is {cb.dim}")
    n = matrix.shape[0]
    codes = np.empty((n, cb.subspaces), dtype=np.int64)
    errors = np.empty((n, cb.subspaces), dtype=np.float64)
    for m, sub in enumerate(_sub_views(matrix, cb.subspaces)):
        d2 = ((sub[:, None, :] - cb.anchors[m][None, :, :]) ** 2).sum(axis=2)
        codes[:, m] = np.argmin(d2, axis=1)
        errors[:, m] = d2[np.arange(n), codes[:, m]]
    return codes, errors


def reconstruct(cb: Codebook, code: AgentCode) -> np.ndarray:
    """Concatenate the selected anchors. Not re-normalized."""
    if len(code.indices) != cb.subspaces:
        raise StaleCode(f"code has {len(code.indices)} indices, codebook has {cb.subspaces} subspaces")
    parts = []
    for m, j in enumerate(code.indices):
        if not 0 <= j < cb.anchors[m].shape[0]:
            raise StaleCode(f"subspace {m}: anchor {j} out of range at version {cb.version}")
        parts.append(cb.anchors[m][j])
    return np.concatenate(parts)


def reconstruction_norm(cb: Codebook, code: AgentCode) -> float:
    return float(np.linalg.norm(reconstruct(cb, code)))


def incremental_update(
    cb: Codebook,
    new_vectors: list[EmbeddingVector] | np.ndarray,
    k_max: int | None = None,
) -> tuple[Codebook, UpdateReport]:
    """Grow anchors for vectors the codebook quantizes poorly.

    A vector with total error <= tau aligns with existing clusters and changes
    nothing. Otherwise each subspace whose error exceeds tau/M gains that
    sub-vector as a fresh anchor, unless the subspace already holds k_max
    anchors. Existing anchors are never moved, so issued codes stay valid.
    """
    matrix = as_matrix(new_vectors)
    if matrix.ndim != 2 or matrix.shape[1] != cb.dim:
        raise DimensionMismatch(f"matrix has shape {matrix.shape}, codebook dimension is {cb.dim}")
    cap = k_max if k_max is not None else cb.k_max
    fresh: list[list[np.ndarray]] = [[] for _ in range(cb.subspaces)]  # rows appended this call
    appended: list[tuple[int, int]] = []
    skipped_full = 0
    d = cb.sub_dim
    per_sub_trigger = cb.tau / cb.subspaces

    for row in matrix:
        total = 0.0
        sub_errors = []
        for m in range(cb.subspaces):
            sub = row[m * d : (m + 1) * d]
            d2 = float(((cb.anchors[m] - sub) ** 2).sum(axis=1).min())
            for extra in fresh[m]:
                d2 = min(d2, float(((extra - sub) ** 2).sum()))
            sub_errors.append(d2)
            total += d2
        if total <= cb.tau:
            continue
        for m, err in enumerate(sub_errors):
            if err > per_sub_trigger:
                if cb.anchors[m].shape[0] + len(fresh[m]) >= cap:
                    skipped_full += 1
                    continue
                fresh[m].append(row[m * d : (m + 1) * d].copy())
                appended.append((m, cb.anchors[m].shape[0] + len(fresh[m]) - 1))

    if skipped_full:
        warnings.warn("anchor append skipped: subspace at k_max", stacklevel=2)
    if not appended:
        return cb, UpdateReport((), skipped_full, matrix.shape[0])

    merged = tuple(
        np.ascontiguousarray(np.vstack([cb.anchors[m]] + fresh[m])) if fresh[m] else cb.anchors[m]
        for m in range(cb.subspaces)
    )
    new_cb = Codebook(
        dim=cb.dim,
        subspaces=cb.subspaces,
        anchors=merged,
        version=cb.version + 1,
        tau=cb.tau,
        k=cb.k,
        k_max=cb.k_max,
    )
    return new_cb, UpdateReport(tuple(appended), skipped_full, matrix.shape[0])


def bootstrap_codebook(dim: int, subspaces: int, k: int, k_max: int | None = None) -> Codebook:
    """Cold-start codebook: one zero anchor per subspace, tau = 0.

    Every sufficiently distinct early registration grows the anchor lists
    until a proper training pass replaces the codebook.
    """
    _check_dim(dim, subspaces)
    d = dim // subspaces
    zero = np.zeros((1, d), dtype=np.float64)
    return Codebook(
        dim=dim,
        subspaces=subspaces,
        anchors=tuple(zero.copy() for _ in range(subspaces)),
        version=1,
        tau=0.0,
        k=k,
        k_max=k_max if k_max is not None else 4 * k,
    )


def save_codebook(cb: Codebook, path) -> None:
    """Binary snapshot: magic, JSON header, per-subspace float64 rows. Bit-exact."""
    header = {
        "dim": cb.dim,
        "subspaces": cb.subspaces,
        "k": cb.k,
        "k_max": cb.k_max,
        "tau": cb.tau,
        "version": cb.version,
        "anchor_counts": list(cb.anchor_counts()),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in cb.anchors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_codebook(path) -> Codebook:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise CodebookError(f"not a codebook snapshot: magic {magic!r}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len))
        sub_dim = header["dim"] // header["subspaces"]
        anchors = []
        for count in header["anchor_counts"]:
            raw = fh.read(count * sub_dim * 8)
            anchors.append(np.frombuffer(raw, dtype="<f8").reshape(count, sub_dim).copy())
    return Codebook(
        dim=header["dim"],
        subspaces=header["subspaces"],
        anchors=tuple(anchors),
        version=header["version"],
        tau=header["tau"],
        k=header["k"],
        k_max=header["k_max"],
    )
