"""Experiment runner: method comparisons, scalability sweeps, churn scenarios.

Reported reference points from the source evaluation (recorded in emitted CSV
metadata, never used as pass/fail thresholds): the compact-code pipeline
reached Recall@5 = 0.76, and at 4000 agents top-1 accuracy 0.58 versus 0.35
(sparse lexical) and 0.36 (flat dense).
"""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..continual import (
    AdapterTrainConfig,
    ImportanceVector,
    ReplayBuffer,
    TrainSample,
    train_round,
    update_importance,
)
from ..embed import EmbedderConfig, HashEmbedder
from ..index import SEM_ONLY, QuerySpec
from ..profile import canonical_task_text, canonical_text, to_document
from ..registry import Registry, RegistryConfig
from .baselines import Bm25Index, DenseIndex
from .corpus import CapabilityTaxonomy, LabeledCorpus, default_taxonomy, generate_corpus, query_text_for
from .metrics import MetricsReport, compute_metrics

REFERENCE_POINTS = {
    "ours_recall5": 0.76,
    "ours_top1_at_4000": 0.58,
    "bm25_top1_at_4000": 0.35,
    "dense_top1_at_4000": 0.36,
}

METHODS = ("ours", "bm25", "dense")


@dataclass(frozen=True)
class AdapterRunConfig:
    rounds: int = 192
    batch_size: int = 96
    train: AdapterTrainConfig = AdapterTrainConfig(lr=0.3, temperature=0.1, replay_m=4, damping=1.0, steps=8)


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...] = METHODS
    n_agents: tuple[int, ...] = (500, 1000, 2000, 4000)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    dim: int = 256
    subspaces: int = 16
    anchors: int = 64
    overfetch: int = 10
    queries_per_agent_fraction: float = 0.1
    max_queries: int = 200
    adapter: AdapterRunConfig = AdapterRunConfig()
    taxonomy: CapabilityTaxonomy | None = None  # None -> built-in default

    def resolved_taxonomy(self) -> CapabilityTaxonomy:
        return self.taxonomy if self.taxonomy is not None else default_taxonomy()

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        adapter_raw = data.get("adapter", {})
        train_raw = adapter_raw.get("train", {})
        return cls(
            methods=tuple(data.get("methods", METHODS)),
            n_agents=tuple(data.get("n_agents", (500, 1000, 2000, 4000))),
            seeds=tuple(data.get("seeds", (0, 1, 2, 3, 4))),
            dim=data.get("dim", 256),
            subspaces=data.get("subspaces", 16),
            anchors=data.get("anchors", 64),
            overfetch=data.get("overfetch", 10),
            queries_per_agent_fraction=data.get("queries_per_agent_fraction", 0.1),
            max_queries=data.get("max_queries", 200),
            adapter=AdapterRunConfig(
                rounds=adapter_raw.get("rounds", 192),
                batch_size=adapter_raw.get("batch_size", 96),
                train=AdapterTrainConfig(
                    lr=train_raw.get("lr", 0.3),
                    temperature=train_raw.get("temperature", 0.1),
                    replay_m=train_raw.get("replay_m", 4),
                    damping=train_raw.get("damping", 1.0),
                    steps=train_raw.get("steps", 8),
                    buffer_capacity=train_raw.get("buffer_capacity", 512),
                ),
            ),
        )


@dataclass(frozen=True)
class RunRecord:
    report: MetricsReport
    seed: int
    wall_ms: float

    def as_row(self) -> dict:
        d = self.report.as_dict()
        return {
            "method": d["method"],
            "n_agents": d["n_agents"],
            "seed": self.seed,
            "top1": f"{d['top1']:.6f}",
            "mrr10": f"{d['mrr10']:.6f}",
            "ndcg10": f"{d['ndcg10']:.6f}",
            "recall5": f"{d['recall5']:.6f}",
            "wall_ms": f"{self.wall_ms:.1f}",
        }


def _capped_corpus(cfg: ExperimentConfig, taxonomy, n: int, seed: int) -> LabeledCorpus:
    corpus = generate_corpus(taxonomy, n, cfg.queries_per_agent_fraction, seed)
    if len(corpus.queries) > cfg.max_queries:
        corpus = LabeledCorpus(corpus.agents, corpus.queries[: cfg.max_queries], corpus.assignments)
    return corpus


def build_registry(cfg: ExperimentConfig, corpus: LabeledCorpus, seed: int) -> Registry:
    registry = Registry(
        RegistryConfig(
            dim=cfg.dim,
            subspaces=cfg.subspaces,
            anchors=cfg.anchors,
            seed=seed,
            overfetch=cfg.overfetch,
            embedder=EmbedderConfig(kind="hash", dim=cfg.dim),
        )
    )
    for agent in corpus.agents:
        registry.register_agent(to_document(agent))
    return registry


def training_samples(
    registry: Registry,
    corpus: LabeledCorpus,
    taxonomy: CapabilityTaxonomy,
    agent_ids: list[str],
    rng: np.random.Generator,
) -> list[TrainSample]:
    """Paraphrase queries for the given agents, paired with their current
    code reconstructions."""
    samples = []
    for agent_id in agent_ids:
        text = query_text_for(corpus.assignments[agent_id], taxonomy, rng)
        q = registry.embedder.embed_text(canonical_task_text(text))
        samples.append(TrainSample(q.values, agent_id, registry.reconstruction(agent_id)))
    return samples


def train_registry_adapter(
    registry: Registry,
    corpus: LabeledCorpus,
    taxonomy: CapabilityTaxonomy,
    run_cfg: AdapterRunConfig,
    seed: int,
    paraphrases_per_agent: int = 2,
) -> None:
    """Offline adapter training rounds; publishes the result atomically.

    Training queries are pre-embedded once (a small pool of paraphrases per
    agent) and rounds sample from the pool, mirroring a registry replaying
    logged task queries.
    """
    rng = np.random.default_rng([seed, 7_777])
    adapter = registry.state.adapter
    omega = ImportanceVector.zeros(registry.config.dim)
    buffer = ReplayBuffer(run_cfg.train.buffer_capacity, seed=seed)
    pool: list[TrainSample] = []
    for agent in corpus.agents:
        recon = registry.reconstruction(agent.agent_id)
        for _ in range(paraphrases_per_agent):
            text = query_text_for(corpus.assignments[agent.agent_id], taxonomy, rng)
            q = registry.embedder.embed_text(canonical_task_text(text))
            pool.append(TrainSample(q.values, agent.agent_id, recon))
    for round_index in range(run_cfg.rounds):
        picked = rng.choice(len(pool), size=min(run_cfg.batch_size, len(pool)), replace=False)
        samples = [pool[int(i)] for i in picked]
        adapter, _ = train_round(adapter, omega, buffer, samples, run_cfg.train, round_index)
    registry.set_adapter(adapter)


def rank_with_registry(registry: Registry, corpus: LabeledCorpus, top_k: int = 10) -> list[list[str]]:
    rankings = []
    for query in corpus.queries:
        results = registry.query(QuerySpec(task_text=query.text, top_k=top_k, weights=SEM_ONLY))
        rankings.append([r.agent_id for r in results])
    return rankings


def run_single(
    method: str,
    cfg: ExperimentConfig,
    corpus: LabeledCorpus,
    taxonomy: CapabilityTaxonomy,
    seed: int,
    train_adapter: bool = True,
) -> tuple[MetricsReport, float]:
    started = time.perf_counter()
    if method == "bm25":
        docs = {a.agent_id: canonical_text(a) for a in corpus.agents}
        bm25 = Bm25Index(docs)
        rankings = [bm25.search(canonical_task_text(q.text), 10) for q in corpus.queries]
    elif method == "dense":
        embedder = HashEmbedder(cfg.dim)
        ids = [a.agent_id for a in corpus.agents]
        matrix = np.stack([embedder.embed_text(canonical_text(a)).values for a in corpus.agents])
        dense = DenseIndex(ids, matrix)
        rankings = [
            dense.search(embedder.embed_text(canonical_task_text(q.text)).values, 10) for q in corpus.queries
        ]
    elif method == "ours":
        registry = build_registry(cfg, corpus, seed)
        if train_adapter and cfg.adapter.rounds > 0:
            train_registry_adapter(registry, corpus, taxonomy, cfg.adapter, seed)
        rankings = rank_with_registry(registry, corpus)
    else:
        raise ValueError(f"unknown method: {method}")
    wall_ms = (time.perf_counter() - started) * 1000
    return compute_metrics(rankings, corpus, method=method, n_agents=len(corpus.agents)), wall_ms


def run_experiment(cfg: ExperimentConfig, out_csv: str | Path | None = None) -> list[RunRecord]:
    taxonomy = cfg.resolved_taxonomy()
    records: list[RunRecord] = []
    for n in cfg.n_agents:
        for seed in cfg.seeds:
            corpus = _capped_corpus(cfg, taxonomy, n, seed)
            for method in cfg.methods:
                report, wall_ms = run_single(method, cfg, corpus, taxonomy, seed)
                records.append(RunRecord(report, seed, wall_ms))
    if out_csv is not None:
        Path(out_csv).write_text(render_csv(records))
    return records


def render_csv(records: list[RunRecord]) -> str:
    """Plot-ready CSV; reference points ride along as comment metadata."""
    buf = io.StringIO()
    buf.write("# capreg bench results\n")
    for key, value in REFERENCE_POINTS.items():
        buf.write(f"# reference {key}={value} (reported value, not a threshold)\n")
    writer = csv.DictWriter(
        buf, fieldnames=["method", "n_agents", "seed", "top1", "mrr10", "ndcg10", "recall5", "wall_ms"]
    )
    writer.writeheader()
    for record in records:
        writer.writerow(record.as_row())
    return buf.getvalue()


def mean_metric(records: list[RunRecord], method: str, n_agents: int, metric: str) -> float:
    values = [
        getattr(r.report, metric)
        for r in records
        if r.report.method == method and r.report.n_agents == n_agents
    ]
    if not values:
        raise ValueError(f"no records for {method} at {n_agents} agents")
    return float(np.mean(values))


# -- churn and drift ---------------------------------------------------------


@dataclass(frozen=True)
class ChurnConfig:
    initial_agents: int = 120
    rounds: int = 10
    arrivals: int = 20
    departures: int = 10
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9)
    dim: int = 64
    subspaces: int = 8
    anchors: int = 16
    replay_m: int = 4
    eval_queries_per_cohort: int = 60
    adapter: AdapterTrainConfig = AdapterTrainConfig(lr=5e-2, temperature=0.1, replay_m=4, damping=1.0, steps=3)
    taxonomy: CapabilityTaxonomy | None = None

    def resolved_taxonomy(self) -> CapabilityTaxonomy:
        return self.taxonomy if self.taxonomy is not None else default_taxonomy()

    @classmethod
    def from_dict(cls, data: dict) -> "ChurnConfig":
        adapter_raw = data.get("adapter", {})
        return cls(
            initial_agents=data.get("initial_agents", 120),
            rounds=data.get("rounds", 10),
            arrivals=data.get("arrivals", 20),
            departures=data.get("departures", 10),
            seeds=tuple(data.get("seeds", tuple(range(10)))),
            dim=data.get("dim", 64),
            subspaces=data.get("subspaces", 8),
            anchors=data.get("anchors", 16),
            replay_m=data.get("replay_m", 4),
            eval_queries_per_cohort=data.get("eval_queries_per_cohort", 60),
            adapter=AdapterTrainConfig(
                lr=adapter_raw.get("lr", 5e-2),
                temperature=adapter_raw.get("temperature", 0.1),
                replay_m=adapter_raw.get("replay_m", 4),
                damping=adapter_raw.get("damping", 1.0),
                steps=adapter_raw.get("steps", 3),
                buffer_capacity=adapter_raw.get("buffer_capacity", 512),
            ),
        )


@dataclass(frozen=True)
class ChurnRoundRow:
    seed: int
    replay: bool
    round_index: int
    current_top1: float
    retention_top1: float
    n_current: int
    n_cohort_evaluable: int


def _eval_top1(registry: Registry, eval_set: list[tuple[str, str]]) -> tuple[float, int]:
    """eval_set: (query_text, target_id); targets no longer registered are
    excluded from the denominator."""
    hits = evaluable = 0
    live = registry.state.index
    for text, target in eval_set:
        if target not in live:
            continue
        evaluable += 1
        results = registry.query(QuerySpec(task_text=text, top_k=1, weights=SEM_ONLY))
        hits += bool(results and results[0].agent_id == target)
    return (hits / evaluable if evaluable else 0.0), evaluable


def _cohort_eval_set(
    corpus: LabeledCorpus,
    taxonomy: CapabilityTaxonomy,
    agent_ids: list[str],
    count: int,
    rng: np.random.Generator,
) -> list[tuple[str, str]]:
    chosen = [agent_ids[int(i)] for i in rng.choice(len(agent_ids), size=min(count, len(agent_ids)), replace=False)]
    return [(query_text_for(corpus.assignments[a], taxonomy, rng), a) for a in chosen]


def churn_simulation(cfg: ChurnConfig, out_csv: str | Path | None = None) -> list[ChurnRoundRow]:
    """Arrivals/departures with per-round adapter training, replay on vs off."""
    taxonomy = cfg.resolved_taxonomy()
    rows: list[ChurnRoundRow] = []
    total_agents = cfg.initial_agents + cfg.rounds * cfg.arrivals
    for seed in cfg.seeds:
        stream = generate_corpus(taxonomy, total_agents, queries_per_agent_fraction=0.0, seed=seed, min_queries=0)
        for replay_on in (True, False):
            rows.extend(_churn_run(cfg, taxonomy, stream, seed, replay_on))
    if out_csv is not None:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["seed", "replay", "round", "current_top1", "retention_top1", "n_current", "n_cohort"])
        for row in rows:
            writer.writerow(
                [
                    row.seed,
                    int(row.replay),
                    row.round_index,
                    f"{row.current_top1:.6f}",
                    f"{row.retention_top1:.6f}",
                    row.n_current,
                    row.n_cohort_evaluable,
                ]
            )
        Path(out_csv).write_text(buf.getvalue())
    return rows


def _churn_run(cfg, taxonomy, stream: LabeledCorpus, seed: int, replay_on: bool) -> list[ChurnRoundRow]:
    registry = Registry(
        RegistryConfig(
            dim=cfg.dim,
            subspaces=cfg.subspaces,
            anchors=cfg.anchors,
            seed=seed,
            embedder=EmbedderConfig(kind="hash", dim=cfg.dim),
        )
    )
    agents = stream.agents
    for agent in agents[: cfg.initial_agents]:
        registry.register_agent(to_document(agent))
    cohort = [a.agent_id for a in agents[: cfg.initial_agents]]

    eval_rng = np.random.default_rng([seed, 31])
    cohort_eval = _cohort_eval_set(stream, taxonomy, cohort, cfg.eval_queries_per_cohort, eval_rng)

    train_cfg = replace(cfg.adapter, replay_m=cfg.replay_m if replay_on else 0)
    adapter = registry.state.adapter
    omega = ImportanceVector.zeros(cfg.dim)
    buffer = ReplayBuffer(train_cfg.buffer_capacity, seed=seed)
    churn_rng = np.random.default_rng([seed, 47])

    # warm-up: teach the adapter the initial population
    warm_ids = [cohort[int(i)] for i in churn_rng.choice(len(cohort), size=min(64, len(cohort)), replace=False)]
    warm_samples = training_samples(registry, stream, taxonomy, warm_ids, churn_rng)
    adapter, _ = train_round(adapter, omega, buffer, warm_samples, train_cfg, round_index=0)
    omega = update_importance(omega, adapter, _pairs_of(warm_samples))
    registry.set_adapter(adapter)

    rows = []
    cursor = cfg.initial_agents
    for round_index in range(1, cfg.rounds + 1):
        live_ids = [e.agent_id for e in registry.state.index.entries()]
        departures = min(cfg.departures, max(0, len(live_ids) - 10))
        for i in churn_rng.choice(len(live_ids), size=departures, replace=False):
            registry.deregister_agent(live_ids[int(i)])
        arrivals = agents[cursor : cursor + cfg.arrivals]
        cursor += cfg.arrivals
        for agent in arrivals:
            registry.register_agent(to_document(agent))
        new_ids = [a.agent_id for a in arrivals]
        if new_ids:
            samples = training_samples(registry, stream, taxonomy, new_ids, churn_rng)
            adapter, _ = train_round(adapter, omega, buffer, samples, train_cfg, round_index)
            omega = update_importance(omega, adapter, _pairs_of(samples))
            registry.set_adapter(adapter)

        current_ids = [e.agent_id for e in registry.state.index.entries()]
        current_eval = _cohort_eval_set(stream, taxonomy, current_ids, 40, np.random.default_rng([seed, 53, round_index]))
        current_top1, n_current = _eval_top1(registry, current_eval)
        retention_top1, n_cohort = _eval_top1(registry, cohort_eval)
        rows.append(
            ChurnRoundRow(seed, replay_on, round_index, current_top1, retention_top1, n_current, n_cohort)
        )
    return rows


def _pairs_of(samples: list[TrainSample]) -> list[tuple]:
    pairs = []
    for i, sample in enumerate(samples):
        negatives = [
            o.target_reconstruction
            for j, o in enumerate(samples)
            if j != i and o.target_agent_id != sample.target_agent_id
        ]
        if negatives:
            pairs.append((sample.query, sample.target_reconstruction, negatives))
    return pairs


@dataclass(frozen=True)
class DriftResult:
    seed: int
    replay_m: int
    phase1_top1: float
    retention_top1: float


def two_phase_drift(
    seed: int,
    replay_m: int,
    rounds_per_phase: int = 8,
    agents_per_phase: int = 150,
    dim: int = 256,
    subspaces: int = 16,
    anchors: int = 64,
    batch_size: int = 64,
    train: AdapterTrainConfig | None = None,
    taxonomy: CapabilityTaxonomy | None = None,
) -> DriftResult:
    """Two sequential agent batches with disjoint vocabularies.

    Phase 1 trains on batch-1 queries; phase 2 trains only on batch-2 queries
    (replay, when enabled, resurfaces phase-1 records from the buffer).
    Returns batch-1 top-1 after each phase.
    """
    full = taxonomy if taxonomy is not None else default_taxonomy()
    names = [c.name for c in full.categories]
    half = len(names) // 2
    tax_a = full.subset(names[:half])
    tax_b = full.subset(names[half:])
    train_cfg = train or AdapterTrainConfig(lr=0.3, temperature=0.1, replay_m=replay_m, damping=0.0, steps=8)
    train_cfg = replace(train_cfg, replay_m=replay_m)

    corpus_a = generate_corpus(tax_a, agents_per_phase, 0.0, seed=seed, agent_prefix="alpha", min_queries=0)
    corpus_b = generate_corpus(tax_b, agents_per_phase, 0.0, seed=seed + 1, agent_prefix="beta", min_queries=0)

    registry = Registry(
        RegistryConfig(
            dim=dim, subspaces=subspaces, anchors=anchors, seed=seed, embedder=EmbedderConfig(kind="hash", dim=dim)
        )
    )
    for agent in corpus_a.agents:
        registry.register_agent(to_document(agent))

    eval_rng = np.random.default_rng([seed, 61])
    ids_a = [a.agent_id for a in corpus_a.agents]
    eval_a = _cohort_eval_set(corpus_a, tax_a, ids_a, len(ids_a), eval_rng)

    adapter = registry.state.adapter
    omega = ImportanceVector.zeros(dim)
    buffer = ReplayBuffer(train_cfg.buffer_capacity, seed=seed)
    rng = np.random.default_rng([seed, 67])

    for round_index in range(rounds_per_phase):
        batch = [ids_a[int(i)] for i in rng.choice(len(ids_a), size=min(batch_size, len(ids_a)), replace=False)]
        samples = training_samples(registry, corpus_a, tax_a, batch, rng)
        adapter, _ = train_round(adapter, omega, buffer, samples, train_cfg, round_index)
    registry.set_adapter(adapter)
    phase1_top1, _ = _eval_top1(registry, eval_a)

    for agent in corpus_b.agents:
        registry.register_agent(to_document(agent))
    ids_b = [a.agent_id for a in corpus_b.agents]
    merged_assignments = dict(corpus_a.assignments)
    merged_assignments.update(corpus_b.assignments)
    corpus_b_view = LabeledCorpus(corpus_b.agents, [], merged_assignments)
    for round_index in range(rounds_per_phase, 2 * rounds_per_phase):
        batch = [ids_b[int(i)] for i in rng.choice(len(ids_b), size=min(batch_size, len(ids_b)), replace=False)]
        samples = training_samples(registry, corpus_b_view, tax_b, batch, rng)
        adapter, _ = train_round(adapter, omega, buffer, samples, train_cfg, round_index)
    registry.set_adapter(adapter)
    retention_top1, _ = _eval_top1(registry, eval_a)

    return DriftResult(seed=seed, replay_m=replay_m, phase1_top1=phase1_top1, retention_top1=retention_top1)
