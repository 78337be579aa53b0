"""Benchmark harness: synthetic corpora, baselines, metrics, experiment runner."""

from .baselines import Bm25Index, DenseIndex, bm25_search, flat_dense_search
from .corpus import (
    CapabilityTaxonomy,
    Category,
    LabeledCorpus,
    LabeledQuery,
    TaxonomyTooSmall,
    default_taxonomy,
    generate_corpus,
    load_taxonomy,
)
from .metrics import MetricsReport, MissingRanking, compute_metrics, recall_at
from .runner import (
    ChurnConfig,
    ExperimentConfig,
    churn_simulation,
    run_experiment,
    run_single,
    two_phase_drift,
)

__all__ = [
    "Bm25Index",
    "CapabilityTaxonomy",
    "Category",
    "ChurnConfig",
    "DenseIndex",
    "ExperimentConfig",
    "LabeledCorpus",
    "LabeledQuery",
    "MetricsReport",
    "MissingRanking",
    "TaxonomyTooSmall",
    "bm25_search",
    "churn_simulation",
    "compute_metrics",
    "default_taxonomy",
    "flat_dense_search",
    "generate_corpus",
    "load_taxonomy",
    "recall_at",
    "run_experiment",
    "run_single",
    "two_phase_drift",
]
