"""Ranking-quality metrics: top-1 accuracy, MRR@10, nDCG@10, Recall@5."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .corpus import LabeledCorpus


class MissingRanking(ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    method: str
    n_agents: int
    n_queries: int
    top1_accuracy: float
    mrr_at_10: float
    ndcg_at_10: float
    recall_at_5: float

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "n_agents": self.n_agents,
            "n_queries": self.n_queries,
            "top1": self.top1_accuracy,
            "mrr10": self.mrr_at_10,
            "ndcg10": self.ndcg_at_10,
            "recall5": self.recall_at_5,
        }


def _dcg(grades: list[float]) -> float:
    return sum(g / math.log2(i + 2) for i, g in enumerate(grades[:10]))


def compute_metrics(
    rankings: list[list[str]],
    corpus: LabeledCorpus,
    method: str = "",
    n_agents: int | None = None,
) -> MetricsReport:
    """Aggregate metrics over per-query ranked id lists (aligned with corpus.queries)."""
    if len(rankings) != len(corpus.queries):
        raise MissingRanking(f"{len(corpus.queries)} queries but {len(rankings)} rankings")
    top1 = mrr = recall5 = ndcg = 0.0
    for ranking, query in zip(rankings, corpus.queries):
        if ranking is None:
            raise MissingRanking(f"no ranking for query targeting {query.target_agent_id}")
        target = query.target_agent_id
        top1 += bool(ranking and ranking[0] == target)
        recall5 += target in ranking[:5]
        if target in ranking[:10]:
            mrr += 1.0 / (ranking.index(target) + 1)
        grades = [query.relevance.get(agent_id, 0.0) for agent_id in ranking[:10]]
        ideal = sorted(query.relevance.values(), reverse=True)
        idcg = _dcg(ideal)
        ndcg += _dcg(grades) / idcg if idcg > 0 else 0.0
    n = len(corpus.queries)
    return MetricsReport(
        method=method,
        n_agents=n_agents if n_agents is not None else len(corpus.agents),
        n_queries=n,
        top1_accuracy=top1 / n,
        mrr_at_10=mrr / n,
        ndcg_at_10=ndcg / n,
        recall_at_5=recall5 / n,
    )


def recall_at(rankings: list[list[str]], corpus: LabeledCorpus, k: int) -> float:
    """Target-in-top-k rate; used for cutoffs the headline report does not carry."""
    if len(rankings) != len(corpus.queries):
        raise MissingRanking(f"{len(corpus.queries)} queries but {len(rankings)} rankings")
    hits = sum(q.target_agent_id in r[:k] for r, q in zip(rankings, corpus.queries))
    return hits / len(corpus.queries)
