"""Synthetic labeled corpora with exact ground truth.

Agents draw 2-5 capability categories and one phrase per category; queries
describe a target agent through held-out phrases from the same categories, so
the query never repeats the exact wording the agent registered. Graded
relevance comes straight from category overlap.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..profile import AgentProfile, validate_profile
from .data import CATEGORY_PHRASES, ROLES


class TaxonomyError(ValueError):
    pass


class TaxonomyTooSmall(TaxonomyError):
    pass


@dataclass(frozen=True)
class Category:
    name: str
    phrases: tuple[str, ...]


@dataclass(frozen=True)
class CapabilityTaxonomy:
    categories: tuple[Category, ...]
    seed: int = 0

    def __post_init__(self):
        seen: set[str] = set()
        for cat in self.categories:
            if len(cat.phrases) < 4:
                raise TaxonomyError(f"category {cat.name!r} needs >= 4 phrases, has {len(cat.phrases)}")
            for phrase in cat.phrases:
                if phrase in seen:
                    raise TaxonomyError(f"phrase {phrase!r} appears in more than one category")
                seen.add(phrase)

    def subset(self, names: list[str]) -> "CapabilityTaxonomy":
        by_name = {c.name: c for c in self.categories}
        return CapabilityTaxonomy(tuple(by_name[n] for n in names), seed=self.seed)


def default_taxonomy(seed: int = 0) -> CapabilityTaxonomy:
    return CapabilityTaxonomy(
        tuple(Category(name, tuple(phrases)) for name, phrases in CATEGORY_PHRASES.items()),
        seed=seed,
    )


_HEAD_FIRST = (
    "argon", "basalt", "cobalt", "delta", "ember", "falcon", "granite", "harbor",
    "iris", "juniper", "krypton", "lumen", "marble", "nickel", "onyx", "pewter",
    "quartz", "raven", "sable", "topaz",
)
_HEAD_SECOND = (
    "pump", "valve", "grid", "beacon", "ledger", "turbine", "antenna", "conveyor",
    "reactor", "gantry", "filter", "relay", "crane", "sensorbank", "manifold", "drivetrain",
)
_GENERIC_TAILS = (
    "planning", "analysis", "monitoring", "inspection", "tuning", "calibration",
    "scheduling", "diagnostics",
)


def synthetic_taxonomy(n_categories: int, phrases_per_category: int = 5, seed: int = 0) -> CapabilityTaxonomy:
    """Programmatic wide taxonomy: every category owns a distinctive two-token
    head, tails come from one shared pool. Useful when an experiment needs
    more categories than the curated taxonomy offers (e.g. measuring
    quantization loss with mostly-unique capability combinations)."""
    if n_categories > len(_HEAD_FIRST) * len(_HEAD_SECOND):
        raise TaxonomyError(f"at most {len(_HEAD_FIRST) * len(_HEAD_SECOND)} synthetic categories supported")
    if phrases_per_category > len(_GENERIC_TAILS):
        raise TaxonomyError(f"at most {len(_GENERIC_TAILS)} phrases per synthetic category supported")
    rng = np.random.default_rng([seed, 11_311])
    heads = [f"{a} {b}" for a in _HEAD_FIRST for b in _HEAD_SECOND]
    order = rng.permutation(len(heads))
    categories = []
    for idx in order[:n_categories]:
        head = heads[int(idx)]
        tail_order = rng.permutation(len(_GENERIC_TAILS))[:phrases_per_category]
        phrases = tuple(f"{head} {_GENERIC_TAILS[int(t)]}" for t in tail_order)
        categories.append(Category(head, phrases))
    return CapabilityTaxonomy(tuple(categories), seed=seed)


def load_taxonomy(path: str | Path, seed: int = 0) -> CapabilityTaxonomy:
    """Taxonomy file: JSON {"categories": [{"name": ..., "phrases": [...]}]}."""
    raw = json.loads(Path(path).read_text())
    cats = tuple(Category(c["name"], tuple(c["phrases"])) for c in raw["categories"])
    return CapabilityTaxonomy(cats, seed=seed)


def save_taxonomy(taxonomy: CapabilityTaxonomy, path: str | Path) -> None:
    payload = {"categories": [{"name": c.name, "phrases": list(c.phrases)} for c in taxonomy.categories]}
    Path(path).write_text(json.dumps(payload, indent=1))


@dataclass(frozen=True)
class LabeledQuery:
    text: str
    target_agent_id: str
    relevance: dict[str, float]  # agent_id -> {0.5, 1.0}; absent means 0


@dataclass(frozen=True)
class AgentAssignment:
    categories: tuple[str, ...]
    phrases: tuple[str, ...]  # one per category, aligned


@dataclass(frozen=True)
class LabeledCorpus:
    agents: list[AgentProfile]
    queries: list[LabeledQuery]
    assignments: dict[str, AgentAssignment]

    def grade(self, query: LabeledQuery, agent_id: str) -> float:
        return query.relevance.get(agent_id, 0.0)


def _pick_phrase(category: Category, exclude: str | None, rng: np.random.Generator) -> str:
    pool = [p for p in category.phrases if p != exclude]
    if not pool:
        raise TaxonomyTooSmall(f"category {category.name!r} has no held-out phrase left")
    return pool[int(rng.integers(len(pool)))]


def _pick_phrases(category: Category, exclude: str | None, count: int, rng: np.random.Generator) -> list[str]:
    pool = [p for p in category.phrases if p != exclude]
    if len(pool) < count:
        raise TaxonomyTooSmall(f"category {category.name!r} has {len(pool)} held-out phrases, need {count}")
    picked = rng.choice(len(pool), size=count, replace=False)
    return [pool[int(i)] for i in picked]


def query_text_for(
    assignment: AgentAssignment,
    taxonomy: CapabilityTaxonomy,
    rng: np.random.Generator,
    phrases_per_category: int = 1,
) -> str:
    """A task description built from held-out phrases of the agent's categories."""
    by_name = {c.name: c for c in taxonomy.categories}
    parts: list[str] = []
    for cat, used in zip(assignment.categories, assignment.phrases):
        parts.extend(_pick_phrases(by_name[cat], used, phrases_per_category, rng))
    return ", ".join(parts)


def generate_corpus(
    taxonomy: CapabilityTaxonomy,
    n_agents: int,
    queries_per_agent_fraction: float = 0.1,
    seed: int = 0,
    agent_prefix: str = "agent",
    min_queries: int = 20,
    categories_per_agent: tuple[int, int] = (2, 5),
    query_phrases_per_category: int = 1,
    archetypes: int | None = None,
) -> LabeledCorpus:
    """Deterministic corpus: same (taxonomy, n_agents, fraction, seed,
    density) in, byte-identical corpus out. categories_per_agent controls
    distractor density: more categories per agent means noisier profiles and
    heavier cross-agent overlap."""
    if n_agents < 10:
        raise ValueError("n_agents must be >= 10")
    rng = np.random.default_rng([taxonomy.seed, seed])
    n_cats = len(taxonomy.categories)
    lo, hi = categories_per_agent

    archetype_pool: list[tuple[tuple[str, ...], tuple[str, ...]]] | None = None
    if archetypes is not None:
        # a bounded set of capability profiles; agents are near-duplicates of
        # one archetype (fleets of similarly-skilled agents)
        archetype_pool = []
        for _ in range(archetypes):
            count = int(rng.integers(lo, min(hi + 1, n_cats + 1)))
            picked = sorted(int(j) for j in rng.choice(n_cats, size=count, replace=False))
            archetype_pool.append(
                (
                    tuple(taxonomy.categories[j].name for j in picked),
                    tuple(_pick_phrase(taxonomy.categories[j], None, rng) for j in picked),
                )
            )

    agents: list[AgentProfile] = []
    assignments: dict[str, AgentAssignment] = {}
    members: dict[str, set[str]] = {c.name: set() for c in taxonomy.categories}
    for i in range(n_agents):
        agent_id = f"{agent_prefix}-{i:05d}"
        if archetype_pool is not None:
            categories, phrases = archetype_pool[int(rng.integers(len(archetype_pool)))]
        else:
            count = int(rng.integers(lo, min(hi + 1, n_cats + 1)))
            picked = sorted(int(j) for j in rng.choice(n_cats, size=count, replace=False))
            categories = tuple(taxonomy.categories[j].name for j in picked)
            phrases = tuple(_pick_phrase(taxonomy.categories[j], None, rng) for j in picked)
        profile = validate_profile(
            {
                "agent_id": agent_id,
                "skills": list(phrases),
                "roles": [ROLES[int(rng.integers(len(ROLES)))]],
                "constraints": {
                    # round palette values, as real deployments advertise them
                    "latency_tolerance_ms": (20, 50, 100, 200, 500, 1000)[int(rng.integers(6))],
                    "placement": ("cloud", "edge", "device")[int(rng.integers(3))],
                    "memory_capacity_mb": (256, 512, 1024, 2048, 4096, 8192, 16384)[int(rng.integers(7))],
                    "current_load": (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)[int(rng.integers(10))],
                },
                "credibility": round(float(rng.uniform(0.3, 1.0)), 3),
                "availability": ("available", "available", "available", "busy", "offline")[int(rng.integers(5))],
            }
        )
        agents.append(profile)
        assignments[agent_id] = AgentAssignment(categories, phrases)
        for cat in categories:
            members[cat].add(agent_id)

    n_queries = max(min_queries, round(n_agents * queries_per_agent_fraction))
    n_queries = min(n_queries, n_agents)
    target_rows = rng.choice(n_agents, size=n_queries, replace=False)
    queries: list[LabeledQuery] = []
    for row in target_rows:
        target = agents[int(row)].agent_id
        assignment = assignments[target]
        text = query_text_for(assignment, taxonomy, rng, query_phrases_per_category)
        relevance = {target: 1.0}
        for cat in assignment.categories:
            for other in members[cat]:
                if other != target:
                    relevance.setdefault(other, 0.5)
        queries.append(LabeledQuery(text=text, target_agent_id=target, relevance=relevance))

    return LabeledCorpus(agents=agents, queries=queries, assignments=assignments)


def corpus_fingerprint(corpus: LabeledCorpus) -> str:
    """Stable digest for determinism checks."""
    import hashlib

    from ..profile import serialize

    h = hashlib.sha256()
    for agent in corpus.agents:
        h.update(serialize(agent))
    for q in corpus.queries:
        h.update(q.text.encode())
        h.update(q.target_agent_id.encode())
        h.update(json.dumps(sorted(q.relevance.items())).encode())
    return h.hexdigest()
