"""capreg: a semantic capability registry for agent discovery.

Agents publish structured capability profiles; the registry embeds them into
a shared semantic space, compresses the embeddings into compact discrete
codes, and answers task queries with ranked, constraint-aware retrieval that
keeps adapting as agents join and leave.
"""

from .embed import EmbedderConfig, EmbeddingVector
from .index import QuerySpec, RankedResult, RankWeights, RequiredConstraints
from .profile import AgentProfile, ConstraintSet, canonical_text, profile_from_document, validate_profile
from .registry import Registry, RegistryConfig, RegistryEvent

__version__ = "0.1.0"

__all__ = [
    "AgentProfile",
    "ConstraintSet",
    "EmbedderConfig",
    "EmbeddingVector",
    "QuerySpec",
    "RankWeights",
    "RankedResult",
    "Registry",
    "RegistryConfig",
    "RegistryEvent",
    "RequiredConstraints",
    "canonical_text",
    "profile_from_document",
    "validate_profile",
]
