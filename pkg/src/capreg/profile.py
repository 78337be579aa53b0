"""Agent capability profiles: validation, interchange format, canonical text.

A profile describes what an agent can do (skills, roles) and under which
conditions (constraints). The canonical text serialization is the single
deterministic input to the embedding stage, so its format is frozen:
equal profiles must yield byte-identical text on every platform.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

PLACEMENTS = ("cloud", "edge", "device")
AVAILABILITIES = ("available", "busy", "offline")

_WS_RUN = re.compile(r"\s+")


class ProfileError(ValueError):
    """Base class for profile document problems."""


class ParseError(ProfileError):
    """Document bytes are not a well-formed JSON object."""


class MissingField(ProfileError):
    def __init__(self, field_name: str):
        self.field_name = field_name
        super().__init__(f"missing required field: {field_name}")


class EmptySkills(ProfileError):
    def __init__(self):
        super().__init__("skills must be a non-empty list of non-empty phrases")


class OutOfRangeValue(ProfileError):
    def __init__(self, field_name: str, detail: str = ""):
        self.field_name = field_name
        msg = f"value out of range for field: {field_name}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


@dataclass(frozen=True)
class ConstraintSet:
    """Operating constraints; flat fixed fields so compatibility scoring is well-defined."""

    latency_tolerance_ms: int = 0
    placement: str = "cloud"
    memory_capacity_mb: int = 0
    current_load: float = 0.0

    def free_memory_mb(self) -> float:
        return self.memory_capacity_mb * (1.0 - self.current_load)


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str
    skills: tuple[str, ...]
    roles: tuple[str, ...] = ()
    constraints: ConstraintSet = field(default_factory=ConstraintSet)
    credibility: float = 0.5
    availability: str = "available"


def _clean_phrase(raw: object, field_name: str) -> str:
    if not isinstance(raw, str):
        raise OutOfRangeValue(field_name, "phrase must be a string")
    phrase = _WS_RUN.sub(" ", raw).strip()
    if not phrase:
        raise OutOfRangeValue(field_name, "phrase empty after trimming")
    return phrase


def _require_number(doc: dict, key: str, default: float | int) -> float:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise OutOfRangeValue(key, "expected a number")
    return value


def validate_profile(doc: dict) -> AgentProfile:
    """Validate a parsed profile document and return a well-formed AgentProfile.

    Required keys: agent_id, skills. Everything else takes documented
    defaults. Unknown top-level keys are ignored for forward compatibility.
    Raises MissingField, EmptySkills or OutOfRangeValue (naming the field).
    """
    if not isinstance(doc, dict):
        raise ParseError("profile document must be a JSON object")

    if "agent_id" not in doc:
        raise MissingField("agent_id")
    agent_id = doc["agent_id"]
    if not isinstance(agent_id, str) or not 1 <= len(agent_id) <= 128:
        raise OutOfRangeValue("agent_id", "must be a string of 1-128 characters")
    if "|" in agent_id or "\n" in agent_id or "\r" in agent_id or not agent_id.isprintable():
        raise OutOfRangeValue("agent_id", "must be printable, without newlines or '|'")

    if "skills" not in doc:
        raise MissingField("skills")
    raw_skills = doc["skills"]
    if not isinstance(raw_skills, list) or not raw_skills:
        raise EmptySkills()
    skills = tuple(_clean_phrase(s, "skills") for s in raw_skills)

    raw_roles = doc.get("roles", [])
    if not isinstance(raw_roles, list):
        raise OutOfRangeValue("roles", "expected a list")
    roles = tuple(_clean_phrase(r, "roles") for r in raw_roles)

    raw_constraints = doc.get("constraints", {})
    if not isinstance(raw_constraints, dict):
        raise OutOfRangeValue("constraints", "expected an object")
    latency = _require_number(raw_constraints, "latency_tolerance_ms", 0)
    if latency < 0 or latency != int(latency):
        raise OutOfRangeValue("latency_tolerance_ms", "non-negative integer required")
    memory = _require_number(raw_constraints, "memory_capacity_mb", 0)
    if memory < 0 or memory != int(memory):
        raise OutOfRangeValue("memory_capacity_mb", "non-negative integer required")
    load = _require_number(raw_constraints, "current_load", 0.0)
    if not 0.0 <= load <= 1.0:
        raise OutOfRangeValue("current_load", "must be in [0, 1]")
    placement = raw_constraints.get("placement", "cloud")
    if placement not in PLACEMENTS:
        raise OutOfRangeValue("placement", f"must be one of {PLACEMENTS}")

    credibility = _require_number(doc, "credibility", 0.5)
    if not 0.0 <= credibility <= 1.0:
        raise OutOfRangeValue("credibility", "must be in [0, 1]")

    availability = doc.get("availability", "available")
    if availability not in AVAILABILITIES:
        raise OutOfRangeValue("availability", f"must be one of {AVAILABILITIES}")

    return AgentProfile(
        agent_id=agent_id,
        skills=skills,
        roles=roles,
        constraints=ConstraintSet(
            latency_tolerance_ms=int(latency),
            placement=placement,
            memory_capacity_mb=int(memory),
            current_load=float(load),
        ),
        credibility=float(credibility),
        availability=availability,
    )


def profile_from_document(data: bytes | str) -> AgentProfile:
    """Parse UTF-8 JSON bytes and validate. Raises ParseError on malformed input."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"document is not valid UTF-8: {exc}") from exc
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("profile document must be a JSON object")
    return validate_profile(doc)


def to_document(p: AgentProfile) -> dict:
    """Interchange-format dict; round-trips through profile_from_document."""
    return {
        "agent_id": p.agent_id,
        "skills": list(p.skills),
        "roles": list(p.roles),
        "constraints": {
            "latency_tolerance_ms": p.constraints.latency_tolerance_ms,
            "placement": p.constraints.placement,
            "memory_capacity_mb": p.constraints.memory_capacity_mb,
            "current_load": p.constraints.current_load,
        },
        "credibility": p.credibility,
        "availability": p.availability,
    }


def serialize(p: AgentProfile) -> bytes:
    return json.dumps(to_document(p), sort_keys=True, separators=(",", ":")).encode("utf-8")


def canonical_text(p: AgentProfile) -> str:
    """Deterministic single-line lowercase serialization used for embedding.

    Field order, separators and sorting are frozen. agent_id and credibility
    are excluded: identity and trust are ranking signals, not semantics.
    """
    skills = ", ".join(sorted(s.lower() for s in p.skills))
    roles = ", ".join(sorted(r.lower() for r in p.roles))
    c = p.constraints
    state = (
        f"placement={c.placement}, latency_ms={c.latency_tolerance_ms}, "
        f"memory_mb={c.memory_capacity_mb}, load={c.current_load:.2f}"
    )
    parts = [
        "skills: " + skills if skills else "skills:",
        "roles: " + roles if roles else "roles:",
        "state: " + state,
    ]
    return " | ".join(parts)


def canonical_task_text(task_text: str) -> str:
    """Canonical lowercase single-line form of a free-text task query."""
    return _WS_RUN.sub(" ", task_text).strip().lower()
