"""Class roles, behavior tags, persona prompts, and the default cast.

The roster fixes who can appear in a classroom: one teacher, an optional
assistant, zero or more classmates, and the hidden manager that coordinates
them but never speaks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path


class RoleBehavior(str, Enum):
    """The four classroom behavior tags a role can carry."""

    TI = "TI"  # Teaching and Initiation
    ID = "ID"  # In-depth Discussion
    EC = "EC"  # Emotional Companionship
    CM = "CM"  # Classroom Management


class AgentKind(str, Enum):
    TEACHER = "Teacher"
    ASSISTANT = "Assistant"
    CLASSMATE = "Classmate"
    MANAGER = "Manager"


class Ablation(str, Enum):
    FULL = "full"
    NO_CLASSMATES = "no_classmates"
    NO_INTERACTIONS = "no_interactions"


TEACHER_BEHAVIORS = frozenset(
    {RoleBehavior.TI, RoleBehavior.ID, RoleBehavior.EC, RoleBehavior.CM}
)
ASSISTANT_BEHAVIORS = frozenset({RoleBehavior.ID, RoleBehavior.EC, RoleBehavior.CM})


class RosterError(ValueError):
    """Raised when a spec or roster violates a casting invariant."""


@dataclass(frozen=True)
class AgentSpec:
    """A class role bound to a persona prompt.

    The persona is the system-prompt text that customizes the backing model
    into this role; it is configuration, not code.
    """

    id: str
    display_name: str
    kind: AgentKind
    behaviors: frozenset[RoleBehavior]
    persona: str

    def __post_init__(self) -> None:
        if not self.id:
            raise RosterError("agent id must be non-empty")
        if self.kind is AgentKind.TEACHER and self.behaviors != TEACHER_BEHAVIORS:
            raise RosterError(f"{self.id}: teacher must carry TI, ID, EC, CM")
        if self.kind is AgentKind.ASSISTANT and self.behaviors != ASSISTANT_BEHAVIORS:
            raise RosterError(f"{self.id}: assistant must carry ID, EC, CM")
        if self.kind is AgentKind.MANAGER and self.behaviors:
            raise RosterError(f"{self.id}: manager carries no behavior tags")
        if self.kind is not AgentKind.MANAGER and not self.persona.strip():
            raise RosterError(f"{self.id}: persona must be non-empty")


@dataclass(frozen=True)
class Roster:
    agents: tuple[AgentSpec, ...]
    ablation: Ablation = Ablation.FULL

    def __post_init__(self) -> None:
        ids = [a.id for a in self.agents]
        if len(ids) != len(set(ids)):
            raise RosterError("agent ids must be unique within a roster")
        kinds = [a.kind for a in self.agents]
        if kinds.count(AgentKind.TEACHER) != 1:
            raise RosterError("roster needs exactly one teacher")
        if kinds.count(AgentKind.MANAGER) != 1:
            raise RosterError("roster needs exactly one manager")
        if kinds.count(AgentKind.ASSISTANT) > 1:
            raise RosterError("roster allows at most one assistant")
        if self.ablation is not Ablation.FULL and any(
            k is AgentKind.CLASSMATE for k in kinds
        ):
            raise RosterError(f"{self.ablation.value} roster must carry no classmates")

    @property
    def teacher(self) -> AgentSpec:
        return next(a for a in self.agents if a.kind is AgentKind.TEACHER)

    @property
    def manager(self) -> AgentSpec:
        return next(a for a in self.agents if a.kind is AgentKind.MANAGER)

    @property
    def interactions_disabled(self) -> bool:
        return self.ablation is Ablation.NO_INTERACTIONS

    def visible_agents(self) -> tuple[AgentSpec, ...]:
        """Agents eligible to speak; the manager is never among them."""
        return tuple(a for a in self.agents if a.kind is not AgentKind.MANAGER)

    def get(self, agent_id: str) -> AgentSpec | None:
        return next((a for a in self.agents if a.id == agent_id), None)


def _persona(name: str) -> str:
    return (
        resources.files("classim.data.personas").joinpath(f"{name}.txt").read_text("utf-8")
    )


def default_roster() -> Roster:
    """The standard cast: teacher, assistant, four classmates, hidden manager."""
    specs = (
        AgentSpec("teacher", "Teacher", AgentKind.TEACHER, TEACHER_BEHAVIORS, _persona("teacher")),
        AgentSpec("assistant", "Assistant", AgentKind.ASSISTANT, ASSISTANT_BEHAVIORS, _persona("assistant")),
        AgentSpec(
            "class_clown", "Class Clown", AgentKind.CLASSMATE,
            frozenset({RoleBehavior.TI, RoleBehavior.EC, RoleBehavior.CM}),
            _persona("class_clown"),
        ),
        AgentSpec(
            "deep_thinker", "Deep Thinker", AgentKind.CLASSMATE,
            frozenset({RoleBehavior.TI, RoleBehavior.ID}),
            _persona("deep_thinker"),
        ),
        AgentSpec(
            "note_taker", "Note Taker", AgentKind.CLASSMATE,
            frozenset({RoleBehavior.TI, RoleBehavior.CM}),
            _persona("note_taker"),
        ),
        AgentSpec(
            "inquisitive_mind", "Inquisitive Mind", AgentKind.CLASSMATE,
            frozenset({RoleBehavior.TI, RoleBehavior.EC}),
            _persona("inquisitive_mind"),
        ),
        AgentSpec("manager", "Manager", AgentKind.MANAGER, frozenset(), _persona("manager")),
    )
    return Roster(agents=specs, ablation=Ablation.FULL)


def apply_ablation(roster: Roster, mode: Ablation) -> Roster:
    """Return the roster under an ablation mode. Idempotent.

    Both ablations drop the classmates; disabling interactions additionally
    flags the session layer to reject user input and restrict the manager to
    tutoring functions.
    """
    if mode is Ablation.FULL:
        return replace(roster, ablation=Ablation.FULL)
    kept = tuple(a for a in roster.agents if a.kind is not AgentKind.CLASSMATE)
    return Roster(agents=kept, ablation=mode)


def spec_to_dict(spec: AgentSpec) -> dict:
    return {
        "id": spec.id,
        "display_name": spec.display_name,
        "kind": spec.kind.value,
        "behaviors": sorted(b.value for b in spec.behaviors),
        "persona": spec.persona,
    }


def spec_from_dict(data: dict) -> AgentSpec:
    return AgentSpec(
        id=data["id"],
        display_name=data.get("display_name", data["id"]),
        kind=AgentKind(data["kind"]),
        behaviors=frozenset(RoleBehavior(b) for b in data.get("behaviors", [])),
        persona=data.get("persona", ""),
    )


def roster_to_dict(roster: Roster) -> dict:
    return {
        "ablation": roster.ablation.value,
        "agents": [spec_to_dict(a) for a in roster.agents],
    }


def roster_from_dict(data: dict) -> Roster:
    return Roster(
        agents=tuple(spec_from_dict(a) for a in data["agents"]),
        ablation=Ablation(data.get("ablation", "full")),
    )


def merge_roster_overrides(roster: Roster, overrides_path: str | Path) -> Roster:
    """Merge an override file (JSON list of agent specs) over a roster by id.

    Matching ids replace the default spec; new ids are appended.
    """
    data = json.loads(Path(overrides_path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise RosterError("roster override file must be a JSON list of agent specs")
    overrides = {d["id"]: spec_from_dict(d) for d in data}
    merged = [overrides.pop(a.id, a) for a in roster.agents]
    merged.extend(overrides.values())
    return Roster(agents=tuple(merged), ablation=roster.ablation)
