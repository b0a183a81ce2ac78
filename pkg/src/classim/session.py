"""The classroom state machine.

One engine owns one session: it tracks the taught-material prefix and dialogue
history, asks the hidden manager which (agent, function) pair comes next, and
executes that action. Decisions are triggered by a user utterance or by the
idle window expiring, never both at once. The engine is a single-writer state
machine; user input arriving while an action is in flight is queued and
applied when the action completes.
"""

from __future__ import annotations

import json
import logging
import re
import time
import uuid
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Sequence

from .agents import Agent, AgentSpeakError, instantiate_agent
from .backend import BackendError, ChatBackend, ChatMessage
from .course import Course
from .events import (
    TRIGGER_TAU_EXPIRED,
    TRIGGER_USER_SPOKE,
    USER_FUNCTION_ID,
    USER_SPEAKER_ID,
    SessionEvent,
    Utterance,
    iso_utc,
    utterance_event,
)
from .roster import AgentKind, Roster

logger = logging.getLogger(__name__)


class Phase(str, Enum):
    INIT = "init"
    RUNNING = "running"
    CLOSING = "closing"
    CLOSED = "closed"


class SessionError(RuntimeError):
    pass


class UserInputRejected(SessionError):
    """User input refused, with a machine-readable code."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# --- the function hierarchy -------------------------------------------------

class FunctionCategory(str, Enum):
    TUTORING = "X"
    INTERACTING = "Y"


@dataclass(frozen=True)
class Teach:
    """Deliver the script for one page. Tutoring; teacher only."""

    page: int


@dataclass(frozen=True)
class NextPage:
    """Advance the material and immediately teach the new page."""


@dataclass(frozen=True)
class Interact:
    """One agent speaks to the room, conditioned on history and current page."""

    agent_id: str


ClassFunction = Teach | NextPage | Interact


@dataclass(frozen=True)
class FunctionSpec:
    """Registry entry: every pluggable function declares its category and who
    may perform it."""

    id: str
    category: FunctionCategory
    eligible_kinds: frozenset[AgentKind]


FUNCTION_REGISTRY: dict[str, FunctionSpec] = {
    "teach": FunctionSpec(
        "teach", FunctionCategory.TUTORING, frozenset({AgentKind.TEACHER})
    ),
    "next_page": FunctionSpec(
        "next_page", FunctionCategory.TUTORING, frozenset({AgentKind.TEACHER})
    ),
    "interact": FunctionSpec(
        "interact",
        FunctionCategory.INTERACTING,
        frozenset({AgentKind.TEACHER, AgentKind.ASSISTANT, AgentKind.CLASSMATE}),
    ),
}


def register_function(spec: FunctionSpec) -> None:
    """Extension hook for new classroom functions (e.g. displaying exercises)."""
    if spec.id in FUNCTION_REGISTRY:
        raise ValueError(f"function id {spec.id!r} already registered")
    FUNCTION_REGISTRY[spec.id] = spec


def function_id(fn: ClassFunction) -> str:
    if isinstance(fn, Teach):
        return "teach"
    if isinstance(fn, NextPage):
        return "next_page"
    return "interact"


def function_category(fn: ClassFunction) -> FunctionCategory:
    return FUNCTION_REGISTRY[function_id(fn)].category


@dataclass(frozen=True)
class ManagerDecision:
    agent_id: str
    function: ClassFunction


@dataclass(frozen=True)
class SessionConfig:
    tau: float = 30.0  # idle window in seconds; 0 means headless (always expired)
    history_window: int = 40
    closing_windows: int = 1
    max_decision_retries: int = 2

    def __post_init__(self) -> None:
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.closing_windows < 0:
            raise ValueError("closing_windows must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "tau": self.tau,
            "history_window": self.history_window,
            "closing_windows": self.closing_windows,
            "max_decision_retries": self.max_decision_retries,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SessionConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass
class ClassState:
    """The manager's observable world."""

    course_id: str
    taught_upto: int  # pages 1..taught_upto have been taught
    history: list[Utterance]
    roster: Roster
    phase: Phase
    last_action_at: float


class DecisionValidationError(ValueError):
    pass


class SessionEngine:
    """Drives one classroom from initialization to close.

    Exactly one execution context may call the mutating methods; user input,
    idle expiry, and backend completions must be delivered to it as ordered
    calls. Events flow to the optional sink as they are emitted.
    """

    def __init__(
        self,
        course: Course,
        roster: Roster,
        config: SessionConfig,
        backend: ChatBackend,
        *,
        session_id: str | None = None,
        clock: Callable[[], float] = time.time,
        sink: Callable[[SessionEvent], None] | None = None,
    ):
        self.course = course
        self.config = config
        self.backend = backend
        self.session_id = session_id or uuid.uuid4().hex[:12]
        self.clock = clock
        self.sink = sink
        self.events: list[SessionEvent] = []
        self.fault: str | None = None

        self.state = ClassState(
            course_id=course.id,
            taught_upto=0,
            history=[],
            roster=roster,
            phase=Phase.INIT,
            last_action_at=clock(),
        )
        self.agents: dict[str, Agent] = {
            spec.id: instantiate_agent(spec, backend)
            for spec in roster.visible_agents()
        }
        self._closing_budget = config.closing_windows
        self._seq = 0
        self._in_action = False
        self._pending_user: deque[str] = deque()

    # --- event plumbing ---

    def _emit(self, type_: str, **data: Any) -> SessionEvent:
        self._seq += 1
        event = SessionEvent(
            session_id=self.session_id,
            seq=self._seq,
            type=type_,
            at=iso_utc(self.clock()),
            data=data,
        )
        self.events.append(event)
        if self.sink is not None:
            self.sink(event)
        return event

    def _emit_utterance(self, speaker_id: str, speaker_kind: str, fn_id: str, text: str) -> Utterance:
        self._seq += 1
        utt = Utterance(
            session_id=self.session_id,
            seq=self._seq,
            wall_time=iso_utc(self.clock()),
            speaker_id=speaker_id,
            speaker_kind=speaker_kind,
            function_id=fn_id,
            text=text,
        )
        self.state.history.append(utt)
        event = utterance_event(utt)
        self.events.append(event)
        if self.sink is not None:
            self.sink(event)
        return utt

    _LEGAL_TRANSITIONS = {
        Phase.INIT: {Phase.RUNNING},
        Phase.RUNNING: {Phase.CLOSING},
        Phase.CLOSING: {Phase.CLOSED},
        Phase.CLOSED: set(),
    }

    def _set_phase(self, phase: Phase, **extra: Any) -> None:
        if phase not in self._LEGAL_TRANSITIONS[self.state.phase]:
            raise SessionError(
                f"illegal phase transition {self.state.phase.value} -> {phase.value}"
            )
        self.state.phase = phase
        self._emit("phase_change", phase=phase.value, **extra)

    # --- lifecycle ---

    def initialize(self) -> None:
        """Open the class: display page 1 and have the teacher deliver it."""
        if self.state.phase is not Phase.INIT:
            raise SessionError("session already initialized")
        if len(self.course) == 0:
            raise SessionError("course has no pages")
        self.state.taught_upto = 1
        self._in_action = True
        try:
            self._emit("page_change", page=1)
            self._teach_current_page()
        finally:
            self._in_action = False
        self._set_phase(Phase.RUNNING)
        self.state.last_action_at = self.clock()
        self._drain_pending_user()

    def handle_user_utterance(self, text: str) -> bool:
        """Record a user utterance and trigger a decision immediately.

        Returns False when the input was queued because an action is in
        flight; it is applied as soon as the action completes.
        """
        if self.state.roster.interactions_disabled:
            raise UserInputRejected("interactions_disabled", "user input is disabled in this session")
        if not text or not text.strip():
            raise UserInputRejected("empty_text", "utterance text must be non-empty")
        if self._in_action:
            self._pending_user.append(text)
            return False
        if self.state.phase not in (Phase.RUNNING, Phase.CLOSING):
            raise UserInputRejected("not_accepting", f"session is {self.state.phase.value}")
        self._apply_user_utterance(text)
        return True

    def _apply_user_utterance(self, text: str) -> None:
        self._emit_utterance(USER_SPEAKER_ID, "User", USER_FUNCTION_ID, text)
        self._emit("trigger", cause=TRIGGER_USER_SPOKE)
        self._decide_and_execute()

    def tick(self, now: float | None = None) -> bool:
        """Fire the idle-window check; returns True when a decision was triggered.

        In the closing phase each expired window burns one unit of the closing
        budget; when the budget runs out the class closes instead of deciding.
        """
        if self.state.phase not in (Phase.RUNNING, Phase.CLOSING):
            return False
        now = self.clock() if now is None else now
        if now - self.state.last_action_at < self.config.tau:
            return False
        if self.state.phase is Phase.CLOSING:
            self._closing_budget -= 1
            if self._closing_budget <= 0:
                self._close()
                return False
        self._emit("trigger", cause=TRIGGER_TAU_EXPIRED)
        self._decide_and_execute()
        return True

    def _close(self) -> None:
        self._set_phase(Phase.CLOSED, survey_prompt=True)

    def abort(self, reason: str) -> None:
        """Close the session with a fault marker, from any phase."""
        self.fault = reason
        if self.state.phase is not Phase.CLOSED:
            self._fault_close()

    def _fault_close(self) -> None:
        # Fault closes bypass the ordinary phase ladder: whatever state the
        # session was in, the log still ends with a terminal phase_change.
        self.state.phase = Phase.CLOSED
        self._emit("phase_change", phase=Phase.CLOSED.value, fault=True)

    def _enter_closing(self) -> None:
        if self.state.phase is Phase.CLOSING:
            return
        self._set_phase(Phase.CLOSING)
        # With interactions disabled nothing can legally happen after the last
        # page, so the discussion window collapses and the class closes now.
        if self.state.roster.interactions_disabled or self.config.closing_windows == 0:
            self._close()

    # --- the decision loop ---

    def _decide_and_execute(self) -> None:
        decision = self.decide_next()
        self._emit(
            "decision",
            agent_id=decision.agent_id,
            function_id=function_id(decision.function),
        )
        self.execute_function(decision)

    def decide_next(self) -> ManagerDecision:
        """Ask the manager for the next (agent, function) pair.

        Invalid or unparseable replies get a corrective reprompt, up to the
        configured retry budget; exhaustion falls back deterministically to
        advancing the material, or to the teacher speaking once the material
        is finished.
        """
        if self.state.phase not in (Phase.RUNNING, Phase.CLOSING):
            raise SessionError(f"no decisions in phase {self.state.phase.value}")
        conversation: list[ChatMessage] = [
            ChatMessage(origin="user", speaker_id=None, content=self._serialize_state())
        ]
        attempts = self.config.max_decision_retries + 1
        for _ in range(attempts):
            try:
                reply = self.backend.complete(
                    system=self.state.roster.manager.persona,
                    history=conversation,
                    constraint='Reply with exactly one JSON object: {"agent": <id>, "function": <id>}.',
                    temperature=0.0,
                    speaker_id=self.state.roster.manager.id,
                    page=self.state.taught_upto,
                )
            except BackendError as exc:
                raise AgentSpeakError(self.state.roster.manager.id, exc) from exc
            try:
                return self.parse_decision(reply)
            except DecisionValidationError as exc:
                logger.debug("manager decision rejected: %s", exc)
                conversation.append(
                    ChatMessage(
                        origin="agent", speaker_id="manager", content=reply or "(empty reply)"
                    )
                )
                conversation.append(
                    ChatMessage(
                        origin="user",
                        speaker_id=None,
                        content=(
                            f"That decision was invalid: {exc}. "
                            f"Reply again with one JSON object "
                            f'{{"agent": <id>, "function": <id>}} that satisfies the rules.'
                        ),
                    )
                )
        return self._fallback_decision()

    def _fallback_decision(self) -> ManagerDecision:
        teacher = self.state.roster.teacher
        # While material remains (or the last page is taught but the class has
        # not wound down yet) advancing is always legal for the teacher; once
        # closing, the teacher speaks instead.
        if self.state.taught_upto < len(self.course) or self.state.phase is Phase.RUNNING:
            return ManagerDecision(teacher.id, NextPage())
        return ManagerDecision(teacher.id, Interact(teacher.id))

    def parse_decision(self, reply: str) -> ManagerDecision:
        """Parse and validate one manager reply; raises DecisionValidationError."""
        obj = _extract_json_object(reply)
        if obj is None:
            raise DecisionValidationError("reply carries no JSON object")
        agent_id = obj.get("agent")
        fn_name = obj.get("function")
        if not isinstance(agent_id, str) or not isinstance(fn_name, str):
            raise DecisionValidationError('needs string fields "agent" and "function"')
        if fn_name == "teach":
            fn: ClassFunction = Teach(page=self.state.taught_upto)
        elif fn_name == "next_page":
            fn = NextPage()
        elif fn_name == "interact":
            fn = Interact(agent_id=agent_id)
        else:
            raise DecisionValidationError(f"unknown function {fn_name!r}")
        decision = ManagerDecision(agent_id=agent_id, function=fn)
        self.validate_decision(decision)
        return decision

    def validate_decision(self, decision: ManagerDecision) -> None:
        roster = self.state.roster
        spec = roster.get(decision.agent_id)
        if spec is None:
            raise DecisionValidationError(f"unknown agent {decision.agent_id!r}")
        if spec.kind is AgentKind.MANAGER:
            raise DecisionValidationError("the manager never speaks or acts visibly")
        fn_spec = FUNCTION_REGISTRY[function_id(decision.function)]
        if spec.kind not in fn_spec.eligible_kinds:
            raise DecisionValidationError(
                f"function {fn_spec.id!r} cannot be performed by a {spec.kind.value}"
            )
        if (
            roster.interactions_disabled
            and fn_spec.category is FunctionCategory.INTERACTING
        ):
            raise DecisionValidationError(
                "interacting functions are disabled in this session"
            )

    def _serialize_state(self) -> str:
        state = self.state
        total = len(self.course)
        current = self.course.page(state.taught_upto) if state.taught_upto else None
        lines = [
            f"Course: {self.course.title}",
            f"Current page: {state.taught_upto} of {total} "
            f"({total - state.taught_upto} pages remain)",
            f"Phase: {state.phase.value}",
        ]
        if current is not None:
            lines.append(f"Current page script:\n{current.script}")
        allowed = self._allowed_functions()
        lines.append("Agents (id, kind, behavior tags):")
        for spec in state.roster.visible_agents():
            tags = ",".join(sorted(b.value for b in spec.behaviors))
            lines.append(f"  - {spec.id} ({spec.kind.value}; {tags})")
        lines.append(f"Functions you may choose: {', '.join(sorted(allowed))}")
        lines.append(
            "Rules: tutoring functions (teach, next_page) only with the teacher; "
            "interact may target any visible agent."
        )
        recent = state.history[-self.config.history_window :]
        lines.append("Most recent speaker: " + (recent[-1].speaker_id if recent else "(none)"))
        lines.append("Recent conversation:")
        if recent:
            lines.extend(f"[{u.speaker_id}]: {u.text}" for u in recent)
        else:
            lines.append("(nothing yet)")
        return "\n".join(lines)

    def _allowed_functions(self) -> list[str]:
        allowed = []
        for spec in FUNCTION_REGISTRY.values():
            if (
                self.state.roster.interactions_disabled
                and spec.category is FunctionCategory.INTERACTING
            ):
                continue
            allowed.append(spec.id)
        return allowed

    # --- execution ---

    def execute_function(self, decision: ManagerDecision) -> None:
        """Apply one validated decision to the class state."""
        self.validate_decision(decision)
        self._in_action = True
        try:
            fn = decision.function
            if isinstance(fn, Teach):
                self._teach_page(fn.page)
            elif isinstance(fn, NextPage):
                if self.state.taught_upto >= len(self.course):
                    self._enter_closing()
                else:
                    self.state.taught_upto += 1
                    self._emit("page_change", page=self.state.taught_upto)
                    self._teach_current_page()
            else:
                self._interact(fn.agent_id)
        finally:
            self._in_action = False
        self.state.last_action_at = self.clock()
        self._drain_pending_user()

    def _drain_pending_user(self) -> None:
        while self._pending_user and self.state.phase in (Phase.RUNNING, Phase.CLOSING):
            self._apply_user_utterance(self._pending_user.popleft())

    def _teach_current_page(self) -> None:
        self._teach_page(self.state.taught_upto)

    def _teach_page(self, page_index: int) -> None:
        teacher_spec = self.state.roster.teacher
        agent = self.agents[teacher_spec.id]
        page = self.course.page(page_index)
        text = agent.deliver_page(page, self._history_pairs(), self.config.history_window)
        self._emit_utterance(teacher_spec.id, teacher_spec.kind.value, "teach", text)

    def _interact(self, agent_id: str) -> None:
        spec = self.state.roster.get(agent_id)
        assert spec is not None  # validated upstream
        agent = self.agents[agent_id]
        current = self.course.page(self.state.taught_upto) if self.state.taught_upto else None
        text = agent.discuss(self._history_pairs(), current, self.config.history_window)
        self._emit_utterance(spec.id, spec.kind.value, "interact", text)

    def _history_pairs(self) -> list[tuple[str, str]]:
        return [(u.speaker_id, u.text) for u in self.state.history]

    # --- headless driving ---

    def run(
        self,
        user_source: Sequence[tuple[int, str]] = (),
        max_steps: int | None = None,
    ) -> None:
        """Drive the loop from initialization to close without a wall clock.

        ``user_source`` is a pull-based replay: (after_seq, text) pairs are
        spoken once the event log has passed the given sequence number. A
        fault (backend failure or an exhausted step budget) closes the session
        with the fault recorded rather than raising.
        """
        if max_steps is None:
            max_steps = (len(self.course) + self.config.closing_windows + 1) * 50
        pending = deque(sorted(user_source, key=lambda item: item[0]))
        steps = 0
        try:
            self.initialize()
            while self.state.phase is not Phase.CLOSED:
                steps += 1
                if steps > max_steps:
                    logger.error("session %s: step budget exhausted", self.session_id)
                    self.abort(f"step budget exhausted after {max_steps} steps")
                    break
                if pending and self._seq >= pending[0][0]:
                    _, text = pending.popleft()
                    self.handle_user_utterance(text)
                else:
                    self.tick(self.state.last_action_at + self.config.tau)
        except (AgentSpeakError, BackendError) as exc:
            logger.error("session %s faulted: %s", self.session_id, exc)
            self.abort(str(exc))


def _extract_json_object(text: str) -> dict[str, Any] | None:
    """Pull the first JSON object out of a reply, tolerating code fences."""
    cleaned = re.sub(r"```(?:json)?", "", text).strip()
    try:
        obj = json.loads(cleaned)
        return obj if isinstance(obj, dict) else None
    except json.JSONDecodeError:
        pass
    match = re.search(r"\{.*?\}", cleaned, flags=re.DOTALL)
    if match is None:
        return None
    try:
        obj = json.loads(match.group(0))
    except json.JSONDecodeError:
        return None
    return obj if isinstance(obj, dict) else None
