"""Bind an agent spec to a chat backend and compose its prompts."""

from __future__ import annotations

from typing import Sequence

from .backend import BackendError, ChatBackend, ChatMessage
from .course import ScriptPage
from .roster import AgentKind, AgentSpec, RosterError


class AgentSpeakError(RuntimeError):
    """Backend failure while an agent was speaking, tagged with the agent id."""

    def __init__(self, agent_id: str, cause: Exception):
        super().__init__(f"agent {agent_id!r} failed to speak: {cause}")
        self.agent_id = agent_id
        self.cause = cause


def render_history(history: Sequence[tuple[str, str]], limit: int) -> str:
    """Render the most recent (speaker, text) pairs as transcript lines."""
    recent = list(history)[-limit:] if limit > 0 else []
    if not recent:
        return "(the class has not spoken yet)"
    return "\n".join(f"[{speaker}]: {text}" for speaker, text in recent)


class Agent:
    """A class role that can be asked to speak.

    Each speak request composes the persona with a serialized view of the
    class state and returns the backend's utterance text verbatim.
    """

    def __init__(self, spec: AgentSpec, backend: ChatBackend):
        self.spec = spec
        self.backend = backend

    @property
    def id(self) -> str:
        return self.spec.id

    def deliver_page(
        self,
        page: ScriptPage,
        history: Sequence[tuple[str, str]],
        history_window: int,
    ) -> str:
        """Teach one page: the prompt carries the page script verbatim."""
        task = (
            f"It is time to teach page {page.index}. Deliver the teaching script "
            f"below to the class in your own voice, keeping its content intact.\n\n"
            f"Teaching script for page {page.index}:\n{page.script}\n\n"
            f"Recent classroom conversation:\n"
            f"{render_history(history, history_window)}"
        )
        return self._speak(task, page_index=page.index)

    def discuss(
        self,
        history: Sequence[tuple[str, str]],
        current_page: ScriptPage | None,
        history_window: int,
    ) -> str:
        """Contribute one in-character utterance to the ongoing discussion."""
        page_note = (
            f"The class is currently on page {current_page.index}; its script:\n"
            f"{current_page.script}\n\n"
            if current_page is not None
            else ""
        )
        task = (
            f"{page_note}"
            f"Recent classroom conversation:\n"
            f"{render_history(history, history_window)}\n\n"
            f"Speak next as {self.spec.display_name}. Reply with your utterance only."
        )
        return self._speak(task, page_index=current_page.index if current_page else None)

    def _speak(self, task: str, page_index: int | None) -> str:
        try:
            return self.backend.complete(
                system=self.spec.persona,
                history=[ChatMessage(origin="user", speaker_id=None, content=task)],
                speaker_id=self.spec.id,
                page=page_index,
            )
        except BackendError as exc:
            raise AgentSpeakError(self.spec.id, exc) from exc


def instantiate_agent(spec: AgentSpec, backend: ChatBackend) -> Agent:
    """Realize a spec as a speaking agent bound to a backend handle."""
    if spec.kind is not AgentKind.MANAGER and not spec.persona.strip():
        raise RosterError(f"{spec.id}: persona must be non-empty")
    return Agent(spec, backend)
