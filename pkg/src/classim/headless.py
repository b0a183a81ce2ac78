"""Headless session driving: scripted runs without humans or wall clocks,
plus event-log replay for debugging.
"""

from __future__ import annotations

import itertools
import json
import re
from pathlib import Path
from typing import Callable, Sequence

from .backend import ChatBackend, ChatMessage, FixtureExhausted
from .course import Course
from .events import TRIGGER_USER_SPOKE, SessionEvent, iso_utc
from .roster import Roster, roster_to_dict
from .session import Phase, SessionConfig, SessionEngine
from .store import SessionRecord, TranscriptStore


def fake_clock(start: float = 1_700_000_000.0, step: float = 1.0) -> Callable[[], float]:
    """A deterministic clock: each call advances by a fixed step."""
    counter = itertools.count()
    return lambda: start + next(counter) * step


class DemoScriptedBackend:
    """A fixture-free deterministic backend for demos and smoke runs.

    Teaching requests return the page script itself; the manager follows a
    fixed policy (answer the user through the assistant or teacher, otherwise
    advance the material); discussion requests return canned per-role lines.
    """

    _DISCUSS_LINES = {
        "assistant": "A quick note from me: the key term on this page is worth writing down.",
        "teacher": "Before we move on, does anyone want me to revisit part of this page?",
        "class_clown": "Okay but imagine explaining this page to your grandparents. I'd try!",
        "deep_thinker": "I keep wondering how this page connects to what we saw earlier.",
        "note_taker": "My notes so far: the main idea of this page, plus one example.",
        "inquisitive_mind": "Can I ask how this works in practice?",
    }

    def complete(
        self,
        system: str,
        history: Sequence[ChatMessage],
        constraint: str | None = None,
        *,
        temperature: float | None = None,
        speaker_id: str | None = None,
        page: int | None = None,
    ) -> str:
        prompt = history[-1].content if history else ""
        if speaker_id == "manager":
            return self._manager_policy(prompt)
        script = _extract_script(prompt)
        if script is not None:
            return script
        line = self._DISCUSS_LINES.get(speaker_id or "")
        return line or f"({speaker_id} nods thoughtfully.)"

    def _manager_policy(self, prompt: str) -> str:
        closing = "Phase: closing" in prompt
        match = re.search(r"Most recent speaker: (\S+)", prompt)
        last_speaker = match.group(1) if match else "(none)"
        if last_speaker == "user":
            responder = "assistant" if "- assistant " in prompt else "teacher"
            return json.dumps({"agent": responder, "function": "interact"})
        if closing:
            return json.dumps({"agent": "teacher", "function": "interact"})
        return json.dumps({"agent": "teacher", "function": "next_page"})


def _extract_script(prompt: str) -> str | None:
    match = re.search(
        r"Teaching script for page \d+:\n(.*?)\n\nRecent classroom conversation:",
        prompt,
        flags=re.DOTALL,
    )
    return match.group(1) if match else None


def load_user_script(path: str | Path) -> list[tuple[int, str]]:
    """Parse a replay file of user utterances: objects with after_seq and text,
    as a JSON array or as JSONL."""
    raw = Path(path).read_text(encoding="utf-8").strip()
    if not raw:
        return []
    if raw.startswith("["):
        entries = json.loads(raw)
    else:
        entries = [json.loads(line) for line in raw.splitlines() if line.strip()]
    return [(int(e["after_seq"]), str(e["text"])) for e in entries]


def run_headless_session(
    course: Course,
    roster: Roster,
    config: SessionConfig,
    backend: ChatBackend,
    *,
    store: TranscriptStore | None = None,
    session_id: str | None = None,
    clock: Callable[[], float] | None = None,
    user_source: Sequence[tuple[int, str]] = (),
    max_steps: int | None = None,
) -> SessionRecord:
    """Run one session start to finish, optionally persisting as it goes."""
    clock = clock or fake_clock()
    engine = SessionEngine(
        course, roster, config, backend, session_id=session_id, clock=clock
    )
    created_at = iso_utc(clock())
    if store is not None:
        store.create_session(engine.session_id, course.id, roster, config, created_at)
        engine.sink = lambda event: store.append(engine.session_id, event)
    engine.run(user_source=user_source, max_steps=max_steps)
    if store is not None:
        if engine.fault is not None:
            store.mark_fault(engine.session_id, engine.fault)
        return store.load_session(engine.session_id)
    return SessionRecord(
        session_id=engine.session_id,
        course_id=course.id,
        roster=roster_to_dict(roster),
        config=config.to_dict(),
        created_at=created_at,
        events=list(engine.events),
        fault=engine.fault,
    )


# --- replay -------------------------------------------------------------------

def trajectory(events: Sequence[SessionEvent]) -> list[tuple[str, int]]:
    """The (phase, page) path a session took, one entry per change."""
    path: list[tuple[str, int]] = []
    phase, page = Phase.INIT.value, 0
    for event in events:
        if event.type == "page_change":
            page = int(event.data["page"])
        elif event.type == "phase_change":
            phase = event.data["phase"]
        else:
            continue
        path.append((phase, page))
    return path


def replay_session(record: SessionRecord, course: Course) -> list[tuple[str, int]]:
    """Re-drive a recorded session through a fresh engine.

    The recorded decisions script the manager and the recorded agent speech
    scripts the cast, so the replayed engine must walk the same phase/page
    trajectory as the original. Returns the replayed trajectory.
    """
    roster = record.roster_obj()
    config = record.config_obj()

    replies: list[str] = []
    for event in record.events:
        if event.type == "decision":
            replies.append(
                json.dumps(
                    {"agent": event.data["agent_id"], "function": event.data["function_id"]}
                )
            )
        elif event.type == "utterance" and event.data["speaker_kind"] != "User":
            replies.append(event.data["text"])

    backend = _CallOrderBackend(replies)
    engine = SessionEngine(
        course,
        roster,
        config,
        backend,
        session_id=record.session_id + "-replay",
        clock=fake_clock(),
    )
    engine.initialize()
    events = record.events
    for i, event in enumerate(events):
        if event.type != "trigger":
            continue
        if engine.state.phase is Phase.CLOSED:
            break
        if event.data["cause"] == TRIGGER_USER_SPOKE:
            user_text = events[i - 1].data["text"]
            engine.handle_user_utterance(user_text)
        else:
            engine.tick(engine.state.last_action_at + config.tau)
    # A session that closed on a silent expiry recorded no trigger for it.
    guard = config.closing_windows + 1
    while engine.state.phase is Phase.CLOSING and guard > 0:
        engine.tick(engine.state.last_action_at + config.tau)
        guard -= 1
    return trajectory(engine.events)


class _CallOrderBackend:
    """Replays completions in strict call order; manager and agents share it."""

    def __init__(self, replies: Sequence[str]):
        self._replies = list(replies)
        self._next = 0

    def complete(self, system, history, constraint=None, *, temperature=None,
                 speaker_id=None, page=None) -> str:
        if self._next >= len(self._replies):
            raise FixtureExhausted("replay ran past the recorded completions")
        reply = self._replies[self._next]
        self._next += 1
        return reply
