"""Append-only persistence for sessions: one JSONL file per session plus an
index, the single source of truth for analysis and replay.

Line layout per session file: a header record first, then events in sequence
order, then optional trailing survey/quiz/fault records. Acknowledged appends
are flushed and fsynced before returning, and a torn final line left by a
crash is ignored on reload.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, IO, Iterator

from .events import SessionEvent, Utterance, as_utterance
from .roster import Roster, roster_from_dict, roster_to_dict
from .session import Phase, SessionConfig


class StoreError(RuntimeError):
    pass


class UnknownSession(StoreError):
    pass


@dataclass
class SessionRecord:
    """Everything persisted for one classroom run."""

    session_id: str
    course_id: str
    roster: dict[str, Any]
    config: dict[str, Any]
    created_at: str
    events: list[SessionEvent] = field(default_factory=list)
    survey: dict[str, Any] | None = None
    quiz: dict[str, Any] | None = None
    fault: str | None = None

    @property
    def utterances(self) -> list[Utterance]:
        return [as_utterance(e) for e in self.events if e.type == "utterance"]

    @property
    def phase(self) -> str:
        for event in reversed(self.events):
            if event.type == "phase_change":
                return event.data["phase"]
        return Phase.INIT.value

    @property
    def setting(self) -> str:
        return self.roster.get("ablation", "full")

    def roster_obj(self) -> Roster:
        return roster_from_dict(self.roster)

    def config_obj(self) -> SessionConfig:
        return SessionConfig.from_dict(self.config)

    def to_lines(self) -> list[dict[str, Any]]:
        lines: list[dict[str, Any]] = [
            {
                "type": "header",
                "session_id": self.session_id,
                "course_id": self.course_id,
                "roster": self.roster,
                "config": self.config,
                "created_at": self.created_at,
            }
        ]
        lines.extend(e.to_json() for e in self.events)
        if self.survey is not None:
            lines.append({"type": "survey", **self.survey})
        if self.quiz is not None:
            lines.append({"type": "quiz", **self.quiz})
        if self.fault is not None:
            lines.append({"type": "fault", "reason": self.fault})
        return lines


def record_from_lines(lines: list[dict[str, Any]]) -> SessionRecord:
    if not lines or lines[0].get("type") != "header":
        raise StoreError("session file must begin with a header record")
    header = lines[0]
    record = SessionRecord(
        session_id=header["session_id"],
        course_id=header["course_id"],
        roster=header["roster"],
        config=header["config"],
        created_at=header["created_at"],
    )
    for obj in lines[1:]:
        kind = obj.get("type")
        if kind == "survey":
            record.survey = {k: v for k, v in obj.items() if k != "type"}
        elif kind == "quiz":
            record.quiz = {k: v for k, v in obj.items() if k != "type"}
        elif kind == "fault":
            record.fault = obj.get("reason", "unknown fault")
        else:
            record.events.append(SessionEvent.from_json(record.session_id, obj))
    return record


def import_session(path: str | Path) -> SessionRecord:
    """Parse a session JSONL file (the export interchange format)."""
    return record_from_lines(list(_read_jsonl(Path(path))))


def _read_jsonl(path: Path) -> Iterator[dict[str, Any]]:
    # Only the final line may be torn by a crash; a parse failure there is
    # treated as an unacknowledged write and skipped.
    chunks = [c for c in path.read_text(encoding="utf-8").split("\n") if c.strip()]
    for i, chunk in enumerate(chunks):
        try:
            yield json.loads(chunk)
        except json.JSONDecodeError:
            if i == len(chunks) - 1:
                return
            raise StoreError(f"{path}: corrupt record at position {i + 1}")


class TranscriptStore:
    """Directory-backed store; one writer per session, any number of readers."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._handles: dict[str, IO[str]] = {}
        self._last_seq: dict[str, int] = {}
        self._terminal: set[str] = set()

    # --- paths ---

    def _session_path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.jsonl"

    @property
    def _index_path(self) -> Path:
        return self.root / "index.jsonl"

    # --- writing ---

    def create_session(
        self,
        session_id: str,
        course_id: str,
        roster: Roster | dict[str, Any],
        config: SessionConfig | dict[str, Any],
        created_at: str,
    ) -> None:
        path = self._session_path(session_id)
        if path.exists():
            raise StoreError(f"session {session_id!r} already exists")
        roster_dict = roster_to_dict(roster) if isinstance(roster, Roster) else roster
        config_dict = config.to_dict() if isinstance(config, SessionConfig) else config
        header = {
            "type": "header",
            "session_id": session_id,
            "course_id": course_id,
            "roster": roster_dict,
            "config": config_dict,
            "created_at": created_at,
        }
        self._write_line(session_id, header)
        self._last_seq[session_id] = 0
        index_entry = {
            "session_id": session_id,
            "course_id": course_id,
            "setting": roster_dict.get("ablation", "full"),
            "created_at": created_at,
            "file": path.name,
        }
        with self._index_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(index_entry, ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def append(self, session_id: str, event: SessionEvent) -> None:
        """Durably append one event; acknowledged once fsynced."""
        self._require_session(session_id)
        last = self._last_seq.get(session_id)
        if last is None:
            record = self.load_session(session_id)
            last = record.events[-1].seq if record.events else 0
            self._last_seq[session_id] = last
            if record.phase == Phase.CLOSED.value:
                self._terminal.add(session_id)
        if session_id in self._terminal:
            raise StoreError(f"session {session_id!r} is closed to further events")
        if event.seq <= last:
            raise StoreError(
                f"out-of-order seq {event.seq} (last acknowledged {last})"
            )
        self._write_line(session_id, event.to_json())
        self._last_seq[session_id] = event.seq
        if event.type == "phase_change" and event.data.get("phase") == Phase.CLOSED.value:
            self._terminal.add(session_id)

    def attach_survey(self, session_id: str, survey: dict[str, Any]) -> None:
        self._require_phase_at_least_closing(session_id)
        self._write_line(session_id, {"type": "survey", **survey})

    def attach_quiz(self, session_id: str, quiz: dict[str, Any]) -> None:
        self._require_phase_at_least_closing(session_id)
        self._write_line(session_id, {"type": "quiz", **quiz})

    def mark_fault(self, session_id: str, reason: str) -> None:
        self._require_session(session_id)
        self._write_line(session_id, {"type": "fault", "reason": reason})

    def close_handles(self) -> None:
        for fh in self._handles.values():
            fh.close()
        self._handles.clear()

    def _write_line(self, session_id: str, obj: dict[str, Any]) -> None:
        fh = self._handles.get(session_id)
        if fh is None or fh.closed:
            fh = self._session_path(session_id).open("a", encoding="utf-8")
            self._handles[session_id] = fh
        fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
        fh.flush()
        os.fsync(fh.fileno())

    def _require_session(self, session_id: str) -> None:
        if not self._session_path(session_id).exists():
            raise UnknownSession(f"unknown session {session_id!r}")

    def _require_phase_at_least_closing(self, session_id: str) -> None:
        record = self.load_session(session_id)
        if record.phase not in (Phase.CLOSING.value, Phase.CLOSED.value):
            raise StoreError("survey/quiz attach only once the class is closing")

    # --- reading ---

    def load_session(self, session_id: str) -> SessionRecord:
        self._require_session(session_id)
        return import_session(self._session_path(session_id))

    def list_sessions(
        self, course_id: str | None = None, setting: str | None = None
    ) -> list[dict[str, Any]]:
        """Session summaries from the index (rebuilt by scanning if missing)."""
        entries = []
        if self._index_path.exists():
            entries = list(_read_jsonl(self._index_path))
        else:
            for path in sorted(self.root.glob("*.jsonl")):
                try:
                    record = import_session(path)
                except StoreError:
                    continue
                entries.append(
                    {
                        "session_id": record.session_id,
                        "course_id": record.course_id,
                        "setting": record.setting,
                        "created_at": record.created_at,
                        "file": path.name,
                    }
                )
        summaries = []
        for entry in entries:
            if course_id is not None and entry["course_id"] != course_id:
                continue
            if setting is not None and entry["setting"] != setting:
                continue
            try:
                record = self.load_session(entry["session_id"])
            except StoreError:
                continue
            summaries.append({**entry, "phase": record.phase})
        return summaries

    def export(self, session_id: str, path: str | Path | None = None) -> str:
        """Serialize a session to the JSONL interchange format."""
        record = self.load_session(session_id)
        text = "\n".join(
            json.dumps(line, ensure_ascii=False) for line in record.to_lines()
        ) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text
