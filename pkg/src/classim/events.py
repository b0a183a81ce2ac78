"""Session event log records: the replay/debug format and the UI stream payload.

Every event in a session carries a monotonic sequence number. Utterances are
events too; they additionally project into the typed Utterance record used by
the analysis pipelines.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

EVENT_TYPES = ("utterance", "page_change", "phase_change", "decision", "trigger")

TRIGGER_USER_SPOKE = "user_spoke"
TRIGGER_TAU_EXPIRED = "tau_expired"

USER_SPEAKER_ID = "user"
USER_FUNCTION_ID = "user_input"


def iso_utc(epoch_seconds: float) -> str:
    """Format an epoch timestamp as UTC ISO-8601 with millisecond precision."""
    dt = datetime.fromtimestamp(epoch_seconds, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_iso_utc(text: str) -> float:
    return datetime.strptime(text, "%Y-%m-%dT%H:%M:%S.%fZ").replace(
        tzinfo=timezone.utc
    ).timestamp()


@dataclass(frozen=True)
class SessionEvent:
    session_id: str
    seq: int
    type: str
    at: str  # UTC ISO-8601, millisecond precision
    data: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {self.type!r}")
        if self.seq < 1:
            raise ValueError("event seq numbers start at 1")

    def to_json(self) -> dict[str, Any]:
        return {"type": self.type, "seq": self.seq, "at": self.at, **self.data}

    @classmethod
    def from_json(cls, session_id: str, obj: dict[str, Any]) -> "SessionEvent":
        data = {k: v for k, v in obj.items() if k not in ("type", "seq", "at")}
        return cls(
            session_id=session_id,
            seq=int(obj["seq"]),
            type=obj["type"],
            at=obj["at"],
            data=data,
        )


@dataclass(frozen=True)
class Utterance:
    """One line of classroom speech, by an agent or the user."""

    session_id: str
    seq: int
    wall_time: str
    speaker_id: str
    speaker_kind: str  # Teacher | Assistant | Classmate | User
    function_id: str  # teach | interact | user_input | custom function id
    text: str

    def timestamp(self) -> float:
        return parse_iso_utc(self.wall_time)


def utterance_event(utt: Utterance) -> SessionEvent:
    return SessionEvent(
        session_id=utt.session_id,
        seq=utt.seq,
        type="utterance",
        at=utt.wall_time,
        data={
            "speaker_id": utt.speaker_id,
            "speaker_kind": utt.speaker_kind,
            "function_id": utt.function_id,
            "text": utt.text,
        },
    )


def as_utterance(event: SessionEvent) -> Utterance:
    if event.type != "utterance":
        raise ValueError(f"event seq {event.seq} is a {event.type}, not an utterance")
    return Utterance(
        session_id=event.session_id,
        seq=event.seq,
        wall_time=event.at,
        speaker_id=event.data["speaker_id"],
        speaker_kind=event.data["speaker_kind"],
        function_id=event.data["function_id"],
        text=event.data["text"],
    )
