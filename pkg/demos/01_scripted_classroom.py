"""A complete classroom session, end to end, with no model calls.

The built-in scripted backend stands in for the language model: the teacher
delivers each page's script verbatim, the hidden manager follows a fixed
policy (answer the participant, otherwise advance), and classmates reply with
canned lines. A replayed participant asks two questions mid-class.

Run:  python demos/01_scripted_classroom.py
"""

from pathlib import Path

from classim import (
    DemoScriptedBackend,
    SessionConfig,
    default_roster,
    load_course,
    run_headless_session,
)
from classim.store import TranscriptStore

HERE = Path(__file__).parent
OUTPUT = HERE / "output"

course = load_course(HERE.parent / "courses" / "intro_ai.json")
print(f"course: {course.title} ({len(course)} pages)\n")

# The replay file format: speak once the event log passes after_seq.
participant_questions = [
    (6, "Wait, what made the early rule systems so brittle?"),
    (14, "So the lesson is that more data beats clever rules?"),
]

store = TranscriptStore(OUTPUT / "sessions")
record = run_headless_session(
    course,
    default_roster(),
    SessionConfig(tau=0.0, closing_windows=1),
    DemoScriptedBackend(),
    store=store,
    session_id="demo-full",
    user_source=participant_questions,
)

print(f"session {record.session_id} reached phase {record.phase!r}\n")
for utterance in record.utterances:
    label = f"{utterance.speaker_id} ({utterance.speaker_kind})"
    text = utterance.text if len(utterance.text) < 96 else utterance.text[:93] + "..."
    print(f"  [{utterance.seq:>3}] {label:<28} {text}")

print(f"\ntranscript persisted to {OUTPUT / 'sessions' / 'demo-full.jsonl'}")
