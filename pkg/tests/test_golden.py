"""Byte-for-byte regression of a full-roster session against a frozen fixture."""

from pathlib import Path

from .golden_scenario import run_golden_scenario

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_session.jsonl"


def test_full_roster_transcript_matches_golden_fixture(tmp_path):
    produced = run_golden_scenario(tmp_path / "data")
    assert produced == GOLDEN_PATH.read_text(encoding="utf-8")


def test_golden_fixture_speaker_sequence(tmp_path):
    import json

    lines = [json.loads(l) for l in GOLDEN_PATH.read_text().splitlines()]
    speakers = [l["speaker_id"] for l in lines if l.get("type") == "utterance"]
    assert speakers == [
        "teacher", "deep_thinker", "user", "assistant", "teacher", "teacher",
    ]
