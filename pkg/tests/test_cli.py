import json

import pytest
from click.testing import CliRunner

from classim.cli import main
from classim.course import write_course
from classim.fias import EncodedSession, FiasCategory, write_encoded_sessions

from .conftest import make_course


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def course_file(tmp_path):
    path = tmp_path / "mock.json"
    write_course(make_course(5), path)
    return path


def test_run_no_interactions_has_zero_student_talk(runner, course_file, tmp_path):
    data_dir = tmp_path / "data"
    result = runner.invoke(main, [
        "run", "--course", str(course_file), "--ablation", "no_interactions",
        "--backend", "scripted", "--data-dir", str(data_dir), "--session-id", "cli-1",
    ])
    assert result.exit_code == 0, result.output
    assert "phase=closed" in result.output

    out = tmp_path / "fias.json"
    result = runner.invoke(main, [
        "analyze", "fias", "--glob", str(data_dir / "cli-1.jsonl"), "-o", str(out),
    ])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert doc["metrics"]["st"] == 0.0
    assert doc["metrics"]["sir"] == 0.0


def test_run_with_user_script(runner, course_file, tmp_path):
    script = tmp_path / "user.json"
    script.write_text(json.dumps([{"after_seq": 4, "text": "why though?"}]))
    data_dir = tmp_path / "data"
    result = runner.invoke(main, [
        "run", "--course", str(course_file), "--user-script", str(script),
        "--data-dir", str(data_dir), "--session-id", "cli-2",
    ])
    assert result.exit_code == 0, result.output
    lines = (data_dir / "cli-2.jsonl").read_text().splitlines()
    texts = [json.loads(l).get("text") for l in lines]
    assert "why though?" in texts


def test_run_missing_course_fails(runner, tmp_path):
    result = runner.invoke(main, ["run", "--course", str(tmp_path / "nope.json")])
    assert result.exit_code != 0


def test_analyze_fias_glob_sums_sessions(runner, course_file, tmp_path):
    data_dir = tmp_path / "data"
    for i in range(2):
        result = runner.invoke(main, [
            "run", "--course", str(course_file), "--data-dir", str(data_dir),
            "--session-id", f"multi-{i}",
        ])
        assert result.exit_code == 0, result.output
    out = tmp_path / "summed.json"
    result = runner.invoke(main, [
        "analyze", "fias", "--glob", str(data_dir / "multi-*.jsonl"),
        "-o", str(out), "--text",
    ])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert len(doc["sessions"]) == 2
    assert "TT" in result.output  # the text table was printed


def test_analyze_fias_encoded_mode(runner, tmp_path):
    encoded = tmp_path / "encoded.jsonl"
    write_encoded_sessions(
        [EncodedSession("e1", tuple(FiasCategory(c) for c in [5, 5, 9]))], encoded
    )
    result = runner.invoke(main, [
        "analyze", "fias", "--glob", str(encoded), "--encoded",
    ])
    assert result.exit_code == 0, result.output
    doc = json.loads(result.output)
    assert doc["metrics"]["tt"] == 0.5


def test_analyze_fias_no_match_fails_cleanly(runner, tmp_path):
    result = runner.invoke(main, [
        "analyze", "fias", "--glob", str(tmp_path / "*.jsonl"),
    ])
    assert result.exit_code != 0
    assert "no session files match" in result.output


def test_analyze_fias_never_partial_writes(runner, tmp_path, course_file):
    out = tmp_path / "report.json"
    result = runner.invoke(main, [
        "analyze", "fias", "--glob", str(tmp_path / "absent-*.jsonl"), "-o", str(out),
    ])
    assert result.exit_code != 0
    assert not out.exists()


def test_stats_lengths_table(runner, course_file, tmp_path):
    data_dir = tmp_path / "data"
    runner.invoke(main, [
        "run", "--course", str(course_file), "--ablation", "no_interactions",
        "--data-dir", str(data_dir), "--session-id", "len-1",
    ])
    result = runner.invoke(main, [
        "stats", "lengths", "--glob", str(data_dir / "len-*.jsonl"),
    ])
    assert result.exit_code == 0, result.output
    assert "Teacher" in result.output
    assert "-" in result.output  # absent roles render as dashes


def test_analyze_coi_aggregates_gated(runner, course_file, tmp_path):
    from classim.store import TranscriptStore

    data_dir = tmp_path / "data"
    for i, (score, rating) in enumerate([(1.0, 2), (0.5, 0)]):
        runner.invoke(main, [
            "run", "--course", str(course_file), "--data-dir", str(data_dir),
            "--session-id", f"coi-{i}",
        ])
        store = TranscriptStore(data_dir)
        store.attach_survey(f"coi-{i}", {
            "participant_id": f"p{i}", "cognitive": rating,
            "teaching": rating, "social": rating,
        })
        store.attach_quiz(f"coi-{i}", {
            "participant_id": f"p{i}", "selections": {}, "score": score,
        })
    out = tmp_path / "coi.json"
    csv_out = tmp_path / "coi.csv"
    result = runner.invoke(main, [
        "analyze", "coi", "--glob", str(data_dir / "coi-*.jsonl"),
        "-o", str(out), "--csv", str(csv_out),
    ])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert doc["included"] == ["p0"]
    assert doc["gated_out"] == ["p1"]
    means = {d["dimension"]: d["mean"] for d in doc["dimensions"]}
    assert means == {"cognitive": 2.0, "teaching": 2.0, "social": 2.0}
    assert csv_out.exists()


def test_run_with_keyed_fixture_file(runner, tmp_path):
    course_path = tmp_path / "tiny.json"
    write_course(make_course(1), course_path)
    fixture = {
        "keyed": [
            {"speaker": "teacher", "page": 1, "replies": ["Scripted teaching."]},
            {"speaker": "manager", "page": 1,
             "replies": [json.dumps({"agent": "teacher", "function": "next_page"})]},
        ]
    }
    fixture_path = tmp_path / "fixture.json"
    fixture_path.write_text(json.dumps(fixture))
    data_dir = tmp_path / "data"
    result = runner.invoke(main, [
        "run", "--course", str(course_path), "--fixtures", str(fixture_path),
        "--data-dir", str(data_dir), "--session-id", "fixt-1",
    ])
    assert result.exit_code == 0, result.output
    lines = (data_dir / "fixt-1.jsonl").read_text().splitlines()
    texts = [json.loads(l).get("text") for l in lines]
    assert "Scripted teaching." in texts
