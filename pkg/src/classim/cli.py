"""Command-line entry points: headless runs, the API server, and the
analysis reports. Reports are written atomically; a failed command never
leaves a partial file behind.
"""

from __future__ import annotations

import glob as globlib
import json
import os
import sys
from pathlib import Path
from typing import Any

import click

from .backend import BackendConfig, HttpChatBackend, scripted_backend
from .course import load_course
from .evaluation import (
    SurveyResponse,
    aggregate_survey,
    export_results_csv,
    format_length_table,
    gate_participants,
    QuizResult,
    word_count_stats,
)
from .fias import (
    build_matrix,
    compute_metrics,
    format_report_text,
    label_utterances,
    llm_labeler,
    read_encoded_sessions,
    report,
    rule_labeler,
    sum_matrices,
)
from .headless import DemoScriptedBackend, load_user_script, run_headless_session
from .roster import Ablation, apply_ablation, default_roster, merge_roster_overrides
from .session import SessionConfig
from .store import TranscriptStore, import_session


def _fail(message: str) -> None:
    raise click.ClickException(message)


def _load_config_file(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json"):
        return json.loads(text)
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text)


def _backend_from_config(data: dict[str, Any]) -> BackendConfig:
    section = data.get("backend", {})
    return BackendConfig(
        endpoint=section.get("endpoint", BackendConfig.endpoint),
        model_name=section.get("model", BackendConfig.model_name),
        credential_env=section.get("credential_env", BackendConfig.credential_env),
        timeout_s=section.get("timeout_s", BackendConfig.timeout_s),
        temperature=section.get("temperature", BackendConfig.temperature),
        max_retries=section.get("max_retries", BackendConfig.max_retries),
    )


def _session_config(data: dict[str, Any], **overrides: Any) -> SessionConfig:
    section = dict(data.get("session", {}))
    section.update({k: v for k, v in overrides.items() if v is not None})
    return SessionConfig.from_dict(section)


def _make_backend(kind: str, fixtures: str | None, config_data: dict[str, Any]):
    if kind == "live":
        return HttpChatBackend(_backend_from_config(config_data))
    if fixtures is None:
        return DemoScriptedBackend()
    data = json.loads(Path(fixtures).read_text(encoding="utf-8"))
    if "ordered" in data:
        return scripted_backend(list(data["ordered"]))
    if "keyed" in data:
        keyed = {
            (entry["speaker"], int(entry["page"])): entry["replies"]
            for entry in data["keyed"]
        }
        return scripted_backend(keyed)
    _fail("fixture file needs an 'ordered' list or a 'keyed' entry list")


def _glob_records(pattern: str):
    paths = sorted(globlib.glob(pattern))
    if not paths:
        _fail(f"no session files match {pattern!r}")
    records = []
    for path in paths:
        if Path(path).name == "index.jsonl":
            continue
        records.append(import_session(path))
    return records


def _write_json_atomic(obj: Any, path: str | None) -> None:
    text = json.dumps(obj, ensure_ascii=False, indent=2)
    if path is None:
        click.echo(text)
        return
    tmp = f"{path}.tmp"
    Path(tmp).write_text(text + "\n", encoding="utf-8")
    os.replace(tmp, path)


@click.group()
def main() -> None:
    """Multi-agent classroom simulation and analysis."""


@main.command()
@click.option("--course", "course_path", required=True, type=click.Path(exists=True))
@click.option("--ablation", type=click.Choice([a.value for a in Ablation]), default="full")
@click.option("--backend", "backend_kind", type=click.Choice(["scripted", "live"]), default="scripted")
@click.option("--fixtures", type=click.Path(exists=True), help="Scripted reply fixture file.")
@click.option("--user-script", type=click.Path(exists=True), help="Replay file of user utterances.")
@click.option("--roster-overrides", type=click.Path(exists=True))
@click.option("--data-dir", type=click.Path(), default="data")
@click.option("--session-id", default=None)
@click.option("--tau", type=float, default=None, help="Idle window seconds (headless default 0).")
@click.option("--closing-windows", type=int, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True))
def run(course_path, ablation, backend_kind, fixtures, user_script, roster_overrides,
        data_dir, session_id, tau, closing_windows, config_path):
    """Run one headless session and persist its transcript."""
    config_data = _load_config_file(config_path)
    course = load_course(course_path)
    roster = apply_ablation(default_roster(), Ablation(ablation))
    if roster_overrides:
        roster = merge_roster_overrides(roster, roster_overrides)
    session_config = _session_config(
        config_data, tau=tau if tau is not None else 0.0, closing_windows=closing_windows
    )
    backend = _make_backend(backend_kind, fixtures, config_data)
    user_source = load_user_script(user_script) if user_script else ()
    store = TranscriptStore(data_dir)
    record = run_headless_session(
        course, roster, session_config, backend,
        store=store, session_id=session_id, user_source=user_source,
    )
    click.echo(f"session {record.session_id}: phase={record.phase} "
               f"utterances={len(record.utterances)}"
               + (f" fault={record.fault}" if record.fault else ""))
    if record.fault:
        sys.exit(1)


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--courses", "courses_dir", type=click.Path(exists=True), default="courses")
@click.option("--data-dir", type=click.Path(), default="data")
@click.option("--backend", "backend_kind", type=click.Choice(["scripted", "live"]), default="scripted")
@click.option("--tau", type=float, default=None)
@click.option("--config", "config_path", type=click.Path(exists=True))
def serve(host, port, courses_dir, data_dir, backend_kind, tau, config_path):
    """Start the HTTP + WebSocket classroom service."""
    from .service import serve as serve_app

    config_data = _load_config_file(config_path)
    backend = _make_backend(backend_kind, None, config_data)
    session_config = _session_config(config_data, tau=tau)
    serve_app(courses_dir, data_dir, backend, host=host, port=port,
              default_config=session_config)


@main.group()
def analyze() -> None:
    """Analysis pipelines over persisted sessions."""


@analyze.command("fias")
@click.option("--glob", "pattern", required=True, help="Session (or encoded) JSONL files.")
@click.option("--encoded", is_flag=True, help="Inputs are pre-encoded category sequences.")
@click.option("--labeler", "labeler_kind", type=click.Choice(["rule", "llm"]), default="rule")
@click.option("--silence-gap", type=float, default=None, help="Seconds of quiet that count as one silence unit.")
@click.option("-o", "--output", type=click.Path(), default=None)
@click.option("--text", "as_text", is_flag=True, help="Print the aligned text table too.")
@click.option("--config", "config_path", type=click.Path(exists=True))
def analyze_fias(pattern, encoded, labeler_kind, silence_gap, output, as_text, config_path):
    """Encode sessions, sum their transition matrices, and report the metrics."""
    if encoded:
        sessions = []
        for path in sorted(globlib.glob(pattern)) or _fail(f"no files match {pattern!r}"):
            sessions.extend(read_encoded_sessions(path))
        if not sessions:
            _fail("no encoded sessions found")
    else:
        records = _glob_records(pattern)
        labeler = rule_labeler
        if labeler_kind == "llm":
            config_data = _load_config_file(config_path)
            labeler = llm_labeler(HttpChatBackend(_backend_from_config(config_data)))
        sessions = [
            label_utterances(r, labeler, silence_gap_s=silence_gap) for r in records
        ]
    summed = sum_matrices(build_matrix(s) for s in sessions)
    doc = {
        "sessions": [s.session_id for s in sessions],
        **report(summed, compute_metrics(summed)),
    }
    _write_json_atomic(doc, output)
    if as_text:
        click.echo(format_report_text(doc))


@analyze.command("coi")
@click.option("--glob", "pattern", required=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("-o", "--output", type=click.Path(), default=None)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
def analyze_coi(pattern, threshold, output, csv_path):
    """Aggregate presence surveys over quiz-gated participants."""
    records = _glob_records(pattern)
    responses = []
    quiz_results = []
    for record in records:
        if record.survey is not None:
            responses.append(SurveyResponse(
                participant_id=record.survey["participant_id"],
                cognitive=int(record.survey["cognitive"]),
                teaching=int(record.survey["teaching"]),
                social=int(record.survey["social"]),
            ))
        if record.quiz is not None:
            quiz_results.append(QuizResult(
                participant_id=record.quiz["participant_id"],
                selections={},
                score=float(record.quiz["score"]),
            ))
    if not responses:
        _fail("no surveys found in the matched sessions")
    included = gate_participants(quiz_results, threshold)
    if not quiz_results:
        included = None  # nothing to gate on; aggregate everyone
    summaries = aggregate_survey(responses, included)
    doc = {
        "dimensions": [
            {"dimension": s.dimension, "mean": s.mean, "stderr": s.stderr, "n": s.n}
            for s in summaries
        ],
        "included": sorted(included) if included is not None else None,
        "gated_out": sorted(
            {r.participant_id for r in quiz_results} - included
        ) if included is not None else [],
    }
    _write_json_atomic(doc, output)
    if csv_path:
        export_results_csv(records, csv_path, threshold)
        click.echo(f"wrote {csv_path}")


@main.group()
def stats() -> None:
    """Descriptive statistics over persisted sessions."""


@stats.command("lengths")
@click.option("--glob", "pattern", required=True)
@click.option("-o", "--output", type=click.Path(), default=None)
def stats_lengths(pattern, output):
    """Average output length per role, grouped by course and setting."""
    records = _glob_records(pattern)
    table = word_count_stats(records)
    doc = [
        {
            "course_id": course_id,
            "setting": setting,
            **{role: (round(v, 1) if v is not None else None) for role, v in row.items()},
        }
        for (course_id, setting), row in sorted(table.items())
    ]
    if output:
        _write_json_atomic(doc, output)
    click.echo(format_length_table(table))


if __name__ == "__main__":
    main()
