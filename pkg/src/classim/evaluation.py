"""Post-class evaluation: the three-presence survey, the quiz gate, and the
per-role output-length statistics.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .store import SessionRecord

PRESENCE_DIMENSIONS = ("cognitive", "teaching", "social")
RATING_SCALE = (0, 1, 2)

# Display-order roles; classmates are pooled into one column.
LENGTH_ROLES = ("Teacher", "Assistant", "Students", "User")

_KIND_TO_ROLE = {
    "Teacher": "Teacher",
    "Assistant": "Assistant",
    "Classmate": "Students",
    "User": "User",
}


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class SurveyResponse:
    participant_id: str
    cognitive: int
    teaching: int
    social: int

    def __post_init__(self) -> None:
        for dim in PRESENCE_DIMENSIONS:
            if getattr(self, dim) not in RATING_SCALE:
                raise EvaluationError(f"{dim} rating must be one of {RATING_SCALE}")

    def rating(self, dimension: str) -> int:
        if dimension not in PRESENCE_DIMENSIONS:
            raise EvaluationError(f"unknown dimension {dimension!r}")
        return int(getattr(self, dimension))

    def to_json(self) -> dict[str, Any]:
        return {
            "participant_id": self.participant_id,
            "cognitive": self.cognitive,
            "teaching": self.teaching,
            "social": self.social,
        }


@dataclass(frozen=True)
class QuizResult:
    participant_id: str
    selections: dict[str, frozenset[str]]
    score: float  # fraction of questions answered exactly right

    def to_json(self) -> dict[str, Any]:
        return {
            "participant_id": self.participant_id,
            "selections": {q: sorted(s) for q, s in self.selections.items()},
            "score": self.score,
        }


@dataclass(frozen=True)
class PresenceSummary:
    dimension: str
    mean: float
    stderr: float
    n: int


def score_quiz(
    participant_id: str,
    answers: Mapping[str, Iterable[str]],
    key: Mapping[str, Iterable[str]],
) -> QuizResult:
    """Score a quiz all-or-nothing: a question is correct only when the
    selected option set equals the key set exactly."""
    unknown = set(answers) - set(key)
    if unknown:
        raise EvaluationError(f"unknown question ids: {sorted(unknown)}")
    missing = set(key) - set(answers)
    if missing:
        raise EvaluationError(f"answers missing for questions: {sorted(missing)}")
    selections = {q: frozenset(answers[q]) for q in key}
    correct = sum(1 for q in key if selections[q] == frozenset(key[q]))
    return QuizResult(
        participant_id=participant_id,
        selections=selections,
        score=correct / len(key) if key else 0.0,
    )


def gate_participants(
    results: Iterable[QuizResult], threshold: float = 0.5
) -> set[str]:
    """Participants whose score is strictly above the threshold; a score at
    the threshold is excluded."""
    return {r.participant_id for r in results if r.score > threshold}


def aggregate_survey(
    responses: Iterable[SurveyResponse], included: set[str] | None = None
) -> list[PresenceSummary]:
    """Mean and standard error per presence dimension over included participants.

    The standard error uses the sample (n-1) standard deviation over root n;
    a single response has standard error zero by definition.
    """
    kept = [
        r for r in responses if included is None or r.participant_id in included
    ]
    if not kept:
        raise EvaluationError("no included survey responses to aggregate")
    summaries = []
    for dim in PRESENCE_DIMENSIONS:
        values = [r.rating(dim) for r in kept]
        n = len(values)
        mean = sum(values) / n
        if n > 1:
            variance = sum((v - mean) ** 2 for v in values) / (n - 1)
            stderr = math.sqrt(variance) / math.sqrt(n)
        else:
            stderr = 0.0
        summaries.append(PresenceSummary(dimension=dim, mean=mean, stderr=stderr, n=n))
    return summaries


# --- output-length statistics -------------------------------------------------

def count_words(text: str) -> int:
    """Count words: whitespace-delimited tokens, except that scripts written
    without word delimiters contribute one unit per character."""
    total = 0
    for token in text.split():
        undelimited = sum(1 for ch in token if _is_undelimited_script(ch))
        has_delimited = any(ch.isalnum() and not _is_undelimited_script(ch) for ch in token)
        total += undelimited + (1 if has_delimited else 0)
    return total


def _is_undelimited_script(ch: str) -> bool:
    code = ord(ch)
    return (
        0x3040 <= code <= 0x30FF  # Japanese kana
        or 0x4E00 <= code <= 0x9FFF  # CJK unified ideographs
        or 0x3400 <= code <= 0x4DBF
        or 0xF900 <= code <= 0xFAFF
        or 0xAC00 <= code <= 0xD7AF  # Hangul syllables
    )


def word_count_stats(
    records: Iterable[SessionRecord],
) -> dict[tuple[str, str], dict[str, float | None]]:
    """Average output length per role, grouped by (course, setting).

    Roles with no utterances in a setting map to None (displayed as a dash).
    Averages are per utterance, over every session in the group.
    """
    groups: dict[tuple[str, str], dict[str, list[int]]] = {}
    for record in records:
        group = groups.setdefault(
            (record.course_id, record.setting), {role: [] for role in LENGTH_ROLES}
        )
        for utt in record.utterances:
            role = _KIND_TO_ROLE.get(utt.speaker_kind)
            if role is not None:
                group[role].append(count_words(utt.text))
    return {
        key: {
            role: (sum(counts) / len(counts) if counts else None)
            for role, counts in group.items()
        }
        for key, group in groups.items()
    }


def format_length_table(stats: Mapping[tuple[str, str], Mapping[str, float | None]]) -> str:
    """Render the per-role averages, one decimal place, dash for absent roles."""
    header = f"{'course / setting':<28}" + "".join(f"{r:>12}" for r in LENGTH_ROLES)
    lines = [header]
    for (course_id, setting), row in sorted(stats.items()):
        cells = "".join(
            f"{row[role]:>12.1f}" if row[role] is not None else f"{'-':>12}"
            for role in LENGTH_ROLES
        )
        lines.append(f"{course_id + ' / ' + setting:<28}" + cells)
    return "\n".join(lines)


# --- survey/quiz definitions ---------------------------------------------------

def load_survey_definition(path: str | Path | None = None) -> dict[str, Any]:
    """The survey form: one question per presence dimension with 0/1/2 rating
    guidelines. Without a path, the packaged default ships."""
    if path is None:
        text = resources.files("classim.data").joinpath("survey.json").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return json.loads(text)


def load_quiz_definition(path: str | Path) -> dict[str, Any]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    for question in data.get("questions", []):
        if not question.get("key"):
            raise EvaluationError(f"question {question.get('id')} has no answer key")
    return data


def quiz_answer_key(definition: Mapping[str, Any]) -> dict[str, frozenset[str]]:
    return {q["id"]: frozenset(q["key"]) for q in definition["questions"]}


# --- results export -------------------------------------------------------------

def export_results_csv(
    records: Sequence[SessionRecord],
    path: str | Path,
    threshold: float = 0.5,
) -> int:
    """Write one row per (participant, dimension) with the quiz score and the
    gate outcome; ``gated`` is true when the participant was excluded.
    Returns the number of rows written."""
    quiz_results = []
    for record in records:
        if record.quiz is not None:
            quiz_results.append(
                QuizResult(
                    participant_id=record.quiz["participant_id"],
                    selections={},
                    score=float(record.quiz["score"]),
                )
            )
    included = gate_participants(quiz_results, threshold)
    scores = {r.participant_id: r.score for r in quiz_results}

    rows = 0
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["participant", "setting", "course", "dimension", "rating", "quiz_score", "gated"]
        )
        for record in records:
            if record.survey is None:
                continue
            response = SurveyResponse(
                participant_id=record.survey["participant_id"],
                cognitive=int(record.survey["cognitive"]),
                teaching=int(record.survey["teaching"]),
                social=int(record.survey["social"]),
            )
            pid = response.participant_id
            for dim in PRESENCE_DIMENSIONS:
                writer.writerow(
                    [
                        pid,
                        record.setting,
                        record.course_id,
                        dim,
                        response.rating(dim),
                        scores.get(pid, ""),
                        pid not in included,
                    ]
                )
                rows += 1
    return rows
