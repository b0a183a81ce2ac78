"""Flanders-style interaction analysis: encode transcripts into the ten verbal
behavior categories, tally adjacent-pair transitions in a 10x10 matrix, and
derive the talk-share and influence ratios.

Category map: 1 accept feelings, 2 praise or encourage, 3 accept ideas,
4 ask questions, 5 lecturing, 6 giving direction, 7 criticizing (teacher,
1-4 indirect and 5-7 direct influence); 8 student response, 9 student
initiation; 10 silence or confusion.

Each encoded sequence is padded with a 10 at both ends before tallying, so a
sequence of length n contributes exactly n + 1 transitions and every category's
row sum equals its column sum. Matrices from many sessions in one setting are
summed cell-wise before the metrics are read off the row sums, which makes the
metrics identical whether computed per session or on the pooled matrix.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .backend import BackendError, ChatBackend, ChatMessage
from .events import Utterance
from .store import SessionRecord


class FiasCategory(IntEnum):
    ACCEPT_FEELINGS = 1
    PRAISE = 2
    ACCEPT_IDEAS = 3
    ASK_QUESTIONS = 4
    LECTURING = 5
    GIVING_DIRECTION = 6
    CRITICIZING = 7
    STUDENT_RESPONSE = 8
    STUDENT_INITIATION = 9
    SILENCE = 10


TEACHER_CATEGORIES = tuple(FiasCategory(i) for i in range(1, 8))
INDIRECT_CATEGORIES = tuple(FiasCategory(i) for i in range(1, 5))
DIRECT_CATEGORIES = tuple(FiasCategory(i) for i in range(5, 8))
STUDENT_CATEGORIES = (FiasCategory.STUDENT_RESPONSE, FiasCategory.STUDENT_INITIATION)


class FiasError(ValueError):
    pass


@dataclass(frozen=True)
class EncodedSession:
    """One session reduced to its category sequence, in transcript order."""

    session_id: str
    sequence: tuple[FiasCategory, ...]
    flagged_indices: tuple[int, ...] = ()  # positions labeled by the failure fallback

    def to_json(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "sequence": [int(c) for c in self.sequence],
            "flagged_indices": list(self.flagged_indices),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "EncodedSession":
        return cls(
            session_id=obj["session_id"],
            sequence=tuple(FiasCategory(int(c)) for c in obj["sequence"]),
            flagged_indices=tuple(obj.get("flagged_indices", [])),
        )


@dataclass(frozen=True)
class FiasMatrix:
    """10x10 non-negative transition tallies; cell (x, y) counts x -> y."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        if self.counts.shape != (10, 10):
            raise FiasError("matrix must be 10x10")
        if (self.counts < 0).any():
            raise FiasError("tallies must be non-negative")

    @classmethod
    def zero(cls) -> "FiasMatrix":
        return cls(np.zeros((10, 10), dtype=np.int64))

    def cell(self, x: int, y: int) -> int:
        return int(self.counts[x - 1, y - 1])

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def col_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "FiasMatrix") -> "FiasMatrix":
        return FiasMatrix(self.counts + other.counts)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FiasMatrix) and bool(
            (self.counts == other.counts).all()
        )

    def to_lists(self) -> list[list[int]]:
        return self.counts.astype(int).tolist()

    @classmethod
    def from_lists(cls, rows: Sequence[Sequence[int]]) -> "FiasMatrix":
        return cls(np.asarray(rows, dtype=np.int64))


@dataclass(frozen=True)
class FiasMetrics:
    """Talk shares and influence ratios read off a transition matrix.

    tt and st are fractions of all tallies (silence included in the base);
    idr is indirect over direct teacher influence and is None when no direct
    influence exists; sir is reported as 0 with the degenerate flag when
    there is no student talk at all.
    """

    tt: float
    st: float
    idr: float | None
    sir: float
    idr_undefined: bool = False
    sir_degenerate: bool = False

    def to_json(self) -> dict[str, Any]:
        return {
            "tt": self.tt,
            "st": self.st,
            "idr": self.idr,
            "sir": self.sir,
            "flags": {
                "idr_undefined": self.idr_undefined,
                "sir_degenerate": self.sir_degenerate,
            },
        }


def build_matrix(encoded: EncodedSession) -> FiasMatrix:
    """Tally adjacent transitions of the silence-padded sequence."""
    if not encoded.sequence:
        raise FiasError(f"session {encoded.session_id!r} has an empty sequence")
    padded = [FiasCategory.SILENCE, *encoded.sequence, FiasCategory.SILENCE]
    counts = np.zeros((10, 10), dtype=np.int64)
    for x, y in zip(padded, padded[1:]):
        counts[x - 1, y - 1] += 1
    return FiasMatrix(counts)


def sum_matrices(matrices: Iterable[FiasMatrix]) -> FiasMatrix:
    """Cell-wise sum; the empty sum is the zero matrix."""
    result = FiasMatrix.zero()
    for matrix in matrices:
        result = result + matrix
    return result


def compute_metrics(matrix: FiasMatrix) -> FiasMetrics:
    """Derive tt/st/idr/sir from row sums (equal to column sums under padding)."""
    rows = matrix.row_sums()
    total = int(rows.sum())
    if total == 0:
        raise FiasError("cannot compute metrics for an all-zero matrix")

    def tally(categories: Sequence[FiasCategory]) -> int:
        return int(sum(rows[c - 1] for c in categories))

    teacher = tally(TEACHER_CATEGORIES)
    student = tally(STUDENT_CATEGORIES)
    indirect = tally(INDIRECT_CATEGORIES)
    direct = tally(DIRECT_CATEGORIES)
    initiation = int(rows[FiasCategory.STUDENT_INITIATION - 1])

    idr_undefined = direct == 0
    sir_degenerate = student == 0
    return FiasMetrics(
        tt=teacher / total,
        st=student / total,
        idr=None if idr_undefined else indirect / direct,
        sir=0.0 if sir_degenerate else initiation / student,
        idr_undefined=idr_undefined,
        sir_degenerate=sir_degenerate,
    )


def silence_share(matrix: FiasMatrix) -> float:
    rows = matrix.row_sums()
    return float(rows[FiasCategory.SILENCE - 1] / rows.sum())


def metrics_excluding_silence(matrix: FiasMatrix) -> dict[str, float]:
    """tt/st on the base that drops silence tallies (the other reporting base)."""
    rows = matrix.row_sums()
    teacher = int(sum(rows[c - 1] for c in TEACHER_CATEGORIES))
    student = int(sum(rows[c - 1] for c in STUDENT_CATEGORIES))
    spoken = teacher + student
    if spoken == 0:
        return {"tt": 0.0, "st": 0.0}
    return {"tt": teacher / spoken, "st": student / spoken}


# --- labeling ---------------------------------------------------------------

Labeler = Callable[[Utterance, Utterance | None], FiasCategory]

PRAISE_MARKERS = (
    "great question",
    "well done",
    "good point",
    "excellent",
    "great job",
    "nice work",
    "i'm glad",
    "well said",
    "good thinking",
)


def rule_labeler(utterance: Utterance, previous: Utterance | None) -> FiasCategory:
    """Deterministic category rules for tests and offline analysis.

    Teaching deliveries are lecturing; a teaching-side reply is praise when it
    carries a praise marker, a question when it asks one, otherwise lecturing.
    Student-side utterances respond (8) when the previous speaker asked a
    question and initiate (9) otherwise.
    """
    teaching_side = utterance.speaker_kind in ("Teacher", "Assistant")
    if teaching_side:
        if utterance.function_id == "teach":
            return FiasCategory.LECTURING
        lowered = utterance.text.lower()
        if any(marker in lowered for marker in PRAISE_MARKERS):
            return FiasCategory.PRAISE
        if "?" in utterance.text:
            return FiasCategory.ASK_QUESTIONS
        return FiasCategory.LECTURING
    asked_question = previous is not None and "?" in previous.text
    return (
        FiasCategory.STUDENT_RESPONSE if asked_question else FiasCategory.STUDENT_INITIATION
    )


LLM_RUBRIC = """You label one classroom utterance with a single interaction category:
1 the teacher accepts or clarifies a student's feelings
2 the teacher praises or encourages
3 the teacher accepts or builds on a student's ideas
4 the teacher asks a question
5 the teacher lectures, giving facts or opinions
6 the teacher gives directions the student is to follow
7 the teacher criticizes or justifies authority
8 a student responds to the teacher
9 a student initiates talk of their own accord
10 silence or confusion
Treat teacher and assistant speakers as the teacher side; classmates and the
participant as students. Reply with the category number only."""


def llm_labeler(backend: ChatBackend) -> Labeler:
    """Label with a chat model using the ten-category rubric, one utterance a call."""

    def label(utterance: Utterance, previous: Utterance | None) -> FiasCategory:
        context = (
            f"Previous utterance ({previous.speaker_kind}): {previous.text}\n"
            if previous is not None
            else ""
        )
        reply = backend.complete(
            system=LLM_RUBRIC,
            history=[
                ChatMessage(
                    origin="user",
                    speaker_id=None,
                    content=(
                        f"{context}Utterance to label ({utterance.speaker_kind} "
                        f"{utterance.speaker_id}): {utterance.text}"
                    ),
                )
            ],
            temperature=0.0,
            speaker_id="labeler",
        )
        match = re.search(r"\b(10|[1-9])\b", reply)
        if match is None:
            raise BackendError(f"unparseable category label: {reply!r}")
        return FiasCategory(int(match.group(1)))

    return label


def label_utterances(
    record: SessionRecord,
    labeler: Labeler = rule_labeler,
    *,
    silence_gap_s: float | None = None,
) -> EncodedSession:
    """Encode a transcript: one category per utterance, in order.

    A wall-clock gap of at least ``silence_gap_s`` (defaults to the session's
    idle window) between consecutive utterances inserts one silence unit. A
    labeler failure never drops an utterance; the position is labeled silence
    and flagged so the sequence stays aligned with the transcript.
    """
    utterances = record.utterances
    if not utterances:
        raise FiasError(f"session {record.session_id!r} has no utterances to label")
    if silence_gap_s is None:
        silence_gap_s = float(record.config.get("tau", 30.0)) or 30.0

    sequence: list[FiasCategory] = []
    flagged: list[int] = []
    previous: Utterance | None = None
    for utt in utterances:
        if previous is not None and utt.timestamp() - previous.timestamp() >= silence_gap_s:
            sequence.append(FiasCategory.SILENCE)
        try:
            category = labeler(utt, previous)
        except Exception:
            category = FiasCategory.SILENCE
            flagged.append(len(sequence))
        sequence.append(category)
        previous = utt
    return EncodedSession(
        session_id=record.session_id,
        sequence=tuple(sequence),
        flagged_indices=tuple(flagged),
    )


# --- reporting ---------------------------------------------------------------

QUADRANTS = {
    "A": ("teacher_to_teacher", TEACHER_CATEGORIES, TEACHER_CATEGORIES),
    "B": ("student_or_silence_to_teacher", (8, 9, 10), TEACHER_CATEGORIES),
    "C": ("teacher_to_student_or_silence", TEACHER_CATEGORIES, (8, 9, 10)),
    "D": ("student_to_student", (8, 9, 10), (8, 9, 10)),
}


def quadrant_subtotals(matrix: FiasMatrix) -> dict[str, int]:
    subtotals = {}
    for key, (_, from_cats, to_cats) in QUADRANTS.items():
        subtotals[key] = int(
            sum(matrix.cell(int(x), int(y)) for x in from_cats for y in to_cats)
        )
    return subtotals


def report(matrix: FiasMatrix, metrics: FiasMetrics) -> dict[str, Any]:
    """Assemble the JSON report: grid, quadrant subtotals, both metric bases."""
    return {
        "matrix": matrix.to_lists(),
        "quadrants": {
            key: {"label": QUADRANTS[key][0], "subtotal": subtotal}
            for key, subtotal in quadrant_subtotals(matrix).items()
        },
        "metrics": {
            **metrics.to_json(),
            "silence_share": silence_share(matrix),
            "excluding_silence": metrics_excluding_silence(matrix),
        },
        "flags": {
            "idr_undefined": metrics.idr_undefined,
            "sir_degenerate": metrics.sir_degenerate,
        },
    }


def load_report(obj: dict[str, Any]) -> tuple[FiasMatrix, FiasMetrics]:
    """Inverse of report for the matrix and headline metrics."""
    matrix = FiasMatrix.from_lists(obj["matrix"])
    m = obj["metrics"]
    metrics = FiasMetrics(
        tt=m["tt"],
        st=m["st"],
        idr=m["idr"],
        sir=m["sir"],
        idr_undefined=m["flags"]["idr_undefined"],
        sir_degenerate=m["flags"]["sir_degenerate"],
    )
    return matrix, metrics


def format_report_text(report_obj: dict[str, Any]) -> str:
    """Aligned text rendering of the grid, quadrants, and metrics."""
    lines = ["      " + "".join(f"{c:>6d}" for c in range(1, 11))]
    for x, row in enumerate(report_obj["matrix"], start=1):
        lines.append(f"{x:>4d}  " + "".join(f"{v:>6d}" for v in row))
    lines.append("")
    for key, info in report_obj["quadrants"].items():
        lines.append(f"quadrant {key} ({info['label']}): {info['subtotal']}")
    m = report_obj["metrics"]
    idr = "undefined" if m["idr"] is None else f"{m['idr']:.3f}"
    lines.append(
        f"TT {m['tt']:.3f}  ST {m['st']:.3f}  IDR {idr}  SIR {m['sir']:.3f}"
    )
    excl = m["excluding_silence"]
    lines.append(
        f"excluding silence: TT {excl['tt']:.3f}  ST {excl['st']:.3f}"
    )
    return "\n".join(lines)


# --- encoded-session interchange ---------------------------------------------

def write_encoded_sessions(sessions: Iterable[EncodedSession], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for session in sessions:
            fh.write(json.dumps(session.to_json(), ensure_ascii=False) + "\n")


def read_encoded_sessions(path: str | Path) -> list[EncodedSession]:
    sessions = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                sessions.append(EncodedSession.from_json(json.loads(line)))
    return sessions
