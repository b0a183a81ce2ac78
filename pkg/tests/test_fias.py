import json
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from classim.backend import scripted_backend
from classim.fias import (
    EncodedSession,
    FiasCategory,
    FiasError,
    FiasMatrix,
    build_matrix,
    compute_metrics,
    format_report_text,
    label_utterances,
    llm_labeler,
    load_report,
    metrics_excluding_silence,
    quadrant_subtotals,
    read_encoded_sessions,
    report,
    rule_labeler,
    sum_matrices,
    write_encoded_sessions,
)
from classim.events import Utterance, iso_utc
from classim.headless import DemoScriptedBackend, run_headless_session
from classim.roster import Ablation, apply_ablation, default_roster
from classim.session import SessionConfig

from .conftest import make_course


def encoded(seq, sid="s"):
    return EncodedSession(session_id=sid, sequence=tuple(FiasCategory(c) for c in seq))


# --- independent oracle: tally counting straight off the padded sequence ---

def oracle_matrix(seq):
    padded = [10, *seq, 10]
    cells = {}
    for x, y in zip(padded, padded[1:]):
        cells[(x, y)] = cells.get((x, y), 0) + 1
    return cells


def oracle_metrics(seq):
    padded = [10, *seq, 10]
    tallies = {c: 0 for c in range(1, 11)}
    for c in padded[:-1]:  # one tally per transition origin
        tallies[c] += 1
    total = sum(tallies.values())
    teacher = sum(tallies[c] for c in range(1, 8))
    student = tallies[8] + tallies[9]
    indirect = sum(tallies[c] for c in range(1, 5))
    direct = sum(tallies[c] for c in range(5, 8))
    return {
        "tt": teacher / total,
        "st": student / total,
        "idr": None if direct == 0 else indirect / direct,
        "sir": 0.0 if student == 0 else tallies[9] / student,
    }


# --- matrix construction ---

def test_build_matrix_hand_enumeration():
    matrix = build_matrix(encoded([5, 5, 9]))
    assert matrix.cell(10, 5) == 1
    assert matrix.cell(5, 5) == 1
    assert matrix.cell(5, 9) == 1
    assert matrix.cell(9, 10) == 1
    assert matrix.total() == 4


def test_build_matrix_minimal_sequence():
    matrix = build_matrix(encoded([5]))
    assert matrix.cell(10, 5) == 1
    assert matrix.cell(5, 10) == 1
    assert matrix.total() == 2


def test_build_matrix_empty_sequence_is_an_error():
    with pytest.raises(FiasError, match="empty"):
        build_matrix(EncodedSession(session_id="s", sequence=()))


@given(st.lists(st.integers(min_value=1, max_value=10), min_size=1, max_size=50))
def test_total_tallies_is_length_plus_one(seq):
    assert build_matrix(encoded(seq)).total() == len(seq) + 1


@given(st.lists(st.integers(min_value=1, max_value=10), min_size=1, max_size=50))
def test_padding_balances_rows_and_columns(seq):
    matrix = build_matrix(encoded(seq))
    assert (matrix.row_sums() == matrix.col_sums()).all()


# --- summation ---

def test_sum_of_empty_list_is_zero_matrix():
    assert sum_matrices([]) == FiasMatrix.zero()


def test_sum_with_zero_is_identity():
    matrix = build_matrix(encoded([5, 9, 2]))
    assert sum_matrices([matrix, FiasMatrix.zero()]) == matrix


def test_sum_matches_cellwise_addition():
    a = build_matrix(encoded([5, 5, 9]))
    b = build_matrix(encoded([9, 8, 4]))
    summed = sum_matrices([a, b])
    for x in range(1, 11):
        for y in range(1, 11):
            assert summed.cell(x, y) == a.cell(x, y) + b.cell(x, y)


@given(
    st.lists(
        st.lists(st.integers(min_value=1, max_value=10), min_size=1, max_size=12),
        min_size=0,
        max_size=6,
    ),
    st.randoms(),
)
def test_sum_is_order_independent(seqs, rng):
    matrices = [build_matrix(encoded(s)) for s in seqs]
    shuffled = matrices[:]
    rng.shuffle(shuffled)
    assert sum_matrices(matrices) == sum_matrices(shuffled)


def test_sum_preserves_totals_additively():
    seqs = [[5, 9], [8, 8, 4], [2]]
    matrices = [build_matrix(encoded(s)) for s in seqs]
    assert sum_matrices(matrices).total() == sum(m.total() for m in matrices)


# --- metrics ---

def test_metrics_hand_oracle_example():
    # padded [10,5,5,9,10] -> 4 transitions; row sums tally 5 twice, 9 once,
    # and the padding once (only the leading pad starts a transition).
    metrics = compute_metrics(build_matrix(encoded([5, 5, 9])))
    assert metrics.tt == pytest.approx(2 / 4)
    assert metrics.st == pytest.approx(1 / 4)
    assert metrics.idr == pytest.approx(0.0)
    assert metrics.sir == pytest.approx(1.0)


def test_row_sum_base_reproduces_lecture_only_ratio():
    # A lecture-only class of n pages encodes as n lecturing codes; the
    # published no-interaction ratios (0.980 for 50 pages, 0.978 for 45)
    # pin the tally base: n/(n+1), invariant under summing across students.
    for n, expected in ((50, 0.980), (45, 0.978)):
        matrices = [build_matrix(encoded([5] * n, sid=f"u{i}")) for i in range(7)]
        metrics = compute_metrics(sum_matrices(matrices))
        assert round(metrics.tt, 3) == expected


def test_metrics_zero_matrix_is_an_error():
    with pytest.raises(FiasError, match="all-zero"):
        compute_metrics(FiasMatrix.zero())


def test_idr_undefined_when_no_direct_influence():
    metrics = compute_metrics(build_matrix(encoded([2, 3])))
    assert metrics.idr is None
    assert metrics.idr_undefined


def test_sir_degenerate_reported_as_zero():
    metrics = compute_metrics(build_matrix(encoded([5, 5, 5])))
    assert metrics.sir == 0.0
    assert metrics.sir_degenerate


def test_tt_st_silence_partition():
    matrix = build_matrix(encoded([5, 9, 10, 8, 2]))
    metrics = compute_metrics(matrix)
    rows = matrix.row_sums()
    silence_share = rows[9] / rows.sum()
    assert metrics.tt + metrics.st + silence_share == pytest.approx(1.0)


def test_oracle_equivalence_random_sequences():
    rng = random.Random(424242)
    for _ in range(200):
        seq = [rng.randint(1, 10) for _ in range(rng.randint(1, 50))]
        matrix = build_matrix(encoded(seq))
        for (x, y), count in oracle_matrix(seq).items():
            assert matrix.cell(x, y) == count
        assert matrix.total() == sum(oracle_matrix(seq).values())
        expected = oracle_metrics(seq)
        metrics = compute_metrics(matrix)
        assert metrics.tt == pytest.approx(expected["tt"], abs=1e-12)
        assert metrics.st == pytest.approx(expected["st"], abs=1e-12)
        if expected["idr"] is None:
            assert metrics.idr is None
        else:
            assert metrics.idr == pytest.approx(expected["idr"], abs=1e-12)
        assert metrics.sir == pytest.approx(expected["sir"], abs=1e-12)


def test_metrics_from_summed_matrices_match_pooled_tallies():
    seqs = [[5, 9, 8], [5, 5], [9, 9, 10, 5]]
    summed = sum_matrices([build_matrix(encoded(s)) for s in seqs])
    metrics = compute_metrics(summed)
    rows = summed.row_sums()
    total = rows.sum()
    assert metrics.tt == pytest.approx(sum(rows[:7]) / total)
    assert metrics.st == pytest.approx((rows[7] + rows[8]) / total)


# --- labeling ---

def utt(seq, speaker_id, kind, fn, text, at=None):
    return Utterance(
        session_id="s",
        seq=seq,
        wall_time=iso_utc(1_700_000_000 + (at if at is not None else seq)),
        speaker_id=speaker_id,
        speaker_kind=kind,
        function_id=fn,
        text=text,
    )


def test_rule_labeler_teach_is_lecturing():
    assert rule_labeler(utt(1, "teacher", "Teacher", "teach", "Today we learn."), None) == FiasCategory.LECTURING


def test_rule_labeler_praise_marker():
    prev = utt(1, "user", "User", "user_input", "Is this right?")
    reply = utt(2, "teacher", "Teacher", "interact", "Great question! Yes.")
    assert rule_labeler(reply, prev) == FiasCategory.PRAISE


def test_rule_labeler_student_initiation_vs_response():
    statement = utt(1, "teacher", "Teacher", "teach", "Lecture text.")
    question = utt(2, "teacher", "Teacher", "interact", "What do you think?")
    assert rule_labeler(utt(3, "user", "User", "user_input", "I wonder about X"), statement) == FiasCategory.STUDENT_INITIATION
    assert rule_labeler(utt(3, "user", "User", "user_input", "I think B"), question) == FiasCategory.STUDENT_RESPONSE


def test_rule_labeler_assistant_counts_as_teacher_side():
    prev = utt(1, "user", "User", "user_input", "Help?")
    reply = utt(2, "assistant", "Assistant", "interact", "Here is how it works.")
    assert rule_labeler(reply, prev) in (FiasCategory.LECTURING, FiasCategory.PRAISE)


def test_label_utterances_golden_mock_transcript():
    record = run_headless_session(
        make_course(2),
        default_roster(),
        SessionConfig(tau=0),
        DemoScriptedBackend(),
        user_source=[(4, "Why does this matter?")],
    )
    session = label_utterances(record, rule_labeler)
    # teach p1, teach p2, user question (initiation), assistant reply,
    # then teach-driven remainder; frozen by hand from the demo backend policy
    assert session.sequence[0] == FiasCategory.LECTURING
    assert FiasCategory.STUDENT_INITIATION in session.sequence
    assert len(session.sequence) == len(record.utterances)
    assert session.flagged_indices == ()


def test_label_utterances_inserts_silence_on_gap():
    record_like = run_headless_session(
        make_course(2), default_roster(), SessionConfig(tau=0), DemoScriptedBackend()
    )
    # rebuild with a forced 60s gap between the first two utterances
    original = record_like.utterances
    spaced = [
        utt(u.seq, u.speaker_id, u.speaker_kind, u.function_id, u.text, at=i * 60)
        for i, u in enumerate(original)
    ]
    from classim.events import utterance_event
    record_like.events = [utterance_event(u) for u in spaced]
    session = label_utterances(record_like, rule_labeler, silence_gap_s=30)
    assert session.sequence.count(FiasCategory.SILENCE) == len(spaced) - 1


def test_labeler_failure_flags_position_keeps_alignment():
    record = run_headless_session(
        make_course(2), default_roster(), SessionConfig(tau=0), DemoScriptedBackend()
    )

    calls = {"n": 0}

    def flaky(u, prev):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("labeler outage")
        return rule_labeler(u, prev)

    session = label_utterances(record, flaky)
    assert len(session.sequence) == len(record.utterances)
    assert session.sequence[1] == FiasCategory.SILENCE
    assert session.flagged_indices == (1,)


def test_llm_labeler_parses_category_number():
    backend = scripted_backend(["5", "the category is 9"])
    labeler = llm_labeler(backend)
    lecture = utt(1, "teacher", "Teacher", "teach", "Lecture.")
    student = utt(2, "user", "User", "user_input", "hm")
    assert labeler(lecture, None) == FiasCategory.LECTURING
    assert labeler(student, lecture) == FiasCategory.STUDENT_INITIATION


def test_no_interactions_sessions_have_zero_student_metrics():
    roster = apply_ablation(default_roster(), Ablation.NO_INTERACTIONS)
    record = run_headless_session(
        make_course(5), roster, SessionConfig(tau=0), DemoScriptedBackend()
    )
    metrics = compute_metrics(build_matrix(label_utterances(record, rule_labeler)))
    assert metrics.st == 0.0
    assert metrics.sir == 0.0


# --- report ---

def test_report_quadrant_single_cell():
    counts = np.zeros((10, 10), dtype=np.int64)
    counts[4, 4] = 4  # (5,5)
    subtotals = quadrant_subtotals(FiasMatrix(counts))
    assert subtotals == {"A": 4, "B": 0, "C": 0, "D": 0}


def test_report_quadrants_hand_mixed_matrix():
    matrix = build_matrix(encoded([5, 9, 2, 8, 10, 5]))
    subtotals = quadrant_subtotals(matrix)

    def oracle_quadrant(from_range, to_range):
        return sum(
            matrix.cell(x, y) for x in from_range for y in to_range
        )

    assert subtotals["A"] == oracle_quadrant(range(1, 8), range(1, 8))
    assert subtotals["B"] == oracle_quadrant(range(8, 11), range(1, 8))
    assert subtotals["C"] == oracle_quadrant(range(1, 8), range(8, 11))
    assert subtotals["D"] == oracle_quadrant(range(8, 11), range(8, 11))
    assert sum(subtotals.values()) == matrix.total()


def test_report_round_trips_through_loader():
    matrix = build_matrix(encoded([5, 9, 8, 5, 2]))
    metrics = compute_metrics(matrix)
    doc = json.loads(json.dumps(report(matrix, metrics)))
    loaded_matrix, loaded_metrics = load_report(doc)
    assert loaded_matrix == matrix
    assert loaded_metrics == metrics


def test_report_text_renders_grid_and_metrics():
    matrix = build_matrix(encoded([5, 9]))
    text = format_report_text(report(matrix, compute_metrics(matrix)))
    assert "quadrant A" in text
    assert "TT" in text and "SIR" in text


def test_metrics_excluding_silence_base():
    matrix = build_matrix(encoded([5, 9]))  # tallies: 5:1, 9:1, 10:1 (lead pad)
    excl = metrics_excluding_silence(matrix)
    assert excl["tt"] == pytest.approx(0.5)
    assert excl["st"] == pytest.approx(0.5)


def test_encoded_session_jsonl_round_trip(tmp_path):
    sessions = [encoded([5, 9, 8], sid="a"), encoded([2, 10], sid="b")]
    path = tmp_path / "encoded.jsonl"
    write_encoded_sessions(sessions, path)
    assert read_encoded_sessions(path) == sessions


def test_released_dataset_path_with_synthetic_reference_data(tmp_path, monkeypatch):
    """The dataset-ingestion acceptance path, driven with synthetic encoded
    sessions whose pooled tallies hit the reference full-setting ratios."""
    seq = [3] * 4741 + [5] * 36459 + [8] * 4107 + [9] * 3993 + [10] * 699
    write_encoded_sessions([encoded(seq, sid="ref")], tmp_path / "ref.jsonl")
    monkeypatch.setenv("CLASSIM_RELEASED_DATA", str(tmp_path))
    from .test_acceptance import test_criterion_9_released_dataset_reproduction

    test_criterion_9_released_dataset_reproduction()
