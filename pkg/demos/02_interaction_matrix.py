"""From transcripts to the ten-category interaction matrix and its ratios.

Runs the three settings (full cast, no classmates, no interactions) over the
demo course, encodes each transcript with the deterministic rule labeler,
sums the per-session transition matrices per setting, and prints the grid,
quadrant subtotals, and the talk/influence ratios side by side.

Run:  python demos/02_interaction_matrix.py
"""

from pathlib import Path

from classim import (
    Ablation,
    DemoScriptedBackend,
    SessionConfig,
    apply_ablation,
    build_matrix,
    compute_metrics,
    default_roster,
    label_utterances,
    load_course,
    report,
    rule_labeler,
    run_headless_session,
    sum_matrices,
)
from classim.fias import format_report_text

HERE = Path(__file__).parent
course = load_course(HERE.parent / "courses" / "intro_ai.json")

# a chatty participant for the interactive settings
questions = [(6, "Could you give an example?"), (12, "How does that differ from rules?")]

for mode in Ablation:
    roster = apply_ablation(default_roster(), mode)
    user_source = [] if roster.interactions_disabled else questions
    records = [
        run_headless_session(
            course,
            roster,
            SessionConfig(tau=0.0),
            DemoScriptedBackend(),
            session_id=f"demo-{mode.value}-{i}",
            user_source=user_source,
        )
        for i in range(3)
    ]
    matrices = [build_matrix(label_utterances(r, rule_labeler)) for r in records]
    summed = sum_matrices(matrices)
    metrics = compute_metrics(summed)

    print(f"=== setting: {mode.value} ({len(records)} sessions summed) ===")
    print(format_report_text(report(summed, metrics)))
    print()
