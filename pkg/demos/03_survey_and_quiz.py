"""The post-class evaluation pipeline: quiz scoring, the participant gate,
and presence-survey aggregation with standard errors.

Six invented participants take the demo course quiz (all-or-nothing scoring
per question) and rate the three presences on the 0/1/2 scale. Participants
at or below 50% quiz accuracy are gated out before aggregation.

Run:  python demos/03_survey_and_quiz.py
"""

from pathlib import Path

from classim import SurveyResponse, aggregate_survey, gate_participants, score_quiz
from classim.evaluation import load_quiz_definition, load_survey_definition, quiz_answer_key

HERE = Path(__file__).parent
definition = load_quiz_definition(HERE.parent / "courses" / "intro_ai_quiz.json")
key = quiz_answer_key(definition)

submissions = {
    "ana": {"q1": {"B"}, "q2": {"D"}, "q3": {"A", "C"}, "q4": {"A", "C"}},   # 4/4
    "ben": {"q1": {"B"}, "q2": {"D"}, "q3": {"A", "C"}, "q4": {"A"}},        # 3/4
    "col": {"q1": {"B"}, "q2": {"D"}, "q3": {"A"}, "q4": {"B"}},             # 2/4 gated
    "dee": {"q1": {"B"}, "q2": {"A"}, "q3": {"A", "C"}, "q4": {"A", "C"}},   # 3/4
    "eli": {"q1": {"A"}, "q2": {"A"}, "q3": {"B"}, "q4": {"B"}},             # 0/4 gated
    "fay": {"q1": {"B"}, "q2": {"D"}, "q3": {"A", "C", "D"}, "q4": {"A", "C"}},  # 3/4: q3 superset
}

results = [score_quiz(name, answers, key) for name, answers in submissions.items()]
for result in results:
    print(f"  {result.participant_id}: quiz score {result.score:.2f}")

included = gate_participants(results, threshold=0.5)
print(f"\nincluded after the 50% gate: {sorted(included)}")

ratings = {
    "ana": (2, 2, 2), "ben": (2, 2, 1), "col": (0, 1, 0),
    "dee": (1, 2, 2), "eli": (0, 0, 0), "fay": (2, 1, 2),
}
responses = [
    SurveyResponse(participant_id=name, cognitive=c, teaching=t, social=s)
    for name, (c, t, s) in ratings.items()
]

print("\npresence means over included participants (sample-sd standard error):")
for summary in aggregate_survey(responses, included):
    print(
        f"  {summary.dimension:<10} mean {summary.mean:.3f} "
        f"stderr {summary.stderr:.3f} (n={summary.n})"
    )

survey_form = load_survey_definition()
print(f"\nthe survey form asks: {survey_form['prompt']!r}")
for dimension in survey_form["dimensions"]:
    print(f"  - {dimension['title']}: {dimension['question']}")
