"""classim: an interactive multi-agent classroom simulation engine.

A scripted course is delivered to one live participant by a cast of
model-driven agents (teacher, assistant, classmates) under a hidden manager
that picks the next speaker and action. Sessions persist as append-only event
logs, and analysis pipelines turn them into ten-category interaction matrices,
talk-share ratios, presence surveys, and output-length statistics.
"""

from .backend import (
    BackendConfig,
    BackendError,
    ChatMessage,
    FixtureExhausted,
    FixtureMiss,
    HttpChatBackend,
    scripted_backend,
)
from .course import Course, CourseError, ScriptPage, Slide, load_course, validate_course, write_course
from .events import SessionEvent, Utterance
from .evaluation import (
    PresenceSummary,
    QuizResult,
    SurveyResponse,
    aggregate_survey,
    count_words,
    gate_participants,
    score_quiz,
    word_count_stats,
)
from .fias import (
    EncodedSession,
    FiasCategory,
    FiasMatrix,
    FiasMetrics,
    build_matrix,
    compute_metrics,
    label_utterances,
    report,
    rule_labeler,
    sum_matrices,
)
from .headless import DemoScriptedBackend, fake_clock, run_headless_session
from .roster import (
    Ablation,
    AgentKind,
    AgentSpec,
    RoleBehavior,
    Roster,
    apply_ablation,
    default_roster,
)
from .session import (
    ClassState,
    Interact,
    ManagerDecision,
    NextPage,
    Phase,
    SessionConfig,
    SessionEngine,
    Teach,
)
from .store import SessionRecord, TranscriptStore, import_session

__version__ = "0.1.0"
