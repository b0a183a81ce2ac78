"""HTTP + WebSocket service hosting live classroom sessions.

Each session is owned by exactly one asyncio task; WebSocket clients are
subscribers plus an input source routed through that owner, so the engine
stays single-writer. Fan-out never blocks the session loop: subscribers get
their own unbounded queues.
"""

from __future__ import annotations

import asyncio
import logging
import time
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .agents import AgentSpeakError
from .backend import BackendError, ChatBackend
from .course import Course, course_to_dict, load_course
from .events import SessionEvent, iso_utc
from .evaluation import (
    EvaluationError,
    SurveyResponse,
    load_quiz_definition,
    load_survey_definition,
    quiz_answer_key,
    score_quiz,
)
from .fias import build_matrix, compute_metrics, label_utterances, report, rule_labeler, sum_matrices
from .roster import Ablation, Roster, apply_ablation, default_roster, spec_from_dict
from .session import Phase, SessionConfig, SessionEngine, UserInputRejected
from .store import StoreError, TranscriptStore, UnknownSession

logger = logging.getLogger(__name__)


class CreateSessionRequest(BaseModel):
    course_id: str
    ablation: str = "full"
    config: dict[str, Any] | None = None
    roster_overrides: list[dict[str, Any]] | None = None
    session_id: str | None = None


class SurveyRequest(BaseModel):
    participant_id: str
    cognitive: int = Field(ge=0, le=2)
    teaching: int = Field(ge=0, le=2)
    social: int = Field(ge=0, le=2)


class QuizRequest(BaseModel):
    participant_id: str
    answers: dict[str, list[str]]


class LiveSession:
    """The asyncio owner of one running engine."""

    def __init__(self, engine: SessionEngine, store: TranscriptStore):
        self.engine = engine
        self.store = store
        self.events: list[SessionEvent] = []
        self.subscribers: list[asyncio.Queue] = []
        self.inputs: asyncio.Queue = asyncio.Queue()
        self.loop = asyncio.get_running_loop()
        self.task: asyncio.Task | None = None
        engine.sink = self._on_event

    @property
    def session_id(self) -> str:
        return self.engine.session_id

    @property
    def phase(self) -> Phase:
        return self.engine.state.phase

    def _on_event(self, event: SessionEvent) -> None:
        # Runs on the engine's worker thread: persist durably, then hand the
        # broadcast to the loop so subscriber queues stay loop-owned.
        self.store.append(self.session_id, event)
        self.events.append(event)
        self.loop.call_soon_threadsafe(self._broadcast, event)

    def _broadcast(self, event: SessionEvent) -> None:
        for queue in list(self.subscribers):
            queue.put_nowait(event)

    def subscribe(self) -> tuple[asyncio.Queue, list[SessionEvent]]:
        """Register a subscriber; returns its queue plus the catch-up snapshot.

        Must be called without awaiting between registration and snapshot so
        no event can slip between the two (duplicates are filtered by seq).
        """
        queue: asyncio.Queue = asyncio.Queue()
        self.subscribers.append(queue)
        return queue, list(self.events)

    def unsubscribe(self, queue: asyncio.Queue) -> None:
        if queue in self.subscribers:
            self.subscribers.remove(queue)

    async def submit_user_text(self, text: str) -> None:
        """Route one user utterance through the owning task; raises
        UserInputRejected back to this caller only."""
        future: asyncio.Future = self.loop.create_future()
        await self.inputs.put((text, future))
        await future

    async def run(self) -> None:
        try:
            await asyncio.to_thread(self.engine.initialize)
            while self.engine.state.phase is not Phase.CLOSED:
                tau = self.engine.config.tau
                deadline = self.engine.state.last_action_at + tau
                delay = max(0.02, deadline - time.time())
                try:
                    text, future = await asyncio.wait_for(self.inputs.get(), timeout=delay)
                except asyncio.TimeoutError:
                    await asyncio.to_thread(self.engine.tick)
                    continue
                try:
                    await asyncio.to_thread(self.engine.handle_user_utterance, text)
                    future.set_result(None)
                except UserInputRejected as exc:
                    future.set_exception(exc)
        except (AgentSpeakError, BackendError) as exc:
            logger.error("session %s faulted: %s", self.session_id, exc)
            self.engine.abort(str(exc))
        finally:
            if self.engine.fault is not None:
                self.store.mark_fault(self.session_id, self.engine.fault)
            # flush any waiters left behind by a close
            while not self.inputs.empty():
                _, future = self.inputs.get_nowait()
                if not future.done():
                    future.set_exception(
                        UserInputRejected("not_accepting", "session is closed")
                    )


def _load_courses(courses_dir: str | Path) -> dict[str, Course]:
    courses = {}
    for path in sorted(Path(courses_dir).glob("*.json")):
        if path.name.endswith("_quiz.json"):
            continue
        try:
            course = load_course(path)
        except Exception:
            continue
        courses[course.id] = course
    return courses


def _load_quizzes(courses_dir: str | Path) -> dict[str, dict]:
    quizzes = {}
    for path in sorted(Path(courses_dir).glob("*_quiz.json")):
        try:
            definition = load_quiz_definition(path)
        except Exception:
            continue
        quizzes[definition["course_id"]] = definition
    return quizzes


def create_app(
    courses_dir: str | Path,
    data_dir: str | Path,
    backend: ChatBackend,
    default_config: SessionConfig | None = None,
) -> FastAPI:
    app = FastAPI(title="classim", version="0.1.0")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    app.state.courses = _load_courses(courses_dir)
    app.state.quizzes = _load_quizzes(courses_dir)
    app.state.store = TranscriptStore(data_dir)
    app.state.backend = backend
    app.state.default_config = default_config or SessionConfig()
    app.state.live = {}

    def store() -> TranscriptStore:
        return app.state.store

    def get_live(session_id: str) -> LiveSession | None:
        return app.state.live.get(session_id)

    def session_phase(session_id: str) -> str:
        live = get_live(session_id)
        if live is not None:
            return live.phase.value
        try:
            return store().load_session(session_id).phase
        except UnknownSession:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.get("/courses")
    def list_courses() -> list[dict[str, Any]]:
        return [
            {"id": c.id, "title": c.title, "pages": len(c)}
            for c in app.state.courses.values()
        ]

    @app.get("/courses/{course_id}")
    def course_content(course_id: str) -> dict[str, Any]:
        course = app.state.courses.get(course_id)
        if course is None:
            raise HTTPException(status_code=404, detail="unknown course")
        return course_to_dict(course)

    @app.get("/sessions")
    def list_sessions(
        course_id: str | None = None, setting: str | None = None
    ) -> list[dict[str, Any]]:
        return store().list_sessions(course_id=course_id, setting=setting)

    @app.post("/sessions", status_code=201)
    async def create_session(request: CreateSessionRequest) -> dict[str, Any]:
        course = app.state.courses.get(request.course_id)
        if course is None:
            raise HTTPException(status_code=404, detail="unknown course")
        try:
            ablation = Ablation(request.ablation)
        except ValueError:
            raise HTTPException(status_code=422, detail=f"unknown ablation {request.ablation!r}")
        roster = apply_ablation(default_roster(), ablation)
        if request.roster_overrides:
            merged = {spec.id: spec for spec in roster.agents}
            for item in request.roster_overrides:
                spec = spec_from_dict(item)
                merged[spec.id] = spec
            roster = Roster(agents=tuple(merged.values()), ablation=ablation)
        try:
            config = (
                SessionConfig.from_dict({**app.state.default_config.to_dict(), **request.config})
                if request.config
                else app.state.default_config
            )
        except (TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=f"invalid config: {exc}")

        engine = SessionEngine(
            course, roster, config, app.state.backend, session_id=request.session_id
        )
        if engine.session_id in app.state.live:
            raise HTTPException(status_code=409, detail="session id already live")
        live = LiveSession(engine, store())
        try:
            store().create_session(
                engine.session_id, course.id, roster, config, iso_utc(time.time())
            )
        except StoreError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        app.state.live[engine.session_id] = live
        live.task = asyncio.create_task(live.run())
        return {
            "session_id": engine.session_id,
            "stream_path": f"/sessions/{engine.session_id}/stream",
            "created_at": iso_utc(time.time()),
            "phase": engine.state.phase.value,
        }

    @app.get("/sessions/{session_id}/transcript")
    def transcript(session_id: str) -> dict[str, Any]:
        try:
            record = store().load_session(session_id)
        except UnknownSession:
            raise HTTPException(status_code=404, detail="unknown session")
        return {
            "session_id": record.session_id,
            "course_id": record.course_id,
            "setting": record.setting,
            "phase": record.phase,
            "config": record.config,
            "events": [e.to_json() for e in record.events],
            "survey": record.survey,
            "quiz": record.quiz,
            "fault": record.fault,
        }

    @app.get("/survey-definition")
    def survey_definition() -> dict[str, Any]:
        return load_survey_definition()

    @app.get("/sessions/{session_id}/quiz-definition")
    def quiz_definition(session_id: str) -> dict[str, Any]:
        try:
            record = store().load_session(session_id)
        except UnknownSession:
            raise HTTPException(status_code=404, detail="unknown session")
        definition = app.state.quizzes.get(record.course_id)
        if definition is None:
            raise HTTPException(status_code=404, detail="no quiz for this course")
        # keys are withheld from the participant-facing form
        return {
            "course_id": definition["course_id"],
            "questions": [
                {"id": q["id"], "text": q["text"], "options": q["options"]}
                for q in definition["questions"]
            ],
        }

    @app.post("/sessions/{session_id}/survey")
    def submit_survey(session_id: str, request: SurveyRequest) -> dict[str, Any]:
        phase = session_phase(session_id)
        if phase not in (Phase.CLOSING.value, Phase.CLOSED.value):
            raise HTTPException(status_code=409, detail="survey opens when the class ends")
        response = SurveyResponse(
            participant_id=request.participant_id,
            cognitive=request.cognitive,
            teaching=request.teaching,
            social=request.social,
        )
        store().attach_survey(session_id, response.to_json())
        return {"status": "stored"}

    @app.post("/sessions/{session_id}/quiz")
    def submit_quiz(session_id: str, request: QuizRequest) -> dict[str, Any]:
        phase = session_phase(session_id)
        if phase not in (Phase.CLOSING.value, Phase.CLOSED.value):
            raise HTTPException(status_code=409, detail="quiz opens when the class ends")
        record = store().load_session(session_id)
        definition = app.state.quizzes.get(record.course_id)
        if definition is None:
            raise HTTPException(status_code=404, detail="no quiz for this course")
        try:
            result = score_quiz(
                request.participant_id,
                {q: set(v) for q, v in request.answers.items()},
                quiz_answer_key(definition),
            )
        except EvaluationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        store().attach_quiz(session_id, result.to_json())
        return result.to_json()

    @app.get("/analysis/fias")
    def analysis_fias(ids: str = Query(...)) -> dict[str, Any]:
        session_ids = [s for s in ids.split(",") if s]
        matrices = []
        for session_id in session_ids:
            try:
                record = store().load_session(session_id)
            except UnknownSession:
                raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
            matrices.append(build_matrix(label_utterances(record, rule_labeler)))
        summed = sum_matrices(matrices)
        return {"sessions": session_ids, **report(summed, compute_metrics(summed))}

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str):
        await websocket.accept()
        live = get_live(session_id)
        if live is None:
            # not live: replay what the store has, then close
            try:
                record = store().load_session(session_id)
            except UnknownSession:
                await websocket.send_json({"type": "error", "code": "unknown_session"})
                await websocket.close()
                return
            terminal = [e for e in record.events if e.type == "phase_change"]
            if terminal:
                await websocket.send_json(terminal[-1].to_json())
            await websocket.close()
            return

        queue, snapshot = live.subscribe()
        try:
            last_seq = 0
            for event in snapshot:
                await websocket.send_json(event.to_json())
                last_seq = event.seq
            closed = any(
                e.type == "phase_change" and e.data.get("phase") == "closed"
                for e in snapshot
            )
            receiver = asyncio.create_task(websocket.receive_json())
            forwarder: asyncio.Task | None = None
            while not closed:
                forwarder = forwarder or asyncio.create_task(queue.get())
                done, _ = await asyncio.wait(
                    {receiver, forwarder}, return_when=asyncio.FIRST_COMPLETED
                )
                if forwarder in done:
                    event = forwarder.result()
                    forwarder = None
                    if event.seq > last_seq:
                        await websocket.send_json(event.to_json())
                        last_seq = event.seq
                        if event.type == "phase_change" and event.data.get("phase") == "closed":
                            closed = True
                if receiver in done:
                    try:
                        message = receiver.result()
                    except WebSocketDisconnect:
                        return
                    receiver = asyncio.create_task(websocket.receive_json())
                    await _handle_client_message(websocket, live, message)
            await websocket.close()
        except WebSocketDisconnect:
            pass
        finally:
            live.unsubscribe(queue)

    return app


async def _handle_client_message(websocket: WebSocket, live: LiveSession, message: Any) -> None:
    if not isinstance(message, dict) or message.get("type") != "user_utterance":
        await websocket.send_json(
            {"type": "error", "code": "malformed", "message": "expected {type: user_utterance, text}"}
        )
        return
    text = message.get("text", "")
    try:
        await live.submit_user_text(text)
    except UserInputRejected as exc:
        await websocket.send_json(
            {"type": "error", "code": exc.code, "message": str(exc)}
        )


def serve(
    courses_dir: str | Path,
    data_dir: str | Path,
    backend: ChatBackend,
    host: str = "127.0.0.1",
    port: int = 8000,
    default_config: SessionConfig | None = None,
) -> None:
    import uvicorn

    app = create_app(courses_dir, data_dir, backend, default_config=default_config)
    uvicorn.run(app, host=host, port=port)
