import json
import time

import pytest
from fastapi.testclient import TestClient

from classim.course import write_course
from classim.headless import DemoScriptedBackend
from classim.service import create_app
from classim.session import SessionConfig

from .conftest import make_course

QUIZ = {
    "course_id": "mock-course",
    "questions": [
        {"id": "q1", "text": "Pick B.", "options": {"A": "no", "B": "yes"}, "key": ["B"]},
        {"id": "q2", "text": "Pick A and C.", "options": {"A": "a", "B": "b", "C": "c"}, "key": ["A", "C"]},
        {"id": "q3", "text": "Pick C.", "options": {"A": "a", "C": "c"}, "key": ["C"]},
        {"id": "q4", "text": "Pick A.", "options": {"A": "a", "B": "b"}, "key": ["A"]},
    ],
}


@pytest.fixture
def app_env(tmp_path):
    courses_dir = tmp_path / "courses"
    courses_dir.mkdir()
    write_course(make_course(3), courses_dir / "mock.json")
    (courses_dir / "mock_quiz.json").write_text(json.dumps(QUIZ))
    data_dir = tmp_path / "data"
    app = create_app(
        courses_dir,
        data_dir,
        DemoScriptedBackend(),
        default_config=SessionConfig(tau=600, closing_windows=1),
    )
    return app, data_dir


def wait_phase(client, session_id, phase, timeout=10.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        body = client.get(f"/sessions/{session_id}/transcript").json()
        if body["phase"] == phase:
            return body
        time.sleep(0.02)
    raise AssertionError(f"session never reached {phase}")


def drain_until_closed(ws, limit=200):
    frames = []
    for _ in range(limit):
        frame = ws.receive_json()
        frames.append(frame)
        if frame.get("type") == "phase_change" and frame.get("phase") == "closed":
            break
    return frames


def test_list_courses(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        body = client.get("/courses").json()
    assert body == [{"id": "mock-course", "title": "Mock Course", "pages": 3}]


def test_course_content_serves_slides(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        body = client.get("/courses/mock-course").json()
        assert body["pages"][0]["slide"]["kind"] == "markdown"
        assert len(body["pages"]) == 3
        assert client.get("/courses/ghost").status_code == 404


def test_create_session_streams_page_one_first(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        created = client.post("/sessions", json={"course_id": "mock-course"})
        assert created.status_code == 201
        handle = created.json()
        with client.websocket_connect(handle["stream_path"]) as ws:
            first = ws.receive_json()
            second = ws.receive_json()
    assert first["type"] == "page_change" and first["page"] == 1
    assert second["type"] == "utterance" and second["speaker_id"] == "teacher"


def test_unknown_course_404(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        assert client.post("/sessions", json={"course_id": "nope"}).status_code == 404


def test_user_message_echoed_with_seq_then_answered(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post("/sessions", json={"course_id": "mock-course"}).json()
        with client.websocket_connect(handle["stream_path"]) as ws:
            ws.receive_json()  # page_change
            ws.receive_json()  # teacher utterance
            ws.receive_json()  # phase running
            ws.send_json({"type": "user_utterance", "text": "what is this?"})
            echoed = ws.receive_json()
            assert echoed["type"] == "utterance"
            assert echoed["speaker_id"] == "user"
            assert echoed["seq"] == 4
            trigger = ws.receive_json()
            assert trigger["type"] == "trigger" and trigger["cause"] == "user_spoke"
            decision = ws.receive_json()
            assert decision["type"] == "decision"
            reply = ws.receive_json()
            assert reply["type"] == "utterance"
            assert reply["speaker_kind"] in ("Teacher", "Assistant", "Classmate")


def test_malformed_client_message_keeps_channel_open(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post("/sessions", json={"course_id": "mock-course"}).json()
        with client.websocket_connect(handle["stream_path"]) as ws:
            for _ in range(3):
                ws.receive_json()
            ws.send_json({"type": "bogus"})
            error = ws.receive_json()
            assert error["type"] == "error" and error["code"] == "malformed"
            ws.send_json({"type": "user_utterance", "text": "still here"})
            echoed = ws.receive_json()
            assert echoed["speaker_id"] == "user"


def test_no_interactions_session_rejects_messages(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post(
            "/sessions",
            json={"course_id": "mock-course", "ablation": "no_interactions"},
        ).json()
        with client.websocket_connect(handle["stream_path"]) as ws:
            for _ in range(3):
                ws.receive_json()
            ws.send_json({"type": "user_utterance", "text": "hello?"})
            error = ws.receive_json()
            assert error["type"] == "error"
            assert error["code"] == "interactions_disabled"


def test_reconnect_catches_up_without_gaps(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post("/sessions", json={"course_id": "mock-course"}).json()
        sid = handle["session_id"]
        with client.websocket_connect(handle["stream_path"]) as ws:
            for _ in range(3):
                ws.receive_json()
            ws.send_json({"type": "user_utterance", "text": "first question"})
            seen_first = [ws.receive_json() for _ in range(4)]
        # reconnect: full catch-up replay, strictly increasing seq, no dupes
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            ws.send_json({"type": "user_utterance", "text": "second question"})
            frames = []
            while len(frames) < 7 + 4:
                frame = ws.receive_json()
                if frame.get("type") != "error":
                    frames.append(frame)
        seqs = [f["seq"] for f in frames]
        assert seqs == sorted(seqs)
        assert len(seqs) == len(set(seqs))
        assert seqs[:7] == list(range(1, 8))
        replayed_texts = [f.get("text") for f in frames if f.get("speaker_id") == "user"]
        assert "first question" in replayed_texts and "second question" in replayed_texts


def test_full_session_runs_to_closed_on_idle(app_env, tmp_path):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post(
            "/sessions",
            json={"course_id": "mock-course", "config": {"tau": 0.05}},
        ).json()
        with client.websocket_connect(handle["stream_path"]) as ws:
            frames = drain_until_closed(ws)
    phases = [f["phase"] for f in frames if f["type"] == "phase_change"]
    assert phases == ["running", "closing", "closed"]
    pages = [f["page"] for f in frames if f["type"] == "page_change"]
    assert pages == [1, 2, 3]


def test_survey_rejected_while_running_then_stored(app_env):
    app, data_dir = app_env
    with TestClient(app) as client:
        handle = client.post(
            "/sessions",
            json={"course_id": "mock-course", "config": {"tau": 0.05}},
        ).json()
        sid = handle["session_id"]
        survey = {"participant_id": "p1", "cognitive": 2, "teaching": 2, "social": 1}
        early = client.post(f"/sessions/{sid}/survey", json=survey)
        if early.status_code != 409:  # the tiny tau may already have closed it
            assert early.status_code == 200
        wait_phase(client, sid, "closed")
        stored = client.post(f"/sessions/{sid}/survey", json=survey)
        assert stored.status_code == 200
        body = client.get(f"/sessions/{sid}/transcript").json()
        assert body["survey"]["participant_id"] == "p1"


def test_survey_409_while_running(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post("/sessions", json={"course_id": "mock-course"}).json()
        sid = handle["session_id"]
        survey = {"participant_id": "p1", "cognitive": 2, "teaching": 2, "social": 1}
        assert client.post(f"/sessions/{sid}/survey", json=survey).status_code == 409


def test_quiz_scored_and_stored(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post(
            "/sessions",
            json={"course_id": "mock-course", "config": {"tau": 0.05}},
        ).json()
        sid = handle["session_id"]
        wait_phase(client, sid, "closed")
        answers = {"q1": ["B"], "q2": ["A", "C"], "q3": ["A"], "q4": ["A"]}
        body = client.post(
            f"/sessions/{sid}/quiz",
            json={"participant_id": "p1", "answers": answers},
        ).json()
        assert body["score"] == 0.75
        stored = client.get(f"/sessions/{sid}/transcript").json()
        assert stored["quiz"]["score"] == 0.75


def test_quiz_definition_withholds_keys(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post("/sessions", json={"course_id": "mock-course"}).json()
        body = client.get(f"/sessions/{handle['session_id']}/quiz-definition").json()
    assert all("key" not in q for q in body["questions"])


def test_connect_to_closed_session_sends_terminal_then_closes(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post(
            "/sessions",
            json={"course_id": "mock-course", "config": {"tau": 0.05}},
        ).json()
        sid = handle["session_id"]
        wait_phase(client, sid, "closed")
        app.state.live.pop(sid)  # service treats it as no longer live
        with client.websocket_connect(f"/sessions/{sid}/stream") as ws:
            terminal = ws.receive_json()
        assert terminal["type"] == "phase_change" and terminal["phase"] == "closed"


def test_restart_lists_same_sessions(app_env, tmp_path):
    app, data_dir = app_env
    with TestClient(app) as client:
        handle = client.post(
            "/sessions",
            json={"course_id": "mock-course", "config": {"tau": 0.05}},
        ).json()
        wait_phase(client, handle["session_id"], "closed")
        before = client.get("/sessions").json()
    # a fresh app over the same data directory sees the same sessions
    app2 = create_app(tmp_path / "courses", data_dir, DemoScriptedBackend())
    with TestClient(app2) as client2:
        after = client2.get("/sessions").json()
    assert [s["session_id"] for s in after] == [s["session_id"] for s in before]


def test_fias_analysis_endpoint(app_env):
    app, _ = app_env
    with TestClient(app) as client:
        handle = client.post(
            "/sessions",
            json={
                "course_id": "mock-course",
                "ablation": "no_interactions",
                "config": {"tau": 0.05},
            },
        ).json()
        sid = handle["session_id"]
        wait_phase(client, sid, "closed")
        body = client.get(f"/analysis/fias?ids={sid}").json()
    assert body["sessions"] == [sid]
    assert body["metrics"]["st"] == 0.0
    assert body["metrics"]["sir"] == 0.0
    # with tau tiny every inter-teach gap is a genuine silence unit, so the
    # lecturing mass sits in the teacher/silence exchange quadrants
    assert body["quadrants"]["B"]["subtotal"] > 0
    assert body["quadrants"]["C"]["subtotal"] > 0
