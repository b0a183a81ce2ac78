"""The live classroom over HTTP + WebSocket, driven entirely in-process.

Boots the service with the scripted backend, creates a session, joins its
event stream, interjects as the participant, waits for the class to close on
idle expiry, and files the survey and quiz like the browser client would.

Run:  python demos/04_live_service.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from classim import DemoScriptedBackend, SessionConfig
from classim.service import create_app

HERE = Path(__file__).parent
app = create_app(
    courses_dir=HERE.parent / "courses",
    data_dir=HERE / "output" / "service-data",
    backend=DemoScriptedBackend(),
    default_config=SessionConfig(tau=0.25, closing_windows=1),
)

with TestClient(app) as client:
    courses = client.get("/courses").json()
    print("courses on the service:", json.dumps(courses))

    handle = client.post("/sessions", json={"course_id": "intro_ai"}).json()
    sid = handle["session_id"]
    print(f"created session {sid}; streaming from {handle['stream_path']}\n")

    with client.websocket_connect(handle["stream_path"]) as ws:
        spoke = False
        while True:
            frame = ws.receive_json()
            kind = frame["type"]
            if kind == "utterance":
                text = frame["text"] if len(frame["text"]) < 80 else frame["text"][:77] + "..."
                print(f"  [{frame['seq']:>3}] {frame['speaker_id']:<18} {text}")
            elif kind == "page_change":
                print(f"  [{frame['seq']:>3}] --- slide {frame['page']} ---")
                if frame["page"] == 2 and not spoke:
                    spoke = True
                    ws.send_json({
                        "type": "user_utterance",
                        "text": "Quick question: who first asked whether machines can think?",
                    })
            elif kind == "phase_change":
                print(f"  [{frame['seq']:>3}] phase -> {frame['phase']}")
                if frame["phase"] == "closed":
                    break

    survey = {"participant_id": "demo-user", "cognitive": 2, "teaching": 2, "social": 1}
    print("\nsurvey:", client.post(f"/sessions/{sid}/survey", json=survey).json())

    answers = {"q1": ["B"], "q2": ["D"], "q3": ["A", "C"], "q4": ["A", "C"]}
    quiz = client.post(
        f"/sessions/{sid}/quiz", json={"participant_id": "demo-user", "answers": answers}
    ).json()
    print(f"quiz score: {quiz['score']:.2f}")

    transcript = client.get(f"/sessions/{sid}/transcript").json()
    print(f"transcript has {len(transcript['events'])} events; survey stored:",
          transcript["survey"] is not None)
