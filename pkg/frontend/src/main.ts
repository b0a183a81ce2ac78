// Bootstrap: join (or create) a session and wire the stream to the view.
//
// URL parameters:
//   ?session=<id>          join an existing session
//   ?course=<id>           create a fresh session for the course
//   &ablation=<setting>    optional, for created sessions
//   &api=<base-url>        service base (defaults to same origin)

import { Api } from "./api.js";
import { initialState, optimisticSend, reduce, type ViewState } from "./state.js";
import { SessionStream } from "./stream.js";
import type { ServerFrame } from "./types.js";
import { grabElements, render, renderEndOfClassForms, renderSlide } from "./ui.js";

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("api") ?? window.location.origin;
  const api = new Api(base);
  const els = grabElements(document);
  const participantId = `web-${Math.random().toString(36).slice(2, 8)}`;

  let sessionId = params.get("session");
  if (!sessionId) {
    const courseId = params.get("course");
    if (!courseId) {
      els.notice.textContent = "pass ?session=<id> or ?course=<id>";
      return;
    }
    const handle = await api.createSession(courseId, {
      ablation: params.get("ablation") ?? "full",
    });
    sessionId = handle.session_id;
  }

  const transcript = await api.transcript(sessionId);
  const slides = new Map<number, { kind: string; value: string }>();
  const course = await api.course(transcript.course_id).catch(() => null);
  if (course) {
    for (const page of course.pages) slides.set(page.index, page.slide);
  }
  const displayNames = new Map<string, string>([["user", "You"]]);

  let view: ViewState = initialState(transcript.setting);
  const apply = (frame: ServerFrame) => {
    view = reduce(view, frame);
    render(view, els, displayNames);
    renderSlide(els.slide, transcript, view.currentPage, slides);
    if (view.phase === "closing" || view.phase === "closed") {
      void showForms();
    }
  };

  let formsShown = false;
  async function showForms(): Promise<void> {
    if (formsShown || sessionId === null) return;
    formsShown = true;
    const survey = await api.surveyDefinition();
    const quiz = await api.quizDefinition(sessionId).catch(() => null);
    renderEndOfClassForms(els, api, sessionId, participantId, survey, quiz);
  }

  if (transcript.phase === "closed") {
    // read-only: replay the stored events straight into the reducer
    for (const frame of transcript.events) apply(frame);
    els.notice.textContent = "this class has ended; showing the transcript";
    if (transcript.survey) {
      const summary = document.createElement("p");
      summary.className = "stored-survey";
      summary.textContent =
        `stored survey from ${transcript.survey.participant_id}: ` +
        `cognitive ${transcript.survey.cognitive}, ` +
        `teaching ${transcript.survey.teaching}, ` +
        `social ${transcript.survey.social}` +
        (transcript.quiz ? `; quiz score ${transcript.quiz.score}` : "");
      els.forms.replaceChildren(summary);
    }
    return;
  }

  const stream = new SessionStream(api.streamUrl(sessionId), {
    onFrame: apply,
    onStatus: (status) => {
      els.phaseBanner.dataset.connection = status;
    },
  });
  stream.start();

  els.composer.onsubmit = (event) => {
    event.preventDefault();
    const text = els.composerInput.value.trim();
    if (!text) return;
    // optimistic entry; the server echo reconciles it to its seq
    view = optimisticSend(view, text);
    render(view, els, displayNames);
    stream.send(text);
    els.composerInput.value = "";
  };
}

void boot();
