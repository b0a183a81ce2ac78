// DOM rendering: a thin projection of ViewState onto the page. All text comes
// from server events; nothing is generated client-side.

import type { Api } from "./api.js";
import { composerEnabled, type ViewState } from "./state.js";
import type { QuizDefinition, SurveyDefinition, Transcript } from "./types.js";

const KIND_CLASS: Record<string, string> = {
  Teacher: "teacher",
  Assistant: "assistant",
  Classmate: "classmate",
  User: "user",
};

export interface Elements {
  slide: HTMLElement;
  phaseBanner: HTMLElement;
  chat: HTMLElement;
  composer: HTMLFormElement;
  composerInput: HTMLInputElement;
  composerButton: HTMLButtonElement;
  notice: HTMLElement;
  typing: HTMLElement;
  forms: HTMLElement;
}

export function grabElements(root: Document): Elements {
  const byId = (id: string) => {
    const el = root.getElementById(id);
    if (!el) throw new Error(`missing element #${id}`);
    return el;
  };
  return {
    slide: byId("slide"),
    phaseBanner: byId("phase-banner"),
    chat: byId("chat"),
    composer: byId("composer") as HTMLFormElement,
    composerInput: byId("composer-input") as HTMLInputElement,
    composerButton: byId("composer-send") as HTMLButtonElement,
    notice: byId("notice"),
    typing: byId("typing"),
    forms: byId("forms"),
  };
}

export function renderSlide(el: HTMLElement, transcript: Transcript | null, page: number | null, slides: Map<number, { kind: string; value: string }>): void {
  el.textContent = "";
  if (page === null) {
    el.textContent = "Waiting for the class to begin.";
    return;
  }
  const slide = slides.get(page);
  const title = document.createElement("div");
  title.className = "slide-page";
  title.textContent = `Slide ${page}`;
  el.appendChild(title);
  if (!slide) return;
  if (slide.kind === "image") {
    const img = document.createElement("img");
    img.src = slide.value;
    img.alt = `slide ${page}`;
    el.appendChild(img);
  } else {
    const body = document.createElement("pre");
    body.className = "slide-body";
    body.textContent = slide.value;
    el.appendChild(body);
  }
}

export function render(view: ViewState, els: Elements, displayNames: Map<string, string>): void {
  els.phaseBanner.textContent = `class is ${view.phase}`;
  els.phaseBanner.dataset.phase = view.phase;

  els.chat.textContent = "";
  for (const entry of view.chat) {
    const row = document.createElement("div");
    row.className = `entry ${KIND_CLASS[entry.speakerKind] ?? "other"}`;
    if (entry.pending) row.classList.add("pending");
    const name = document.createElement("span");
    name.className = "speaker";
    name.textContent = displayNames.get(entry.speakerId) ?? entry.speakerId;
    const text = document.createElement("span");
    text.className = "text";
    text.textContent = entry.text;
    row.append(name, text);
    els.chat.appendChild(row);
  }
  els.chat.scrollTop = els.chat.scrollHeight;

  const enabled = composerEnabled(view);
  els.composerInput.disabled = !enabled;
  els.composerButton.disabled = !enabled;
  els.composerInput.placeholder = view.interactionsDisabled
    ? "interactions are disabled in this class"
    : view.phase === "closed"
      ? "the class has ended"
      : "say something to the class";

  els.notice.textContent = view.notice ?? "";
  els.typing.textContent = view.generatingFor
    ? `${displayNames.get(view.generatingFor) ?? view.generatingFor} is thinking...`
    : "";
}

export function renderEndOfClassForms(
  els: Elements,
  api: Api,
  sessionId: string,
  participantId: string,
  survey: SurveyDefinition,
  quiz: QuizDefinition | null
): void {
  els.forms.textContent = "";
  const surveyForm = document.createElement("form");
  surveyForm.className = "survey";
  const heading = document.createElement("h3");
  heading.textContent = survey.prompt;
  surveyForm.appendChild(heading);
  for (const dim of survey.dimensions) {
    const block = document.createElement("fieldset");
    const legend = document.createElement("legend");
    legend.textContent = `${dim.title}: ${dim.question}`;
    block.appendChild(legend);
    for (const value of survey.scale) {
      const label = document.createElement("label");
      const input = document.createElement("input");
      input.type = "radio";
      input.name = dim.id;
      input.value = String(value);
      if (value === survey.scale[0]) input.required = true;
      label.append(input, ` ${value}: ${dim.guidelines[String(value)]}`);
      block.appendChild(label);
    }
    surveyForm.appendChild(block);
  }
  const surveySubmit = document.createElement("button");
  surveySubmit.textContent = "Submit survey";
  surveyForm.appendChild(surveySubmit);
  const surveyStatus = document.createElement("p");
  surveyForm.appendChild(surveyStatus);
  surveyForm.onsubmit = async (event) => {
    event.preventDefault();
    const data = new FormData(surveyForm);
    try {
      await api.submitSurvey(sessionId, {
        participant_id: participantId,
        cognitive: Number(data.get("cognitive")),
        teaching: Number(data.get("teaching")),
        social: Number(data.get("social")),
      });
      surveyStatus.textContent = "survey stored, thank you";
    } catch (error) {
      surveyStatus.textContent = String(error);
    }
  };
  els.forms.appendChild(surveyForm);

  if (quiz === null) return;
  const quizForm = document.createElement("form");
  quizForm.className = "quiz";
  const quizHeading = document.createElement("h3");
  quizHeading.textContent = "Course quiz (choose every correct option)";
  quizForm.appendChild(quizHeading);
  for (const question of quiz.questions) {
    const block = document.createElement("fieldset");
    const legend = document.createElement("legend");
    legend.textContent = question.text;
    block.appendChild(legend);
    for (const [option, optionText] of Object.entries(question.options)) {
      const label = document.createElement("label");
      const input = document.createElement("input");
      input.type = "checkbox";
      input.name = question.id;
      input.value = option;
      label.append(input, ` ${option}. ${optionText}`);
      block.appendChild(label);
    }
    quizForm.appendChild(block);
  }
  const quizSubmit = document.createElement("button");
  quizSubmit.textContent = "Submit quiz";
  quizForm.appendChild(quizSubmit);
  const quizStatus = document.createElement("p");
  quizForm.appendChild(quizStatus);
  quizForm.onsubmit = async (event) => {
    event.preventDefault();
    const answers: Record<string, string[]> = {};
    for (const question of quiz.questions) {
      const checked = quizForm.querySelectorAll(`input[name="${question.id}"]:checked`);
      answers[question.id] = Array.from(checked).map(
        (input) => (input as HTMLInputElement).value
      );
    }
    try {
      const result = await api.submitQuiz(sessionId, participantId, answers);
      const total = quiz.questions.length;
      quizStatus.textContent = `score: ${Math.round(result.score * total)}/${total}`;
    } catch (error) {
      quizStatus.textContent = String(error);
    }
  };
  els.forms.appendChild(quizForm);
}
