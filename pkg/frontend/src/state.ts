// The view reducer: one pure function folds server frames into ViewState.
// Every chat entry originates from a server event except the optimistic copy
// of the participant's own message, which is reconciled to its server seq on
// echo; entries stay ordered by seq no matter the arrival order.

import type { ErrorFrame, Phase, ServerFrame } from "./types.js";

export interface ChatEntry {
  seq: number | null; // null while optimistic (awaiting the server echo)
  speakerId: string;
  speakerKind: string;
  text: string;
  pending: boolean;
}

export interface ViewState {
  phase: Phase;
  currentPage: number | null;
  chat: ChatEntry[];
  interactionsDisabled: boolean;
  sendInFlight: boolean;
  generatingFor: string | null; // agent id between a decision and its utterance
  notice: string | null;
  surveyPromptShown: boolean;
  lastSeq: number;
}

export function initialState(setting?: string): ViewState {
  return {
    phase: "init",
    currentPage: null,
    chat: [],
    interactionsDisabled: setting === "no_interactions",
    sendInFlight: false,
    generatingFor: null,
    notice: null,
    surveyPromptShown: false,
    lastSeq: 0,
  };
}

export function composerEnabled(state: ViewState): boolean {
  return (
    !state.interactionsDisabled &&
    !state.sendInFlight &&
    (state.phase === "running" || state.phase === "closing")
  );
}

/** Add the participant's message optimistically; the echo assigns its seq. */
export function optimisticSend(state: ViewState, text: string): ViewState {
  const entry: ChatEntry = {
    seq: null,
    speakerId: "user",
    speakerKind: "User",
    text,
    pending: true,
  };
  return { ...state, chat: [...state.chat, entry], sendInFlight: true };
}

function sortChat(chat: ChatEntry[]): ChatEntry[] {
  // stable: entries with a seq in order, optimistic entries trail
  return [...chat].sort((a, b) => {
    if (a.seq === null && b.seq === null) return 0;
    if (a.seq === null) return 1;
    if (b.seq === null) return -1;
    return a.seq - b.seq;
  });
}

export function reduce(state: ViewState, frame: ServerFrame): ViewState {
  if (frame.type === "error") {
    return reduceError(state, frame);
  }
  const next: ViewState = { ...state, lastSeq: Math.max(state.lastSeq, frame.seq) };
  switch (frame.type) {
    case "utterance": {
      if (state.chat.some((entry) => entry.seq === frame.seq)) {
        return state; // replayed duplicate
      }
      let chat = state.chat;
      if (frame.speaker_id === "user") {
        const pendingIndex = chat.findIndex(
          (entry) => entry.pending && entry.text === frame.text
        );
        if (pendingIndex >= 0) {
          chat = chat.map((entry, i) =>
            i === pendingIndex
              ? { ...entry, seq: frame.seq, pending: false }
              : entry
          );
          return {
            ...next,
            chat: sortChat(chat),
            sendInFlight: false,
            notice: null,
          };
        }
      }
      chat = [
        ...chat,
        {
          seq: frame.seq,
          speakerId: frame.speaker_id,
          speakerKind: frame.speaker_kind,
          text: frame.text,
          pending: false,
        },
      ];
      return {
        ...next,
        chat: sortChat(chat),
        generatingFor:
          frame.speaker_kind === "User" ? state.generatingFor : null,
      };
    }
    case "page_change":
      return { ...next, currentPage: frame.page };
    case "phase_change":
      return {
        ...next,
        phase: frame.phase,
        surveyPromptShown: state.surveyPromptShown || frame.survey_prompt === true,
      };
    case "decision":
      return { ...next, generatingFor: frame.agent_id };
    case "trigger":
      return next;
  }
}

function reduceError(state: ViewState, frame: ErrorFrame): ViewState {
  const next: ViewState = {
    ...state,
    notice: frame.message ?? frame.code,
    sendInFlight: false,
    // drop optimistic entries the server refused
    chat: state.chat.filter((entry) => !entry.pending),
  };
  if (frame.code === "interactions_disabled") {
    next.interactionsDisabled = true;
  }
  return next;
}

export function reduceAll(state: ViewState, frames: ServerFrame[]): ViewState {
  return frames.reduce(reduce, state);
}
