// Wire types mirroring the service's event frames and HTTP bodies.

export type Phase = "init" | "running" | "closing" | "closed";

export interface UtteranceFrame {
  type: "utterance";
  seq: number;
  at: string;
  speaker_id: string;
  speaker_kind: "Teacher" | "Assistant" | "Classmate" | "User";
  function_id: string;
  text: string;
}

export interface PageChangeFrame {
  type: "page_change";
  seq: number;
  at: string;
  page: number;
}

export interface PhaseChangeFrame {
  type: "phase_change";
  seq: number;
  at: string;
  phase: Phase;
  survey_prompt?: boolean;
  fault?: boolean;
}

export interface DecisionFrame {
  type: "decision";
  seq: number;
  at: string;
  agent_id: string;
  function_id: string;
}

export interface TriggerFrame {
  type: "trigger";
  seq: number;
  at: string;
  cause: "user_spoke" | "tau_expired";
}

export interface ErrorFrame {
  type: "error";
  code: string;
  message?: string;
}

export type EventFrame =
  | UtteranceFrame
  | PageChangeFrame
  | PhaseChangeFrame
  | DecisionFrame
  | TriggerFrame;

export type ServerFrame = EventFrame | ErrorFrame;

export interface SessionHandle {
  session_id: string;
  stream_path: string;
  created_at: string;
  phase: Phase;
}

export interface Transcript {
  session_id: string;
  course_id: string;
  setting: string;
  phase: Phase;
  config: Record<string, unknown>;
  events: EventFrame[];
  survey: Record<string, unknown> | null;
  quiz: { participant_id: string; score: number } | null;
  fault: string | null;
}

export interface CourseSummary {
  id: string;
  title: string;
  pages: number;
}

export interface CourseContent {
  id: string;
  title: string;
  pages: {
    index: number;
    slide: { kind: "markdown" | "image"; value: string };
    script: string;
  }[];
}

export interface SurveyAnswers {
  participant_id: string;
  cognitive: number;
  teaching: number;
  social: number;
}

export interface QuizDefinition {
  course_id: string;
  questions: { id: string; text: string; options: Record<string, string> }[];
}

export interface SurveyDefinition {
  prompt: string;
  scale: number[];
  dimensions: {
    id: string;
    title: string;
    question: string;
    guidelines: Record<string, string>;
  }[];
}

export interface QuizResultBody {
  participant_id: string;
  selections: Record<string, string[]>;
  score: number;
}
