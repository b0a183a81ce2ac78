// Thin HTTP client over the service endpoints.

import type {
  CourseContent,
  CourseSummary,
  QuizDefinition,
  QuizResultBody,
  SessionHandle,
  SurveyAnswers,
  SurveyDefinition,
  Transcript,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(base + path, {
    headers: { "Content-Type": "application/json" },
    ...init,
  });
  const body = await response.text();
  if (!response.ok) {
    let detail = body;
    try {
      detail = JSON.parse(body).detail ?? body;
    } catch {
      // plain-text error body
    }
    throw new ApiError(response.status, String(detail));
  }
  return JSON.parse(body) as T;
}

export class Api {
  constructor(public base: string) {}

  listCourses(): Promise<CourseSummary[]> {
    return request(this.base, "/courses");
  }

  course(courseId: string): Promise<CourseContent> {
    return request(this.base, `/courses/${courseId}`);
  }

  createSession(
    courseId: string,
    options: { ablation?: string; config?: Record<string, unknown> } = {}
  ): Promise<SessionHandle> {
    return request(this.base, "/sessions", {
      method: "POST",
      body: JSON.stringify({ course_id: courseId, ...options }),
    });
  }

  transcript(sessionId: string): Promise<Transcript> {
    return request(this.base, `/sessions/${sessionId}/transcript`);
  }

  surveyDefinition(): Promise<SurveyDefinition> {
    return request(this.base, "/survey-definition");
  }

  quizDefinition(sessionId: string): Promise<QuizDefinition> {
    return request(this.base, `/sessions/${sessionId}/quiz-definition`);
  }

  submitSurvey(sessionId: string, answers: SurveyAnswers): Promise<{ status: string }> {
    return request(this.base, `/sessions/${sessionId}/survey`, {
      method: "POST",
      body: JSON.stringify(answers),
    });
  }

  submitQuiz(
    sessionId: string,
    participantId: string,
    answers: Record<string, string[]>
  ): Promise<QuizResultBody> {
    return request(this.base, `/sessions/${sessionId}/quiz`, {
      method: "POST",
      body: JSON.stringify({ participant_id: participantId, answers }),
    });
  }

  streamUrl(sessionId: string): string {
    return this.base.replace(/^http/, "ws") + `/sessions/${sessionId}/stream`;
  }
}
