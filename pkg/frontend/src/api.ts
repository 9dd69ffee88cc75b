/** Typed client for the study service's HTTP+JSON API. */

export interface Treatment {
  bonus: string;
  ml_arm: string;
  comprehension_quiz: boolean;
}

export interface SessionInfo {
  session_id: string;
  phase: string;
  treatment: Treatment;
  n_practice: number;
  n_main: number;
  time_limit_ms: number;
}

export interface ProblemView {
  session_id: string;
  phase: "practice" | "main";
  problem_index: number;
  n_problems: number;
  weights: number[];
  values: number[];
  capacity: number;
  started_at: number;
  server_now: number;
  time_limit_ms: number;
  remaining_ms: number;
  recommendation: number[] | null;
  recommendation_value: number | null;
}

export interface SubmitResult {
  ack: boolean;
  phase: string;
  problem_index: number;
  auto_submitted: boolean;
  feedback?: { econ_percent: number };
}

export interface ScoreScreen {
  session_id: string;
  mean_econ_percent: number;
  payment_pence: number;
  trials: { problem_index: number; econ_percent: number }[];
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public kind: string,
    detail: string,
  ) {
    super(detail);
  }
}

/** What the screen flow needs from a study-service client. */
export interface StudyClient {
  createSession(mode: string, seed: number, treatment?: Treatment): Promise<SessionInfo>;
  nextProblem(sessionId: string): Promise<ProblemView>;
  submit(
    sessionId: string,
    problemIndex: number,
    selection: number[],
    clientElapsedMs: number,
    auto: boolean,
  ): Promise<SubmitResult>;
  finalize(sessionId: string): Promise<ScoreScreen>;
  invalidate(sessionId: string, reason: string): Promise<unknown>;
}

async function parseError(response: Response): Promise<ApiError> {
  let kind = "unknown";
  let detail = `HTTP ${response.status}`;
  try {
    const body = await response.json();
    kind = body.error ?? kind;
    detail = body.detail ?? detail;
  } catch {
    // non-JSON error body; keep defaults
  }
  return new ApiError(response.status, kind, detail);
}

export class StudyApi implements StudyClient {
  constructor(private baseUrl: string) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  createSession(mode: string, seed: number, treatment?: Treatment): Promise<SessionInfo> {
    return this.request<SessionInfo>("POST", "/sessions", { mode, seed, treatment });
  }

  nextProblem(sessionId: string): Promise<ProblemView> {
    return this.request<ProblemView>("GET", `/sessions/${sessionId}/next`);
  }

  /**
   * Submit the current selection. Transient network failures are retried
   * with exponential backoff so an auto-submission at the deadline is not
   * lost to a hiccup; the selection itself lives in the caller's state.
   */
  async submit(
    sessionId: string,
    problemIndex: number,
    selection: number[],
    clientElapsedMs: number,
    auto: boolean,
    retries = 3,
  ): Promise<SubmitResult> {
    let delay = 500;
    for (let attempt = 0; ; attempt++) {
      try {
        return await this.request<SubmitResult>("POST", `/sessions/${sessionId}/submit`, {
          problem_index: problemIndex,
          selection,
          client_elapsed_ms: Math.round(clientElapsedMs),
          auto,
        });
      } catch (error) {
        if (error instanceof ApiError || attempt >= retries) {
          throw error;
        }
        await new Promise((resolve) => setTimeout(resolve, delay));
        delay *= 2;
      }
    }
  }

  finalize(sessionId: string): Promise<ScoreScreen> {
    return this.request<ScoreScreen>("POST", `/sessions/${sessionId}/finalize`);
  }

  invalidate(sessionId: string, reason: string): Promise<unknown> {
    return this.request("POST", `/sessions/${sessionId}/invalidate`, { reason });
  }
}
