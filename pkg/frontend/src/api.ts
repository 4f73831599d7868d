// Typed client for the study service HTTP API. The client only ever sees
// opaque slider ids and audio tokens; condition names stay server-side.

export interface Demographics {
  age_bracket: string;
  production_familiarity: string;
  synthesis_knowledge: string;
  equipment_spend: string;
}

export interface SliderStimulus {
  slider_id: string;
  audio_url: string;
}

export interface TrialPayload {
  status: "trial";
  practice: boolean;
  trial_index: number;
  trials_per_session: number;
  reference_url: string;
  sliders: SliderStimulus[];
}

export interface CompletePayload {
  status: "complete";
}

export interface SessionInfo {
  session_id: string;
  trials_per_session: number;
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

export class StudyApi {
  constructor(private readonly fetchFn: FetchLike) {}

  private async request<T>(url: string, init?: Parameters<FetchLike>[1]): Promise<T> {
    let resp: Awaited<ReturnType<FetchLike>>;
    try {
      resp = await this.fetchFn(url, init);
    } catch (err) {
      throw new ApiError(`network failure: ${String(err)}`, 0);
    }
    const body = (await resp.json().catch(() => ({}))) as Record<string, unknown>;
    if (!resp.ok) {
      const detail = typeof body.detail === "string" ? body.detail : `HTTP ${resp.status}`;
      throw new ApiError(detail, resp.status);
    }
    return body as T;
  }

  createSession(demographics: Demographics): Promise<SessionInfo> {
    return this.request<SessionInfo>("/api/session", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ demographics }),
    });
  }

  practiceTrial(sessionId: string): Promise<TrialPayload> {
    return this.request<TrialPayload>(`/api/session/${sessionId}/practice`);
  }

  currentTrial(sessionId: string): Promise<TrialPayload | CompletePayload> {
    return this.request<TrialPayload | CompletePayload>(`/api/session/${sessionId}/trial`);
  }

  submitRatings(
    sessionId: string,
    trialIndex: number,
    ratings: Record<string, number>,
  ): Promise<{ accepted: boolean; completed: number }> {
    return this.request(`/api/session/${sessionId}/trial/${trialIndex}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ratings }),
    });
  }
}
