// Thin typed client for the verification service's /v1 endpoints.

import type {
  EnrolledUserInfo,
  MetricsSnapshot,
  OutcomeRecord,
  PendingFeedback,
  ResolveResponse,
} from './types.js';

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let code = 'http_error';
  let message = response.statusText;
  try {
    const body = (await response.json()) as { code?: string; message?: string };
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body; keep the statusText
  }
  return new ApiError(response.status, code, message);
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  /** Long-poll the FIFO queue; waitSeconds=0 is a plain GET. */
  pending(waitSeconds = 0): Promise<PendingFeedback[]> {
    const suffix = waitSeconds > 0 ? `?wait=${waitSeconds}` : '';
    return this.get<PendingFeedback[]>(`/v1/feedback/pending${suffix}`);
  }

  /** Resolve one event: correct=true is the expert's Yes click. */
  async resolve(eventId: string, correct: boolean): Promise<ResolveResponse> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/v1/feedback/${eventId}`,
      {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ correct }),
      },
    );
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as ResolveResponse;
  }

  metrics(): Promise<MetricsSnapshot> {
    return this.get<MetricsSnapshot>('/v1/metrics');
  }

  users(): Promise<EnrolledUserInfo[]> {
    return this.get<EnrolledUserInfo[]>('/v1/users');
  }

  outcomes(since = 0): Promise<{ next: number; outcomes: OutcomeRecord[] }> {
    return this.get<{ next: number; outcomes: OutcomeRecord[] }>(
      `/v1/outcomes?since=${since}`,
    );
  }
}
