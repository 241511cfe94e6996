import type {
  ApiErrorBody,
  EvaluationReport,
  FeedbackDraft,
  FeedbackEntry,
  MdDecision,
  StudyCreated,
  StudyResults,
  UploadComplete,
  UploadResponse,
} from './types.js';

/** Error responses carry `{error, detail}`; both are surfaced here. */
export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly detail: string;

  constructor(status: number, code: string, detail: string) {
    super(`${code}: ${detail}`);
    this.name = 'ApiError';
    this.status = status;
    this.code = code;
    this.detail = detail;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface ClientOptions {
  baseUrl: string;
  token?: string;
  /** Injectable for tests; defaults to the global fetch. */
  fetchImpl?: FetchLike;
}

/**
 * Typed client for the screening service. One method per endpoint; no
 * response field is reinterpreted on the way through.
 */
export class ServiceClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchImpl: FetchLike;

  constructor(options: ClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, '');
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) {
      headers['content-type'] = 'application/json';
    }
    if (this.token) {
      headers['authorization'] = `Bearer ${this.token}`;
    }
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => null);
    if (!response.ok) {
      const err = (payload ?? {}) as Partial<ApiErrorBody>;
      throw new ApiError(
        response.status,
        err.error ?? 'unknown_error',
        err.detail ?? `HTTP ${response.status}`
      );
    }
    return payload as T;
  }

  health(): Promise<{ status: string }> {
    return this.request('GET', '/v1/health');
  }

  createStudy(): Promise<StudyCreated> {
    return this.request('POST', '/v1/studies');
  }

  closeStudy(studyId: string): Promise<{ study_id: string; status: string }> {
    return this.request('POST', `/v1/studies/${encodeURIComponent(studyId)}/close`);
  }

  uploadImage(
    studyId: string,
    imagePngBase64: string,
    metadata?: Record<string, string>
  ): Promise<UploadResponse> {
    return this.request('POST', `/v1/studies/${encodeURIComponent(studyId)}/images`, {
      image_png_base64: imagePngBase64,
      ...(metadata ? { metadata } : {}),
    });
  }

  submitMdDecision(
    studyId: string,
    imageId: string,
    decision: MdDecision
  ): Promise<UploadComplete> {
    const path =
      `/v1/studies/${encodeURIComponent(studyId)}` +
      `/images/${encodeURIComponent(imageId)}/md-decision`;
    return this.request('POST', path, { decision });
  }

  listResults(studyId: string): Promise<StudyResults> {
    return this.request('GET', `/v1/studies/${encodeURIComponent(studyId)}/results`);
  }

  submitFeedback(draft: FeedbackDraft): Promise<{ feedback_id: string }> {
    return this.request('POST', '/v1/feedback', draft);
  }

  listFeedback(filter?: {
    study_id?: string;
    image_id?: string;
  }): Promise<{ feedback: FeedbackEntry[] }> {
    const params = new URLSearchParams();
    if (filter?.study_id) {
      params.set('study_id', filter.study_id);
    }
    if (filter?.image_id) {
      params.set('image_id', filter.image_id);
    }
    const query = params.toString();
    return this.request('GET', `/v1/feedback${query ? `?${query}` : ''}`);
  }

  evaluationReport(scenario: string): Promise<EvaluationReport> {
    return this.request(
      'GET',
      `/v1/reports/evaluation?scenario=${encodeURIComponent(scenario)}`
    );
  }
}
