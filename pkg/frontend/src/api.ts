// Typed client for the annotation service. Every method maps to one
// endpoint and returns the parsed response body; non-2xx responses turn
// into ApiError so callers can branch on status instead of parsing text.

import type {
  AgreementReport,
  AnnotatorRegistration,
  CorpusStats,
  Guidelines,
  Label,
  LabelReceipt,
  LabelSubmission,
  Progress,
  Round,
  Task,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(`HTTP ${status}: ${typeof detail === 'string' ? detail : JSON.stringify(detail)}`);
    this.name = 'ApiError';
    this.status = status;
    this.detail = detail;
  }
}

export interface ApiClientOptions {
  baseUrl: string;
  // Shared auth token; sent as X-Auth-Token when set.
  token?: string;
  // Injectable for tests. Defaults to the global fetch.
  fetchImpl?: FetchLike;
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly token?: string;
  private readonly fetchImpl: FetchLike;

  constructor(options: ApiClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, '');
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private headers(json: boolean): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h['Content-Type'] = 'application/json';
    if (this.token !== undefined) h['X-Auth-Token'] = this.token;
    return h;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    if (response.ok) return response;
    let detail: unknown;
    try {
      detail = ((await response.json()) as { detail?: unknown }).detail;
    } catch {
      detail = response.statusText;
    }
    throw new ApiError(response.status, detail);
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.request(path, { headers: this.headers(false) });
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.request(path, {
      method: 'POST',
      headers: this.headers(true),
      body: JSON.stringify(body),
    });
    return (await response.json()) as T;
  }

  async register(annotatorId: string): Promise<AnnotatorRegistration> {
    return this.post<AnnotatorRegistration>('/api/annotators', {
      annotator_id: annotatorId,
    });
  }

  // null means 204: no task available in this round for this annotator.
  async fetchTask(annotatorId: string, round: Round = 1): Promise<Task | null> {
    const query = `annotator=${encodeURIComponent(annotatorId)}&round=${round}`;
    const response = await this.request(`/api/task?${query}`, {
      headers: this.headers(false),
    });
    if (response.status === 204) return null;
    return (await response.json()) as Task;
  }

  async submitLabel(
    annotatorId: string,
    docId: string,
    label: Label,
    clientTimestamp?: string,
  ): Promise<LabelReceipt> {
    const body: LabelSubmission = {
      annotator_id: annotatorId,
      doc_id: docId,
      label,
    };
    if (clientTimestamp !== undefined) body.client_timestamp = clientTimestamp;
    return this.post<LabelReceipt>('/api/label', body);
  }

  async guidelines(): Promise<Guidelines> {
    return this.get<Guidelines>('/api/guidelines');
  }

  async agreement(): Promise<AgreementReport> {
    return this.get<AgreementReport>('/api/agreement');
  }

  async stats(): Promise<CorpusStats> {
    return this.get<CorpusStats>('/api/stats');
  }

  async progress(): Promise<Progress> {
    return this.get<Progress>('/api/progress');
  }
}
