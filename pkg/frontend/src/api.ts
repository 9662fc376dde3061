/**
 * HTTP client for the review service.
 *
 * Transport errors and 5xx responses are retried with linear backoff;
 * 4xx responses raise immediately (the request itself is wrong and a retry
 * cannot fix it).  A 409 is surfaced as ConflictError so callers can tell
 * "someone already reviewed this" apart from other failures.
 */

import type {
  ExportPayload,
  QueuePage,
  ReviewAccepted,
  ReviewRequest,
  RunSummary,
} from './types.js';

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

/** Any non-2xx response from the service. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = 'ApiError';
  }
}

/** 409: the operation collides with existing state (duplicate review, wrong stage). */
export class ConflictError extends ApiError {
  constructor(detail: string) {
    super(409, detail);
    this.name = 'ConflictError';
  }
}

/** The request never produced a response (network down, server gone). */
export class TransportError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'TransportError';
  }
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/** Pull a human-readable message out of a FastAPI error body. */
async function errorDetail(response: Response): Promise<string> {
  try {
    const body: unknown = await response.json();
    if (body && typeof body === 'object' && 'detail' in body) {
      const detail = (body as { detail: unknown }).detail;
      return typeof detail === 'string' ? detail : JSON.stringify(detail);
    }
    return JSON.stringify(body);
  } catch {
    return response.statusText || `status ${response.status}`;
  }
}

export interface ApiClientOptions {
  fetchFn?: FetchFn;
  maxRetries?: number;
  retryDelayMs?: number;
}

export class ApiClient {
  private readonly fetchFn: FetchFn;
  private readonly maxRetries: number;
  private readonly retryDelayMs: number;

  constructor(
    readonly baseUrl: string,
    options: ApiClientOptions = {},
  ) {
    this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
    this.maxRetries = options.maxRetries ?? 3;
    this.retryDelayMs = options.retryDelayMs ?? 300;
  }

  /** Absolute URL for an item's raw content (used as an <img> src). */
  contentUrl(itemId: number, runId: string): string {
    const encoded = encodeURIComponent(runId);
    return `${this.baseUrl}/items/${itemId}/content?run=${encoded}`;
  }

  async health(): Promise<boolean> {
    const body = await this.request('GET', '/health');
    return (body as { status?: string }).status === 'ok';
  }

  listRuns(): Promise<RunSummary[]> {
    return this.request('GET', '/runs') as Promise<RunSummary[]>;
  }

  getRun(runId: string): Promise<RunSummary> {
    return this.request('GET', `/runs/${encodeURIComponent(runId)}`) as Promise<RunSummary>;
  }

  getQueue(runId: string, page = 0, pageSize = 20): Promise<QueuePage> {
    const path =
      `/runs/${encodeURIComponent(runId)}/queue?page=${page}&page_size=${pageSize}`;
    return this.request('GET', path) as Promise<QueuePage>;
  }

  submitReview(runId: string, review: ReviewRequest): Promise<ReviewAccepted> {
    const path = `/runs/${encodeURIComponent(runId)}/reviews`;
    return this.request('POST', path, review) as Promise<ReviewAccepted>;
  }

  getExport(runId: string): Promise<ExportPayload> {
    return this.request('GET', `/runs/${encodeURIComponent(runId)}/export`) as Promise<ExportPayload>;
  }

  exportUrl(runId: string): string {
    return `${this.baseUrl}/runs/${encodeURIComponent(runId)}/export`;
  }

  private async request(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<unknown> {
    const url = `${this.baseUrl}${path}`;
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { 'Content-Type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    let lastFailure = 'request not attempted';
    for (let attempt = 1; attempt <= this.maxRetries; attempt += 1) {
      let response: Response;
      try {
        response = await this.fetchFn(url, init);
      } catch (error) {
        lastFailure = error instanceof Error ? error.message : String(error);
        if (attempt < this.maxRetries) {
          await sleep(this.retryDelayMs * attempt);
        }
        continue;
      }
      if (response.ok) {
        return response.json();
      }
      if (response.status >= 500) {
        lastFailure = `HTTP ${response.status}`;
        if (attempt < this.maxRetries) {
          await sleep(this.retryDelayMs * attempt);
        }
        continue;
      }
      const detail = await errorDetail(response);
      if (response.status === 409) {
        throw new ConflictError(detail);
      }
      throw new ApiError(response.status, detail);
    }
    throw new TransportError(
      `${method} ${path} failed after ${this.maxRetries} attempts: ${lastFailure}`,
    );
  }
}
