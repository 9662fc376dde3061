/**
 * Contract tests for the API client's retry and error mapping, driven by a
 * scripted fetch stub: 5xx and transport failures retry with backoff, 4xx
 * fails fast, and 409 surfaces as a ConflictError.
 */

import { describe, expect, it } from 'vitest';

import { ApiClient, ApiError, ConflictError, TransportError } from '../src/api.js';

type Scripted = Response | Error;

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

/** Fetch stub that replays a fixed script and records every request. */
function scriptedFetch(script: Scripted[]) {
  const calls: { url: string; init?: RequestInit }[] = [];
  const fetchFn = (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({ url, init });
    const step = script.shift();
    if (step === undefined) {
      throw new Error('fetch called more times than scripted');
    }
    if (step instanceof Error) {
      return Promise.reject(step);
    }
    return Promise.resolve(step);
  };
  return { fetchFn, calls };
}

function client(script: Scripted[]) {
  const { fetchFn, calls } = scriptedFetch(script);
  const api = new ApiClient('http://service.test', {
    fetchFn,
    maxRetries: 3,
    retryDelayMs: 1,
  });
  return { api, calls };
}

const summary = {
  run_id: 'run-1',
  stage: 'reviewing',
  n_items: 20,
  rule: 'threshold',
  review_mode: 'interactive',
  budget: 10,
  reviews_used: 0,
  pending: 10,
};

describe('retry policy', () => {
  it('retries 5xx responses and returns the eventual success', async () => {
    const { api, calls } = client([
      jsonResponse({ detail: 'boom' }, 500),
      jsonResponse({ detail: 'boom' }, 503),
      jsonResponse([summary]),
    ]);
    const runs = await api.listRuns();
    expect(runs).toEqual([summary]);
    expect(calls.length).toBe(3);
  });

  it('retries transport errors', async () => {
    const { api, calls } = client([
      new TypeError('fetch failed'),
      jsonResponse(summary),
    ]);
    const run = await api.getRun('run-1');
    expect(run.pending).toBe(10);
    expect(calls.length).toBe(2);
  });

  it('gives up after the retry limit with a transport error', async () => {
    const { api, calls } = client([
      jsonResponse({ detail: 'down' }, 500),
      jsonResponse({ detail: 'down' }, 500),
      jsonResponse({ detail: 'down' }, 500),
    ]);
    await expect(api.listRuns()).rejects.toBeInstanceOf(TransportError);
    expect(calls.length).toBe(3);
  });

  it('does not retry 4xx responses', async () => {
    const { api, calls } = client([
      jsonResponse({ detail: "no run named 'nope'" }, 404),
    ]);
    const failure = await api.getRun('nope').catch((error) => error);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure.status).toBe(404);
    expect(failure.detail).toContain('nope');
    expect(calls.length).toBe(1);
  });
});

describe('error mapping', () => {
  it('maps 409 to ConflictError with the server detail', async () => {
    const { api } = client([
      jsonResponse({ detail: 'item 3 already has a review' }, 409),
    ]);
    const failure = await api
      .submitReview('run-1', { item_id: 3, label: 1, reviewer: 'me' })
      .catch((error) => error);
    expect(failure).toBeInstanceOf(ConflictError);
    expect(failure.detail).toContain('already has a review');
  });

  it('stringifies structured 422 validation details', async () => {
    const { api } = client([
      jsonResponse({ detail: [{ loc: ['body', 'label'], msg: 'ge=0' }] }, 422),
    ]);
    const failure = await api
      .submitReview('run-1', { item_id: 3, label: -1, reviewer: 'me' })
      .catch((error) => error);
    expect(failure).toBeInstanceOf(ApiError);
    expect(failure.status).toBe(422);
    expect(failure.detail).toContain('label');
  });
});

describe('request shapes', () => {
  it('builds queue URLs with paging parameters', async () => {
    const page = {
      run_id: 'run-1',
      stage: 'reviewing',
      page: 2,
      page_size: 5,
      total_pending: 10,
      budget: 10,
      reviews_used: 0,
      items: [],
    };
    const { api, calls } = client([jsonResponse(page)]);
    await api.getQueue('run-1', 2, 5);
    expect(calls[0].url).toBe('http://service.test/runs/run-1/queue?page=2&page_size=5');
  });

  it('posts reviews as JSON', async () => {
    const accepted = {
      run_id: 'run-1',
      item_id: 3,
      stage: 'reviewing',
      reviews_used: 1,
      pending: 9,
    };
    const { api, calls } = client([jsonResponse(accepted)]);
    await api.submitReview('run-1', { item_id: 3, label: 2, reviewer: 'me' });
    expect(calls[0].init?.method).toBe('POST');
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      item_id: 3,
      label: 2,
      reviewer: 'me',
    });
  });

  it('encodes run ids in content URLs', () => {
    const { api } = client([]);
    expect(api.contentUrl(7, 'run one')).toBe(
      'http://service.test/items/7/content?run=run%20one',
    );
  });
});
