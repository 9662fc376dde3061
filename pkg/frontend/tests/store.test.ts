/**
 * Contract tests for the session store against a stubbed API.
 *
 * They pin the thin-client invariants: optimistic removal with lossless
 * restore, conflict cards reappearing with a notice, progress numbers taken
 * verbatim from server responses (never counted locally), and the
 * double-click guard sending a single request.
 */

import { describe, expect, it } from 'vitest';

import type { ApiClient } from '../src/api.js';
import { ApiError, ConflictError } from '../src/api.js';
import { ReviewSession } from '../src/store.js';
import type { QueueItem, QueuePage, ReviewAccepted, RunSummary } from '../src/types.js';

function queueItem(itemId: number, estimate: number): QueueItem {
  return {
    item_id: itemId,
    content_kind: 'text',
    content: { kind: 'text', text: `description of item ${itemId}` },
    label_space: ['cat', 'dog', 'bird'],
    machine_label: itemId % 3,
    machine_label_name: ['cat', 'dog', 'bird'][itemId % 3],
    machine_reasoning: null,
    critic_reasoning: `looks wrong to me (${itemId})`,
    error_estimate: estimate,
    decision: null,
    perplexity: null,
  };
}

function page(items: QueueItem[], reviewsUsed: number, pending: number): QueuePage {
  return {
    run_id: 'run-1',
    stage: 'reviewing',
    page: 0,
    page_size: 20,
    total_pending: pending,
    budget: 10,
    reviews_used: reviewsUsed,
    items,
  };
}

function accepted(itemId: number, reviewsUsed: number, pending: number): ReviewAccepted {
  return {
    run_id: 'run-1',
    item_id: itemId,
    stage: pending === 0 ? 'corrected' : 'reviewing',
    reviews_used: reviewsUsed,
    pending,
  };
}

function summary(reviewsUsed: number, pending: number): RunSummary {
  return {
    run_id: 'run-1',
    stage: 'reviewing',
    n_items: 20,
    rule: 'threshold',
    review_mode: 'interactive',
    budget: 10,
    reviews_used: reviewsUsed,
    pending,
  };
}

interface StubApi {
  queuePages: QueuePage[];
  submitResults: (ReviewAccepted | Error)[];
  summaries: RunSummary[];
  submitted: { item_id: number; label: number; reviewer: string }[];
  queueCalls: number;
}

function stubApi(config: {
  queuePages: QueuePage[];
  submitResults?: (ReviewAccepted | Error)[];
  summaries?: RunSummary[];
}): { api: ApiClient; state: StubApi } {
  const state: StubApi = {
    queuePages: [...config.queuePages],
    submitResults: [...(config.submitResults ?? [])],
    summaries: [...(config.summaries ?? [])],
    submitted: [],
    queueCalls: 0,
  };
  const api = {
    getQueue: () => {
      state.queueCalls += 1;
      const next = state.queuePages.shift();
      if (next === undefined) {
        return Promise.reject(new Error('no queue page scripted'));
      }
      return Promise.resolve(next);
    },
    submitReview: (_runId: string, review: StubApi['submitted'][number]) => {
      state.submitted.push(review);
      const next = state.submitResults.shift();
      if (next === undefined) {
        return Promise.reject(new Error('no submit result scripted'));
      }
      if (next instanceof Error) {
        return Promise.reject(next);
      }
      return Promise.resolve(next);
    },
    getRun: () => {
      const next = state.summaries.shift();
      if (next === undefined) {
        return Promise.reject(new Error('no summary scripted'));
      }
      return Promise.resolve(next);
    },
  } as unknown as ApiClient;
  return { api, state };
}

describe('loading', () => {
  it('fills the queue and progress from the first page', async () => {
    const items = [queueItem(4, 0.9), queueItem(1, 0.7), queueItem(9, 0.5)];
    const { api } = stubApi({ queuePages: [page(items, 2, 8)] });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    expect(session.items.map((i) => i.item_id)).toEqual([4, 1, 9]);
    expect(session.progress).toEqual({
      stage: 'reviewing',
      budget: 10,
      reviews_used: 2,
      pending: 8,
    });
    expect(session.current()?.item_id).toBe(4);
    expect(session.banner).toBeNull();
  });

  it('keeps queue cards in server order without reordering', async () => {
    // Server order is the contract; estimates here are deliberately not
    // sorted to prove the client does not re-sort them.
    const items = [queueItem(2, 0.3), queueItem(5, 0.9)];
    const { api } = stubApi({ queuePages: [page(items, 0, 2)] });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    expect(session.items.map((i) => i.item_id)).toEqual([2, 5]);
  });

  it('shows a banner instead of losing state when loading fails', async () => {
    const { api } = stubApi({ queuePages: [] });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    expect(session.banner).not.toBeNull();
    expect(session.items).toEqual([]);
  });
});

describe('submitting', () => {
  it('confirm sends the machine label and adopts server progress verbatim', async () => {
    const items = [queueItem(4, 0.9), queueItem(1, 0.7)];
    const { api, state } = stubApi({
      queuePages: [page(items, 0, 10)],
      // reviews_used jumps to 7 (other reviewers elsewhere): the bar must
      // show 7, not a locally counted 1.
      submitResults: [accepted(4, 7, 3)],
    });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    const outcome = await session.confirmCurrent();
    expect(outcome).toBe('accepted');
    expect(state.submitted).toEqual([{ item_id: 4, label: 4 % 3, reviewer: 'me' }]);
    expect(session.items.map((i) => i.item_id)).toEqual([1]);
    expect(session.progress?.reviews_used).toBe(7);
    expect(session.progress?.pending).toBe(3);
  });

  it('override sends the chosen label', async () => {
    const { api, state } = stubApi({
      queuePages: [page([queueItem(4, 0.9)], 0, 1)],
      submitResults: [accepted(4, 1, 0)],
    });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    await session.overrideCurrent(2);
    expect(state.submitted[0].label).toBe(2);
    expect(session.isComplete()).toBe(true);
    expect(session.progress?.stage).toBe('corrected');
  });

  it('ignores overrides outside the label space', async () => {
    const { api, state } = stubApi({ queuePages: [page([queueItem(4, 0.9)], 0, 1)] });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    expect(await session.overrideCurrent(3)).toBe('ignored');
    expect(await session.overrideCurrent(-1)).toBe('ignored');
    expect(state.submitted).toEqual([]);
  });

  it('ignores confirm when the machine label failed to parse', async () => {
    const card = { ...queueItem(4, 0.9), machine_label: null, machine_label_name: null };
    const { api, state } = stubApi({ queuePages: [page([card], 0, 1)] });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    expect(await session.confirmCurrent()).toBe('ignored');
    expect(state.submitted).toEqual([]);
  });

  it('refills from the server when the local buffer empties early', async () => {
    const firstPage = page([queueItem(4, 0.9)], 0, 3); // 2 more wait server-side
    const secondPage = page([queueItem(1, 0.7), queueItem(9, 0.5)], 1, 2);
    const { api, state } = stubApi({
      queuePages: [firstPage, secondPage],
      submitResults: [accepted(4, 1, 2)],
    });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    await session.confirmCurrent();
    expect(state.queueCalls).toBe(2);
    expect(session.items.map((i) => i.item_id)).toEqual([1, 9]);
    expect(session.progress?.pending).toBe(2);
  });
});

describe('failure handling', () => {
  it('reappears the card with a notice on conflict and refreshes from the server', async () => {
    const items = [queueItem(4, 0.9), queueItem(1, 0.7)];
    const { api, state } = stubApi({
      queuePages: [page(items, 0, 10)],
      submitResults: [new ConflictError('item 4 already has a review')],
      summaries: [summary(6, 4)],
    });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    const outcome = await session.submit(4, 1);
    expect(outcome).toBe('conflict');
    expect(session.items.map((i) => i.item_id)).toEqual([4, 1]); // card is back
    expect(session.conflicts.get(4)).toContain('already has a review');
    // progress came from the follow-up summary call, i.e. server truth
    expect(session.progress?.reviews_used).toBe(6);
    expect(session.progress?.pending).toBe(4);
    expect(state.submitted.length).toBe(1);
  });

  it('restores the card and shows the retry banner on transport failure', async () => {
    const items = [queueItem(4, 0.9), queueItem(1, 0.7)];
    const { api } = stubApi({
      queuePages: [page(items, 0, 10), page(items, 0, 10)],
      submitResults: [new Error('fetch failed: connection refused')],
    });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    const outcome = await session.submit(4, 0);
    expect(outcome).toBe('failed');
    expect(session.items.map((i) => i.item_id)).toEqual([4, 1]); // nothing lost
    expect(session.banner).toContain('connection refused');
    await session.retry();
    expect(session.banner).toBeNull();
    expect(session.items.length).toBe(2);
  });

  it('keeps validation errors out of the queue state', async () => {
    const items = [queueItem(4, 0.9)];
    const { api } = stubApi({
      queuePages: [page(items, 0, 10)],
      submitResults: [new ApiError(422, 'label out of range')],
    });
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    expect(await session.submit(4, 2)).toBe('failed');
    expect(session.items.length).toBe(1);
    expect(session.banner).toContain('label out of range');
  });

  it('treats a double-click as one request', async () => {
    let release: (value: ReviewAccepted) => void = () => undefined;
    const pendingSubmit = new Promise<ReviewAccepted>((resolve) => {
      release = resolve;
    });
    let submits = 0;
    const api = {
      getQueue: () => Promise.resolve(page([queueItem(4, 0.9)], 0, 1)),
      submitReview: () => {
        submits += 1;
        return pendingSubmit;
      },
      getRun: () => Promise.reject(new Error('unused')),
    } as unknown as ApiClient;
    const session = new ReviewSession(api, 'run-1', 'me');
    await session.load();
    const first = session.submit(4, 1);
    const second = session.submit(4, 1); // double-click while in flight
    expect(await second).toBe('ignored');
    release(accepted(4, 1, 0));
    expect(await first).toBe('accepted');
    expect(submits).toBe(1);
  });
});
