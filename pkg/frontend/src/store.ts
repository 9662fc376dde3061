/**
 * Review session state for one run.
 *
 * Holds the pending queue in server order plus the progress numbers, and
 * drives submissions.  Submits are optimistic: the card leaves the list
 * immediately, reappears with a notice on conflict, and is restored
 * untouched on transport failure so no reviewer work is ever lost.
 *
 * Thin-client rule: every number shown (budget, reviews used, pending) is
 * copied from a server response.  The session never increments counters or
 * derives labels locally.
 */

import { ApiClient, ConflictError } from './api.js';
import type { Progress, QueueItem } from './types.js';

export type SubmitOutcome = 'accepted' | 'conflict' | 'failed' | 'ignored';

export type SessionListener = () => void;

export class ReviewSession {
  items: QueueItem[] = [];
  progress: Progress | null = null;
  /** Human-readable failure shown in the retry banner; null when healthy. */
  banner: string | null = null;
  /** Conflict notices keyed by item id (card reappears with this text). */
  readonly conflicts = new Map<number, string>();

  private readonly inFlight = new Set<number>();
  private readonly listeners: SessionListener[] = [];

  constructor(
    private readonly api: ApiClient,
    readonly runId: string,
    readonly reviewer: string,
    private readonly pageSize = 20,
  ) {}

  subscribe(listener: SessionListener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) {
      listener();
    }
  }

  /** The card the keyboard shortcuts act on: head of the server-ordered queue. */
  current(): QueueItem | null {
    return this.items[0] ?? null;
  }

  /** Server says the budget is spent (or the run moved past reviewing). */
  isComplete(): boolean {
    return this.progress !== null && this.progress.pending === 0;
  }

  async load(): Promise<void> {
    try {
      const page = await this.api.getQueue(this.runId, 0, this.pageSize);
      this.items = page.items;
      this.progress = {
        stage: page.stage,
        budget: page.budget,
        reviews_used: page.reviews_used,
        pending: page.total_pending,
      };
      this.banner = null;
    } catch (error) {
      this.banner = error instanceof Error ? error.message : String(error);
    }
    this.notify();
  }

  /** Clear the failure banner and reload from the server. */
  retry(): Promise<void> {
    this.banner = null;
    return this.load();
  }

  /** One keystroke: accept the machine label as the human label. */
  confirmCurrent(): Promise<SubmitOutcome> {
    const card = this.current();
    if (card === null || card.machine_label === null) {
      return Promise.resolve('ignored');
    }
    return this.submit(card.item_id, card.machine_label);
  }

  /** Override the current card with a different label from its label space. */
  overrideCurrent(label: number): Promise<SubmitOutcome> {
    const card = this.current();
    if (card === null || label < 0 || label >= card.label_space.length) {
      return Promise.resolve('ignored');
    }
    return this.submit(card.item_id, label);
  }

  async submit(itemId: number, label: number): Promise<SubmitOutcome> {
    if (this.inFlight.has(itemId)) {
      return 'ignored'; // double-click: the first request is still running
    }
    const index = this.items.findIndex((item) => item.item_id === itemId);
    if (index < 0) {
      return 'ignored';
    }
    const card = this.items[index];
    this.inFlight.add(itemId);
    this.items.splice(index, 1); // optimistic removal
    this.conflicts.delete(itemId);
    this.notify();
    try {
      const accepted = await this.api.submitReview(this.runId, {
        item_id: itemId,
        label,
        reviewer: this.reviewer,
      });
      this.progress = {
        stage: accepted.stage,
        budget: this.progress?.budget ?? 0,
        reviews_used: accepted.reviews_used,
        pending: accepted.pending,
      };
      this.banner = null;
      if (this.items.length === 0 && accepted.pending > 0) {
        await this.refill();
      }
      return 'accepted';
    } catch (error) {
      if (error instanceof ConflictError) {
        this.items.splice(Math.min(index, this.items.length), 0, card);
        this.conflicts.set(itemId, error.detail);
        await this.refreshProgress();
        return 'conflict';
      }
      this.items.splice(Math.min(index, this.items.length), 0, card);
      this.banner = error instanceof Error ? error.message : String(error);
      return 'failed';
    } finally {
      this.inFlight.delete(itemId);
      this.notify();
    }
  }

  /** Fetch the head of the queue again once the local buffer runs dry. */
  private async refill(): Promise<void> {
    const page = await this.api.getQueue(this.runId, 0, this.pageSize);
    this.items = page.items;
    this.progress = {
      stage: page.stage,
      budget: page.budget,
      reviews_used: page.reviews_used,
      pending: page.total_pending,
    };
  }

  /** Re-read the run summary so progress reflects server truth after a conflict. */
  private async refreshProgress(): Promise<void> {
    try {
      const summary = await this.api.getRun(this.runId);
      this.progress = {
        stage: summary.stage,
        budget: summary.budget ?? this.progress?.budget ?? 0,
        reviews_used: summary.reviews_used,
        pending: summary.pending,
      };
    } catch (error) {
      this.banner = error instanceof Error ? error.message : String(error);
    }
  }
}
