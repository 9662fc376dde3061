/**
 * Browser bootstrap: wires the API client, the session store, and the
 * renderers into the page, and binds the keyboard shortcuts.
 *
 * Shortcuts: `y` or Enter confirms the machine label on the top card,
 * digits 0-9 override with that label index, `r` retries after a failure.
 */

import { ApiClient } from './api.js';
import { ReviewSession } from './store.js';
import {
  renderBanner,
  renderCard,
  renderCompletion,
  renderProgress,
  renderRunList,
} from './view.js';

const api = new ApiClient(window.location.origin);
let session: ReviewSession | null = null;

function appRoot(): HTMLElement {
  const root = document.getElementById('app');
  if (root === null) {
    throw new Error('missing #app container');
  }
  return root;
}

function render(): void {
  if (session === null) {
    return;
  }
  const root = appRoot();
  const parts: string[] = [renderProgress(session.progress)];
  if (session.banner !== null) {
    parts.push(renderBanner(session.banner));
  }
  if (session.isComplete()) {
    parts.push(renderCompletion(session.runId, api.exportUrl(session.runId)));
  } else {
    for (const item of session.items) {
      parts.push(
        renderCard(
          item,
          api.contentUrl(item.item_id, session.runId),
          session.conflicts.get(item.item_id) ?? null,
        ),
      );
    }
  }
  root.innerHTML = parts.join('\n');
}

function bindClicks(): void {
  appRoot().addEventListener('click', (event) => {
    const target = event.target instanceof Element ? event.target.closest('button') : null;
    if (target === null || session === null) {
      return;
    }
    if (target.classList.contains('retry-btn')) {
      void session.retry();
    } else if (target.classList.contains('confirm-btn')) {
      void session.confirmCurrent();
    } else if (target.classList.contains('label-btn')) {
      const itemId = Number(target.getAttribute('data-item'));
      const label = Number(target.getAttribute('data-label'));
      void session.submit(itemId, label);
    } else if (target.classList.contains('run-btn')) {
      const runId = target.getAttribute('data-run');
      if (runId !== null) {
        void startSession(runId);
      }
    }
  });
}

function bindKeys(): void {
  document.addEventListener('keydown', (event) => {
    if (session === null || event.ctrlKey || event.metaKey || event.altKey) {
      return;
    }
    if (event.key === 'y' || event.key === 'Enter') {
      event.preventDefault();
      void session.confirmCurrent();
    } else if (event.key === 'r' && session.banner !== null) {
      event.preventDefault();
      void session.retry();
    } else if (/^[0-9]$/.test(event.key)) {
      event.preventDefault();
      void session.overrideCurrent(Number(event.key));
    }
  });
}

async function startSession(runId: string): Promise<void> {
  session = new ReviewSession(api, runId, reviewerName());
  session.subscribe(render);
  await session.load();
}

function reviewerName(): string {
  const stored = window.localStorage.getItem('labelvet-reviewer');
  if (stored !== null && stored !== '') {
    return stored;
  }
  const name = window.prompt('Reviewer name?', 'reviewer') || 'reviewer';
  window.localStorage.setItem('labelvet-reviewer', name);
  return name;
}

async function boot(): Promise<void> {
  bindClicks();
  bindKeys();
  const runs = await api.listRuns();
  if (runs.length === 1) {
    await startSession(runs[0].run_id);
  } else {
    appRoot().innerHTML = renderRunList(runs);
  }
}

void boot();
