/**
 * HTML renderers for the console.
 *
 * Every function maps server payloads to markup strings; none of them
 * mutates session state, so they are unit-testable without a browser.
 * All dynamic text is escaped before interpolation.
 */

import type { Progress, QueueItem, RunSummary } from './types.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

/** Display form of a server-sent error estimate, e.g. 0.913 -> "91.3%". */
export function formatPercent(value: number | null): string {
  if (value === null) {
    return 'n/a';
  }
  return `${(value * 100).toFixed(1)}%`;
}

function renderContent(item: QueueItem, contentUrl: string): string {
  const content = item.content;
  switch (content.kind) {
    case 'text':
      return `<p class="content-text">${escapeHtml(content.text ?? '')}</p>`;
    case 'image':
      return `<img class="content-image" src="${escapeHtml(contentUrl)}" alt="item ${item.item_id}">`;
    case 'vqa':
      return (
        `<img class="content-image" src="${escapeHtml(contentUrl)}" alt="item ${item.item_id}">` +
        `<p class="content-question">${escapeHtml(content.question ?? '')}</p>`
      );
    default:
      return `<pre class="content-raw">${escapeHtml(JSON.stringify(content))}</pre>`;
  }
}

/**
 * One queue card: content, the machine label under suspicion, the critic's
 * estimate and reasoning, and one button per label-space choice.
 */
export function renderCard(
  item: QueueItem,
  contentUrl: string,
  conflictNotice: string | null,
): string {
  const labelButtons = item.label_space
    .map((name, index) => {
      const isMachine = index === item.machine_label;
      const cls = isMachine ? 'label-btn machine' : 'label-btn';
      const title = isMachine ? ' title="machine label"' : '';
      return (
        `<button class="${cls}" data-item="${item.item_id}" data-label="${index}"${title}>` +
        `<kbd>${index}</kbd> ${escapeHtml(name)}</button>`
      );
    })
    .join('');
  const conflict = conflictNotice
    ? `<div class="conflict-notice">${escapeHtml(conflictNotice)}</div>`
    : '';
  const reasoning = item.critic_reasoning
    ? `<details class="reasoning"><summary>critic reasoning</summary>` +
      `<p>${escapeHtml(item.critic_reasoning)}</p></details>`
    : '';
  const machineName =
    item.machine_label_name === null ? '(unparsed)' : escapeHtml(item.machine_label_name);
  return `
<article class="card" data-item="${item.item_id}">
  ${conflict}
  <header class="card-header">
    <span class="item-id">#${item.item_id}</span>
    <span class="estimate">error ${formatPercent(item.error_estimate)}</span>
  </header>
  ${renderContent(item, contentUrl)}
  <p class="machine-label">machine label: <strong>${machineName}</strong></p>
  ${reasoning}
  <div class="actions">
    <button class="confirm-btn" data-item="${item.item_id}"><kbd>y</kbd> confirm machine label</button>
    ${labelButtons}
  </div>
</article>`;
}

/** Progress bar straight from server numbers: used / budget, pending count. */
export function renderProgress(progress: Progress | null): string {
  if (progress === null) {
    return '<div class="progress">loading…</div>';
  }
  const used = progress.reviews_used;
  const budget = progress.budget;
  const width = budget > 0 ? Math.round((used / budget) * 100) : 100;
  return `
<div class="progress">
  <div class="progress-bar"><div class="progress-fill" style="width: ${width}%"></div></div>
  <span class="progress-text">${used} / ${budget} reviews used — ${progress.pending} pending — stage ${escapeHtml(progress.stage)}</span>
</div>`;
}

/** Failure banner with a retry button; shown instead of dropping state. */
export function renderBanner(message: string): string {
  return `
<div class="banner" role="alert">
  <span>${escapeHtml(message)}</span>
  <button class="retry-btn"><kbd>r</kbd> retry</button>
</div>`;
}

/** Shown once the server reports an empty queue. */
export function renderCompletion(runId: string, exportUrl: string): string {
  return `
<div class="completion">
  <h2>Queue complete</h2>
  <p>Every budgeted item of run <code>${escapeHtml(runId)}</code> has been reviewed.</p>
  <a class="export-link" href="${escapeHtml(exportUrl)}">download export bundle</a>
</div>`;
}

/** Run picker shown when the service hosts more than one run. */
export function renderRunList(runs: RunSummary[]): string {
  const rows = runs
    .map(
      (run) =>
        `<li><button class="run-btn" data-run="${escapeHtml(run.run_id)}">` +
        `<code>${escapeHtml(run.run_id)}</code> — ${escapeHtml(run.stage)}, ` +
        `${run.pending} pending</button></li>`,
    )
    .join('');
  return `<ul class="run-list">${rows}</ul>`;
}
