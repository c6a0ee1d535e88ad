// HTML renderers: state in, markup out. The bootstrap wires them to the
// document; tests assert on the strings directly.

import type { ConsoleState } from './state.js';
import type { PendingFeedback } from './types.js';

function esc(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

function age(requestedAt: string, now: Date): string {
  const seconds = Math.max(0, (now.getTime() - new Date(requestedAt).getTime()) / 1000);
  return seconds < 60 ? `${Math.round(seconds)}s` : `${Math.round(seconds / 60)}m`;
}

export function renderCard(
  item: PendingFeedback,
  inFlight: boolean,
  now: Date = new Date(),
): string {
  const disabled = inFlight ? ' disabled' : '';
  const summary = item.feature_summary
    .map((v) => v.toFixed(2))
    .join(', ');
  return `
<article class="card" data-event-id="${esc(item.event_id)}">
  <header>
    <span class="user">${esc(item.claimed_user)}</span>
    <span class="verdict ${item.verdict_before}">${item.verdict_before}</span>
    <span class="age">${age(item.requested_at, now)} ago</span>
  </header>
  <dl>
    <dt>score y</dt><dd>${item.y.toFixed(3)}</dd>
    <dt>uncertainty U</dt><dd>${item.U.toFixed(3)}</dd>
    <dt>features[0..${item.feature_summary.length - 1}] of ${item.dimension}</dt>
    <dd class="features">${summary}</dd>
  </dl>
  <p class="question">Was this verdict correct?</p>
  <div class="buttons">
    <button class="yes" data-action="yes"${disabled}>Yes</button>
    <button class="no" data-action="no"${disabled}>No</button>
  </div>
</article>`;
}

export function renderQueue(state: ConsoleState, now: Date = new Date()): string {
  if (!state.connected) {
    return '<p class="offline-banner">Server unreachable; queue frozen.</p>';
  }
  if (state.pending.length === 0) {
    return '<p class="empty">No pending reviews.</p>';
  }
  return state.pending
    .map((item) => renderCard(item, state.inFlight.has(item.event_id), now))
    .join('\n');
}

export function renderMetrics(state: ConsoleState): string {
  const stale = state.connected ? '' : ' <span class="stale">(stale)</span>';
  const m = state.metrics;
  if (!m) return `<p class="empty">No metrics yet.${stale}</p>`;
  const auc = m.aggregate.auc === null ? 'n/a' : m.aggregate.auc.toFixed(4);
  const cells = [
    ['instances', String(m.n_instances)],
    ['AUC', auc],
    ['FNR', m.aggregate.fnr.toFixed(4)],
    ['FPR', m.aggregate.fpr.toFixed(4)],
    ['feedback answered', String(m.resolved_feedback)],
    ['pending', String(m.pending)],
  ];
  const cards = cells
    .map(
      ([label, value]) =>
        `<div class="metric"><span class="value">${value}</span>` +
        `<span class="label">${label}</span></div>`,
    )
    .join('');
  return `<div class="metric-cards">${cards}</div>${stale}${renderSeries(state)}`;
}

/** Inline SVG polylines of the rolling AUC/FNR/FPR and feedback counts. */
export function renderSeries(state: ConsoleState): string {
  if (state.series.length < 2) return '';
  const w = 360;
  const h = 80;
  const n = state.series.length;
  const x = (i: number) => ((i / (n - 1)) * (w - 10) + 5).toFixed(1);
  const line = (pick: (i: number) => number | null, top: number): string => {
    const points: string[] = [];
    for (let i = 0; i < n; i += 1) {
      const v = pick(i);
      if (v === null) continue;
      const y = h - 5 - Math.min(1, Math.max(0, v / top)) * (h - 10);
      points.push(`${x(i)},${y.toFixed(1)}`);
    }
    return points.join(' ');
  };
  const maxFeedback = Math.max(
    1,
    ...state.series.map((p) => p.resolved_feedback),
  );
  return `
<svg class="series" viewBox="0 0 ${w} ${h}" role="img" aria-label="metric series">
  <polyline class="auc" fill="none" points="${line((i) => state.series[i].auc, 1)}"/>
  <polyline class="fnr" fill="none" points="${line((i) => state.series[i].fnr, 1)}"/>
  <polyline class="fpr" fill="none" points="${line((i) => state.series[i].fpr, 1)}"/>
  <polyline class="feedback" fill="none"
    points="${line((i) => state.series[i].resolved_feedback, maxFeedback)}"/>
</svg>`;
}

export function renderNotice(state: ConsoleState): string {
  return state.notice ? `<p class="notice">${esc(state.notice)}</p>` : '';
}
