// Browser bootstrap: binds the pure state/render core to the document,
// long-polls the pending queue, polls metrics every 2 s, and turns clicks
// (or the Y/N keys) into exactly one resolution request per card.

import { ApiClient, ApiError } from './api.js';
import {
  applyMetrics,
  applyResolution,
  armResolution,
  clearNotice,
  failResolution,
  initialState,
  markOffline,
  setPending,
  type ConsoleState,
} from './state.js';
import { renderMetrics, renderNotice, renderQueue } from './render.js';

const LONG_POLL_S = 25;
const METRICS_POLL_MS = 2000;

export interface ConsoleHarness {
  state: () => ConsoleState;
  submit: (eventId: string, correct: boolean) => Promise<void>;
  refreshPendingOnce: (wait?: number) => Promise<void>;
  refreshMetricsOnce: () => Promise<void>;
  renderInto: (queueEl: Element, metricsEl: Element, noticeEl: Element) => void;
}

/** Wire the console core to an API client; the loops are started by run(). */
export function createConsole(api: ApiClient): ConsoleHarness {
  let state = initialState();
  let redraw: (() => void) | null = null;

  const paint = () => {
    if (redraw) redraw();
  };

  async function refreshPendingOnce(wait = 0): Promise<void> {
    try {
      state = setPending(state, await api.pending(wait));
    } catch {
      state = markOffline(state);
    }
    paint();
  }

  async function refreshMetricsOnce(): Promise<void> {
    try {
      state = applyMetrics(state, await api.metrics());
    } catch {
      state = markOffline(state);
    }
    paint();
  }

  async function submit(eventId: string, correct: boolean): Promise<void> {
    const armed = armResolution(state, eventId);
    if (armed === null) return; // unknown card or already in flight
    state = armed;
    paint();
    try {
      await api.resolve(eventId, correct);
      state = applyResolution(state, eventId);
    } catch (error) {
      if (error instanceof ApiError && (error.status === 409 || error.status === 410)) {
        // resolved elsewhere or expired: drop the card, tell the expert
        state = failResolution(state, eventId, `${error.code}: ${error.message}`, true);
      } else {
        state = failResolution(state, eventId, 'network failure; try again');
      }
    }
    paint();
  }

  function renderInto(queueEl: Element, metricsEl: Element, noticeEl: Element): void {
    redraw = () => {
      queueEl.innerHTML = renderQueue(state);
      metricsEl.innerHTML = renderMetrics(state);
      noticeEl.innerHTML = renderNotice(state);
      state = clearNotice(state);
    };
    redraw();
  }

  return {
    state: () => state,
    submit,
    refreshPendingOnce,
    refreshMetricsOnce,
    renderInto,
  };
}

/** Delegate Yes/No button clicks inside the queue to the harness. */
export function bindQueueClicks(queueEl: Element, harness: ConsoleHarness): void {
  queueEl.addEventListener('click', (event) => {
    const button = (event.target as Element).closest('button[data-action]');
    if (!button) return;
    const card = button.closest('[data-event-id]');
    if (!card) return;
    void harness.submit(
      card.getAttribute('data-event-id')!,
      button.getAttribute('data-action') === 'yes',
    );
  });
}

/** Y/N answer the oldest card: the expert works the queue front to back. */
export function bindKeyboard(doc: Document, harness: ConsoleHarness): void {
  doc.addEventListener('keydown', (event) => {
    const key = (event as KeyboardEvent).key.toLowerCase();
    if (key !== 'y' && key !== 'n') return;
    const first = harness.state().pending[0];
    if (first) void harness.submit(first.event_id, key === 'y');
  });
}

export function run(doc: Document, baseUrl: string): ConsoleHarness {
  const api = new ApiClient(baseUrl);
  const console_ = createConsole(api);
  const queueEl = doc.querySelector('#queue')!;
  const metricsEl = doc.querySelector('#metrics')!;
  const noticeEl = doc.querySelector('#notice')!;
  console_.renderInto(queueEl, metricsEl, noticeEl);
  bindQueueClicks(queueEl, console_);
  bindKeyboard(doc, console_);

  const pollPending = async () => {
    // long-poll loop; errors back off for a second
    for (;;) {
      await console_.refreshPendingOnce(LONG_POLL_S);
      if (!console_.state().connected) {
        await new Promise((resolve) => setTimeout(resolve, 1000));
      }
    }
  };
  void pollPending();
  setInterval(() => void console_.refreshMetricsOnce(), METRICS_POLL_MS);
  return console_;
}

declare global {
  interface Window {
    rltirConsole?: ConsoleHarness;
  }
}

if (typeof window !== 'undefined' && typeof document !== 'undefined'
    && document.querySelector('#queue')) {
  const params = new URLSearchParams(window.location.search);
  const base = params.get('server') ?? 'http://127.0.0.1:8080';
  window.rltirConsole = run(document, base);
}
