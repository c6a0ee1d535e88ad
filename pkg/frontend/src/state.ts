// Console state and its transitions. Pure functions over a plain object so
// every behavior is testable without a DOM or a server.

import type { MetricsSnapshot, PendingFeedback } from './types.js';

export interface SeriesPoint {
  n_instances: number;
  auc: number | null;
  fnr: number;
  fpr: number;
  resolved_feedback: number;
}

export interface ConsoleState {
  pending: PendingFeedback[];
  /** event_ids with a resolution request in flight (buttons disabled). */
  inFlight: Set<string>;
  metrics: MetricsSnapshot | null;
  series: SeriesPoint[];
  connected: boolean;
  notice: string | null;
}

export function initialState(): ConsoleState {
  return {
    pending: [],
    inFlight: new Set(),
    metrics: null,
    series: [],
    connected: false,
    notice: null,
  };
}

/** Server truth wins; order arrives FIFO and is preserved verbatim.
 *  Items resolved elsewhere simply stop appearing. In-flight markers for
 *  vanished items are dropped. */
export function setPending(
  state: ConsoleState,
  items: PendingFeedback[],
): ConsoleState {
  const alive = new Set(items.map((item) => item.event_id));
  const inFlight = new Set(
    [...state.inFlight].filter((eventId) => alive.has(eventId)),
  );
  return { ...state, pending: items, inFlight, connected: true };
}

/** A click arms exactly one request; a second click on the same card is a
 *  no-op while the first is in flight. Returns null when armed already. */
export function armResolution(
  state: ConsoleState,
  eventId: string,
): ConsoleState | null {
  if (state.inFlight.has(eventId)) return null;
  if (!state.pending.some((item) => item.event_id === eventId)) return null;
  const inFlight = new Set(state.inFlight);
  inFlight.add(eventId);
  return { ...state, inFlight };
}

/** Optimistic removal once the server accepted the resolution. */
export function applyResolution(
  state: ConsoleState,
  eventId: string,
): ConsoleState {
  const inFlight = new Set(state.inFlight);
  inFlight.delete(eventId);
  return {
    ...state,
    pending: state.pending.filter((item) => item.event_id !== eventId),
    inFlight,
  };
}

/** 409/410/network failure: the card stays, a notice surfaces. */
export function failResolution(
  state: ConsoleState,
  eventId: string,
  notice: string,
  removeCard = false,
): ConsoleState {
  const inFlight = new Set(state.inFlight);
  inFlight.delete(eventId);
  return {
    ...state,
    pending: removeCard
      ? state.pending.filter((item) => item.event_id !== eventId)
      : state.pending,
    inFlight,
    notice,
  };
}

/** Metrics snapshots append to the rolling series; the series never
 *  rewrites history. */
export function applyMetrics(
  state: ConsoleState,
  snapshot: MetricsSnapshot,
): ConsoleState {
  const point: SeriesPoint = {
    n_instances: snapshot.n_instances,
    auc: snapshot.aggregate.auc,
    fnr: snapshot.aggregate.fnr,
    fpr: snapshot.aggregate.fpr,
    resolved_feedback: snapshot.resolved_feedback,
  };
  return {
    ...state,
    metrics: snapshot,
    series: [...state.series, point],
    connected: true,
  };
}

export function markOffline(state: ConsoleState): ConsoleState {
  // last snapshot retained; the UI shows a stale marker
  return { ...state, connected: false };
}

export function clearNotice(state: ConsoleState): ConsoleState {
  return { ...state, notice: null };
}
