// Wire types of the /v1 API, mirrored field for field.

export interface PendingFeedback {
  event_id: string;
  claimed_user: string;
  y: number;
  U: number;
  verdict_before: 'genuine' | 'impostor';
  feature_summary: number[];
  dimension: number;
  requested_at: string;
  expires_at: string;
}

export interface AggregateMetrics {
  tp: number;
  fp: number;
  tn: number;
  fn: number;
  precision: number;
  recall: number;
  f1: number;
  fnr: number;
  fpr: number;
  auc: number | null;
}

export interface MetricsSnapshot {
  schema: string;
  n_instances: number;
  resolved_feedback: number;
  pending: number;
  feedback_proportion: number;
  aggregate: AggregateMetrics;
}

export interface EnrolledUserInfo {
  user_id: string;
  threshold_y: number;
}

export interface ResolveResponse {
  accepted: boolean;
  event_id: string;
  f: number;
}

export interface OutcomeRecord {
  instance_id: string;
  claimed_user: string;
  y_before: number;
  verdict_before: string;
  verdict_final: string;
  y_after: number | null;
  feedback: { f: number | null; source: string | null } | null;
  actions_taken: [number, number][];
}
