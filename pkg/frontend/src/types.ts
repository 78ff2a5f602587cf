// Row shapes exactly as the control API serves them. The dashboard never
// recomputes ranking or divergence; these are pass-through views.

export interface FailureRow {
  signature: string;
  count: number;
  explored: boolean;
  patch_counts: Record<string, { valid: number; invalid: number }>;
}

export type PatchState =
  | "candidate"
  | "valid"
  | "surviving"
  | "approved"
  | "invalid"
  | "regressive"
  | "rejected";

export interface PatchRow {
  id: string;
  model: string;
  strategy: string;
  state: PatchState;
  signature: string;
  failure_count: number;
  regression_success_count: number;
  diff: string;
}

export interface EventRow {
  seq?: number;
  kind: string;
  [key: string]: unknown;
}

export interface Toast {
  text: string;
  tone: "info" | "error";
}
