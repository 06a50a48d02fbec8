/** Wire types for the annotation service (schema "annotate/v1"). */

export type Label = 0 | 1;

export interface RoundStatus {
  schema: string;
  round: number;
  domain: string;
  budget: number;
  pending: number;
  labeled: number;
  phase: "labeling" | "complete";
}

export interface QueryRecord {
  sample_id: string;
  domain: string;
  round: number;
  features: number[];
  status: "pending" | "labeled";
  label: Label | null;
  annotator: string | null;
}

/** [f0, f1, label] rows of labeled source data, display context only. */
export type SourcePoint = [number, number, Label];

export type SubmitResult =
  | { kind: "ok"; label: Label; pending: number }
  | { kind: "duplicate"; storedLabel: Label }
  | { kind: "rejected"; message: string }
  | { kind: "offline" };
