/** Client-side round state. The server is authoritative: every displayed
 * label traces to a server response, and a 409 shows the server's stored
 * label instead of the local attempt. */

import type { Label, QueryRecord, RoundStatus, SubmitResult } from "./types.js";

export interface UiQueryView extends QueryRecord {
  submitting: boolean;
  error: string | null;
}

export interface UiState {
  round: RoundStatus | null;
  cards: UiQueryView[];
  connected: boolean;
  /** set when the current round finished: training has resumed server-side */
  complete: boolean;
}

export function emptyState(): UiState {
  return { round: null, cards: [], connected: true, complete: false };
}

/** Replace local state with the server snapshot; local flags survive only
 * for cards the server still reports as pending. */
export function applyServerSnapshot(
  state: UiState,
  status: RoundStatus | null,
  queries: QueryRecord[] | null,
): UiState {
  if (status === null || queries === null) {
    return { ...state, round: null, cards: [], connected: true, complete: false };
  }
  const previous = new Map(state.cards.map((c) => [c.sample_id, c]));
  const cards = queries.map((q) => {
    const old = previous.get(q.sample_id);
    return {
      ...q,
      submitting: q.status === "pending" ? (old?.submitting ?? false) : false,
      error: q.status === "pending" ? (old?.error ?? null) : null,
    };
  });
  return {
    round: status,
    cards,
    connected: true,
    complete: status.phase === "complete",
  };
}

export function markDisconnected(state: UiState): UiState {
  return { ...state, connected: false };
}

/** Guard for submitting: returns null when the card cannot accept a label
 * (unknown, already labeled, or a submit is in flight: double-click safe). */
export function beginSubmit(state: UiState, sampleId: string): UiState | null {
  const card = state.cards.find((c) => c.sample_id === sampleId);
  if (!card || card.status !== "pending" || card.submitting) return null;
  return {
    ...state,
    cards: state.cards.map((c) =>
      c.sample_id === sampleId ? { ...c, submitting: true, error: null } : c,
    ),
  };
}

export function applySubmitResult(
  state: UiState,
  sampleId: string,
  attempted: Label,
  result: SubmitResult,
): UiState {
  const cards = state.cards.map((c): UiQueryView => {
    if (c.sample_id !== sampleId) return c;
    switch (result.kind) {
      case "ok":
        return { ...c, status: "labeled", label: result.label, submitting: false, error: null };
      case "duplicate":
        // server wins: show what it stored, never the local attempt
        return { ...c, status: "labeled", label: result.storedLabel, submitting: false,
                 error: "already labeled on the server" };
      case "rejected":
        return { ...c, submitting: false, error: result.message };
      case "offline":
        return { ...c, submitting: false, error: "offline: label not sent" };
    }
  });
  const labeled = cards.filter((c) => c.status === "labeled").length;
  const round = state.round
    ? {
        ...state.round,
        labeled,
        pending: state.round.budget - labeled,
        phase: (state.round.budget - labeled === 0 ? "complete" : "labeling") as
          RoundStatus["phase"],
      }
    : null;
  return {
    round,
    cards,
    connected: result.kind !== "offline",
    complete: round?.phase === "complete",
  };
}

export function progress(state: UiState): { pending: number; labeled: number; budget: number } {
  if (!state.round) return { pending: 0, labeled: 0, budget: 0 };
  return {
    pending: state.round.pending,
    labeled: state.round.labeled,
    budget: state.round.budget,
  };
}
