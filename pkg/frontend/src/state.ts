/**
 * Wallet view state.
 *
 * Holds only what the documented API returns: masked card summaries, QR
 * payload strings, pending approval queries, and the last displayable
 * outcome. Never a full card number, never a PIN after submission.
 */

import type { CardSummary, PendingApproval } from "./api.js";

export type AuthState = { kind: "logged_out" } | { kind: "logged_in"; username: string };

export interface WalletViewState {
  auth: AuthState;
  cards: CardSummary[];
  pending: PendingApproval[];
  lastOutcome: string | null;
  notice: string | null;
}

export function initialState(): WalletViewState {
  return { auth: { kind: "logged_out" }, cards: [], pending: [], lastOutcome: null, notice: null };
}

/** Pending items that vanished without a local resolution timed out server-side. */
export function droppedPending(previous: PendingApproval[], current: PendingApproval[], resolved: Set<string>): PendingApproval[] {
  const live = new Set(current.map((p) => p.session_id));
  return previous.filter((p) => !live.has(p.session_id) && !resolved.has(p.session_id));
}
