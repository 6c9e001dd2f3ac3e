/** Page-lifetime session state.
 *
 * One session id is generated when the page loads and never changes:
 * every request carries it, so the backend accumulates the visitor's
 * submitted queries as ranking context. Toggling panes, retyping, and
 * failed requests all leave it untouched.
 */

import type { Suggestion, SuggestResponse } from "./api.js";

export const MAX_PANES = 3;
export const DEFAULT_K = 8;

export interface PaneState {
  ranker: string;
  /** Exactly the order the service responded with; never resorted. */
  suggestions: Suggestion[];
  /** Results shown are from an older request; grey them out. */
  stale: boolean;
}

function newSessionId(): string {
  const c = globalThis.crypto;
  if (c && typeof c.randomUUID === "function") return c.randomUUID();
  return `sess-${Date.now().toString(36)}-${Math.random().toString(36).slice(2, 10)}`;
}

export class SessionState {
  readonly sessionId: string;
  prefix = "";
  /** Insertion order is display order. */
  readonly panes = new Map<string, PaneState>();
  /** Newest first. */
  readonly history: string[] = [];
  /** One banner for the most recent failure; null when healthy. */
  error: string | null = null;

  constructor(
    readonly k: number = DEFAULT_K,
    sessionId: string = newSessionId(),
  ) {
    if (k < 1) throw new Error("k must be >= 1");
    this.sessionId = sessionId;
  }

  /** Replace the visible pane set, keeping surviving panes' results. */
  setPanes(rankers: string[]): void {
    const chosen = rankers.slice(0, MAX_PANES);
    for (const existing of [...this.panes.keys()]) {
      if (!chosen.includes(existing)) this.panes.delete(existing);
    }
    for (const ranker of chosen) {
      if (!this.panes.has(ranker)) {
        this.panes.set(ranker, { ranker, suggestions: [], stale: false });
      }
    }
  }

  applyResponse(ranker: string, response: SuggestResponse): void {
    const pane = this.panes.get(ranker);
    if (!pane) return;
    pane.suggestions = response.suggestions.slice(0, this.k);
    pane.stale = false;
  }

  /** A request for this pane failed; keep what is on screen but flag it. */
  markStale(ranker: string): void {
    const pane = this.panes.get(ranker);
    if (pane) pane.stale = true;
  }

  recordSubmission(query: string): void {
    this.history.unshift(query);
  }
}
