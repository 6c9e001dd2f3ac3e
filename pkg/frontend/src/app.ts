/** Controller: owns the SessionState, paces requests, and re-renders
 * after every change. The browser entry point hands it real DOM nodes
 * and a real fetch; tests hand it happy-dom nodes and a scripted fetch.
 */

import { ApiClient } from "./api.js";
import { DEBOUNCE_MS, LatestWins, debounce } from "./debounce.js";
import { render } from "./render.js";
import { MAX_PANES, SessionState } from "./state.js";

export interface AppElements {
  input: HTMLInputElement;
  banner: HTMLElement;
  panes: HTMLElement;
  history: HTMLElement;
  /** Container the controller fills with one checkbox per ranker. */
  toggles: HTMLElement;
}

export interface AppOptions {
  k?: number;
  debounceMs?: number;
  /** Override the generated id; tests use this for determinism. */
  sessionId?: string;
}

export interface AppHandle {
  state: SessionState;
  /** Resolves once rankers are loaded and the first fetch has settled. */
  ready: Promise<void>;
  blindRanker: string | null;
  submit(query: string): Promise<void>;
  setPanes(rankers: string[]): Promise<void>;
  refresh(): Promise<void>;
}

/** Pane order: context-aware models first, their blind ablation beside
 * them, popularity baselines last. Capped at MAX_PANES. */
export function choosePanes(available: string[]): string[] {
  const blind: string[] = [];
  const baselines: string[] = [];
  const aware: string[] = [];
  for (const ranker of available) {
    if (ranker.includes("blind")) blind.push(ranker);
    else if (ranker === "mpc" || ranker === "mpgc") baselines.push(ranker);
    else aware.push(ranker);
  }
  return [...aware, ...blind, ...baselines].slice(0, MAX_PANES);
}

export function createApp(
  elements: AppElements,
  client: ApiClient,
  options: AppOptions = {},
): AppHandle {
  const state = options.sessionId
    ? new SessionState(options.k, options.sessionId)
    : new SessionState(options.k);
  const guards = new Map<string, LatestWins>();
  let available: string[] = [];

  const handle: AppHandle = {
    state,
    blindRanker: null,
    ready: Promise.resolve(),
    submit,
    setPanes,
    refresh: refreshAll,
  };

  function repaint(): void {
    render(
      { banner: elements.banner, panes: elements.panes, history: elements.history },
      state,
      { blindRanker: handle.blindRanker, onPick: (query) => void submit(query) },
    );
  }

  function syncToggles(): void {
    const doc = elements.toggles.ownerDocument;
    elements.toggles.replaceChildren();
    for (const ranker of available) {
      const label = doc.createElement("label");
      const box = doc.createElement("input");
      box.type = "checkbox";
      box.value = ranker;
      box.checked = state.panes.has(ranker);
      box.addEventListener("change", () => {
        const chosen = available.filter((r) =>
          r === ranker ? box.checked : state.panes.has(r),
        );
        void setPanes(choosePanes(chosen));
      });
      label.appendChild(box);
      label.appendChild(doc.createTextNode(ranker));
      elements.toggles.appendChild(label);
    }
  }

  async function refreshPane(ranker: string): Promise<void> {
    let guard = guards.get(ranker);
    if (!guard) {
      guard = new LatestWins();
      guards.set(ranker, guard);
    }
    const ticket = guard.issue();
    try {
      const response = await client.suggest(
        state.prefix,
        state.sessionId,
        state.k,
        ranker,
      );
      if (!guard.isCurrent(ticket)) return;
      state.applyResponse(ranker, response);
    } catch (error) {
      if (!guard.isCurrent(ticket)) return;
      state.markStale(ranker);
      state.error = error instanceof Error ? error.message : String(error);
    }
    repaint();
  }

  async function refreshAll(): Promise<void> {
    state.error = null;
    await Promise.all([...state.panes.keys()].map(refreshPane));
    repaint();
  }

  async function submit(query: string): Promise<void> {
    const trimmed = query.trim();
    if (!trimmed) return;
    try {
      await client.submit(state.sessionId, trimmed);
    } catch (error) {
      // No retry and no offline queue: the failure is surfaced and the
      // submission is gone.
      state.error = error instanceof Error ? error.message : String(error);
      repaint();
      return;
    }
    state.recordSubmission(trimmed);
    await refreshAll();
  }

  async function setPanes(rankers: string[]): Promise<void> {
    state.setPanes(rankers);
    syncToggles();
    await refreshAll();
  }

  const debouncedRefresh = debounce(
    () => void refreshAll(),
    options.debounceMs ?? DEBOUNCE_MS,
  );
  elements.input.addEventListener("input", () => {
    state.prefix = elements.input.value;
    debouncedRefresh();
  });
  elements.input.addEventListener("keydown", (event: KeyboardEvent) => {
    if (event.key !== "Enter") return;
    event.preventDefault();
    debouncedRefresh.cancel();
    void submit(elements.input.value);
  });

  handle.ready = (async () => {
    try {
      available = await client.rankers();
    } catch (error) {
      state.error = error instanceof Error ? error.message : String(error);
      repaint();
      return;
    }
    const blind = available.find((r) => r.includes("blind"));
    handle.blindRanker = blind ?? null;
    state.setPanes(choosePanes(available));
    syncToggles();
    await refreshAll();
  })();

  return handle;
}
