/** DOM output. Everything on screen is rebuilt from SessionState on each
 * pass; no incremental patching, the lists are tiny.
 *
 * Suggestions are laid out in exactly the order the service returned
 * them. The one piece of derived presentation is the movement marker:
 * when a context-blind pane is visible, every other pane's rows are
 * compared against it rank by rank, which is what makes the context
 * effect visible to a human.
 */

import type { SessionState, PaneState } from "./state.js";

export interface RenderMounts {
  banner: HTMLElement;
  panes: HTMLElement;
  history: HTMLElement;
}

export interface RenderOptions {
  /** Ranker id whose pane anchors movement markers; null disables them. */
  blindRanker: string | null;
  onPick?: (query: string) => void;
}

type Movement = "up" | "down" | "only" | null;

function movementAgainst(
  reference: PaneState | undefined,
  query: string,
  rank: number,
): Movement {
  if (!reference || reference.suggestions.length === 0) return null;
  const refRank = reference.suggestions.findIndex((s) => s.query === query);
  if (refRank === -1) return "only";
  if (refRank > rank) return "up";
  if (refRank < rank) return "down";
  return null;
}

const MARKERS: Record<Exclude<Movement, null>, string> = {
  up: "↑",
  down: "↓",
  only: "+",
};

function renderPane(
  doc: Document,
  pane: PaneState,
  reference: PaneState | undefined,
  compare: boolean,
  onPick?: (query: string) => void,
): HTMLElement {
  const section = doc.createElement("section");
  section.className = pane.stale ? "pane stale" : "pane";
  section.dataset.ranker = pane.ranker;

  const heading = doc.createElement("h2");
  heading.textContent = pane.ranker;
  section.appendChild(heading);

  const list = doc.createElement("ol");
  list.className = "suggestions";
  for (const [rank, suggestion] of pane.suggestions.entries()) {
    const item = doc.createElement("li");
    item.className = "suggestion";
    item.dataset.query = suggestion.query;

    const movement = compare
      ? movementAgainst(reference, suggestion.query, rank)
      : null;
    if (movement) {
      item.classList.add(`moved-${movement}`);
      const marker = doc.createElement("span");
      marker.className = "marker";
      marker.textContent = MARKERS[movement];
      item.appendChild(marker);
    }

    const text = doc.createElement("span");
    text.className = "query";
    text.textContent = suggestion.query;
    item.appendChild(text);

    const score = doc.createElement("span");
    score.className = "score";
    score.textContent = suggestion.score.toFixed(3);
    item.appendChild(score);

    if (onPick) {
      item.addEventListener("click", () => onPick(suggestion.query));
    }
    list.appendChild(item);
  }
  section.appendChild(list);
  return section;
}

export function render(
  mounts: RenderMounts,
  state: SessionState,
  options: RenderOptions,
): void {
  const doc = mounts.panes.ownerDocument;

  mounts.banner.textContent = state.error ?? "";
  mounts.banner.hidden = state.error === null;

  const reference = options.blindRanker
    ? state.panes.get(options.blindRanker)
    : undefined;
  mounts.panes.replaceChildren();
  for (const pane of state.panes.values()) {
    const compare = reference !== undefined && pane.ranker !== options.blindRanker;
    mounts.panes.appendChild(
      renderPane(doc, pane, reference, compare, options.onPick),
    );
  }

  mounts.history.replaceChildren();
  for (const query of state.history) {
    const item = doc.createElement("li");
    item.textContent = query;
    mounts.history.appendChild(item);
  }
}
