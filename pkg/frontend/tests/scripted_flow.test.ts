/** Replays recorded service traffic through the full page wiring.
 *
 * The fixture under tests/fixtures was captured from the real backend
 * trained on the pinned synthetic corpus: suggest responses for one
 * prefix before and after submitting one query. The stub below serves
 * those exact payloads, flipping from "before" to "after" the moment the
 * page POSTs the submission, so this test pins the end-to-end promise:
 * submitting reorders the context-aware pane exactly as recorded while
 * the context-blind pane does not move.
 */

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, type FetchLike, type SuggestResponse } from "../src/api.js";
import { createApp, type AppElements, type AppHandle } from "../src/app.js";
import rawFixture from "./fixtures/scripted_flow.json";

interface SuggestStep {
  op: "suggest";
  stage: "before_submit" | "after_submit";
  ranker: string;
  request: { prefix: string; session_id: string; k: number; ranker: string };
  response: SuggestResponse;
}

interface SubmitStep {
  op: "submit";
  request: { session_id: string; query: string };
}

interface Fixture {
  meta: {
    session_id: string;
    prefix: string;
    submission: string;
    k: number;
    aware_ranker: string;
    blind_ranker: string;
    panes: string[];
    rankers_response: { rankers: string[] };
  };
  steps: Array<SuggestStep | SubmitStep>;
}

const fixture = rawFixture as Fixture;

function recordedOrders(): Record<string, Record<string, string[]>> {
  const orders: Record<string, Record<string, string[]>> = {
    before_submit: {},
    after_submit: {},
  };
  for (const step of fixture.steps) {
    if (step.op !== "suggest") continue;
    orders[step.stage]![step.ranker] = step.response.suggestions.map(
      (s) => s.query,
    );
  }
  return orders;
}

/** In-memory stand-in for the recorded backend. */
function replayBackend() {
  const responses = new Map<string, SuggestResponse>();
  for (const step of fixture.steps) {
    if (step.op === "suggest") {
      responses.set(`${step.stage}:${step.ranker}`, step.response);
    }
  }
  let submitted = false;
  const sessionIds = new Set<string>();
  const submissions: string[] = [];

  const fetchFn: FetchLike = async (input, init) => {
    const url = new URL(input, "http://replay");
    if (url.pathname === "/rankers") {
      return new Response(JSON.stringify(fixture.meta.rankers_response), {
        status: 200,
        headers: { "Content-Type": "application/json" },
      });
    }
    if (url.pathname === "/submit") {
      const body = JSON.parse(init?.body as string) as {
        session_id: string;
        query: string;
      };
      sessionIds.add(body.session_id);
      submissions.push(body.query);
      submitted = true;
      return new Response(null, { status: 204 });
    }
    if (url.pathname === "/suggest") {
      sessionIds.add(url.searchParams.get("session_id") ?? "");
      const ranker = url.searchParams.get("ranker") ?? "";
      const prefix = url.searchParams.get("prefix") ?? "";
      const stage = submitted ? "after_submit" : "before_submit";
      const recorded =
        prefix === fixture.meta.prefix ? responses.get(`${stage}:${ranker}`) : undefined;
      const payload: SuggestResponse = recorded ?? {
        suggestions: [],
        ranker_id: ranker,
        latency_ms: 0,
      };
      return new Response(JSON.stringify(payload), {
        status: 200,
        headers: { "Content-Type": "application/json" },
      });
    }
    return new Response("not found", { status: 404 });
  };
  return { fetchFn, sessionIds, submissions };
}

function elements(): AppElements {
  const input = document.createElement("input");
  const banner = document.createElement("div");
  const panes = document.createElement("div");
  const history = document.createElement("ol");
  const toggles = document.createElement("div");
  document.body.replaceChildren(input, banner, panes, history, toggles);
  return { input, banner, panes, history, toggles };
}

function paneQueries(panes: HTMLElement, ranker: string): string[] {
  const pane = panes.querySelector(`[data-ranker="${ranker}"]`)!;
  return [...pane.querySelectorAll(".suggestion .query")].map(
    (el) => el.textContent ?? "",
  );
}

describe("scripted flow against the frozen fixture", () => {
  const { aware_ranker: aware, blind_ranker: blind } = fixture.meta;
  const orders = recordedOrders();
  let backend: ReturnType<typeof replayBackend>;
  let el: AppElements;
  let app: AppHandle;

  beforeEach(async () => {
    vi.useFakeTimers();
    backend = replayBackend();
    el = elements();
    app = createApp(el, new ApiClient("", backend.fetchFn), {
      k: fixture.meta.k,
    });
    await app.ready;
  });

  afterEach(() => vi.useRealTimers());

  async function typePrefix(): Promise<void> {
    el.input.value = fixture.meta.prefix;
    el.input.dispatchEvent(new Event("input"));
    await vi.advanceTimersByTimeAsync(300);
  }

  it("the fixture itself is demonstrative", () => {
    // Guard against regenerating a fixture that shows nothing.
    expect(orders["after_submit"]![aware]).not.toEqual(orders["before_submit"]![aware]);
    expect(orders["after_submit"]![aware]![0]).not.toBe(orders["before_submit"]![aware]![0]);
    expect(orders["after_submit"]![blind]).toEqual(orders["before_submit"]![blind]);
  });

  it("typing the prefix renders every pane exactly as recorded", async () => {
    await typePrefix();
    for (const ranker of fixture.meta.panes) {
      expect(paneQueries(el.panes, ranker)).toEqual(orders["before_submit"]![ranker]);
    }
    expect(el.banner.hidden).toBe(true);
  });

  it("submitting reorders the aware pane as recorded and leaves the blind pane alone", async () => {
    await typePrefix();
    const before = Object.fromEntries(
      fixture.meta.panes.map((r) => [r, paneQueries(el.panes, r)]),
    );

    const row = el.panes.querySelector(
      `[data-ranker="${aware}"] .suggestion[data-query="${fixture.meta.submission}"]`,
    ) as HTMLElement;
    expect(row).toBeTruthy();
    row.click();
    await vi.advanceTimersByTimeAsync(300);

    expect(backend.submissions).toEqual([fixture.meta.submission]);
    expect(paneQueries(el.panes, aware)).toEqual(orders["after_submit"]![aware]);
    expect(paneQueries(el.panes, aware)).not.toEqual(before[aware]);
    expect(paneQueries(el.panes, blind)).toEqual(before[blind]);
    for (const ranker of fixture.meta.panes) {
      expect(paneQueries(el.panes, ranker)).toEqual(orders["after_submit"]![ranker]);
    }
    expect([...el.history.children].map((n) => n.textContent)).toEqual([
      fixture.meta.submission,
    ]);
  });

  it("every request in the flow carried the page's one session id", async () => {
    await typePrefix();
    const row = el.panes.querySelector(
      `[data-ranker="${aware}"] .suggestion[data-query="${fixture.meta.submission}"]`,
    ) as HTMLElement;
    row.click();
    await vi.advanceTimersByTimeAsync(300);

    expect(backend.sessionIds).toEqual(new Set([app.state.sessionId]));
  });

  it("the aware pane highlights its divergence from the blind pane", async () => {
    await typePrefix();
    const awarePane = el.panes.querySelector(`[data-ranker="${aware}"]`)!;
    const blindPane = el.panes.querySelector(`[data-ranker="${blind}"]`)!;
    // both panes hold the same queries pre-submit in the recorded flow,
    // possibly in different orders; markers may or may not be present.
    expect(blindPane.querySelectorAll(".marker")).toHaveLength(0);

    const row = awarePane.querySelector(
      `.suggestion[data-query="${fixture.meta.submission}"]`,
    ) as HTMLElement;
    row.click();
    await vi.advanceTimersByTimeAsync(300);

    // post-submit the recorded aware order genuinely diverges, so at
    // least one row must carry a movement marker.
    const refreshed = el.panes.querySelector(`[data-ranker="${aware}"]`)!;
    expect(refreshed.querySelectorAll(".marker").length).toBeGreaterThan(0);
  });
});
