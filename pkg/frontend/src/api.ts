/** Typed client for the autocomplete service's HTTP API.
 *
 * The page talks to the backend exclusively through this module; nothing
 * else issues requests or touches response shapes.
 */

export interface Suggestion {
  query: string;
  score: number;
}

export interface SuggestResponse {
  suggestions: Suggestion[];
  ranker_id: string;
  latency_ms: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** fetch with the window binding already applied; injectable for tests. */
export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
  } catch {
    // non-JSON error body; fall through to the status text
  }
  return response.statusText || "request failed";
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async suggest(
    prefix: string,
    sessionId: string,
    k: number,
    ranker: string,
  ): Promise<SuggestResponse> {
    const params = new URLSearchParams({
      prefix,
      session_id: sessionId,
      k: String(k),
      ranker,
    });
    const response = await this.fetchFn(`${this.baseUrl}/suggest?${params}`);
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return (await response.json()) as SuggestResponse;
  }

  /** Resolves on 204; a failed submission is reported, never queued. */
  async submit(sessionId: string, query: string): Promise<void> {
    const response = await this.fetchFn(`${this.baseUrl}/submit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, query }),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
  }

  async rankers(): Promise<string[]> {
    const response = await this.fetchFn(`${this.baseUrl}/rankers`);
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    const body = (await response.json()) as { rankers: string[] };
    return body.rankers;
  }
}
