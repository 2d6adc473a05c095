/**
 * Typed client for the evaluation service HTTP/JSON API.
 *
 * The fetch implementation is injectable so tests can run against recorded
 * fixtures without a network.
 */

export type Side = "a" | "b";

export type Criterion = "overall" | "coverage" | "non_redundancy";

export const CRITERIA: readonly Criterion[] = [
  "overall",
  "coverage",
  "non_redundancy",
] as const;

/** One blinded pair as served by GET /session/{id}/next. */
export interface PairPayload {
  pair_id: number;
  doc_id: string;
  reference: string[];
  summary_a: string[];
  summary_b: string[];
  done: false;
  remaining: number;
}

export interface EndOfSession {
  done: true;
  remaining: 0;
}

export type NextPairResponse = PairPayload | EndOfSession;

export function isEndOfSession(r: NextPairResponse): r is EndOfSession {
  return r.done === true;
}

/** [rank of summary A, rank of summary B]; each 1 or 2, (1,1) means a tie. */
export type RankPair = [number, number];

/** POST body for /session/{id}/ranking. */
export interface RankingRequest {
  evaluator: string;
  pair_id: number;
  skipped: boolean;
  ranks: Record<Criterion, RankPair> | null;
  note: string;
}

export interface RankingResponse {
  replaced: boolean;
}

/** Per-sentence cosine similarity for each side, in [-1, 1]. */
export interface HighlightResponse {
  a: number[];
  b: number[];
}

export interface DocumentResponse {
  id: string;
  source: string[];
}

export interface CriterionAggregate {
  mean_rank: Record<string, number>;
  n: number;
  p_value: number;
  method: string;
  degenerate: boolean;
}

export interface AggregateResponse {
  session_id: string;
  n_pairs: number;
  n_ranked: number;
  n_skipped: number;
  empty: boolean;
  criteria: Record<string, CriterionAggregate>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class EvalApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    const text = await resp.text();
    if (!resp.ok) {
      let detail = text;
      try {
        const body = JSON.parse(text) as { detail?: unknown };
        if (typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep raw text
      }
      throw new ApiError(resp.status, detail);
    }
    return JSON.parse(text) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  nextPair(sessionId: string, evaluator: string): Promise<NextPairResponse> {
    const q = encodeURIComponent(evaluator);
    return this.request(`/session/${sessionId}/next?evaluator=${q}`);
  }

  submitRanking(
    sessionId: string,
    req: RankingRequest,
  ): Promise<RankingResponse> {
    return this.post(`/session/${sessionId}/ranking`, req);
  }

  highlight(
    sessionId: string,
    pairId: number,
    query: string,
  ): Promise<HighlightResponse> {
    return this.post(`/session/${sessionId}/highlight`, {
      pair_id: pairId,
      query,
    });
  }

  getDocument(docId: string): Promise<DocumentResponse> {
    return this.request(`/document/${encodeURIComponent(docId)}`);
  }

  aggregate(sessionId: string): Promise<AggregateResponse> {
    return this.request(`/session/${sessionId}/aggregate`);
  }
}
