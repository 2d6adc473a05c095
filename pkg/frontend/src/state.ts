/**
 * View state machine for one evaluator working through a session.
 *
 * Every transition is a pure function returning a fresh state, which keeps
 * the submit-gating and state-preservation rules directly testable:
 *   - submit stays disabled until all three criteria have a selection;
 *   - selections are cleared when a new pair loads;
 *   - a rejected submission or network failure preserves the selections.
 */

import {
  CRITERIA,
  Criterion,
  HighlightResponse,
  NextPairResponse,
  PairPayload,
  RankPair,
  RankingRequest,
  isEndOfSession,
} from "./api.js";

/** What the evaluator picked for one criterion. */
export type Choice = "a" | "b" | "tie";

export type Phase = "loading" | "evaluating" | "done" | "error";

export interface ViewState {
  phase: Phase;
  pair: PairPayload | null;
  remaining: number;
  selections: Partial<Record<Criterion, Choice>>;
  highlight: HighlightResponse | null;
  query: string;
  showSource: boolean;
  source: string[] | null;
  /** Inline banner: validation errors, network failures, retry hints. */
  message: string | null;
}

export function initialState(): ViewState {
  return {
    phase: "loading",
    pair: null,
    remaining: 0,
    selections: {},
    highlight: null,
    query: "",
    showSource: false,
    source: null,
    message: null,
  };
}

/** A pair (or the end-of-session marker) arrived; per-pair state resets. */
export function pairLoaded(
  state: ViewState,
  next: NextPairResponse,
): ViewState {
  if (isEndOfSession(next)) {
    return { ...initialState(), phase: "done" };
  }
  return {
    ...initialState(),
    phase: "evaluating",
    pair: next,
    remaining: next.remaining,
  };
}

/** Fetch failure: keep whatever was on screen and show a retry banner. */
export function loadFailed(state: ViewState, message: string): ViewState {
  return {
    ...state,
    phase: state.pair ? state.phase : "error",
    message: `${message} — retry`,
  };
}

export function selectChoice(
  state: ViewState,
  criterion: Criterion,
  choice: Choice,
): ViewState {
  return {
    ...state,
    selections: { ...state.selections, [criterion]: choice },
    message: null,
  };
}

export function canSubmit(state: ViewState): boolean {
  return (
    state.phase === "evaluating" &&
    state.pair !== null &&
    CRITERIA.every((c) => state.selections[c] !== undefined)
  );
}

const CHOICE_TO_RANKS: Record<Choice, RankPair> = {
  a: [1, 2],
  b: [2, 1],
  tie: [1, 1],
};

export function ranksForSubmit(
  selections: Partial<Record<Criterion, Choice>>,
): Record<Criterion, RankPair> {
  const out = {} as Record<Criterion, RankPair>;
  for (const criterion of CRITERIA) {
    const choice = selections[criterion];
    if (choice === undefined) {
      throw new Error(`criterion '${criterion}' has no selection`);
    }
    out[criterion] = CHOICE_TO_RANKS[choice];
  }
  return out;
}

export function buildRanking(
  state: ViewState,
  evaluator: string,
): RankingRequest {
  if (!canSubmit(state) || state.pair === null) {
    throw new Error("cannot submit: selections incomplete");
  }
  return {
    evaluator,
    pair_id: state.pair.pair_id,
    skipped: false,
    ranks: ranksForSubmit(state.selections),
    note: "",
  };
}

export function buildSkip(state: ViewState, evaluator: string): RankingRequest {
  if (state.pair === null) {
    throw new Error("cannot skip: no pair loaded");
  }
  return {
    evaluator,
    pair_id: state.pair.pair_id,
    skipped: true,
    ranks: null,
    note: "",
  };
}

/** Server rejected the submission: selections stay, the reason is shown. */
export function submitRejected(state: ViewState, message: string): ViewState {
  return { ...state, message };
}

export function setQuery(state: ViewState, query: string): ViewState {
  return { ...state, query };
}

export function highlightLoaded(
  state: ViewState,
  scores: HighlightResponse,
): ViewState {
  return { ...state, highlight: scores, message: null };
}

export function sourceLoaded(state: ViewState, source: string[]): ViewState {
  return { ...state, source, showSource: true };
}

export function toggleSource(state: ViewState): ViewState {
  return { ...state, showSource: !state.showSource };
}
