/**
 * Pure HTML-string renderer.
 *
 * Rendering is a function of ViewState only, so tests can assert on the
 * produced markup (submit gating, highlight classes, escaping, blinding)
 * without a browser. main.ts owns the DOM write and event wiring.
 */

import { CRITERIA, Criterion } from "./api.js";
import { highlightClass, highlightLevel } from "./highlight.js";
import { Choice, ViewState, canSubmit } from "./state.js";

const CRITERION_LABELS: Record<Criterion, string> = {
  overall: "Overall quality",
  coverage: "Coverage",
  non_redundancy: "Non-redundancy",
};

const CHOICES: ReadonlyArray<{ value: Choice; label: string }> = [
  { value: "a", label: "A is better" },
  { value: "tie", label: "Tie" },
  { value: "b", label: "B is better" },
];

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

function renderSentences(
  sentences: readonly string[],
  scores: readonly number[] | null,
): string {
  const items = sentences.map((sentence, i) => {
    const score = scores !== null ? (scores[i] ?? 0) : 0;
    const cls = highlightClass(highlightLevel(score));
    const attr = cls === "" ? "" : ` class="${cls}"`;
    return `<li${attr}>${escapeHtml(sentence)}</li>`;
  });
  return `<ol class="sentences">${items.join("")}</ol>`;
}

function renderPane(
  title: string,
  id: string,
  sentences: readonly string[],
  scores: readonly number[] | null,
): string {
  return [
    `<section class="pane" id="${id}">`,
    `<h2>${escapeHtml(title)}</h2>`,
    renderSentences(sentences, scores),
    `</section>`,
  ].join("");
}

function renderCriterionRow(
  criterion: Criterion,
  selected: Choice | undefined,
): string {
  const buttons = CHOICES.map(({ value, label }) => {
    const pressed = selected === value;
    return (
      `<button type="button" class="choice${pressed ? " selected" : ""}"` +
      ` data-action="choose" data-criterion="${criterion}"` +
      ` data-choice="${value}" aria-pressed="${pressed}">` +
      `${escapeHtml(label)}</button>`
    );
  }).join("");
  return (
    `<div class="criterion" data-criterion="${criterion}">` +
    `<span class="criterion-label">${escapeHtml(CRITERION_LABELS[criterion])}</span>` +
    buttons +
    `</div>`
  );
}

function renderControls(state: ViewState): string {
  const rows = CRITERIA.map((c) =>
    renderCriterionRow(c, state.selections[c]),
  ).join("");
  const submitDisabled = canSubmit(state) ? "" : " disabled";
  return [
    `<section class="controls">`,
    rows,
    `<div class="actions">`,
    `<button type="button" data-action="submit"${submitDisabled}>Submit ranking</button>`,
    `<button type="button" data-action="skip">Skip pair</button>`,
    `<button type="button" data-action="toggle-source">` +
      `${state.showSource ? "Hide" : "Show"} source document</button>`,
    `</div>`,
    `</section>`,
  ].join("");
}

function renderQueryBar(state: ViewState): string {
  return [
    `<section class="query-bar">`,
    `<input type="text" data-role="query" placeholder="Highlight sentences similar to..." ` +
      `value="${escapeHtml(state.query)}">`,
    `<button type="button" data-action="highlight">Highlight</button>`,
    `</section>`,
  ].join("");
}

function renderMessage(state: ViewState): string {
  if (state.message === null) {
    return "";
  }
  return `<div class="message" role="alert">${escapeHtml(state.message)}</div>`;
}

function renderSourcePane(state: ViewState): string {
  if (!state.showSource || state.source === null) {
    return "";
  }
  return renderPane("Source document", "pane-source", state.source, null);
}

export function render(state: ViewState): string {
  if (state.phase === "loading") {
    return `<main class="screen">${renderMessage(state)}<p>Loading…</p></main>`;
  }
  if (state.phase === "done") {
    return (
      `<main class="screen"><h2>Session complete</h2>` +
      `<p>No pairs left to evaluate. Thank you.</p></main>`
    );
  }
  if (state.phase === "error" || state.pair === null) {
    return (
      `<main class="screen">${renderMessage(state)}` +
      `<button type="button" data-action="reload">Reload</button></main>`
    );
  }

  const pair = state.pair;
  const hl = state.highlight;
  return [
    `<main class="workspace">`,
    `<header class="status">`,
    `<span>Document ${escapeHtml(pair.doc_id)}</span>` +
      `<span>${pair.remaining} pair${pair.remaining === 1 ? "" : "s"} remaining</span>`,
    `</header>`,
    renderMessage(state),
    renderQueryBar(state),
    `<div class="panes">`,
    renderPane("Reference summary", "pane-reference", pair.reference, null),
    renderPane("Summary A", "pane-a", pair.summary_a, hl ? hl.a : null),
    renderPane("Summary B", "pane-b", pair.summary_b, hl ? hl.b : null),
    `</div>`,
    renderSourcePane(state),
    renderControls(state),
    `</main>`,
  ].join("");
}
