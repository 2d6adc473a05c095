/**
 * Browser bootstrap: wires the pure state machine and renderer to the DOM
 * and the evaluation service API. All logic lives in state.ts / render.ts /
 * api.ts; this file only owns side effects.
 *
 * The page is addressed as index.html?session=s0001&evaluator=alice — the
 * session id and evaluator name are the only client-side identity, and
 * nothing is persisted beyond them.
 */

import { Criterion, EvalApi, isEndOfSession } from "./api.js";
import { render } from "./render.js";
import {
  Choice,
  ViewState,
  buildRanking,
  buildSkip,
  canSubmit,
  highlightLoaded,
  initialState,
  loadFailed,
  pairLoaded,
  selectChoice,
  setQuery,
  sourceLoaded,
  submitRejected,
  toggleSource,
} from "./state.js";

function describeError(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}

export class App {
  private state: ViewState = initialState();

  constructor(
    private readonly root: HTMLElement,
    private readonly api: EvalApi,
    private readonly session: string,
    private readonly evaluator: string,
  ) {}

  start(): void {
    this.root.addEventListener("click", (event) => {
      const target = (event.target as HTMLElement).closest<HTMLElement>(
        "[data-action]",
      );
      if (target !== null) {
        void this.handleAction(target);
      }
    });
    this.root.addEventListener("input", (event) => {
      const target = event.target as HTMLInputElement;
      if (target.dataset["role"] === "query") {
        // Track the text without re-rendering, so the input keeps focus.
        this.state = setQuery(this.state, target.value);
      }
    });
    this.draw();
    void this.loadNext();
  }

  private setState(next: ViewState): void {
    this.state = next;
    this.draw();
  }

  private draw(): void {
    this.root.innerHTML = render(this.state);
  }

  private async loadNext(): Promise<void> {
    try {
      const next = await this.api.nextPair(this.session, this.evaluator);
      this.setState(pairLoaded(this.state, next));
      if (!isEndOfSession(next)) {
        void this.loadSource();
      }
    } catch (err) {
      this.setState(loadFailed(this.state, describeError(err)));
    }
  }

  private async loadSource(): Promise<void> {
    const pair = this.state.pair;
    if (pair === null) {
      return;
    }
    try {
      const doc = await this.api.getDocument(pair.doc_id);
      if (this.state.pair !== null && this.state.pair.pair_id === pair.pair_id) {
        this.state = { ...this.state, source: doc.source };
        if (this.state.showSource) {
          this.draw();
        }
      }
    } catch {
      // The source pane is optional; evaluation continues without it.
    }
  }

  private async handleAction(target: HTMLElement): Promise<void> {
    switch (target.dataset["action"]) {
      case "choose": {
        const criterion = target.dataset["criterion"] as Criterion;
        const choice = target.dataset["choice"] as Choice;
        this.setState(selectChoice(this.state, criterion, choice));
        break;
      }
      case "submit":
        await this.submit(false);
        break;
      case "skip":
        await this.submit(true);
        break;
      case "highlight":
        await this.requestHighlight();
        break;
      case "toggle-source":
        if (this.state.source === null) {
          this.setState(toggleSource(this.state));
          await this.loadSource();
          if (this.state.showSource) {
            this.draw();
          }
        } else {
          this.setState(
            this.state.showSource
              ? toggleSource(this.state)
              : sourceLoaded(this.state, this.state.source),
          );
        }
        break;
      case "reload":
        this.setState({ ...initialState() });
        await this.loadNext();
        break;
    }
  }

  private async submit(skip: boolean): Promise<void> {
    if (!skip && !canSubmit(this.state)) {
      return;
    }
    const request = skip
      ? buildSkip(this.state, this.evaluator)
      : buildRanking(this.state, this.evaluator);
    try {
      await this.api.submitRanking(this.session, request);
      await this.loadNext();
    } catch (err) {
      this.setState(submitRejected(this.state, describeError(err)));
    }
  }

  private async requestHighlight(): Promise<void> {
    const pair = this.state.pair;
    if (pair === null || this.state.query.trim() === "") {
      return;
    }
    try {
      const scores = await this.api.highlight(
        this.session,
        pair.pair_id,
        this.state.query,
      );
      this.setState(highlightLoaded(this.state, scores));
    } catch (err) {
      this.setState(submitRejected(this.state, describeError(err)));
    }
  }
}

function boot(): void {
  const root = document.getElementById("app");
  if (root === null) {
    return;
  }
  const params = new URLSearchParams(window.location.search);
  const session = params.get("session") ?? "";
  const evaluator = params.get("evaluator") ?? "";
  if (session === "" || evaluator === "") {
    root.innerHTML =
      `<main class="screen"><h2>Missing parameters</h2>` +
      `<p>Open this page as <code>index.html?session=&lt;id&gt;&amp;evaluator=&lt;name&gt;</code>.</p></main>`;
    return;
  }
  const api = new EvalApi(params.get("api") ?? "");
  new App(root, api, session, evaluator).start();
}

if (typeof document !== "undefined") {
  boot();
}
