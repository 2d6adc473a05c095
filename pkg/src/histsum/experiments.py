"""Ablation variants, redundancy analysis, score traces, significance tests."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import rouge
from .corpus import Document, EncodedDocument
from .inference import (InferenceConfig, SummaryResult, extract_summary,
                        extraction_budget, terminator_index)
from .policy import (VARIANTS, ExtractionState, PolicyConfig, PolicyNetwork)


def build_variant(name: str, base: PolicyConfig, store: ad.ParameterStore,
                  embeddings, fixed_k: int | None = None) -> PolicyNetwork:
    """Instantiate an ablation by name on top of a shared base configuration."""
    if name not in VARIANTS:
        raise ValueError(f"unknown variant '{name}' (choose from {VARIANTS})")
    cfg = replace(base, variant=name,
                  fixed_k=fixed_k if name == "no_auto_stop" else None)
    return PolicyNetwork(cfg, store, embeddings)


STOP_SENTENCE_TOKEN = "stop"
STOP_SENTENCE_RAW = "STOP"


def append_stop_sentence(docs: Sequence[Document],
                         max_sentences: int | None = None) -> list[Document]:
    """Append the synthetic terminator sentence used by the stop_sentence
    variant.  It never enters references or extracted candidate text: picking
    it only ends the episode.

    When max_sentences (the encoder grid) is given, the body is truncated to
    max_sentences - 1 first so the terminator always survives encoding as the
    final slot.
    """
    keep = None if max_sentences is None else max(max_sentences - 1, 0)
    out = []
    for d in docs:
        body = d.sentences if keep is None else d.sentences[:keep]
        raws = d.raw_sentences if keep is None else d.raw_sentences[:keep]
        out.append(Document(d.id,
                            [list(s) for s in body] + [[STOP_SENTENCE_TOKEN]],
                            d.gold_summary,
                            list(raws) + [STOP_SENTENCE_RAW]))
    return out


# ------------------------------------------------------------- redundancy

def make_redundant_dataset(docs: Sequence[Document]) -> list[Document]:
    """Duplicate every body sentence in place ([a, b] -> [a, a, b, b]);
    references stay untouched."""
    out = []
    for d in docs:
        sents = [s for one in d.sentences for s in (one, one)]
        raws = [s for one in d.raw_sentences for s in (one, one)]
        out.append(Document(d.id, sents, d.gold_summary, raws))
    return out


def duplicate_percentage(indices: Sequence[int], doc: Document) -> float:
    """Percent of extracted sentences whose token sequence already appeared
    earlier in the extraction."""
    if not indices:
        return 0.0
    seen: set[tuple] = set()
    dups = 0
    for i in indices:
        key = tuple(doc.sentences[i])
        if key in seen:
            dups += 1
        seen.add(key)
    return 100.0 * dups / len(indices)


def _sentence_trigrams(tokens: Sequence[str]) -> set[tuple]:
    return {tuple(tokens[i:i + 3]) for i in range(len(tokens) - 2)}


def trigram_blocking_filter(policy: PolicyNetwork, enc: EncodedDocument,
                            doc: Document, config: InferenceConfig) -> SummaryResult:
    """Greedy extraction that skips any candidate sharing a trigram with the
    summary so far; stopping rules mirror extract_summary."""
    import time
    t0 = time.perf_counter()
    local = policy.encode_local(enc)
    globl = policy.encode_global(local, enc.n_sentences)
    state = ExtractionState.initial(enc.n_sentences)
    budget = extraction_budget(policy.config, config)
    synthetic_stop = terminator_index(policy.config, enc)
    blocked_grams: set[tuple] = set()
    while True:
        if len(state.extracted) >= budget or not state.remaining:
            break
        dist = policy.action_distribution(local, globl, state, train=False, rng=None)
        if policy.config.has_stop_head and dist.p_stop_value() >= config.p_thres:
            break
        values = dist.score_values()
        pick = None
        for j in np.argsort(-values, kind="stable"):
            cand = dist.indices[int(j)]
            if _sentence_trigrams(doc.sentences[cand]) & blocked_grams:
                continue
            pick = cand
            break
        if pick is None or pick == synthetic_stop:
            break
        blocked_grams |= _sentence_trigrams(doc.sentences[pick])
        state = state.select(pick)
    ms = (time.perf_counter() - t0) * 1000.0
    extracted = list(state.extracted)
    ordered = sorted(extracted) if config.output_order == "document" else extracted
    reward = None
    if doc.gold_summary:
        reward = rouge.episode_reward([doc.sentences[i] for i in extracted],
                                      doc.gold_summary)
    return SummaryResult(doc.id, extracted, [doc.raw_sentences[i] for i in ordered],
                         reward, ms)


def lead_baseline(doc: Document, k: int) -> SummaryResult:
    """First-k-sentences baseline."""
    indices = list(range(min(k, len(doc.sentences))))
    reward = None
    if doc.gold_summary:
        reward = rouge.episode_reward([doc.sentences[i] for i in indices],
                                      doc.gold_summary)
    return SummaryResult(doc.id, indices, [doc.raw_sentences[i] for i in indices],
                         reward, 0.0)


# ------------------------------------------------------------ score traces

@dataclass
class ScoreTrace:
    """Per-step candidate scores from a greedy extraction run.

    rows[t] holds (p_stop or None, {sentence_index: score}); extracted and
    out-of-range sentences are absent from the mapping.
    """
    doc_id: str
    n_sentences: int
    rows: list[tuple[float | None, dict[int, float]]]
    picked: list[int]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "p_stop"] + [f"s{i}" for i in range(self.n_sentences)])
        for t, (p_stop, scores) in enumerate(self.rows):
            cells = ["X" if i not in scores else f"{scores[i]:.6f}"
                     for i in range(self.n_sentences)]
            w.writerow([t, "" if p_stop is None else f"{p_stop:.6f}"] + cells)
        return buf.getvalue()


def score_trace(policy: PolicyNetwork, enc: EncodedDocument, doc: Document,
                config: InferenceConfig) -> ScoreTrace:
    """Replay the deterministic extraction loop, recording every candidate
    score at every step (including the step that triggers the stop)."""
    local = policy.encode_local(enc)
    globl = policy.encode_global(local, enc.n_sentences)
    state = ExtractionState.initial(enc.n_sentences)
    budget = extraction_budget(policy.config, config)
    synthetic_stop = terminator_index(policy.config, enc)
    rows: list[tuple[float | None, dict[int, float]]] = []
    while True:
        if len(state.extracted) >= budget or not state.remaining:
            break
        dist = policy.action_distribution(local, globl, state, train=False, rng=None)
        values = dist.score_values()
        p_stop = dist.p_stop_value() if policy.config.has_stop_head else None
        rows.append((p_stop, {a: float(v) for a, v in zip(dist.indices, values)}))
        if policy.config.has_stop_head and dist.p_stop_value() >= config.p_thres:
            break
        pick = dist.indices[int(np.argmax(values))]
        if synthetic_stop is not None and pick == synthetic_stop:
            break
        state = state.select(pick)
    return ScoreTrace(doc.id, enc.n_sentences, rows, list(state.extracted))


# -------------------------------------------------- Wilcoxon signed rank

@dataclass
class WilcoxonResult:
    statistic: float        # min(W+, W-)
    p_value: float
    n: int                  # non-zero differences used
    method: str             # "exact" or "normal"
    degenerate: bool


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_two_sided(ranks2: np.ndarray, w_plus2: int) -> float:
    """Exact two-sided p over all sign assignments; ranks doubled so that
    midpoint ranks from ties stay integral."""
    total = int(ranks2.sum())
    dist = np.zeros(total + 1)
    dist[0] = 1.0
    for r in ranks2:
        r = int(r)
        shifted = np.zeros_like(dist)
        shifted[r:] = dist[:total + 1 - r]
        dist = dist + shifted
    dist /= dist.sum()
    lo = dist[:w_plus2 + 1].sum()                 # P(W+ <= observed)
    hi = dist[w_plus2:].sum()                     # P(W+ >= observed)
    return float(min(1.0, 2.0 * min(lo, hi)))


def wilcoxon_signed_rank(pairs: Sequence[tuple[float, float]],
                         exact_limit: int = 25) -> WilcoxonResult:
    """Paired two-sided test; zero differences dropped, tied magnitudes get
    average ranks.  Exact null distribution up to exact_limit non-zero
    differences, normal approximation with continuity correction beyond."""
    diffs = np.array([float(a) - float(b) for a, b in pairs])
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate", True)
    ranks = _average_ranks(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    stat = min(w_plus, w_minus)
    degenerate = n < 6    # two-sided 0.05 is unreachable below six pairs
    if n <= exact_limit:
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        p = _exact_two_sided(ranks2, int(round(2.0 * w_plus)))
        return WilcoxonResult(stat, p, n, "exact", degenerate)
    mean = n * (n + 1) / 4.0
    tie_sizes = np.unique(np.abs(diffs), return_counts=True)[1]
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(((tie_sizes ** 3) - tie_sizes).sum()) / 48.0
    if var <= 0:
        return WilcoxonResult(stat, 1.0, n, "degenerate", True)
    z = (stat - mean + 0.5) / math.sqrt(var)      # continuity-corrected
    p = float(min(1.0, math.erfc(-z / math.sqrt(2.0))))
    return WilcoxonResult(stat, p, n, "normal", degenerate)
