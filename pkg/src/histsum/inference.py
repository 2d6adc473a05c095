"""Deterministic summary extraction, threshold sweeps, dataset evaluation."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rouge
from .corpus import Document, EncodedDocument
from .policy import ExtractionState, PolicyNetwork

OUTPUT_ORDERS = ("document", "extraction")


@dataclass(frozen=True)
class InferenceConfig:
    p_thres: float = 0.6
    max_sentences: int = 7
    output_order: str = "document"   # presentation; scoring always uses extraction order

    def __post_init__(self):
        if not (0.0 <= self.p_thres <= 1.0):
            raise ValueError("p_thres must lie in [0, 1]")
        if self.max_sentences < 0:
            raise ValueError("max_sentences must be >= 0")
        if self.output_order not in OUTPUT_ORDERS:
            raise ValueError(f"output_order must be one of {OUTPUT_ORDERS}")


@dataclass
class SummaryResult:
    doc_id: str
    indices: list[int]            # extraction order
    sentences: list[str]          # raw text, arranged per output_order
    reward: rouge.Reward | None   # None when the document has no gold summary
    ms: float

    def ordered_indices(self, output_order: str) -> list[int]:
        return sorted(self.indices) if output_order == "document" else list(self.indices)


def _greedy_pick(dist) -> int:
    # ascending candidate order, so argmax resolves ties toward the low index
    values = dist.score_values()
    return dist.indices[int(np.argmax(values))]


def extraction_budget(policy_config, config: InferenceConfig) -> int:
    """Sentence budget for one document; the fixed-count variant ignores the
    configured maximum."""
    if policy_config.variant == "no_auto_stop":
        return policy_config.fixed_k
    return config.max_sentences


def terminator_index(policy_config, enc: EncodedDocument) -> int | None:
    """Index of the synthetic terminator slot, when the variant uses one."""
    return enc.n_sentences - 1 if policy_config.variant == "stop_sentence" else None


def extract_summary(policy: PolicyNetwork, enc: EncodedDocument, doc: Document,
                    config: InferenceConfig) -> SummaryResult:
    t0 = time.perf_counter()
    cfg = policy.config
    local = policy.encode_local(enc)
    globl = policy.encode_global(local, enc.n_sentences)
    n = enc.n_sentences
    budget = extraction_budget(cfg, config)

    extracted: list[int] = []
    if cfg.variant == "no_ehe":
        # single scoring pass; take the top-scored sentences up to the budget
        state = ExtractionState.initial(n)
        dist = policy.action_distribution(local, globl, state, train=False, rng=None)
        values = dist.score_values()
        order = np.argsort(-values, kind="stable")
        extracted = [dist.indices[int(i)] for i in order[:budget]]
    else:
        state = ExtractionState.initial(n)
        synthetic_stop = terminator_index(cfg, enc)
        while True:
            if len(state.extracted) >= budget or not state.remaining:
                break
            dist = policy.action_distribution(local, globl, state, train=False, rng=None)
            if cfg.has_stop_head and dist.p_stop_value() >= config.p_thres:
                break
            a = _greedy_pick(dist)
            if synthetic_stop is not None and a == synthetic_stop:
                break
            state = state.select(a)
        extracted = list(state.extracted)

    ms = (time.perf_counter() - t0) * 1000.0
    ordered = sorted(extracted) if config.output_order == "document" else extracted
    sentences = [doc.raw_sentences[i] for i in ordered]
    reward = None
    if doc.gold_summary:
        # scoring always concatenates in extraction order
        reward = rouge.episode_reward([doc.sentences[i] for i in extracted],
                                      doc.gold_summary)
    return SummaryResult(doc.id, extracted, sentences, reward, ms)


def sweep_threshold(policy: PolicyNetwork, docs, config: InferenceConfig,
                    thresholds: Sequence[float] | None = None):
    """Mean reward per stopping threshold; returns (rows, best_threshold).

    Ties resolve toward the smaller threshold.
    """
    if thresholds is None:
        thresholds = [round(0.1 * k, 1) for k in range(1, 11)]
    rows = []
    best_thres, best_score = None, -np.inf
    for th in thresholds:
        cfg = InferenceConfig(p_thres=th, max_sentences=config.max_sentences,
                              output_order=config.output_order)
        scores = [extract_summary(policy, enc, doc, cfg).reward.value
                  for doc, enc in docs]
        mean = float(np.mean(scores)) if scores else 0.0
        rows.append((float(th), mean))
        if mean > best_score:
            best_score, best_thres = mean, float(th)
    return rows, best_thres


@dataclass
class EvalReport:
    rouge1: float
    rouge2: float
    rougeL: float
    reward: float
    mean_sentences: float
    mean_words: float
    mean_ms: float
    n_documents: int

    def to_dict(self, timing: bool = True) -> dict:
        d = {"rouge1": self.rouge1, "rouge2": self.rouge2, "rougeL": self.rougeL,
             "reward": self.reward, "mean_sentences": self.mean_sentences,
             "mean_words": self.mean_words, "n_documents": self.n_documents}
        if timing:
            d["mean_ms"] = self.mean_ms
        return d


def evaluate_dataset(policy: PolicyNetwork, docs, config: InferenceConfig) -> EvalReport:
    """docs: iterable of (Document, EncodedDocument) pairs with gold summaries."""
    r1, r2, rl, rw, ns, nw, ms = [], [], [], [], [], [], []
    for doc, enc in docs:
        res = extract_summary(policy, enc, doc, config)
        if res.reward is None:
            raise ValueError(f"document '{doc.id}' has no reference summary")
        c1, c2, cl = res.reward.components
        r1.append(c1); r2.append(c2); rl.append(cl); rw.append(res.reward.value)
        ns.append(len(res.indices))
        nw.append(sum(len(rouge.scoring_tokens(doc.sentences[i]))
                      for i in res.indices))
        ms.append(res.ms)
    if not r1:
        raise ValueError("evaluation set is empty")
    m = lambda xs: float(np.mean(xs))
    return EvalReport(m(r1), m(r2), m(rl), m(rw), m(ns), m(nw), m(ms), len(r1))


def write_results_jsonl(path, results: Sequence[SummaryResult],
                        output_order: str = "document",
                        include_sentences: bool = True,
                        include_timing: bool = False):
    """One record per document; timing is opt-in so reruns stay byte-identical."""
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            rec = {"id": res.doc_id,
                   "indices": res.ordered_indices(output_order)}
            if include_sentences:
                rec["summary"] = res.sentences
            if res.reward is not None:
                c1, c2, cl = res.reward.components
                rec["rouge"] = {"rouge1": c1, "rouge2": c2, "rougeL": cl,
                                "reward": res.reward.value}
            if include_timing:
                rec["ms"] = res.ms
            fh.write(json.dumps(rec) + "\n")
