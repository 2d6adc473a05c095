"""N-gram overlap and longest-common-subsequence F1 scoring.

All scores operate on pre-tokenized text (lists of token strings).  Tokens
that contain no alphanumeric character are dropped before scoring, and the
rest are lowercased, so punctuation never contributes to overlap.  An
optional flag applies Porter stemming after the filter.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import kernels
from .porter import porter_stem


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class Reward:
    """Episode-level reward: mean of the three F1 components."""

    value: float
    components: tuple[float, float, float]  # (unigram, bigram, lcs) f1


def _f1(p: float, r: float) -> float:
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _score(overlap: int, n_cand: int, n_ref: int) -> RougeScore:
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    return RougeScore(p, r, _f1(p, r))


def scoring_tokens(tokens: Iterable[str], stem: bool = False) -> list[str]:
    """Lowercase and keep only tokens containing at least one alphanumeric."""
    out = [t.lower() for t in tokens if any(c.isalnum() for c in t)]
    if stem:
        out = [porter_stem(t) for t in out]
    return out


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int,
            stem: bool = False) -> RougeScore:
    if n < 1:
        raise ValueError(f"ngram order must be >= 1, got {n}")
    cand = scoring_tokens(candidate, stem)
    ref = scoring_tokens(reference, stem)
    cg = _ngrams(cand, n)
    rg = _ngrams(ref, n)
    overlap = sum(min(c, rg[g]) for g, c in cg.items())
    return _score(overlap, sum(cg.values()), sum(rg.values()))


def _intern(seqs: list[list[str]]):
    """Map token strings to dense int32 ids, shared across the sequences."""
    import numpy as np

    table: dict[str, int] = {}
    out = []
    for seq in seqs:
        ids = np.empty(len(seq), dtype=np.int32)
        for i, tok in enumerate(seq):
            ids[i] = table.setdefault(tok, len(table))
        out.append(ids)
    return out


def rouge_l(candidate: Sequence[str], reference: Sequence[str],
            stem: bool = False) -> RougeScore:
    cand = scoring_tokens(candidate, stem)
    ref = scoring_tokens(reference, stem)
    if not cand or not ref:
        return _score(0, len(cand), len(ref))
    a, b = _intern([cand, ref])
    overlap = kernels.lcs_length(a, b)
    return _score(overlap, len(cand), len(ref))


def episode_reward(extracted_sentences: Sequence[Sequence[str]],
                   gold_sentences: Sequence[Sequence[str]],
                   stem: bool = False) -> Reward:
    """Score a whole extraction against the gold summary.

    Sentences are concatenated in extraction order on both sides; the reward
    is the unweighted mean of unigram, bigram and LCS F1.
    """
    cand = [t for s in extracted_sentences for t in s]
    gold = [t for s in gold_sentences for t in s]
    r1 = rouge_n(cand, gold, 1, stem)
    r2 = rouge_n(cand, gold, 2, stem)
    rl = rouge_l(cand, gold, stem)
    comps = (r1.f1, r2.f1, rl.f1)
    return Reward(value=sum(comps) / 3.0, components=comps)


def mean_r12(candidate: Sequence[str], reference: Sequence[str],
             stem: bool = False) -> float:
    """Mean of unigram and bigram F1; the search signal used when building
    reference extraction sequences (LCS is intentionally left out there)."""
    r1 = rouge_n(candidate, reference, 1, stem)
    r2 = rouge_n(candidate, reference, 2, stem)
    return (r1.f1 + r2.f1) / 2.0


def mean_r12_gain(current_sentences: Sequence[Sequence[str]],
                  candidate_sentence: Sequence[str],
                  gold_sentences: Sequence[Sequence[str]],
                  stem: bool = False) -> float:
    """Increase of mean_r12 when appending one sentence to the extraction."""
    gold = [t for s in gold_sentences for t in s]
    cur = [t for s in current_sentences for t in s]
    before = mean_r12(cur, gold, stem) if cur else 0.0
    after = mean_r12(cur + list(candidate_sentence), gold, stem)
    return after - before
