"""Reference extraction sequences: the high-score episode pool per document.

Episodes are built breadth-first: every retained partial summary grows by
each of its top-`branch` sentences ranked by the gain in mean unigram/bigram
F1, keeping only strictly improving additions.  Pools are deduplicated by
index set, capped per depth, and finished episodes carry the full reward
(the LCS component is computed once, at the end).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels, rouge
from .corpus import Document


@dataclass(frozen=True)
class Episode:
    indices: tuple[int, ...]
    reward: float


@dataclass(frozen=True)
class OracleConfig:
    branch: int = 2          # candidate sentences expanded per partial summary
    max_len: int = 7         # sentences per episode
    beam_cap: int | None = 16  # partial summaries kept per depth; None = unlimited
    min_gain: float = 0.0    # additions must improve by strictly more than this

    def __post_init__(self):
        if self.branch < 1 or self.max_len < 1:
            raise ValueError("branch and max_len must be >= 1")
        if self.beam_cap is not None and self.beam_cap < self.branch:
            raise ValueError("beam_cap must be >= branch")


class _State:
    __slots__ = ("indices", "selected", "cur1", "cur2", "ov1", "ov2",
                 "length", "last", "score")

    def __init__(self, indices, selected, cur1, cur2, ov1, ov2, length, last, score):
        self.indices = indices
        self.selected = selected
        self.cur1 = cur1
        self.cur2 = cur2
        self.ov1 = ov1
        self.ov2 = ov2
        self.length = length
        self.last = last
        self.score = score


def _f1(overlap: int, n_cand: int, n_ref: int) -> float:
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    return 2.0 * p * r / (p + r) if p + r else 0.0


class _DocScorer:
    """Incremental mean unigram/bigram F1 over growing sentence selections.

    Tokens are interned to dense ids once; per-candidate evaluation then
    costs one clipped-overlap pass over the sentence ids.
    """

    def __init__(self, doc: Document):
        intern: dict[str, int] = {}

        def ids(tokens):
            arr = np.empty(len(tokens), dtype=np.int32)
            for k, t in enumerate(tokens):
                arr[k] = intern.setdefault(t, len(intern))
            return arr

        self.sent_ids = [ids(rouge.scoring_tokens(s)) for s in doc.sentences]
        gold = [t for s in doc.gold_summary for t in rouge.scoring_tokens(s)]
        self.gold_ids = ids(gold)
        n_vocab = len(intern)

        self.ref1 = np.zeros(n_vocab, dtype=np.int32)
        np.add.at(self.ref1, self.gold_ids, 1)
        self.n_ref1 = len(self.gold_ids)

        self.big_map: dict[tuple[int, int], int] = {}
        big_list: list[int] = []
        for k in range(len(self.gold_ids) - 1):
            pair = (int(self.gold_ids[k]), int(self.gold_ids[k + 1]))
            big_list.append(self.big_map.setdefault(pair, len(self.big_map)))
        self.ref2 = np.zeros(len(self.big_map), dtype=np.int32)
        np.add.at(self.ref2, np.asarray(big_list, dtype=np.int64), 1)
        self.n_ref2 = max(len(self.gold_ids) - 1, 0)

        self.sent_big = []
        for s in self.sent_ids:
            found = [self.big_map[p] for k in range(len(s) - 1)
                     if (p := (int(s[k]), int(s[k + 1]))) in self.big_map]
            self.sent_big.append(np.asarray(found, dtype=np.int32))
        self.sent_first = [int(s[0]) if len(s) else -1 for s in self.sent_ids]
        self.sent_last = [int(s[-1]) if len(s) else -1 for s in self.sent_ids]

    def empty_state(self) -> _State:
        return _State((), frozenset(), np.zeros_like(self.ref1),
                      np.zeros_like(self.ref2), 0, 0, 0, -1, 0.0)

    def _boundary_bigrams(self, state: _State, j: int) -> np.ndarray:
        bids = self.sent_big[j]
        if state.length > 0:
            extra = self.big_map.get((state.last, self.sent_first[j]))
            if extra is not None:
                bids = np.concatenate([bids, np.asarray([extra], dtype=np.int32)])
        return bids

    def eval_add(self, state: _State, j: int) -> float:
        """Score of the selection after appending sentence j (no mutation)."""
        m = len(self.sent_ids[j])
        if m == 0:
            return state.score
        d1 = kernels.clipped_overlap_peek(self.sent_ids[j], state.cur1, self.ref1)
        bids = self._boundary_bigrams(state, j)
        d2 = kernels.clipped_overlap_peek(bids, state.cur2, self.ref2) if len(bids) else 0
        new_len = state.length + m
        f1 = _f1(state.ov1 + d1, new_len, self.n_ref1)
        f2 = _f1(state.ov2 + d2, new_len - 1, self.n_ref2)
        return (f1 + f2) / 2.0

    def apply_add(self, state: _State, j: int, score: float) -> _State:
        assert score > state.score, "selections must strictly improve"
        cur1 = state.cur1.copy()
        d1 = kernels.clipped_overlap_apply(self.sent_ids[j], cur1, self.ref1)
        cur2 = state.cur2.copy()
        bids = self._boundary_bigrams(state, j)
        d2 = kernels.clipped_overlap_apply(bids, cur2, self.ref2) if len(bids) else 0
        return _State(state.indices + (j,), state.selected | {j}, cur1, cur2,
                      state.ov1 + d1, state.ov2 + d2,
                      state.length + len(self.sent_ids[j]),
                      self.sent_last[j], score)


def _check_doc(doc: Document):
    if not doc.sentences or not doc.gold_summary:
        raise ValueError("document needs at least one sentence and a gold summary")


def _finish(doc: Document, indices: tuple[int, ...]) -> Episode:
    extracted = [doc.sentences[i] for i in indices]
    return Episode(indices, rouge.episode_reward(extracted, doc.gold_summary).value)


def build_episode_set(doc: Document, config: OracleConfig) -> list[Episode]:
    """All terminal selections reachable under the branching search,
    as episodes sorted by reward descending."""
    _check_doc(doc)
    scorer = _DocScorer(doc)
    n = len(doc.sentences)
    terminals: list[tuple[int, ...]] = []
    layer = [scorer.empty_state()]
    while layer:
        children: dict[frozenset, _State] = {}
        for state in layer:
            if len(state.indices) >= config.max_len:
                terminals.append(state.indices)
                continue
            cands = []
            for j in range(n):
                if j in state.selected:
                    continue
                score = scorer.eval_add(state, j)
                if score - state.score > config.min_gain:
                    cands.append((state.score - score, j, score))
            if not cands:
                terminals.append(state.indices)
                continue
            cands.sort()
            for _, j, score in cands[:config.branch]:
                key = state.selected | {j}
                if key not in children:
                    children[key] = scorer.apply_add(state, j, score)
        layer = list(children.values())
        if config.beam_cap is not None and len(layer) > config.beam_cap:
            layer.sort(key=lambda s: (-s.score, s.indices))
            layer = layer[: config.beam_cap]
    episodes = [_finish(doc, idx) for idx in terminals]
    episodes.sort(key=lambda e: (-e.reward, e.indices))
    return episodes


def greedy_oracle_summary(doc: Document, max_len: int) -> Episode:
    """Plain sequential greedy (branch 1), written against the scoring module
    directly; doubles as an independent cross-check of the branching search."""
    _check_doc(doc)
    chosen: list[int] = []
    current: list[Sequence[str]] = []
    while len(chosen) < max_len:
        best_j, best_gain = None, 0.0
        for j in range(len(doc.sentences)):
            if j in chosen:
                continue
            gain = rouge.mean_r12_gain(current, doc.sentences[j], doc.gold_summary)
            if gain > best_gain:
                best_j, best_gain = j, gain
        if best_j is None:
            break
        chosen.append(best_j)
        current.append(doc.sentences[best_j])
    return _finish(doc, tuple(chosen))


def sample_training_episode(episodes: Sequence[Episode],
                            rng: np.random.Generator) -> Episode:
    """Uniform episode choice, then a uniform permutation of its indices.

    The stored reward travels with the episode; input order is augmentation
    only, so the reward is deliberately not recomputed.
    """
    if not episodes:
        raise ValueError("episode pool is empty")
    ep = episodes[int(rng.integers(len(episodes)))]
    perm = rng.permutation(len(ep.indices))
    return Episode(tuple(ep.indices[int(i)] for i in perm), ep.reward)


# ------------------------------------------------------------- cache files

def save_episode_cache(path, items):
    """Write {"id", "episodes"} records, one document per line.

    items: mapping of doc_id to episode list, or an iterable of such pairs.
    """
    if hasattr(items, "items"):
        items = items.items()
    with open(path, "w", encoding="utf-8") as fh:
        for doc_id, episodes in items:
            rec = {"id": doc_id,
                   "episodes": [{"indices": list(e.indices), "reward": e.reward}
                                for e in episodes]}
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_episode_cache(path) -> dict[str, list[Episode]]:
    out: dict[str, list[Episode]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            out[rec["id"]] = [Episode(tuple(e["indices"]), float(e["reward"]))
                              for e in rec["episodes"]]
    return out
