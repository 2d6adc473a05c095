"""Blinded A/B evaluation service with an append-only event log.

State lives in memory; every mutation is appended to a JSONL event log and
replayed on construction, so a restarted service resumes exactly where it
left off.  Which summary is shown as "a" or "b" is decided by a seeded coin
flip at session creation and never leaves the server until aggregation.
"""

import json
import os
import threading
import time
from typing import Dict, List, Optional, Sequence

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from . import corpus
from .experiments import wilcoxon_signed_rank

CRITERIA = ("overall", "coverage", "non_redundancy")
SIDES = ("a", "b")
HIGHLIGHT_DIM = 32


class EvalServiceError(ValueError):
    def __init__(self, message: str, status: int = 400):
        super().__init__(message)
        self.status = status


class _Pair:
    __slots__ = ("pair_id", "doc_id", "reference", "summaries", "mapping")

    def __init__(self, pair_id, doc_id, reference, summaries, mapping):
        self.pair_id = pair_id
        self.doc_id = doc_id
        self.reference = list(reference)
        self.summaries = {s: list(v) for s, v in summaries.items()}
        self.mapping = dict(mapping)          # side -> model name, server-side only

    def public(self) -> dict:
        return {"pair_id": self.pair_id, "doc_id": self.doc_id,
                "reference": self.reference,
                "summary_a": self.summaries["a"],
                "summary_b": self.summaries["b"]}


class _Session:
    def __init__(self, session_id, model_x, model_y, seed, pairs, sources):
        self.session_id = session_id
        self.model_x = model_x
        self.model_y = model_y
        self.seed = seed
        self.pairs: list[_Pair] = pairs
        self.sources = sources                # doc_id -> source sentences
        self.records: dict[tuple[int, str], dict] = {}
        self.audit: list[dict] = []
        self._embed_cache = None

    def _embedding(self):
        # lazy vocabulary over everything an evaluator can see or type about
        if self._embed_cache is None:
            docs = []
            for p in self.pairs:
                body = [corpus.tokenize(s) for s in
                        p.reference + p.summaries["a"] + p.summaries["b"]
                        + self.sources.get(p.doc_id, [])]
                body = [t for t in body if t]
                docs.append(corpus.Document(p.doc_id, body or [["x"]], [], []))
            vocab = corpus.build_vocabulary(docs)
            table = corpus.random_embedding_table(vocab, dim=HIGHLIGHT_DIM,
                                                  seed=self.seed)
            self._embed_cache = (vocab, table)
        return self._embed_cache


def _mean_vector(tokens: Sequence[str], vocab, table) -> np.ndarray:
    # unknown words map to the UNK row; padding never appears in real text
    if not tokens:
        return np.zeros(table.dim, dtype=np.float64)
    ids = [vocab.index(t) for t in tokens]
    return table.vectors[ids].astype(np.float64).mean(axis=0)


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


class EvaluationService:
    def __init__(self, log_path: str | None = None):
        self.sessions: dict[str, _Session] = {}
        self.documents: dict[str, list[str]] = {}
        self._log_path = log_path
        self._lock = threading.Lock()
        self._replaying = False
        if log_path and os.path.exists(log_path):
            self._replay(log_path)

    # ------------------------------------------------------------- log

    def _append(self, event: dict):
        if self._log_path and not self._replaying:
            with open(self._log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event) + "\n")

    def _replay(self, path: str):
        self._replaying = True
        try:
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    ev = json.loads(line)
                    if ev["event"] == "session":
                        self._restore_session(ev)
                    elif ev["event"] == "ranking":
                        self.submit_ranking(ev["session_id"], ev["evaluator"],
                                            ev["pair_id"], ev.get("ranks"),
                                            skipped=ev.get("skipped", False),
                                            note=ev.get("note", ""))
        finally:
            self._replaying = False

    def _restore_session(self, ev: dict):
        pairs = [_Pair(p["pair_id"], p["doc_id"], p["reference"],
                       {"a": p["summary_a"], "b": p["summary_b"]},
                       p["mapping"]) for p in ev["pairs"]]
        sess = _Session(ev["session_id"], ev["model_x"], ev["model_y"],
                        ev["seed"], pairs, ev["sources"])
        self.sessions[sess.session_id] = sess
        self.documents.update(ev["sources"])

    # -------------------------------------------------------- sessions

    def create_session(self, model_x: str, model_y: str,
                       outputs_x: dict[str, list[str]],
                       outputs_y: dict[str, list[str]],
                       docs: dict[str, dict], seed: int = 0) -> str:
        with self._lock:
            ids_x, ids_y, ids_d = set(outputs_x), set(outputs_y), set(docs)
            if ids_x != ids_y or ids_x != ids_d:
                missing = (ids_x ^ ids_y) | (ids_x ^ ids_d)
                raise EvalServiceError(
                    f"document ids do not line up across inputs: {sorted(missing)}")
            if not ids_x:
                raise EvalServiceError("session needs at least one document")
            for did, payload in docs.items():
                if "reference" not in payload:
                    raise EvalServiceError(f"document '{did}' lacks a reference")
            rng = np.random.default_rng(seed)
            pairs = []
            for k, did in enumerate(sorted(ids_d)):
                x_is_a = bool(rng.random() < 0.5)
                mapping = {"a": model_x, "b": model_y} if x_is_a else \
                          {"a": model_y, "b": model_x}
                summaries = {"a": outputs_x[did] if x_is_a else outputs_y[did],
                             "b": outputs_y[did] if x_is_a else outputs_x[did]}
                pairs.append(_Pair(k, did, docs[did]["reference"], summaries,
                                   mapping))
            sid = f"s{len(self.sessions) + 1:04d}"
            sources = {did: list(docs[did].get("source", []))
                       for did in sorted(ids_d)}
            sess = _Session(sid, model_x, model_y, seed, pairs, sources)
            self.sessions[sid] = sess
            self.documents.update(sources)
            self._append({"event": "session", "session_id": sid,
                          "model_x": model_x, "model_y": model_y, "seed": seed,
                          "sources": sources,
                          "pairs": [dict(p.public(), mapping=p.mapping)
                                    for p in pairs]})
            return sid

    def _session(self, sid: str) -> _Session:
        sess = self.sessions.get(sid)
        if sess is None:
            raise EvalServiceError(f"unknown session '{sid}'", status=404)
        return sess

    def next_pair(self, sid: str, evaluator: str) -> dict:
        if not evaluator:
            raise EvalServiceError("evaluator name must be non-empty")
        sess = self._session(sid)
        for p in sess.pairs:
            if (p.pair_id, evaluator) not in sess.records:
                done = sum((q.pair_id, evaluator) in sess.records
                           for q in sess.pairs)
                return dict(p.public(), done=False,
                            remaining=len(sess.pairs) - done)
        return {"done": True, "remaining": 0}

    # -------------------------------------------------------- rankings

    def submit_ranking(self, sid: str, evaluator: str, pair_id: int,
                       ranks: dict | None, skipped: bool = False,
                       note: str = "") -> dict:
        with self._lock:
            sess = self._session(sid)
            if not evaluator:
                raise EvalServiceError("evaluator name must be non-empty")
            if not any(p.pair_id == pair_id for p in sess.pairs):
                raise EvalServiceError(f"unknown pair_id {pair_id}", status=404)
            if skipped:
                ranks = None
            else:
                ranks = self._validate_ranks(ranks)
            key = (pair_id, evaluator)
            replaced = key in sess.records
            record = {"pair_id": pair_id, "evaluator": evaluator,
                      "skipped": skipped, "ranks": ranks,
                      "ts": time.time()}
            sess.records[key] = record
            audit = dict(record)
            if replaced:
                audit["note"] = (note + " " if note else "") + "(resubmission)"
            elif note:
                audit["note"] = note
            sess.audit.append(audit)
            self._append({"event": "ranking", "session_id": sid,
                          "evaluator": evaluator, "pair_id": pair_id,
                          "skipped": skipped, "ranks": ranks, "note": note})
            return {"replaced": replaced}

    @staticmethod
    def _validate_ranks(ranks) -> dict:
        if not isinstance(ranks, dict):
            raise EvalServiceError("ranks must be an object keyed by criterion")
        missing = [c for c in CRITERIA if c not in ranks]
        if missing:
            raise EvalServiceError(f"missing criteria: {missing}")
        extra = [c for c in ranks if c not in CRITERIA]
        if extra:
            raise EvalServiceError(f"unknown criteria: {extra}")
        clean = {}
        for crit in CRITERIA:
            pair = tuple(ranks[crit])
            if len(pair) != 2 or any(r not in (1, 2) for r in pair):
                raise EvalServiceError(
                    f"criterion '{crit}': ranks must be two values from {{1, 2}}")
            if pair == (2, 2):
                raise EvalServiceError(
                    f"criterion '{crit}': (2, 2) is not a valid ranking; "
                    "ties are expressed as (1, 1)")
            clean[crit] = list(pair)
        return clean

    # -------------------------------------------------------- highlight

    def highlight(self, sid: str, pair_id: int, query: str) -> dict:
        sess = self._session(sid)
        if not query or not query.strip():
            raise EvalServiceError("query must be non-empty")
        pair = next((p for p in sess.pairs if p.pair_id == pair_id), None)
        if pair is None:
            raise EvalServiceError(f"unknown pair_id {pair_id}", status=404)
        vocab, table = sess._embedding()
        q = _mean_vector(corpus.tokenize(query), vocab, table)
        out = {}
        for side in SIDES:
            out[side] = [
                _cosine(q, _mean_vector(corpus.tokenize(s), vocab, table))
                for s in pair.summaries[side]]
        return out

    # -------------------------------------------------------- aggregate

    def aggregate(self, sid: str) -> dict:
        sess = self._session(sid)
        ranked = [r for r in sess.records.values()
                  if not r["skipped"] and r["ranks"] is not None]
        skipped = [r for r in sess.records.values() if r["skipped"]]
        result = {"session_id": sid, "model_x": sess.model_x,
                  "model_y": sess.model_y, "n_pairs": len(sess.pairs),
                  "n_ranked": len(ranked), "n_skipped": len(skipped),
                  "empty": not ranked, "criteria": {}, "length": {}}
        by_pair = {p.pair_id: p for p in sess.pairs}
        if ranked:
            for crit in CRITERIA:
                xs, ys = [], []
                for r in ranked:
                    mapping = by_pair[r["pair_id"]].mapping
                    side_of = {mapping["a"]: 0, mapping["b"]: 1}
                    ra, rb = r["ranks"][crit]
                    xs.append((ra, rb)[side_of[sess.model_x]])
                    ys.append((ra, rb)[side_of[sess.model_y]])
                wil = wilcoxon_signed_rank(list(zip(xs, ys)))
                result["criteria"][crit] = {
                    "mean_rank": {sess.model_x: float(np.mean(xs)),
                                  sess.model_y: float(np.mean(ys))},
                    "n": wil.n, "p_value": wil.p_value,
                    "method": wil.method, "degenerate": wil.degenerate}
        for model in (sess.model_x, sess.model_y):
            sents, words = [], []
            for p in sess.pairs:
                side = "a" if p.mapping["a"] == model else "b"
                summ = p.summaries[side]
                sents.append(len(summ))
                words.append(sum(
                    len(corpus.tokenize(s)) for s in summ))
            result["length"][model] = {
                "mean_sentences": float(np.mean(sents)) if sents else 0.0,
                "mean_words": float(np.mean(words)) if words else 0.0}
        return result

    def get_document(self, doc_id: str) -> dict:
        if doc_id not in self.documents:
            raise EvalServiceError(f"unknown document '{doc_id}'", status=404)
        return {"id": doc_id, "source": self.documents[doc_id]}


# ------------------------------------------------------------------ HTTP

class DocPayload(BaseModel):
    reference: List[str]
    source: List[str] = Field(default_factory=list)


class CreateSessionRequest(BaseModel):
    model_x: str
    model_y: str
    outputs_x: Dict[str, List[str]]
    outputs_y: Dict[str, List[str]]
    docs: Dict[str, DocPayload]
    seed: int = 0


class RankingRequest(BaseModel):
    evaluator: str
    pair_id: int
    skipped: bool = False
    ranks: Optional[Dict[str, List[int]]] = None
    note: str = ""


class HighlightRequest(BaseModel):
    pair_id: int
    query: str


def create_app(service: EvaluationService) -> FastAPI:
    app = FastAPI(title="summary evaluation service")

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except EvalServiceError as e:
            raise HTTPException(status_code=e.status, detail=str(e))

    @app.post("/session")
    def post_session(req: CreateSessionRequest):
        sid = guard(service.create_session, req.model_x, req.model_y,
                    req.outputs_x, req.outputs_y,
                    {k: v.model_dump() for k, v in req.docs.items()}, req.seed)
        return {"session_id": sid, "n_pairs": len(service.sessions[sid].pairs)}

    @app.get("/session/{sid}/next")
    def get_next(sid: str, evaluator: str = Query(...)):
        return guard(service.next_pair, sid, evaluator)

    @app.post("/session/{sid}/ranking")
    def post_ranking(sid: str, req: RankingRequest):
        return guard(service.submit_ranking, sid, req.evaluator, req.pair_id,
                     req.ranks, skipped=req.skipped, note=req.note)

    @app.post("/session/{sid}/highlight")
    def post_highlight(sid: str, req: HighlightRequest):
        return guard(service.highlight, sid, req.pair_id, req.query)

    @app.get("/session/{sid}/aggregate")
    def get_aggregate(sid: str):
        return guard(service.aggregate, sid)

    @app.get("/document/{doc_id}")
    def get_document(doc_id: str):
        return guard(service.get_document, doc_id)

    return app
