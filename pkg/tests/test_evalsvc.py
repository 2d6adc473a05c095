"""Blinded pairwise evaluation service: session lifecycle, ranking
validation, highlighting, aggregation, persistence, and the HTTP surface."""

from __future__ import annotations

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from histsum import corpus
from histsum.evalsvc import (CRITERIA, EvalServiceError, EvaluationService,
                             create_app)
from histsum.experiments import wilcoxon_signed_rank

MODEL_X = "rho-model-7781"
MODEL_Y = "tau-model-9943"


def session_inputs(n_docs=3, identical=False):
    outputs_x, outputs_y, docs = {}, {}, {}
    for i in range(n_docs):
        did = f"doc{i}"
        x = [f"alpha sentence {i} one", f"beta sentence {i} two"]
        y = list(x) if identical else [f"gamma line {i} uno"]
        outputs_x[did] = x
        outputs_y[did] = y
        docs[did] = {"reference": [f"reference text {i}"],
                     "source": [f"source body {i} first",
                                f"source body {i} second"]}
    return outputs_x, outputs_y, docs


def make_session(svc, n_docs=3, seed=0, identical=False):
    ox, oy, docs = session_inputs(n_docs, identical)
    return svc.create_session(MODEL_X, MODEL_Y, ox, oy, docs, seed=seed)


def rank_all_x_first(svc, sid, evaluator="e1"):
    """Submit rankings putting MODEL_X first on every criterion."""
    sess = svc.sessions[sid]
    for p in sess.pairs:
        x_side_first = 1 if p.mapping["a"] == MODEL_X else 2
        ranks = {c: [x_side_first, 3 - x_side_first] for c in CRITERIA}
        svc.submit_ranking(sid, evaluator, p.pair_id, ranks)


# ---------------------------------------------------------------- sessions

class TestCreateSession:
    def test_id_mismatch_rejected(self):
        svc = EvaluationService()
        ox, oy, docs = session_inputs(2)
        del oy["doc1"]
        with pytest.raises(EvalServiceError, match="doc1"):
            svc.create_session(MODEL_X, MODEL_Y, ox, oy, docs)

    def test_empty_session_rejected(self):
        svc = EvaluationService()
        with pytest.raises(EvalServiceError, match="at least one"):
            svc.create_session(MODEL_X, MODEL_Y, {}, {}, {})

    def test_missing_reference_named(self):
        svc = EvaluationService()
        ox, oy, docs = session_inputs(2)
        del docs["doc0"]["reference"]
        with pytest.raises(EvalServiceError, match="doc0"):
            svc.create_session(MODEL_X, MODEL_Y, ox, oy, docs)

    def test_one_pair_per_document(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=5)
        sess = svc.sessions[sid]
        assert [p.pair_id for p in sess.pairs] == list(range(5))
        assert [p.doc_id for p in sess.pairs] == sorted(f"doc{i}"
                                                        for i in range(5))

    def test_sequential_session_ids(self):
        svc = EvaluationService()
        assert make_session(svc) == "s0001"
        assert make_session(svc) == "s0002"

    def test_same_seed_same_assignment(self):
        svc = EvaluationService()
        a = svc.sessions[make_session(svc, n_docs=6, seed=42)]
        b = svc.sessions[make_session(svc, n_docs=6, seed=42)]
        assert [p.mapping for p in a.pairs] == [p.mapping for p in b.pairs]

    def test_sides_cover_both_models(self):
        svc = EvaluationService()
        sess = svc.sessions[make_session(svc, n_docs=6, seed=1)]
        for p in sess.pairs:
            assert set(p.mapping.values()) == {MODEL_X, MODEL_Y}
            assert p.summaries["a"] != p.summaries["b"]

    def test_assignment_unbiased_over_seeds(self):
        svc = EvaluationService()
        ox, oy, docs = session_inputs(1)
        x_on_a = 0
        for seed in range(1000):
            sid = svc.create_session(MODEL_X, MODEL_Y, ox, oy, docs, seed=seed)
            if svc.sessions[sid].pairs[0].mapping["a"] == MODEL_X:
                x_on_a += 1
        assert 0.45 <= x_on_a / 1000 <= 0.55

    def test_summaries_follow_the_flip(self):
        svc = EvaluationService()
        ox, oy, docs = session_inputs(4)
        sid = svc.create_session(MODEL_X, MODEL_Y, ox, oy, docs, seed=3)
        for p in svc.sessions[sid].pairs:
            expect = {MODEL_X: ox[p.doc_id], MODEL_Y: oy[p.doc_id]}
            assert p.summaries["a"] == expect[p.mapping["a"]]
            assert p.summaries["b"] == expect[p.mapping["b"]]


class TestNextPair:
    def test_walks_pairs_in_order(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=3)
        first = svc.next_pair(sid, "e1")
        assert first["pair_id"] == 0
        assert first["remaining"] == 3
        ranks = {c: [1, 2] for c in CRITERIA}
        svc.submit_ranking(sid, "e1", 0, ranks)
        second = svc.next_pair(sid, "e1")
        assert second["pair_id"] == 1
        assert second["remaining"] == 2

    def test_skip_also_advances(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=2)
        svc.submit_ranking(sid, "e1", 0, None, skipped=True)
        assert svc.next_pair(sid, "e1")["pair_id"] == 1

    def test_end_marker_when_exhausted(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=1)
        svc.submit_ranking(sid, "e1", 0, {c: [1, 2] for c in CRITERIA})
        assert svc.next_pair(sid, "e1") == {"done": True, "remaining": 0}

    def test_evaluators_progress_independently(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=2)
        svc.submit_ranking(sid, "e1", 0, {c: [1, 2] for c in CRITERIA})
        assert svc.next_pair(sid, "e1")["pair_id"] == 1
        assert svc.next_pair(sid, "e2")["pair_id"] == 0

    def test_never_returns_submitted_pair(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=4)
        done = set()
        while True:
            nxt = svc.next_pair(sid, "e1")
            if nxt.get("done"):
                break
            assert nxt["pair_id"] not in done
            done.add(nxt["pair_id"])
            svc.submit_ranking(sid, "e1", nxt["pair_id"],
                               {c: [2, 1] for c in CRITERIA})
        assert done == {0, 1, 2, 3}

    def test_unknown_session(self):
        svc = EvaluationService()
        with pytest.raises(EvalServiceError, match="unknown session") as ei:
            svc.next_pair("nope", "e1")
        assert ei.value.status == 404

    def test_empty_evaluator_rejected(self):
        svc = EvaluationService()
        sid = make_session(svc)
        with pytest.raises(EvalServiceError, match="evaluator"):
            svc.next_pair(sid, "")

    def test_no_mapping_in_payload(self):
        svc = EvaluationService()
        sid = make_session(svc)
        payload = svc.next_pair(sid, "e1")
        blob = json.dumps(payload)
        assert MODEL_X not in blob and MODEL_Y not in blob
        assert "mapping" not in payload


# ---------------------------------------------------------------- rankings

class TestSubmitRanking:
    def test_valid_record_stored(self):
        svc = EvaluationService()
        sid = make_session(svc)
        out = svc.submit_ranking(sid, "e1", 0, {c: [1, 2] for c in CRITERIA})
        assert out == {"replaced": False}
        rec = svc.sessions[sid].records[(0, "e1")]
        assert rec["ranks"] == {c: [1, 2] for c in CRITERIA}
        assert rec["skipped"] is False

    def test_resubmission_replaces_with_audit_note(self):
        svc = EvaluationService()
        sid = make_session(svc)
        svc.submit_ranking(sid, "e1", 0, {c: [1, 2] for c in CRITERIA})
        out = svc.submit_ranking(sid, "e1", 0, {c: [2, 1] for c in CRITERIA})
        assert out == {"replaced": True}
        sess = svc.sessions[sid]
        assert len([k for k in sess.records if k == (0, "e1")]) == 1
        assert sess.records[(0, "e1")]["ranks"]["overall"] == [2, 1]
        assert len(sess.audit) == 2
        assert sess.audit[1]["note"].endswith("(resubmission)")

    def test_double_second_place_rejected_naming_criterion(self):
        svc = EvaluationService()
        sid = make_session(svc)
        ranks = {c: [1, 2] for c in CRITERIA}
        ranks["coverage"] = [2, 2]
        with pytest.raises(EvalServiceError, match="coverage"):
            svc.submit_ranking(sid, "e1", 0, ranks)

    def test_shared_first_place_allowed(self):
        svc = EvaluationService()
        sid = make_session(svc)
        svc.submit_ranking(sid, "e1", 0, {c: [1, 1] for c in CRITERIA})
        assert svc.sessions[sid].records[(0, "e1")]["ranks"]["overall"] == [1, 1]

    def test_missing_and_unknown_criteria(self):
        svc = EvaluationService()
        sid = make_session(svc)
        with pytest.raises(EvalServiceError, match="missing criteria.*overall"):
            svc.submit_ranking(sid, "e1", 0, {"coverage": [1, 2],
                                              "non_redundancy": [1, 2]})
        bad = {c: [1, 2] for c in CRITERIA}
        bad["fluency"] = [1, 2]
        with pytest.raises(EvalServiceError, match="unknown criteria.*fluency"):
            svc.submit_ranking(sid, "e1", 0, bad)

    @pytest.mark.parametrize("pair", [[1], [1, 2, 1], [0, 1], [1, 3]])
    def test_malformed_rank_values(self, pair):
        svc = EvaluationService()
        sid = make_session(svc)
        ranks = {c: [1, 2] for c in CRITERIA}
        ranks["overall"] = pair
        with pytest.raises(EvalServiceError, match="overall"):
            svc.submit_ranking(sid, "e1", 0, ranks)

    def test_unknown_pair(self):
        svc = EvaluationService()
        sid = make_session(svc)
        with pytest.raises(EvalServiceError, match="pair_id 99") as ei:
            svc.submit_ranking(sid, "e1", 99, {c: [1, 2] for c in CRITERIA})
        assert ei.value.status == 404

    def test_skip_drops_ranks(self):
        svc = EvaluationService()
        sid = make_session(svc)
        svc.submit_ranking(sid, "e1", 0, {c: [1, 2] for c in CRITERIA},
                           skipped=True)
        rec = svc.sessions[sid].records[(0, "e1")]
        assert rec["skipped"] is True
        assert rec["ranks"] is None


# --------------------------------------------------------------- highlight

class TestHighlight:
    def _session(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=2, seed=5)
        return svc, sid

    def test_query_equal_to_sentence_scores_one(self):
        svc, sid = self._session()
        pair = svc.sessions[sid].pairs[0]
        query = pair.summaries["a"][0]
        out = svc.highlight(sid, 0, query)
        assert out["a"][0] == pytest.approx(1.0, rel=1e-12)

    def test_scores_finite_and_bounded(self):
        svc, sid = self._session()
        out = svc.highlight(sid, 0, "beta text about alpha things")
        for side in ("a", "b"):
            for v in out[side]:
                assert np.isfinite(v)
                assert -1.0 - 1e-12 <= v <= 1.0 + 1e-12

    def test_matches_mean_vector_cosine(self):
        # independent recomputation of the documented formula: sentence
        # vector = mean of word vectors, score = cosine against the query
        svc, sid = self._session()
        sess = svc.sessions[sid]
        vocab, table = sess._embedding()

        def mean_vec(text):
            toks = corpus.tokenize(text)
            rows = np.array([table.vectors[vocab.index(t)] for t in toks],
                            dtype=np.float64)
            return rows.mean(axis=0)

        query = "source body text"
        out = svc.highlight(sid, 0, query)
        q = mean_vec(query)
        for side in ("a", "b"):
            for j, sent in enumerate(sess.pairs[0].summaries[side]):
                v = mean_vec(sent)
                expect = float(np.dot(q, v) /
                               (np.linalg.norm(q) * np.linalg.norm(v)))
                assert out[side][j] == pytest.approx(expect, abs=1e-12)

    def test_tokenless_sentence_scores_zero(self):
        svc = EvaluationService()
        ox, oy, docs = session_inputs(1)
        ox["doc0"] = ["real first sentence", ""]
        sid = svc.create_session(MODEL_X, MODEL_Y, ox, oy, docs, seed=7)
        pair = svc.sessions[sid].pairs[0]
        side = "a" if pair.mapping["a"] == MODEL_X else "b"
        out = svc.highlight(sid, 0, "real first sentence")
        assert out[side][1] == 0.0

    def test_empty_query_rejected(self):
        svc, sid = self._session()
        for q in ("", "   "):
            with pytest.raises(EvalServiceError, match="query"):
                svc.highlight(sid, 0, q)

    def test_unknown_pair(self):
        svc, sid = self._session()
        with pytest.raises(EvalServiceError, match="pair_id 9") as ei:
            svc.highlight(sid, 9, "anything")
        assert ei.value.status == 404


# --------------------------------------------------------------- aggregate

class TestAggregate:
    def test_unanimous_first_place(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=4, seed=2)
        rank_all_x_first(svc, sid)
        agg = svc.aggregate(sid)
        assert agg["empty"] is False
        assert agg["n_ranked"] == 4 and agg["n_skipped"] == 0
        for crit in CRITERIA:
            means = agg["criteria"][crit]["mean_rank"]
            assert means[MODEL_X] == 1.0
            assert means[MODEL_Y] == 2.0

    def test_identical_summaries_tie_to_one(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=3, identical=True)
        for p in svc.sessions[sid].pairs:
            svc.submit_ranking(sid, "e1", p.pair_id,
                               {c: [1, 1] for c in CRITERIA})
        agg = svc.aggregate(sid)
        for crit in CRITERIA:
            means = agg["criteria"][crit]["mean_rank"]
            assert means[MODEL_X] == 1.0 and means[MODEL_Y] == 1.0
            assert agg["criteria"][crit]["degenerate"] is True

    def test_means_within_rank_bounds(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=6, seed=9)
        rng = np.random.default_rng(0)
        for p in svc.sessions[sid].pairs:
            ranks = {c: [[1, 2], [2, 1], [1, 1]][rng.integers(3)]
                     for c in CRITERIA}
            svc.submit_ranking(sid, "e1", p.pair_id, ranks)
        agg = svc.aggregate(sid)
        for crit in CRITERIA:
            for model in (MODEL_X, MODEL_Y):
                assert 1.0 <= agg["criteria"][crit]["mean_rank"][model] <= 2.0

    def test_significance_matches_direct_test(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=8, seed=4)
        rank_all_x_first(svc, sid)
        agg = svc.aggregate(sid)
        direct = wilcoxon_signed_rank([(1, 2)] * 8)
        for crit in CRITERIA:
            assert agg["criteria"][crit]["p_value"] == direct.p_value
            assert agg["criteria"][crit]["n"] == 8
            assert agg["criteria"][crit]["method"] == direct.method

    def test_skips_excluded_from_means(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=3, seed=2)
        rank_all_x_first(svc, sid)
        svc.submit_ranking(sid, "e1", 1, None, skipped=True)   # overwrite one
        agg = svc.aggregate(sid)
        assert agg["n_ranked"] == 2 and agg["n_skipped"] == 1
        assert agg["criteria"]["overall"]["mean_rank"][MODEL_X] == 1.0

    def test_no_records_sets_empty_flag(self):
        svc = EvaluationService()
        sid = make_session(svc)
        agg = svc.aggregate(sid)
        assert agg["empty"] is True
        assert agg["criteria"] == {}
        assert agg["n_ranked"] == 0

    def test_all_skipped_is_empty(self):
        svc = EvaluationService()
        sid = make_session(svc, n_docs=2)
        for pid in (0, 1):
            svc.submit_ranking(sid, "e1", pid, None, skipped=True)
        agg = svc.aggregate(sid)
        assert agg["empty"] is True
        assert agg["n_skipped"] == 2

    def test_length_stats_follow_models_not_sides(self):
        svc = EvaluationService()
        ox, oy, docs = session_inputs(4)
        sid = svc.create_session(MODEL_X, MODEL_Y, ox, oy, docs, seed=6)
        agg = svc.aggregate(sid)
        for model, outputs in ((MODEL_X, ox), (MODEL_Y, oy)):
            sents = [len(v) for v in outputs.values()]
            words = [sum(len(corpus.tokenize(s)) for s in v)
                     for v in outputs.values()]
            assert agg["length"][model]["mean_sentences"] == pytest.approx(
                np.mean(sents))
            assert agg["length"][model]["mean_words"] == pytest.approx(
                np.mean(words))


# ------------------------------------------------------------- persistence

class TestPersistence:
    def _drive(self, svc):
        sid = make_session(svc, n_docs=4, seed=3)
        svc.submit_ranking(sid, "e1", 0, {c: [1, 2] for c in CRITERIA})
        svc.submit_ranking(sid, "e1", 1, None, skipped=True, note="unsure")
        svc.submit_ranking(sid, "e1", 2, {c: [2, 1] for c in CRITERIA})
        svc.submit_ranking(sid, "e1", 2, {c: [1, 1] for c in CRITERIA})
        svc.submit_ranking(sid, "e2", 0, {c: [2, 1] for c in CRITERIA})
        return sid

    @staticmethod
    def _essence(rec):
        return {k: rec[k] for k in ("pair_id", "evaluator", "skipped", "ranks")}

    def test_restart_replays_every_record(self, tmp_path):
        log = str(tmp_path / "events.jsonl")
        first = EvaluationService(log_path=log)
        sid = self._drive(first)
        second = EvaluationService(log_path=log)
        assert set(second.sessions) == {sid}
        a, b = first.sessions[sid], second.sessions[sid]
        assert set(a.records) == set(b.records)
        for key in a.records:
            assert self._essence(a.records[key]) == self._essence(b.records[key])
        assert [p.mapping for p in a.pairs] == [p.mapping for p in b.pairs]
        assert [p.public() for p in a.pairs] == [p.public() for p in b.pairs]
        assert second.aggregate(sid) == first.aggregate(sid)
        assert second.next_pair(sid, "e1") == first.next_pair(sid, "e1")

    def test_restart_preserves_audit_trail(self, tmp_path):
        log = str(tmp_path / "events.jsonl")
        first = EvaluationService(log_path=log)
        sid = self._drive(first)
        second = EvaluationService(log_path=log)
        audit_a = [self._essence(r) for r in first.sessions[sid].audit]
        audit_b = [self._essence(r) for r in second.sessions[sid].audit]
        assert audit_a == audit_b
        assert second.sessions[sid].audit[3]["note"].endswith("(resubmission)")

    def test_new_work_after_restart_appends(self, tmp_path):
        log = str(tmp_path / "events.jsonl")
        first = EvaluationService(log_path=log)
        sid = self._drive(first)
        second = EvaluationService(log_path=log)
        second.submit_ranking(sid, "e2", 1, {c: [1, 2] for c in CRITERIA})
        assert make_session(second) == "s0002"
        third = EvaluationService(log_path=log)
        assert (1, "e2") in third.sessions[sid].records
        assert set(third.sessions) == {sid, "s0002"}

    def test_log_is_jsonl_of_events(self, tmp_path):
        log = str(tmp_path / "events.jsonl")
        svc = EvaluationService(log_path=log)
        self._drive(svc)
        events = [json.loads(l) for l in open(log)]
        assert events[0]["event"] == "session"
        assert all(e["event"] == "ranking" for e in events[1:])
        assert len(events) == 6


# ------------------------------------------------------------ HTTP surface

class TestHttpApi:
    def _client(self, tmp_path=None):
        svc = EvaluationService(log_path=str(tmp_path / "log.jsonl")
                                if tmp_path else None)
        return svc, TestClient(create_app(svc))

    def _create(self, client, n_docs=3, seed=0):
        ox, oy, docs = session_inputs(n_docs)
        resp = client.post("/session", json={
            "model_x": MODEL_X, "model_y": MODEL_Y,
            "outputs_x": ox, "outputs_y": oy, "docs": docs, "seed": seed})
        assert resp.status_code == 200
        return resp.json()

    def test_create_session(self):
        _, client = self._client()
        body = self._create(client, n_docs=4)
        assert body["session_id"] == "s0001"
        assert body["n_pairs"] == 4

    def test_create_mismatch_is_400(self):
        _, client = self._client()
        ox, oy, docs = session_inputs(2)
        del oy["doc0"]
        resp = client.post("/session", json={
            "model_x": MODEL_X, "model_y": MODEL_Y,
            "outputs_x": ox, "outputs_y": oy, "docs": docs})
        assert resp.status_code == 400
        assert "doc0" in resp.json()["detail"]

    def test_full_flow(self):
        svc, client = self._client()
        sid = self._create(client)["session_id"]
        nxt = client.get(f"/session/{sid}/next",
                         params={"evaluator": "e1"}).json()
        assert nxt["pair_id"] == 0
        assert {"reference", "summary_a", "summary_b"} <= set(nxt)
        ranks = {c: [1, 2] for c in CRITERIA}
        resp = client.post(f"/session/{sid}/ranking", json={
            "evaluator": "e1", "pair_id": 0, "ranks": ranks})
        assert resp.status_code == 200 and resp.json() == {"replaced": False}
        hl = client.post(f"/session/{sid}/highlight", json={
            "pair_id": 1, "query": "alpha sentence"})
        assert hl.status_code == 200
        assert set(hl.json()) == {"a", "b"}
        agg = client.get(f"/session/{sid}/aggregate").json()
        assert agg["n_ranked"] == 1

    def test_error_statuses(self):
        _, client = self._client()
        sid = self._create(client)["session_id"]
        assert client.get("/session/zz/next",
                          params={"evaluator": "e"}).status_code == 404
        bad = {c: [1, 2] for c in CRITERIA}
        bad["overall"] = [2, 2]
        resp = client.post(f"/session/{sid}/ranking", json={
            "evaluator": "e1", "pair_id": 0, "ranks": bad})
        assert resp.status_code == 400
        assert "overall" in resp.json()["detail"]
        resp = client.post(f"/session/{sid}/highlight", json={
            "pair_id": 0, "query": "  "})
        assert resp.status_code == 400
        assert client.get("/document/ghost").status_code == 404

    def test_document_endpoint(self):
        _, client = self._client()
        self._create(client)
        resp = client.get("/document/doc0")
        assert resp.status_code == 200
        assert resp.json() == {"id": "doc0",
                               "source": ["source body 0 first",
                                          "source body 0 second"]}

    def test_blinding_before_aggregation(self):
        _, client = self._client()
        sid = self._create(client)["session_id"]
        seen = [client.get(f"/session/{sid}/next",
                           params={"evaluator": "e1"}).text,
                client.post(f"/session/{sid}/ranking", json={
                    "evaluator": "e1", "pair_id": 0,
                    "ranks": {c: [1, 2] for c in CRITERIA}}).text,
                client.post(f"/session/{sid}/highlight", json={
                    "pair_id": 0, "query": "alpha"}).text,
                client.get("/document/doc0").text]
        for blob in seen:
            assert MODEL_X not in blob and MODEL_Y not in blob
        agg = client.get(f"/session/{sid}/aggregate").text
        assert MODEL_X in agg and MODEL_Y in agg

    def test_persistence_through_http(self, tmp_path):
        svc, client = self._client(tmp_path)
        sid = self._create(client)["session_id"]
        client.post(f"/session/{sid}/ranking", json={
            "evaluator": "e1", "pair_id": 0,
            "ranks": {c: [1, 1] for c in CRITERIA}})
        revived = EvaluationService(log_path=str(tmp_path / "log.jsonl"))
        assert (0, "e1") in revived.sessions[sid].records
