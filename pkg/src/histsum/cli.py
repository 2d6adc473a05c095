"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Every run resolves
its configuration as defaults < config file < explicit flags, echoes the
resolved mapping to stderr, and mirrors it to a sidecar JSON file next to the
primary output so results stay attributable.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import autodiff as ad
from . import corpus, experiments, inference, oracle, rouge, training
from .policy import VARIANTS, PolicyConfig, PolicyNetwork


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse normally exits 2 on bad usage; the contract here is exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


# ------------------------------------------------------------ config overlay

def _resolve(args, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    resolved = dict(defaults)
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        with open(cfg_path, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        unknown = [k for k in file_cfg if k not in defaults]
        if unknown:
            raise _UsageError(f"config file keys not recognized: {unknown}")
        resolved.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            resolved[key] = val
    return resolved


def _echo_config(resolved: dict, sidecar: str | None):
    line = json.dumps(resolved, sort_keys=True)
    print(f"config: {line}", file=sys.stderr)
    if sidecar:
        os.makedirs(os.path.dirname(os.path.abspath(sidecar)), exist_ok=True)
        with open(sidecar, "w", encoding="utf-8") as fh:
            fh.write(line + "\n")


def _load_docs(path, ccfg):
    result = corpus.load_dataset(path, ccfg)
    for line_no, msg in result.errors:
        print(f"warning: {path}:{line_no}: {msg}", file=sys.stderr)
    if not len(result):
        raise RuntimeError(f"no usable documents in {path}")
    return list(result)


def _load_pipeline(checkpoint):
    policy, _, vocab, emb, ccfg, _ = training.load_checkpoint(checkpoint)
    ccfg = ccfg or corpus.CorpusConfig()
    return policy, vocab, emb, ccfg


def _variant_docs(docs, policy, ccfg):
    # terminator-based checkpoints expect the synthetic final sentence
    if policy.config.variant == "stop_sentence":
        return experiments.append_stop_sentence(docs, ccfg.max_sentences)
    return docs


def _encode_all(docs, vocab, ccfg):
    return [(d, corpus.encode_document(d, vocab, ccfg)) for d in docs]


# ----------------------------------------------------------------- commands

ORACLE_DEFAULTS = {"branch": 2, "max_len": 7, "beam_cap": 16, "min_gain": 0.0,
                   "threads": 1, "max_tokens": 100, "max_sentences": 500}


def _episodes_for(doc_cfg):
    doc, cfg = doc_cfg
    return doc.id, oracle.build_episode_set(doc, cfg)


def cmd_oracle(args) -> int:
    r = _resolve(args, ORACLE_DEFAULTS)
    _echo_config(r, args.output + ".config.json")
    ccfg = corpus.CorpusConfig(max_tokens=r["max_tokens"],
                               max_sentences=r["max_sentences"])
    docs = _load_docs(args.input, ccfg)
    ocfg = oracle.OracleConfig(branch=r["branch"], max_len=r["max_len"],
                               beam_cap=r["beam_cap"] or None,
                               min_gain=r["min_gain"])
    if r["threads"] > 1:
        with ProcessPoolExecutor(max_workers=r["threads"]) as pool:
            pairs = list(pool.map(_episodes_for, [(d, ocfg) for d in docs]))
        cache = dict(pairs)
    else:
        cache = {d.id: oracle.build_episode_set(d, ocfg) for d in docs}
    oracle.save_episode_cache(args.output, cache)
    print(f"wrote episodes for {len(cache)} documents to {args.output}",
          file=sys.stderr)
    return 0


TRAIN_DEFAULTS = {"seed": 0, "batch": 16, "steps": 2000, "val_interval": 100,
                  "patience": 3, "lr": 1e-4, "weight_decay": 1e-6,
                  "dim": 64, "emb_dim": 64, "sent_layers": 2, "doc_layers": 2,
                  "hist_layers": 3, "heads": 8, "ff_dim": 256, "dropout": 0.1,
                  "pool_heads": 8, "variant": "full", "fixed_k": 0,
                  "p_thres": 0.6, "nmax": 7, "val_fraction": 0.1,
                  "max_tokens": 100, "max_sentences": 500, "precision": "float32"}


def cmd_train(args) -> int:
    r = _resolve(args, TRAIN_DEFAULTS)
    _echo_config(r, os.path.join(args.checkpoint, "resolved_config.json"))
    ccfg = corpus.CorpusConfig(max_tokens=r["max_tokens"],
                               max_sentences=r["max_sentences"])
    docs = _load_docs(args.input, ccfg)
    uses_terminator = r["variant"] == "stop_sentence"
    if uses_terminator:
        docs = experiments.append_stop_sentence(docs, ccfg.max_sentences)
    cache = oracle.load_episode_cache(args.episodes)
    vocab = corpus.build_vocabulary(docs)
    if args.embeddings:
        emb = corpus.load_embedding_table(args.embeddings, vocab,
                                          dim=r["emb_dim"], seed=r["seed"])
    else:
        emb = corpus.random_embedding_table(vocab, dim=r["emb_dim"],
                                            seed=r["seed"])
    pcfg = PolicyConfig(dim=r["dim"], sent_layers=r["sent_layers"],
                        doc_layers=r["doc_layers"], hist_layers=r["hist_layers"],
                        heads=r["heads"], ff_dim=r["ff_dim"],
                        dropout=r["dropout"], pool_heads=r["pool_heads"],
                        variant=r["variant"],
                        fixed_k=r["fixed_k"] or None)
    dtype = np.float32 if r["precision"] == "float32" else np.float64
    policy = PolicyNetwork(pcfg, ad.ParameterStore(seed=r["seed"], dtype=dtype),
                           emb)
    all_td = training.prepare_training_docs(
        docs, cache, vocab, ccfg, reserve_terminator_slot=uses_terminator)
    if args.val:
        val_docs = _load_docs(args.val, ccfg)
        if uses_terminator:
            val_docs = experiments.append_stop_sentence(val_docs, ccfg.max_sentences)
        val_td = training.prepare_training_docs(
            val_docs, {}, vocab, ccfg, reserve_terminator_slot=uses_terminator)
        train_td = all_td
    else:
        n_val = max(1, int(len(all_td) * r["val_fraction"]))
        val_td, train_td = all_td[:n_val], all_td[n_val:]
    tcfg = training.TrainerConfig(batch_size=r["batch"], max_steps=r["steps"],
                                  val_interval=r["val_interval"],
                                  patience=r["patience"], seed=r["seed"],
                                  precision=r["precision"], lr=r["lr"],
                                  weight_decay=r["weight_decay"])
    icfg = inference.InferenceConfig(p_thres=r["p_thres"],
                                     max_sentences=r["nmax"])
    log_path = args.log or os.path.join(args.checkpoint, "training_log.jsonl")
    os.makedirs(args.checkpoint, exist_ok=True)
    stats = training.run_training(policy, train_td, val_td, tcfg, icfg,
                                  checkpoint_dir=args.checkpoint, vocab=vocab,
                                  embeddings=emb, corpus_config=ccfg,
                                  log_path=log_path)
    if not stats.validations:
        # short runs never validated; keep the final parameters anyway
        training.save_checkpoint(args.checkpoint, policy, None, vocab, emb,
                                 corpus_config=ccfg)
    best = max(v for _, v in stats.validations) if stats.validations else None
    print(f"finished: {len(stats.losses)} steps, best validation {best}, "
          f"early stop {stats.stopped_early}", file=sys.stderr)
    return 0


INFER_DEFAULTS = {"p_thres": 0.6, "nmax": 7, "order": "document"}


def cmd_summarize(args) -> int:
    r = _resolve(args, INFER_DEFAULTS)
    _echo_config(r, args.output + ".config.json")
    policy, vocab, emb, ccfg = _load_pipeline(args.checkpoint)
    docs = _variant_docs(_load_docs(args.input, ccfg), policy, ccfg)
    icfg = inference.InferenceConfig(p_thres=r["p_thres"], max_sentences=r["nmax"],
                                     output_order=r["order"])
    results = [inference.extract_summary(policy, enc, doc, icfg)
               for doc, enc in _encode_all(docs, vocab, ccfg)]
    inference.write_results_jsonl(args.output, results,
                                  output_order=r["order"],
                                  include_timing=args.timing)
    print(f"wrote {len(results)} summaries to {args.output}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    r = _resolve(args, INFER_DEFAULTS)
    _echo_config(r, args.output + ".config.json" if args.output else None)
    policy, vocab, emb, ccfg = _load_pipeline(args.checkpoint)
    docs = _variant_docs(_load_docs(args.input, ccfg), policy, ccfg)
    icfg = inference.InferenceConfig(p_thres=r["p_thres"], max_sentences=r["nmax"],
                                     output_order=r["order"])
    report = inference.evaluate_dataset(policy, _encode_all(docs, vocab, ccfg),
                                        icfg)
    payload = json.dumps(report.to_dict(timing=args.timing), sort_keys=True,
                         indent=1)
    print(payload)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    return 0


SWEEP_DEFAULTS = {"nmax": 7, "thresholds": "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0"}


def cmd_sweep(args) -> int:
    r = _resolve(args, SWEEP_DEFAULTS)
    _echo_config(r, args.output + ".config.json" if args.output else None)
    policy, vocab, emb, ccfg = _load_pipeline(args.checkpoint)
    docs = _variant_docs(_load_docs(args.input, ccfg), policy, ccfg)
    icfg = inference.InferenceConfig(max_sentences=r["nmax"])
    thresholds = [float(t) for t in r["thresholds"].split(",") if t]
    rows, best = inference.sweep_threshold(policy, _encode_all(docs, vocab, ccfg),
                                           icfg, thresholds)
    payload = json.dumps({"rows": [{"p_thres": t, "reward": s} for t, s in rows],
                          "best": best}, sort_keys=True, indent=1)
    print(payload)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    return 0


def cmd_redundant(args) -> int:
    ccfg = corpus.CorpusConfig()
    docs = _load_docs(args.input, ccfg)
    doubled = experiments.make_redundant_dataset(docs)
    with open(args.output, "w", encoding="utf-8") as fh:
        for d in doubled:
            fh.write(json.dumps({"id": d.id, "text": d.raw_sentences,
                                 "summary": [" ".join(s) for s in d.gold_summary]})
                     + "\n")
    print(f"wrote {len(doubled)} redundant documents to {args.output}",
          file=sys.stderr)
    return 0


def cmd_trace(args) -> int:
    r = _resolve(args, INFER_DEFAULTS)
    _echo_config(r, args.output + ".config.json")
    policy, vocab, emb, ccfg = _load_pipeline(args.checkpoint)
    docs = _variant_docs(_load_docs(args.input, ccfg), policy, ccfg)
    if args.doc_id:
        docs = [d for d in docs if d.id == args.doc_id]
        if not docs:
            raise RuntimeError(f"document '{args.doc_id}' not found")
    doc = docs[0]
    icfg = inference.InferenceConfig(p_thres=r["p_thres"], max_sentences=r["nmax"])
    trace = experiments.score_trace(policy, corpus.encode_document(doc, vocab, ccfg),
                                    doc, icfg)
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(trace.to_csv())
    print(f"wrote trace for '{doc.id}' ({len(trace.rows)} steps) to {args.output}",
          file=sys.stderr)
    return 0


def cmd_eval_serve(args) -> int:
    import uvicorn
    from .evalsvc import EvaluationService, create_app
    service = EvaluationService(args.log)
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_human_stats(args) -> int:
    from .evalsvc import EvaluationService
    if not os.path.exists(args.log):
        raise RuntimeError(f"event log '{args.log}' does not exist")
    service = EvaluationService(args.log)
    sids = [args.session] if args.session else sorted(service.sessions)
    out = {sid: service.aggregate(sid) for sid in sids}
    print(json.dumps(out, sort_keys=True, indent=1))
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> _Parser:
    p = _Parser(prog="histsum",
                description="extractive summarization: oracles, training, "
                            "inference, evaluation")
    sub = p.add_subparsers(dest="command", required=True)

    def common_cfg(sp):
        sp.add_argument("--config", help="JSON file overriding defaults")
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("oracle", help="precompute training episodes")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--branch", type=int, default=None)
    sp.add_argument("--max-len", dest="max_len", type=int, default=None)
    sp.add_argument("--beam-cap", dest="beam_cap", type=int, default=None)
    sp.add_argument("--min-gain", dest="min_gain", type=float, default=None)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
    sp.add_argument("--max-sentences", dest="max_sentences", type=int, default=None)
    common_cfg(sp)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("train", help="train a policy against cached episodes")
    sp.add_argument("--input", required=True)
    sp.add_argument("--episodes", required=True)
    sp.add_argument("--checkpoint", required=True, help="output directory")
    sp.add_argument("--val", help="held-out JSONL; default splits --input")
    sp.add_argument("--embeddings", help="pretrained vectors, one word per line")
    sp.add_argument("--log", help="training log path (JSONL)")
    sp.add_argument("--batch", type=int, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--val-interval", dest="val_interval", type=int, default=None)
    sp.add_argument("--patience", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    sp.add_argument("--dim", type=int, default=None)
    sp.add_argument("--emb-dim", dest="emb_dim", type=int, default=None)
    sp.add_argument("--sent-layers", dest="sent_layers", type=int, default=None)
    sp.add_argument("--doc-layers", dest="doc_layers", type=int, default=None)
    sp.add_argument("--hist-layers", dest="hist_layers", type=int, default=None)
    sp.add_argument("--heads", type=int, default=None)
    sp.add_argument("--ff-dim", dest="ff_dim", type=int, default=None)
    sp.add_argument("--dropout", type=float, default=None)
    sp.add_argument("--pool-heads", dest="pool_heads", type=int, default=None)
    sp.add_argument("--variant", choices=VARIANTS, default=None)
    sp.add_argument("--fixed-k", dest="fixed_k", type=int, default=None)
    sp.add_argument("--p-thres", dest="p_thres", type=float, default=None)
    sp.add_argument("--nmax", type=int, default=None)
    sp.add_argument("--val-fraction", dest="val_fraction", type=float, default=None)
    sp.add_argument("--max-tokens", dest="max_tokens", type=int, default=None)
    sp.add_argument("--max-sentences", dest="max_sentences", type=int, default=None)
    sp.add_argument("--precision", choices=("float32", "float64"), default=None)
    common_cfg(sp)
    sp.set_defaults(func=cmd_train)

    def infer_flags(sp, need_output=True):
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--input", required=True)
        if need_output:
            sp.add_argument("--output", required=True)
        else:
            sp.add_argument("--output")
        sp.add_argument("--p-thres", dest="p_thres", type=float, default=None)
        sp.add_argument("--nmax", type=int, default=None)
        sp.add_argument("--order", choices=inference.OUTPUT_ORDERS, default=None)
        sp.add_argument("--timing", action="store_true",
                        help="include wall-clock fields (breaks byte-level "
                             "reproducibility)")
        common_cfg(sp)

    sp = sub.add_parser("summarize", help="extract summaries to JSONL")
    infer_flags(sp)
    sp.set_defaults(func=cmd_summarize)

    sp = sub.add_parser("evaluate", help="score a dataset")
    infer_flags(sp, need_output=False)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="stopping-threshold sweep")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--output")
    sp.add_argument("--nmax", type=int, default=None)
    sp.add_argument("--thresholds", default=None,
                    help="comma-separated stopping thresholds")
    common_cfg(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("redundant", help="duplicate every body sentence")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.set_defaults(func=cmd_redundant)

    sp = sub.add_parser("trace", help="per-step candidate score matrix (CSV)")
    sp.add_argument("--doc-id", dest="doc_id")
    infer_flags(sp)
    sp.set_defaults(func=cmd_trace)

    sp = sub.add_parser("eval-serve", help="run the A/B evaluation service")
    sp.add_argument("--log", required=True, help="append-only event log (JSONL)")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8100)
    sp.set_defaults(func=cmd_eval_serve)

    sp = sub.add_parser("human-stats", help="aggregate an evaluation event log")
    sp.add_argument("--log", required=True)
    sp.add_argument("--session")
    sp.set_defaults(func=cmd_human_stats)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        # --help and friends land here; argparse already printed
        return 0 if not e.code else 1
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        raise
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
