"""Episode-replay training with validation-based early stopping.

Each optimizer step samples one cached episode per document in the batch,
replays it step by step against the current parameters, and descends the
mean of  -(reward / (T+1)) * sum(log pi(action_t))  over the batch.  One
Adam update per batch; the per-step updates of the original algorithm are
accumulated into that single step (identical summed gradient for fixed
parameters).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict, replace
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import rouge
from .corpus import (CorpusConfig, Document, EmbeddingTable, EncodedDocument,
                     Vocabulary, encode_document)
from .oracle import Episode, sample_training_episode
from .policy import (ActionDistribution, ExtractionState, PolicyConfig,
                     PolicyNetwork, STOP, action_log_prob)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 16
    max_steps: int = 2000
    val_interval: int = 100
    patience: int = 3          # consecutive non-improving validations
    seed: int = 0
    precision: str = "float32"
    lr: float = 1e-4
    weight_decay: float = 1e-6

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1:
            raise ValueError("batch_size and patience must be >= 1")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")


@dataclass
class TrainingStats:
    losses: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)        # sampled-episode mean
    lengths: list[float] = field(default_factory=list)        # mean T per step
    validations: list[tuple[int, float]] = field(default_factory=list)
    skipped_docs: int = 0      # batch entries without any cached episode
    stopped_early: bool = False


@dataclass
class TrainDoc:
    """One document prepared for training: encoded input plus episode pool."""

    doc: Document
    encoded: EncodedDocument
    episodes: list[Episode]


def prepare_training_docs(docs: Sequence[Document],
                          episode_cache: dict[str, list[Episode]],
                          vocab: Vocabulary,
                          corpus_config: CorpusConfig,
                          reserve_terminator_slot: bool = False) -> list[TrainDoc]:
    """Join documents with their cached episodes, dropping episodes whose
    indices fall outside the encoded sentence range.

    reserve_terminator_slot narrows the valid range by one: the last encoded
    slot belongs to the synthetic terminator, never to cached body episodes.
    """
    out = []
    for doc in docs:
        enc = encode_document(doc, vocab, corpus_config)
        n = enc.n_sentences - (1 if reserve_terminator_slot else 0)
        pool = [e for e in episode_cache.get(doc.id, [])
                if all(i < n for i in e.indices)]
        out.append(TrainDoc(doc, enc, pool))
    return out


def _stop_sentence_index(enc: EncodedDocument) -> int:
    # the synthetic terminator is always the last real sentence slot
    return enc.n_sentences - 1


def episode_loss(policy: PolicyNetwork, enc: EncodedDocument, episode: Episode,
                 train: bool = True,
                 rng: np.random.Generator | None = None) -> ad.Tensor:
    """-(r/(T+1)) * sum of step log-probabilities for one replayed episode."""
    cfg = policy.config
    steps = len(episode.indices)
    local = policy.encode_local(enc)
    globl = policy.encode_global(local, enc.n_sentences)
    state = ExtractionState.initial(enc.n_sentences)
    terms: list[ad.Tensor] = []

    if cfg.variant == "no_ehe":
        # one scoring pass; later steps only renormalize over what is left
        dist = policy.action_distribution(local, globl, state, train, rng)
        pos = {a: i for i, a in enumerate(dist.indices)}
        alive = list(range(len(dist.indices)))
        for a in episode.indices:
            sub = dist.scores[(np.array(alive), 0)]
            u_a = dist.scores[(pos[a], 0)]
            terms.append(ad.log(ad.clip_min(u_a, 1e-12))
                         - ad.log(ad.tsum(sub)))
            alive.remove(pos[a])
    else:
        for a in episode.indices:
            dist = policy.action_distribution(local, globl, state, train, rng)
            terms.append(action_log_prob(dist, a))
            state = state.select(a)
        if cfg.variant == "stop_sentence":
            stop_idx = _stop_sentence_index(enc)
            if stop_idx in state.remaining:
                dist = policy.action_distribution(local, globl, state, train, rng)
                terms.append(action_log_prob(dist, stop_idx))
        elif cfg.has_stop_head and state.remaining:
            dist = policy.action_distribution(local, globl, state, train, rng)
            terms.append(action_log_prob(dist, STOP))

    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return ad.mul(total, -episode.reward / (steps + 1))


def train_step(policy: PolicyNetwork, adam: ad.AdamState,
               batch: Sequence[TrainDoc], rng: np.random.Generator,
               stats: TrainingStats) -> float:
    """Sample one episode per batch document, take one Adam step on the
    mean loss; returns the loss value."""
    losses: list[ad.Tensor] = []
    rewards, lengths = [], []
    for td in batch:
        if not td.episodes:
            stats.skipped_docs += 1
            continue
        ep = sample_training_episode(td.episodes, rng)
        losses.append(episode_loss(policy, td.encoded, ep, train=True, rng=rng))
        rewards.append(ep.reward)
        lengths.append(len(ep.indices))
    if not losses:
        return 0.0
    total = losses[0]
    for piece in losses[1:]:
        total = total + piece
    total = ad.mul(total, 1.0 / len(losses))
    policy.store.zero_grad()
    ad.backward(total)
    ad.adam_step(policy.store, adam)
    value = total.item()
    stats.losses.append(value)
    stats.rewards.append(float(np.mean(rewards)))
    stats.lengths.append(float(np.mean(lengths)))
    return value


def validate(policy: PolicyNetwork, val_docs: Sequence[TrainDoc],
             inference_config) -> float:
    """Mean reward of deterministic extraction over a validation set."""
    from .inference import extract_summary  # local import avoids a cycle

    if not val_docs:
        raise ValueError("validation set is empty")
    scores = []
    for td in val_docs:
        result = extract_summary(policy, td.encoded, td.doc, inference_config)
        scores.append(result.reward.value)
    return float(np.mean(scores))


def run_training(policy: PolicyNetwork, train_docs: Sequence[TrainDoc],
                 val_docs: Sequence[TrainDoc], config: TrainerConfig,
                 inference_config, checkpoint_dir=None, vocab=None,
                 embeddings=None, corpus_config=None,
                 log_path=None) -> TrainingStats:
    """Optimize until max_steps or `patience` non-improving validations.

    When checkpoint_dir is given (with vocab and embeddings), the best
    validation checkpoint is kept there.
    """
    adam = ad.AdamState(lr=config.lr, weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    stats = TrainingStats()
    best = -np.inf
    bad = 0
    log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for step in range(1, config.max_steps + 1):
            picks = rng.choice(len(train_docs), size=min(config.batch_size,
                                                         len(train_docs)),
                               replace=False)
            batch = [train_docs[int(i)] for i in picks]
            loss = train_step(policy, adam, batch, rng, stats)
            if log_fh:
                rec = {"step": step, "loss": loss,
                       "reward": stats.rewards[-1] if stats.rewards else None,
                       "length": stats.lengths[-1] if stats.lengths else None}
                log_fh.write(json.dumps(rec) + "\n")
            if step % config.val_interval == 0:
                score = validate(policy, val_docs, inference_config)
                stats.validations.append((step, score))
                if log_fh:
                    log_fh.write(json.dumps({"step": step, "val": score}) + "\n")
                if score > best:
                    best = score
                    bad = 0
                    if checkpoint_dir and vocab is not None and embeddings is not None:
                        save_checkpoint(checkpoint_dir, policy, adam, vocab,
                                        embeddings, corpus_config=corpus_config,
                                        extra={"val": score, "step": step})
                else:
                    bad += 1
                    if bad >= config.patience:
                        stats.stopped_early = True
                        break
    finally:
        if log_fh:
            log_fh.close()
    return stats


# ------------------------------------------------------------- checkpoints

class CheckpointError(ValueError):
    pass


def _blob_dtype(precision: str):
    return np.dtype("<f4") if precision == "float32" else np.dtype("<f8")


def save_checkpoint(path, policy: PolicyNetwork, adam: ad.AdamState | None,
                    vocab: Vocabulary, embeddings: EmbeddingTable,
                    corpus_config: CorpusConfig | None = None,
                    extra: dict | None = None):
    """Write manifest + little-endian blob; bit-exact restorable.

    Layout: every parameter tensor in manifest order, then (when optimizer
    state is included) all Adam first moments, then all second moments.
    """
    os.makedirs(path, exist_ok=True)
    store = policy.store
    precision = "float32" if store.dtype == np.float32 else "float64"
    dt = _blob_dtype(precision)
    params = [{"name": n, "shape": list(p.data.shape)} for n, p in store.items()]
    manifest = {
        "version": CHECKPOINT_VERSION,
        "precision": precision,
        "step": store.step,
        "params": params,
        "policy": asdict(policy.config),
        "corpus": asdict(corpus_config) if corpus_config else None,
        "embedding_shape": list(embeddings.vectors.shape),
        "embedding_trainable": embeddings.trainable,
        "adam": None,
        "extra": extra or {},
    }
    chunks = [p.data.astype(dt, copy=False).tobytes() for _, p in store.items()]
    if adam is not None:
        manifest["adam"] = {"lr": adam.lr, "beta1": adam.beta1,
                            "beta2": adam.beta2, "eps": adam.eps,
                            "weight_decay": adam.weight_decay}
        for bank in (adam.m, adam.v):
            for name, _ in store.items():
                mom = bank.get(name)
                if mom is None:
                    mom = np.zeros(store[name].data.shape, dtype=store.dtype)
                chunks.append(mom.astype(dt, copy=False).tobytes())
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(os.path.join(path, "params.bin"), "wb") as fh:
        fh.write(b"".join(chunks))
    vocab.save(os.path.join(path, "vocab.json"))
    with open(os.path.join(path, "embeddings.bin"), "wb") as fh:
        fh.write(embeddings.vectors.astype("<f4", copy=False).tobytes())


def load_checkpoint(path):
    """Restore (policy, adam, vocab, embeddings, corpus_config, extra)."""
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')!r}")
    precision = manifest["precision"]
    dt = _blob_dtype(precision)
    dtype = np.float32 if precision == "float32" else np.float64

    vocab = Vocabulary.load(os.path.join(path, "vocab.json"))
    emb_shape = tuple(manifest["embedding_shape"])
    with open(os.path.join(path, "embeddings.bin"), "rb") as fh:
        emb_raw = np.frombuffer(fh.read(), dtype="<f4")
    if emb_raw.size != emb_shape[0] * emb_shape[1]:
        raise CheckpointError("embeddings: blob size does not match manifest shape")
    embeddings = EmbeddingTable(emb_raw.reshape(emb_shape).astype(np.float32),
                                trainable=manifest.get("embedding_trainable", False))

    policy_config = PolicyConfig(**manifest["policy"])
    store = ad.ParameterStore(seed=0, dtype=dtype)
    policy = PolicyNetwork(policy_config, store, embeddings)

    built = {n: p.data.shape for n, p in store.items()}
    for rec in manifest["params"]:
        name, shape = rec["name"], tuple(rec["shape"])
        if name not in built:
            raise CheckpointError(f"parameter '{name}': unknown to this architecture")
        if built[name] != shape:
            raise CheckpointError(
                f"parameter '{name}': manifest shape {shape} != built shape {built[name]}")
    if len(manifest["params"]) != len(built):
        raise CheckpointError("manifest parameter list does not cover the architecture")

    with open(os.path.join(path, "params.bin"), "rb") as fh:
        blob = fh.read()
    offset = 0

    def pull(name, shape):
        nonlocal offset
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        need = count * dt.itemsize
        if offset + need > len(blob):
            raise CheckpointError(f"blob truncated while reading '{name}'")
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=offset)
        offset += need
        return arr.reshape(shape).astype(dtype)

    for rec in manifest["params"]:
        store[rec["name"]].data[...] = pull(rec["name"], tuple(rec["shape"]))

    adam = None
    if manifest["adam"] is not None:
        a = manifest["adam"]
        adam = ad.AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"],
                            eps=a["eps"], weight_decay=a["weight_decay"])
        for bank in (adam.m, adam.v):
            for rec in manifest["params"]:
                bank[rec["name"]] = pull("adam:" + rec["name"], tuple(rec["shape"]))
    if offset != len(blob):
        raise CheckpointError(f"blob has {len(blob) - offset} unexpected trailing bytes")
    store.step = manifest["step"]

    corpus_config = (CorpusConfig(**manifest["corpus"])
                     if manifest.get("corpus") else None)
    return policy, adam, vocab, embeddings, corpus_config, manifest.get("extra", {})
