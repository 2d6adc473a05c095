"""Policy network for stepwise sentence extraction.

Three encoders feed a scoring head: per-sentence token encoding (bi-LSTM +
multi-head pooling), document-context encoding (bi-LSTM across sentences),
and an encoding of the extraction history (attention blocks over the set of
already-chosen sentences).  The head emits a sigmoid score per remaining
sentence plus a stop probability; together they define the per-step action
distribution

    p(stop)   = p_stop * 1/|remaining|
    p(pick a) = (1 - p_stop) * u_a / sum(u)

Ablation variants rewire parts of this pipeline; see build-variant helpers
in the experiments module.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .corpus import EmbeddingTable, EncodedDocument

VARIANTS = ("full", "no_lse", "no_gce", "no_ehe", "gru_ehe",
            "no_auto_stop", "stop_sentence")


@dataclass(frozen=True)
class PolicyConfig:
    dim: int = 200            # shared sentence-embedding width
    sent_layers: int = 2      # bi-LSTM depth inside sentences
    doc_layers: int = 2       # bi-LSTM depth across sentences
    hist_layers: int = 3      # attention blocks over the extraction history
    heads: int = 8
    ff_dim: int = 1024
    dropout: float = 0.1
    pool_heads: int = 8
    variant: str = "full"
    fixed_k: int | None = None  # extraction budget for fixed-length variants

    def __post_init__(self):
        if self.dim % 2 or self.dim % self.heads or self.dim % self.pool_heads:
            raise ValueError("dim must be even and divisible by both head counts")
        if min(self.sent_layers, self.doc_layers, self.hist_layers) < 1:
            raise ValueError("encoder layer counts must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0,1)")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant '{self.variant}'")
        if self.variant == "no_auto_stop" and not self.fixed_k:
            raise ValueError("no_auto_stop needs fixed_k >= 1")

    @property
    def has_stop_head(self) -> bool:
        # variants that terminate by other means carry no stop head
        return self.variant not in ("no_ehe", "stop_sentence", "no_auto_stop")

    @property
    def has_history(self) -> bool:
        return self.variant != "no_ehe"


@dataclass
class ExtractionState:
    extracted: list[int] = field(default_factory=list)
    remaining: list[int] = field(default_factory=list)  # ascending

    @classmethod
    def initial(cls, n_sentences: int) -> "ExtractionState":
        return cls([], list(range(n_sentences)))

    def select(self, a: int) -> "ExtractionState":
        if a not in self.remaining:
            raise ValueError(f"sentence {a} is not selectable")
        return ExtractionState(self.extracted + [a],
                               [j for j in self.remaining if j != a])

    @property
    def t(self) -> int:
        return len(self.extracted)


@dataclass
class ActionDistribution:
    indices: list[int]          # remaining sentences, ascending
    scores: ad.Tensor           # (R, 1) sigmoid scores u
    p_stop: ad.Tensor | None    # scalar tensor, absent for stop-free variants

    def score_values(self) -> np.ndarray:
        return self.scores.data[:, 0].copy()

    def normalized(self) -> np.ndarray:
        u = self.scores.data[:, 0]
        return u / u.sum()

    def p_stop_value(self) -> float:
        return float(self.p_stop.data) if self.p_stop is not None else 0.0


# ------------------------------------------------------------------ layers

class _Linear:
    def __init__(self, store: ad.ParameterStore, name: str, n_in: int, n_out: int,
                 bias: bool = True):
        self.w = store.parameter(f"{name}.w", (n_in, n_out))
        self.b = store.parameter(f"{name}.b", (1, n_out), init="zeros") if bias else None

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        y = ad.matmul(x, self.w)
        return ad.add(y, self.b) if self.b is not None else y


class _LayerNorm:
    def __init__(self, store, name, dim):
        self.g = store.parameter(f"{name}.g", (dim,), init="ones")
        self.b = store.parameter(f"{name}.b", (dim,), init="zeros")

    def __call__(self, x):
        return ad.layer_norm(x, self.g, self.b)


class _BiLstm:
    """Stacked bidirectional LSTM over (batch, time, features) input.

    The per-step validity mask freezes hidden/cell state on padded steps so
    padding never leaks into either direction.
    """

    def __init__(self, store, name, n_in, n_out, layers):
        if n_out % 2:
            raise ValueError("bi-LSTM output width must be even")
        self.hidden = n_out // 2
        self.cells = []
        for layer in range(layers):
            d_in = n_in if layer == 0 else n_out
            spec = {}
            for tag in ("fw", "bw"):
                bias = np.zeros((1, 4 * self.hidden), dtype=store.dtype)
                bias[0, self.hidden:2 * self.hidden] = 1.0  # forget gate open
                spec[tag] = (
                    store.parameter(f"{name}.{layer}.{tag}.w_ih", (d_in, 4 * self.hidden)),
                    store.parameter(f"{name}.{layer}.{tag}.w_hh", (self.hidden, 4 * self.hidden)),
                    store.parameter(f"{name}.{layer}.{tag}.b", (1, 4 * self.hidden), init=bias),
                )
            self.cells.append(spec)

    def _run_direction(self, x, mask, params, reverse, dtype):
        batch, steps = x.shape[0], x.shape[1]
        w_ih, w_hh, b = params
        h = ad.constant(np.zeros((batch, self.hidden), dtype=dtype))
        c = ad.constant(np.zeros((batch, self.hidden), dtype=dtype))
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        outs: dict[int, ad.Tensor] = {}
        for t in order:
            xt = x[:, t, :]
            h_new, c_new = ad.lstm_cell(xt, h, c, w_ih, w_hh, b)
            if mask is not None:
                m = ad.constant(mask[:, t:t + 1].astype(dtype))
                keep = ad.constant(1.0 - mask[:, t:t + 1].astype(dtype))
                h = ad.add(ad.mul(h_new, m), ad.mul(h, keep))
                c = ad.add(ad.mul(c_new, m), ad.mul(c, keep))
            else:
                h, c = h_new, c_new
            outs[t] = ad.reshape(h, (batch, 1, self.hidden))
        return ad.concat([outs[t] for t in range(steps)], axis=1)

    def __call__(self, x: ad.Tensor, mask: np.ndarray | None) -> ad.Tensor:
        dtype = x.data.dtype
        for spec in self.cells:
            fw = self._run_direction(x, mask, spec["fw"], False, dtype)
            bw = self._run_direction(x, mask, spec["bw"], True, dtype)
            x = ad.concat([fw, bw], axis=2)
        return x


class _MultiHeadPool:
    """Attention-pool a set of vectors to one vector, several heads at once."""

    def __init__(self, store, name, dim, heads):
        self.heads = heads
        self.dim = dim
        self.head_dim = dim // heads
        # logit bias dropped: softmax is invariant to a per-head constant shift
        self.logit = _Linear(store, f"{name}.logit", dim, heads, bias=False)
        self.value = _Linear(store, f"{name}.value", dim, dim)
        self.out = _Linear(store, f"{name}.out", dim, dim)

    def __call__(self, x: ad.Tensor, mask: np.ndarray) -> ad.Tensor:
        batch, rows = x.shape[0], x.shape[1]
        logits = ad.transpose(self.logit(x), (0, 2, 1))            # (B, H, M)
        weights = ad.masked_softmax(logits, mask[:, None, :], axis=-1)
        v = ad.reshape(self.value(x), (batch, rows, self.heads, self.head_dim))
        v = ad.transpose(v, (0, 2, 1, 3))                          # (B, H, M, dh)
        pooled = ad.matmul(ad.reshape(weights, (batch, self.heads, 1, rows)), v)
        return self.out(ad.reshape(pooled, (batch, self.dim)))


class _MultiHeadAttention:
    def __init__(self, store, name, dim, heads):
        self.heads = heads
        self.dim = dim
        self.head_dim = dim // heads
        self.scale = 1.0 / np.sqrt(self.head_dim)
        self.q = _Linear(store, f"{name}.q", dim, dim)
        # key bias is a no-op under softmax (adds a per-query constant)
        self.k = _Linear(store, f"{name}.k", dim, dim, bias=False)
        self.v = _Linear(store, f"{name}.v", dim, dim)
        self.o = _Linear(store, f"{name}.o", dim, dim)

    def __call__(self, queries: ad.Tensor, memory: ad.Tensor) -> ad.Tensor:
        m, n = queries.shape[0], memory.shape[0]
        q = ad.transpose(ad.reshape(self.q(queries), (m, self.heads, self.head_dim)), (1, 0, 2))
        k = ad.transpose(ad.reshape(self.k(memory), (n, self.heads, self.head_dim)), (1, 0, 2))
        v = ad.transpose(ad.reshape(self.v(memory), (n, self.heads, self.head_dim)), (1, 0, 2))
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 2, 1))), self.scale)
        att = ad.masked_softmax(scores, None, axis=-1)             # (H, m, n)
        mixed = ad.transpose(ad.matmul(att, v), (1, 0, 2))         # (m, H, dh)
        return self.o(ad.reshape(mixed, (m, self.dim)))


class _FeedForward:
    def __init__(self, store, name, dim, ff_dim):
        self.inner = _Linear(store, f"{name}.in", dim, ff_dim)
        self.outer = _Linear(store, f"{name}.out", ff_dim, dim)

    def __call__(self, x):
        return self.outer(ad.relu(self.inner(x)))


class _HistoryBlock:
    """Self-attention among remaining sentences, cross-attention to the
    extracted set, and a feed-forward, each residual + layer-normed."""

    def __init__(self, store, name, dim, heads, ff_dim, rate):
        self.self_attn = _MultiHeadAttention(store, f"{name}.self", dim, heads)
        self.cross_attn = _MultiHeadAttention(store, f"{name}.cross", dim, heads)
        self.ffn = _FeedForward(store, f"{name}.ffn", dim, ff_dim)
        self.norms = [_LayerNorm(store, f"{name}.ln{i}", dim) for i in range(3)]
        self.rate = rate

    def __call__(self, x, memory, train, rng):
        x = self.norms[0](ad.add(x, ad.dropout(self.self_attn(x, x), self.rate, rng, train)))
        x = self.norms[1](ad.add(x, ad.dropout(self.cross_attn(x, memory), self.rate, rng, train)))
        x = self.norms[2](ad.add(x, ad.dropout(self.ffn(x), self.rate, rng, train)))
        return x


def _gru_params(store, name, dim):
    return {g: (store.parameter(f"{name}.{g}.w", (dim, dim)),
                store.parameter(f"{name}.{g}.u", (dim, dim)),
                store.parameter(f"{name}.{g}.b", (1, dim), init="zeros"))
            for g in ("reset", "update", "cand")}


def _gru_cell(x, h, params):
    wr, ur, br = params["reset"]
    wz, uz, bz = params["update"]
    wn, un, bn = params["cand"]
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(x, wr), ad.matmul(h, ur)), br))
    z = ad.sigmoid(ad.add(ad.add(ad.matmul(x, wz), ad.matmul(h, uz)), bz))
    n = ad.tanh(ad.add(ad.add(ad.matmul(x, wn), ad.mul(r, ad.matmul(h, un))), bn))
    return ad.add(ad.mul(z, h), ad.mul(1.0 - z, n))


# ----------------------------------------------------------------- network

class PolicyNetwork:
    def __init__(self, config: PolicyConfig, store: ad.ParameterStore,
                 embeddings: EmbeddingTable):
        if embeddings.dim != config.dim:
            raise ValueError(f"embedding dim {embeddings.dim} != policy dim {config.dim}")
        self.config = config
        self.store = store
        d = config.dim
        if embeddings.trainable:
            self.embed = store.parameter("embeddings", embeddings.vectors.shape,
                                         init=embeddings.vectors)
        else:
            self.embed = ad.Tensor(embeddings.vectors.astype(store.dtype))

        if config.variant != "no_lse":
            self.sent_enc = _BiLstm(store, "sent_lstm", d, d, config.sent_layers)
            self.sent_pool = _MultiHeadPool(store, "sent_pool", d, config.pool_heads)
        if config.variant != "no_gce":
            self.doc_enc = _BiLstm(store, "doc_lstm", d, d, config.doc_layers)
        if config.variant == "gru_ehe":
            self.gru = _gru_params(store, "hist_gru", d)
        elif config.has_history:
            self.hist_blocks = [
                _HistoryBlock(store, f"hist.{i}", d, config.heads, config.ff_dim,
                              config.dropout)
                for i in range(config.hist_layers)]
        self.fc1 = _Linear(store, "head.fc1", 3 * d, 2 * d)
        self.fc2 = _Linear(store, "head.fc2", 2 * d, d)
        self.score = _Linear(store, "head.score", d, 1)
        if config.has_stop_head:
            self.stop_pool = _MultiHeadPool(store, "stop_pool", d, config.pool_heads)
            self.stop_out = _Linear(store, "stop_out", d, 1)

    @property
    def dtype(self):
        return self.store.dtype

    # -------------------------------------------------------- encoders

    def encode_local(self, enc: EncodedDocument) -> ad.Tensor:
        """Per-sentence vectors, one row per document slot; pad rows zero."""
        n = enc.n_sentences
        total = enc.sentence_mask.shape[0]
        assert enc.sentence_mask[:n].all(), "validity mask must be a prefix"
        ids = enc.token_ids[:n]
        tok_mask = (np.arange(ids.shape[1])[None, :] < enc.token_counts[:n, None])
        emb = ad.embedding_lookup(self.embed, ids)          # (n, T, d)
        if self.config.variant == "no_lse":
            m = ad.constant(tok_mask[:, :, None].astype(self.dtype))
            sums = ad.tsum(ad.mul(emb, m), axis=1)
            counts = ad.constant(enc.token_counts[:n, None].astype(self.dtype))
            local = ad.div(sums, counts)
        else:
            states = self.sent_enc(emb, tok_mask)
            local = self.sent_pool(states, tok_mask)        # (n, d)
        return self._pad_rows(local, total - n)

    def encode_global(self, local: ad.Tensor, n_valid: int) -> ad.Tensor:
        """Document-context vectors; same row layout as encode_local."""
        total = local.shape[0]
        if self.config.variant == "no_gce":
            return ad.constant(np.zeros((total, self.config.dim), dtype=self.dtype))
        prefix = local[0:n_valid]
        seq = ad.reshape(prefix, (1, n_valid, self.config.dim))
        out = ad.reshape(self.doc_enc(seq, None), (n_valid, self.config.dim))
        return self._pad_rows(out, total - n_valid)

    def _pad_rows(self, x: ad.Tensor, n_pad: int) -> ad.Tensor:
        if n_pad <= 0:
            return x
        zeros = ad.constant(np.zeros((n_pad, x.shape[1]), dtype=self.dtype))
        return ad.concat([x, zeros], axis=0)

    def encode_history(self, local: ad.Tensor, state: ExtractionState,
                       train: bool = False,
                       rng: np.random.Generator | None = None) -> ad.Tensor:
        """History-aware vectors for the remaining sentences (R, d).

        Zero before anything is extracted.  The attention path reads the
        extracted sentences as an unordered set (canonical sort), so any
        permutation of the same set encodes identically; the GRU variant is
        deliberately order-sensitive.
        """
        n_rem = len(state.remaining)
        if not self.config.has_history or not state.extracted:
            return ad.constant(np.zeros((n_rem, self.config.dim), dtype=self.dtype))
        if self.config.variant == "gru_ehe":
            h = ad.constant(np.zeros((1, self.config.dim), dtype=self.dtype))
            for idx in state.extracted:  # extraction order matters here
                h = _gru_cell(local[np.array([idx])], h, self.gru)
            ones = ad.constant(np.ones((n_rem, 1), dtype=self.dtype))
            return ad.matmul(ones, h)
        mem = local[np.array(sorted(state.extracted))]
        x = local[np.array(state.remaining)]
        for block in self.hist_blocks:
            x = block(x, mem, train, rng)
        return x

    # ----------------------------------------------------------- scoring

    def action_distribution(self, local: ad.Tensor, globl: ad.Tensor,
                            state: ExtractionState, train: bool = False,
                            rng: np.random.Generator | None = None
                            ) -> ActionDistribution:
        if not state.remaining:
            raise ValueError("no remaining sentences; caller must stop earlier")
        rem = np.array(state.remaining)
        hist = self.encode_history(local, state, train, rng)
        x = ad.concat([local[rem], globl[rem], hist], axis=1)     # (R, 3d)
        hidden = ad.relu(self.fc1(x))
        hidden = ad.relu(self.fc2(hidden))                        # (R, d)
        scores = ad.sigmoid(self.score(hidden))                   # (R, 1)
        p_stop = None
        if self.config.has_stop_head:
            pooled = self.stop_pool(
                ad.reshape(hidden, (1, len(state.remaining), self.config.dim)),
                np.ones((1, len(state.remaining)), dtype=bool))
            p_stop = ad.sigmoid(ad.reshape(self.stop_out(pooled), ()))
        return ActionDistribution(list(state.remaining), scores, p_stop)


STOP = "stop"


def action_log_prob(dist: ActionDistribution, action) -> ad.Tensor:
    """Log-probability node of one action under the step distribution.

    The stop branch's 1/|remaining| placeholder is a true constant: it adds
    no gradient.
    """
    if action == STOP:
        if dist.p_stop is None:
            raise ValueError("this variant has no stop action")
        return ad.log(ad.clip_min(dist.p_stop, 1e-12)) + float(np.log(1.0 / len(dist.indices)))
    a = int(action)
    try:
        i = dist.indices.index(a)
    except ValueError:
        raise ValueError(f"sentence {a} is not in the remaining set") from None
    pick = ad.log(ad.clip_min(dist.scores[(i, 0)], 1e-12)) - ad.log(ad.tsum(dist.scores))
    if dist.p_stop is None:
        return pick
    return ad.log(ad.clip_min(1.0 - dist.p_stop, 1e-12)) + pick
