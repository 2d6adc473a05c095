"""Dataset ingestion, tokenization, vocabulary and embedding-table handling.

Datasets are JSON Lines files, one record per line with "text" and
"summary" arrays of sentence strings (optional "id").  Encoding pads and
truncates to a fixed sentences-per-document by tokens-per-sentence grid so
the model always sees rectangular input.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PAD_INDEX = 0
UNK_INDEX = 1

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


class CorpusFormatError(ValueError):
    """Raised for malformed embedding files."""


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    """Split text on whitespace with punctuation detached as single tokens."""
    if lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)


@dataclass(frozen=True)
class CorpusConfig:
    max_tokens: int = 100     # tokens kept per sentence
    max_sentences: int = 500  # sentences kept per document
    pad_token: str = "PAD"
    lowercase: bool = True

    def __post_init__(self):
        if self.max_tokens < 1 or self.max_sentences < 1:
            raise ValueError("max_tokens and max_sentences must be >= 1")


@dataclass
class Document:
    id: str
    sentences: list[list[str]]       # tokenized body, aligned with raw_sentences
    gold_summary: list[list[str]]
    raw_sentences: list[str]


@dataclass
class LoadResult(Sequence):
    """Documents plus ingestion bookkeeping; behaves as a sequence of Document."""

    documents: list[Document] = field(default_factory=list)
    skipped: int = 0
    errors: list[tuple[int, str]] = field(default_factory=list)  # (line_no, message)

    def __len__(self):
        return len(self.documents)

    def __getitem__(self, i):
        return self.documents[i]


def load_dataset(path, config: CorpusConfig | None = None) -> LoadResult:
    """Read a JSON Lines dataset.

    Records with empty text or summary (after tokenization) are skipped and
    counted; malformed lines are collected as (line number, message) without
    aborting the load.  An unreadable path raises the underlying OSError.
    """
    config = config or CorpusConfig()
    result = LoadResult()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                result.errors.append((line_no, f"invalid json: {exc.msg}"))
                continue
            if not isinstance(rec, dict) or "text" not in rec or "summary" not in rec:
                result.errors.append((line_no, "record must have 'text' and 'summary'"))
                continue
            text, summary = rec["text"], rec["summary"]
            if not isinstance(text, list) or not isinstance(summary, list):
                result.errors.append((line_no, "'text' and 'summary' must be arrays"))
                continue
            sentences, raw = [], []
            for s in text:
                toks = tokenize(str(s), config.lowercase)
                if toks:  # drop sentences that tokenize to nothing
                    sentences.append(toks)
                    raw.append(str(s))
            gold = [t for t in (tokenize(str(s), config.lowercase) for s in summary) if t]
            if not sentences or not gold:
                result.skipped += 1
                continue
            doc_id = str(rec.get("id", f"line{line_no}"))
            result.documents.append(Document(doc_id, sentences, gold, raw))
    return result


class Vocabulary:
    """Bijective token/index map with PAD at 0 and UNK at 1."""

    def __init__(self, tokens: Sequence[str], pad_token: str = "PAD",
                 unk_token: str = "UNK"):
        self.pad_token = pad_token
        self.unk_token = unk_token
        self.index_to_token = [pad_token, unk_token, *tokens]
        self.token_to_index = {t: i for i, t in enumerate(self.index_to_token)}
        if len(self.token_to_index) != len(self.index_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.index_to_token)

    def __contains__(self, token):
        return token in self.token_to_index

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, UNK_INDEX)

    def save(self, path):
        payload = {"pad": self.pad_token, "unk": self.unk_token,
                   "tokens": self.index_to_token[2:]}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(payload["tokens"], payload["pad"], payload["unk"])


def build_vocabulary(docs: Sequence[Document], min_count: int = 1,
                     pad_token: str = "PAD", unk_token: str = "UNK") -> Vocabulary:
    """Vocabulary over document body tokens, ordered by (-frequency, token)."""
    if len(docs) == 0:
        raise ValueError("cannot build a vocabulary from zero documents")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(t for d in docs for sent in d.sentences for t in sent)
    counts.pop(pad_token, None)
    counts.pop(unk_token, None)
    chosen = sorted((t for t, c in counts.items() if c >= min_count),
                    key=lambda t: (-counts[t], t))
    return Vocabulary(chosen, pad_token, unk_token)


@dataclass
class EmbeddingTable:
    vectors: np.ndarray  # (vocab size, d) float32
    trainable: bool = False

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __post_init__(self):
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding table contains non-finite values")


def load_embedding_table(path, vocab: Vocabulary, dim: int = 200,
                         seed: int = 0, trainable: bool = False) -> EmbeddingTable:
    """Load GloVe-style text vectors for a vocabulary.

    Rows are "word v1 ... vd".  Words missing from the file get a seeded
    uniform draw in [-0.05, 0.05]; the PAD row is forced to zero.
    """
    found: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for row_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise CorpusFormatError(
                    f"row {row_no}: expected {dim} values, got {len(values)}")
            if word in vocab:
                found[word] = np.asarray(values, dtype=np.float32)
    rng = np.random.default_rng(seed)
    vectors = np.empty((len(vocab), dim), dtype=np.float32)
    for i, tok in enumerate(vocab.index_to_token):
        if i == PAD_INDEX:
            vectors[i] = 0.0
        elif tok in found:
            vectors[i] = found[tok]
        else:
            vectors[i] = rng.uniform(-0.05, 0.05, size=dim).astype(np.float32)
    return EmbeddingTable(vectors, trainable=trainable)


def random_embedding_table(vocab: Vocabulary, dim: int, seed: int = 0,
                           trainable: bool = False,
                           scale: float = 0.5) -> EmbeddingTable:
    """Seeded uniform table for corpora without pretrained vectors.

    The default scale roughly matches pretrained-vector magnitudes; the tiny
    [-0.05, 0.05] range is only for filling isolated gaps in a real table.
    """
    rng = np.random.default_rng(seed)
    vectors = rng.uniform(-scale, scale, size=(len(vocab), dim)).astype(np.float32)
    vectors[PAD_INDEX] = 0.0
    return EmbeddingTable(vectors, trainable=trainable)


@dataclass
class EncodedDocument:
    token_ids: np.ndarray     # (max_sentences, max_tokens) int32
    sentence_mask: np.ndarray  # (max_sentences,) bool, true for real sentences
    token_counts: np.ndarray   # (max_sentences,) int32, pre-padding lengths

    @property
    def n_sentences(self) -> int:
        return int(self.sentence_mask.sum())


def encode_document(doc: Document, vocab: Vocabulary,
                    config: CorpusConfig) -> EncodedDocument:
    """Index, truncate and pad one document to the configured grid."""
    n_doc, n_sen = config.max_sentences, config.max_tokens
    ids = np.full((n_doc, n_sen), PAD_INDEX, dtype=np.int32)
    mask = np.zeros(n_doc, dtype=bool)
    counts = np.zeros(n_doc, dtype=np.int32)
    for i, sent in enumerate(doc.sentences[:n_doc]):
        kept = sent[:n_sen]
        ids[i, : len(kept)] = [vocab.index(t) for t in kept]
        mask[i] = True
        counts[i] = len(kept)
    return EncodedDocument(ids, mask, counts)
