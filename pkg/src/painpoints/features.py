"""Tokenization, vocabulary, TF-IDF, class-based TF-IDF and SVD document embeddings."""

from __future__ import annotations

import csv
import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

_TOKEN = re.compile(r"\w+(?:['’]\w+)*")
_SENT_END = re.compile(r"[.!?;\n]+")


class FeatureError(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; punctuation-only pieces vanish."""
    return _TOKEN.findall(text.lower())


def split_sentences(text: str) -> list[list[str]]:
    return [tokenize(s) for s in _SENT_END.split(text)]


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})
        if len(self._index) != len(self.tokens):
            raise FeatureError("vocabulary tokens must be unique")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, tok: str) -> bool:
        return tok in self._index

    def index(self, tok: str) -> int:
        return self._index[tok]

    def get(self, tok: str, default=None):
        return self._index.get(tok, default)

    def encode(self, tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Map tokens to ids, dropping unknown ones.

        Returns ``(ids, positions)`` where ``positions`` are the indices of
        the kept tokens in the input sequence.
        """
        ids, pos = [], []
        for i, t in enumerate(tokens):
            j = self._index.get(t)
            if j is not None:
                ids.append(j)
                pos.append(i)
        return np.asarray(ids, dtype=np.int64), np.asarray(pos, dtype=np.int64)

    def mask(self, words: Iterable[str]) -> np.ndarray:
        """Boolean column mask, True for vocabulary entries in ``words``."""
        m = np.zeros(self.size, dtype=bool)
        for w in words:
            j = self._index.get(w)
            if j is not None:
                m[j] = True
        return m

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()


def build_vocab(docs: Sequence[Sequence[str]]) -> Vocabulary:
    if len(docs) == 0:
        raise FeatureError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(tuple(sorted({t for d in docs for t in d})))


def count(docs: Sequence[Sequence[str]], vocab: Vocabulary) -> sp.csr_matrix:
    """Sparse doc x term count matrix; rows follow corpus order."""
    if len(docs) == 0:
        raise FeatureError("cannot count an empty corpus")
    rows, cols = [], []
    for i, d in enumerate(docs):
        ids, _ = vocab.encode(d)
        rows.extend([i] * len(ids))
        cols.extend(ids.tolist())
    data = np.ones(len(rows), dtype=np.int64)
    m = sp.csr_matrix((data, (rows, cols)), shape=(len(docs), vocab.size), dtype=np.int64)
    m.sum_duplicates()
    return m


def _drop_columns(counts, term_mask):
    counts = sp.csr_matrix(counts)
    if term_mask is None:
        return counts
    keep = sp.diags((~np.asarray(term_mask, dtype=bool)).astype(counts.dtype))
    return sp.csr_matrix(counts @ keep)


def tfidf(counts, exclude: np.ndarray | None = None) -> np.ndarray:
    """tf(d,t) * ln(N / df(t)) with tf = count / doc token total.

    ``exclude`` zeroes masked columns before anything is computed (used for
    stopwords). Empty rows stay all-zero.
    """
    c = _drop_columns(counts, exclude).astype(np.float64)
    n_docs = c.shape[0]
    if n_docs == 0:
        raise FeatureError("tfidf needs at least one document")
    row_tot = np.asarray(c.sum(axis=1)).ravel()
    df = np.asarray((c > 0).sum(axis=0)).ravel()
    with np.errstate(divide="ignore"):
        idf = np.where(df > 0, np.log(n_docs / np.maximum(df, 1)), 0.0)
    tf = sp.diags(np.divide(1.0, row_tot, out=np.zeros_like(row_tot), where=row_tot > 0)) @ c
    return np.asarray((tf @ sp.diags(idf)).todense())


@dataclass(frozen=True)
class CTfidfTable:
    topics: tuple[int, ...]
    scores: np.ndarray  # topics x terms
    topic_totals: np.ndarray
    term_freqs: np.ndarray
    avg_total: float

    def row(self, topic: int) -> np.ndarray:
        return self.scores[self.topics.index(topic)]

    def to_csv(self, path: str | Path, vocab: Vocabulary) -> None:
        write_score_csv(path, self.scores, vocab, row_labels=self.topics, row_name="topic")


def ctfidf(counts, labels: Sequence[int], exclude: np.ndarray | None = None) -> CTfidfTable:
    """Class-based TF-IDF.

    W[c, t] = (n_ct / n_c) * ln(1 + A / f_t) where n_ct is the count of t
    in topic c, n_c the token total of topic c, A the mean token total per
    topic and f_t the corpus count of t. Terms with f_t = 0 score 0.
    """
    c = _drop_columns(counts, exclude).astype(np.float64)
    labels = np.asarray(labels)
    if labels.shape[0] != c.shape[0]:
        raise FeatureError("one topic label per document is required")
    topics = tuple(int(t) for t in np.unique(labels))
    index = {t: i for i, t in enumerate(topics)}
    onehot = sp.csr_matrix(
        (np.ones(len(labels)), (np.array([index[int(t)] for t in labels]), np.arange(len(labels)))),
        shape=(len(topics), len(labels)),
    )
    per_topic = np.asarray((onehot @ c).todense())
    totals = per_topic.sum(axis=1)
    for t, tot in zip(topics, totals):
        if tot == 0:
            raise FeatureError(f"topic {t} has zero tokens")
    f = per_topic.sum(axis=0)
    avg = float(totals.mean())
    with np.errstate(divide="ignore"):
        idf = np.where(f > 0, np.log1p(avg / np.where(f > 0, f, 1.0)), 0.0)
    scores = (per_topic / totals[:, None]) * idf[None, :]
    return CTfidfTable(topics, scores, totals, f, avg)


@dataclass(frozen=True)
class SvdEmbedding:
    vectors: np.ndarray  # docs x d, unit rows (zero for empty docs)
    components: np.ndarray  # d x terms, orthonormal rows
    singular_values: np.ndarray


def _orth(a: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(a)
    return q


def svd_embed(matrix, d: int = 64, seed: int = 0, n_iter: int = 7, oversample: int = 10) -> SvdEmbedding:
    """Rank-d truncated SVD by seeded subspace iteration, rows L2-normalized.

    Each right-singular vector is signed so that its largest-magnitude
    entry is positive.
    """
    x = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=np.float64)
    n, v = x.shape
    if not 1 <= d <= min(n, v):
        raise FeatureError(f"rank d={d} outside [1, {min(n, v)}]")
    k = min(d + oversample, n, v)
    rng = np.random.default_rng(seed)
    q = _orth(x @ rng.standard_normal((v, k)))
    for _ in range(n_iter):
        q = _orth(x @ _orth(x.T @ q))
    _, s, vt = np.linalg.svd(q.T @ x, full_matrices=False)
    vt = vt[:d]
    lead = np.abs(vt).argmax(axis=1)
    signs = np.sign(vt[np.arange(d), lead])
    signs[signs == 0] = 1.0
    vt = vt * signs[:, None]
    proj = x @ vt.T
    norms = np.linalg.norm(proj, axis=1)
    vectors = np.divide(proj, norms[:, None], out=np.zeros_like(proj), where=norms[:, None] > 0)
    return SvdEmbedding(vectors, vt, s[:d])


def write_score_csv(path, scores: np.ndarray, vocab: Vocabulary, row_labels, row_name: str) -> None:
    """Long-format CSV (term, <row_name>, score) of the nonzero entries."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["term", row_name, "score"])
        for label, row in zip(row_labels, scores):
            for j in np.flatnonzero(row):
                w.writerow([vocab.tokens[j], label, repr(float(row[j]))])
