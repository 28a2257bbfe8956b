"""Initial topic clustering with an outlier class, representative words and keyword-driven merging."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from painpoints.chunker import tag_word
from painpoints.features import CTfidfTable, Vocabulary

log = logging.getLogger(__name__)

OUTLIER = 0
DEFAULT_K_CANDIDATES = (8, 12, 16, 20, 24)


class TopicError(ValueError):
    pass


@dataclass(frozen=True)
class TopicAssignment:
    doc_ids: tuple[str, ...]
    labels: np.ndarray  # int topic per doc, 0 = OUTLIER

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (len(self.doc_ids),):
            raise TopicError("one label per document is required")
        if labels.size and labels.min() < 0:
            raise TopicError("topic ids must be non-negative")
        object.__setattr__(self, "labels", labels)

    @property
    def topics(self) -> list[int]:
        """Non-outlier topic ids in ascending order."""
        return [int(t) for t in np.unique(self.labels) if t != OUTLIER]

    @property
    def n_topics(self) -> int:
        return len(self.topics)

    def sizes(self) -> dict[int, int]:
        ids, counts = np.unique(self.labels, return_counts=True)
        return {int(i): int(c) for i, c in zip(ids, counts)}

    def is_dense(self) -> bool:
        return self.topics == list(range(1, self.n_topics + 1))

    def with_labels(self, labels) -> "TopicAssignment":
        return TopicAssignment(self.doc_ids, np.asarray(labels, dtype=np.int64))

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["doc_id", "topic_id"])
            for d, t in zip(self.doc_ids, self.labels):
                w.writerow([d, int(t)])

    @classmethod
    def from_csv(cls, path: str | Path) -> "TopicAssignment":
        with Path(path).open(encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        return cls(tuple(r["doc_id"] for r in rows), np.array([int(r["topic_id"]) for r in rows], dtype=np.int64))


@dataclass(frozen=True)
class MergeConfig:
    s: float = 0.1
    top_r: int = 10
    min_topic_size: int = 5
    noun_filter: bool = True

    def __post_init__(self):
        if self.s <= 0:
            raise TopicError("s must be > 0")
        if self.min_topic_size < 1:
            raise TopicError("min_topic_size must be >= 1")
        if self.top_r < 1:
            raise TopicError("top_r must be >= 1")


@dataclass(frozen=True)
class TopicSummary:
    topic: int
    words: tuple[tuple[str, float], ...]
    keywords: tuple[str, ...]
    size: int

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "size": self.size,
            "words": [w for w, _ in self.words],
            "scores": [s for _, s in self.words],
            "keywords": list(self.keywords),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TopicSummary":
        return cls(d["topic"], tuple(zip(d["words"], d["scores"])), tuple(d["keywords"]), d["size"])


def write_summaries(path: str | Path, summaries: dict[int, TopicSummary]) -> None:
    data = [summaries[t].to_dict() for t in sorted(summaries)]
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")


def read_summaries(path: str | Path) -> dict[int, TopicSummary]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {d["topic"]: TopicSummary.from_dict(d) for d in data}


# ---------------------------------------------------------------- clustering

def _farthest_point_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    min_dist = 1.0 - x @ x[chosen[0]]
    for _ in range(1, k):
        nxt = int(np.argmax(min_dist))
        chosen.append(nxt)
        min_dist = np.minimum(min_dist, 1.0 - x @ x[nxt])
    return x[chosen].copy()


def cosine_kmeans(x: np.ndarray, k: int, seed: int = 0, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Spherical k-means on unit rows; returns (cluster index per row, unit centroids)."""
    n = x.shape[0]
    if k < 2:
        raise TopicError("k must be >= 2")
    if k > n:
        raise TopicError(f"k={k} exceeds the number of documents ({n})")
    rng = np.random.default_rng(seed)
    centers = _farthest_point_init(x, k, rng)
    labels = None
    for _ in range(max_iter):
        new = np.argmax(x @ centers.T, axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = x[labels == c]
            if len(members):
                s = members.sum(axis=0)
                norm = np.linalg.norm(s)
                if norm > 0:
                    centers[c] = s / norm
    return labels, centers


def choose_k(x: np.ndarray, candidates: Iterable[int] = DEFAULT_K_CANDIDATES, seed: int = 0) -> int:
    """k with the best cosine silhouette among ``candidates`` (ties go to the smaller k)."""
    from sklearn.metrics import silhouette_score

    best_k, best = None, -np.inf
    for k in sorted(set(candidates)):
        if k < 2 or k >= x.shape[0]:
            continue
        labels, _ = cosine_kmeans(x, k, seed)
        if len(np.unique(labels)) < 2:
            continue
        score = silhouette_score(x, labels, metric="cosine")
        log.debug("silhouette k=%d: %.4f", k, score)
        if score > best:
            best_k, best = k, score
    if best_k is None:
        raise TopicError("no candidate k fits this corpus")
    return best_k


def initial_topics(embeddings: np.ndarray, doc_ids: Sequence[str], k: int, outlier_percentile: float = 0.2,
                   seed: int = 0) -> TopicAssignment:
    """Cosine k-means, then the least central floor(q*n) docs become OUTLIER.

    Surviving clusters are renumbered 1..M in order of their first member.
    """
    if not 0 <= outlier_percentile < 1:
        raise TopicError("outlier percentile must be in [0, 1)")
    x = np.asarray(embeddings, dtype=np.float64)
    clusters, centers = cosine_kmeans(x, k, seed)
    sims = np.einsum("ij,ij->i", x, centers[clusters])
    n_out = int(np.floor(outlier_percentile * len(x)))
    out = np.zeros(len(x), dtype=bool)
    if n_out:
        order = np.lexsort((np.arange(len(x)), sims))
        out[order[:n_out]] = True
    labels = np.zeros(len(x), dtype=np.int64)
    mapping: dict[int, int] = {}
    for i, c in enumerate(clusters):
        if out[i]:
            continue
        if c not in mapping:
            mapping[c] = len(mapping) + 1
        labels[i] = mapping[c]
    return TopicAssignment(tuple(doc_ids), labels)


# ---------------------------------------------------------------- representative words & merging

def scoring_exclusion(vocab: Vocabulary, stopwords: Iterable[str] = (), noun_filter: bool = True) -> np.ndarray:
    """Column mask of terms left out of c-TF-IDF: stopwords, and non-nouns when ``noun_filter``.

    Scoring nouns only keeps predicate words ("broke", "terrible") out of
    the per-topic token totals, so shared topic nouns are not diluted.
    """
    stop = set(stopwords)
    return np.array([(w in stop) or (noun_filter and tag_word(w) != "NOUN") for w in vocab.tokens], dtype=bool)


def representative_words(assignment: TopicAssignment, table: CTfidfTable, vocab: Vocabulary,
                         config: MergeConfig = MergeConfig(),
                         exclude: Iterable[str] = ()) -> dict[int, TopicSummary]:
    """Top ``top_r`` c-TF-IDF terms per topic; keywords are those scoring >= s.

    Ties in score are ordered by the term itself. With ``noun_filter`` only
    terms the tagger marks NOUN are eligible.
    """
    excluded = set(exclude)
    eligible = np.array([
        (w not in excluded) and (not config.noun_filter or tag_word(w) == "NOUN") for w in vocab.tokens
    ], dtype=bool)
    sizes = assignment.sizes()
    out = {}
    for topic in table.topics:
        row = table.row(topic)
        cand = np.flatnonzero(eligible & (row > 0))
        order = sorted(cand, key=lambda j: (-row[j], vocab.tokens[j]))[: config.top_r]
        words = tuple((vocab.tokens[j], float(row[j])) for j in order)
        keywords = tuple(w for w, s in words if s >= config.s)
        out[topic] = TopicSummary(topic, words, keywords, sizes.get(topic, 0))
    return out


def merge_topics(summaries: dict[int, TopicSummary],
                 assignment: TopicAssignment) -> tuple[TopicAssignment, list[dict]]:
    """Merge topics connected through shared keywords (transitively).

    Each connected component takes the smallest member id. OUTLIER is never
    merged. Ids are not renumbered here, which keeps the operation
    idempotent; ``adjust_minor_topics`` densifies them.
    """
    parent: dict[int, int] = {}

    def find(t):
        while parent[t] != t:
            parent[t] = parent[parent[t]]
            t = parent[t]
        return t

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    topics = sorted(set(assignment.topics) | {t for t in summaries if t != OUTLIER})
    for t in topics:
        parent[t] = t
    by_keyword: dict[str, list[int]] = {}
    for t in topics:
        if t in summaries:
            for kw in summaries[t].keywords:
                by_keyword.setdefault(kw, []).append(t)
    for members in by_keyword.values():
        for other in members[1:]:
            union(members[0], other)

    root = {t: find(t) for t in topics}
    labels = np.array([root.get(int(t), int(t)) if t != OUTLIER else OUTLIER for t in assignment.labels],
                      dtype=np.int64)
    groups: dict[int, list[int]] = {}
    for t, r in root.items():
        groups.setdefault(r, []).append(t)
    merge_log = []
    for r in sorted(groups):
        members = sorted(groups[r])
        if len(members) > 1:
            shared = sorted(kw for kw, ts in by_keyword.items() if len(set(ts) & set(members)) > 1)
            merge_log.append({"merged_into": r, "members": members, "shared_keywords": shared})
    return assignment.with_labels(labels), merge_log


def renumber_dense(labels: np.ndarray) -> np.ndarray:
    """Map non-outlier ids to 1..M preserving their order."""
    labels = np.asarray(labels, dtype=np.int64)
    ids = [int(t) for t in np.unique(labels) if t != OUTLIER]
    mapping = {t: i + 1 for i, t in enumerate(ids)}
    mapping[OUTLIER] = OUTLIER
    return np.array([mapping[int(t)] for t in labels], dtype=np.int64)


def adjust_minor_topics(assignment: TopicAssignment, min_topic_size: int = 5) -> TopicAssignment:
    """Topics smaller than ``min_topic_size`` become OUTLIER; the rest are renumbered densely."""
    sizes = assignment.sizes()
    labels = np.array([OUTLIER if t != OUTLIER and sizes[int(t)] < min_topic_size else t
                       for t in assignment.labels], dtype=np.int64)
    return assignment.with_labels(renumber_dense(labels))
