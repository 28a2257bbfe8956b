"""Topic coherence (PMI / NPMI), outlier ratio and classification metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from painpoints.topics import OUTLIER, TopicAssignment

log = logging.getLogger(__name__)


class MetricError(ValueError):
    pass


class CooccurrenceCounts:
    """Document-level occurrence counts; a document is one co-occurrence window."""

    def __init__(self, docs: Iterable[Iterable[str]]):
        words: dict[str, int] = {}
        rows, cols = [], []
        n = 0
        for i, d in enumerate(docs):
            n += 1
            for w in set(d):
                j = words.setdefault(w, len(words))
                rows.append(i)
                cols.append(j)
        self.total = n
        self._index = words
        self._occ = sp.csc_matrix((np.ones(len(rows), dtype=np.int64), (rows, cols)), shape=(n, len(words)))
        self._df = np.asarray(self._occ.sum(axis=0)).ravel()

    def __contains__(self, w: str) -> bool:
        return w in self._index

    def _col(self, w: str) -> int:
        try:
            return self._index[w]
        except KeyError:
            raise MetricError(f"word {w!r} does not occur in the reference corpus") from None

    def df(self, w: str) -> int:
        return int(self._df[self._col(w)])

    def joint(self, a: str, b: str) -> int:
        ca, cb = self._occ[:, self._col(a)], self._occ[:, self._col(b)]
        return int(ca.multiply(cb).sum())


def pmi(a: str, b: str, counts: CooccurrenceCounts) -> float:
    """ln(P(a,b) / (P(a) P(b))) with document probabilities; -inf when never together."""
    n = counts.total
    joint = counts.joint(a, b)
    if joint == 0:
        return -math.inf
    return math.log((joint / n) / ((counts.df(a) / n) * (counts.df(b) / n)))


def npmi(a: str, b: str, counts: CooccurrenceCounts) -> float:
    """PMI / -ln P(a,b), in [-1, 1].

    Conventions: never co-occurring -> -1; a == b, a pair that only ever
    occurs together, or one present in every document (P(a,b) = 1) -> 1.
    """
    n = counts.total
    joint = counts.joint(a, b)
    if joint == 0:
        return -1.0
    if a == b or joint == n or joint == counts.df(a) == counts.df(b):
        return 1.0
    value = pmi(a, b, counts) / -math.log(joint / n)
    return min(1.0, max(-1.0, value))


@dataclass
class CoherenceReport:
    per_topic: dict[int, float]
    mean: float
    skipped: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_topic": {str(k): v for k, v in sorted(self.per_topic.items())},
            "mean": self.mean,
            "skipped": self.skipped,
        }


def topic_coherence(topic_words: Mapping[int, Sequence[str]], counts: CooccurrenceCounts,
                    top_r: int = 10) -> CoherenceReport:
    """Mean pairwise NPMI of each topic's top words; plain average over topics.

    ``topic_words`` maps topic id to ranked words (a TopicSummary mapping
    works too). OUTLIER is excluded.
    """
    per_topic, skipped = {}, []
    for topic in sorted(topic_words):
        if topic == OUTLIER:
            continue
        words = topic_words[topic]
        if hasattr(words, "words"):
            words = [w for w, _ in words.words]
        words = [w for w in list(words)[:top_r] if w in counts]
        if len(words) < 2:
            log.warning("topic %s has fewer than two scorable words; skipped", topic)
            skipped.append(topic)
            continue
        vals = [npmi(words[i], words[j], counts) for i in range(len(words)) for j in range(i + 1, len(words))]
        per_topic[topic] = float(np.mean(vals))
    mean = float(np.mean(list(per_topic.values()))) if per_topic else float("nan")
    return CoherenceReport(per_topic, mean, skipped)


def outlier_ratio(assignment: TopicAssignment | Sequence[int]) -> float:
    labels = assignment.labels if isinstance(assignment, TopicAssignment) else np.asarray(assignment)
    if len(labels) == 0:
        raise MetricError("empty assignment")
    return float(np.mean(np.asarray(labels) == OUTLIER))


def classification_report(preds: Sequence, golds: Sequence) -> dict:
    """Accuracy, macro-F1 and per-class precision/recall/F1 over the gold label set."""
    preds, golds = list(preds), list(golds)
    if not golds:
        raise MetricError("empty input")
    if len(preds) != len(golds):
        raise MetricError("predictions and gold labels differ in length")
    classes = sorted(set(golds) | set(preds), key=str)
    per_class = {}
    for c in classes:
        tp = sum(p == c and g == c for p, g in zip(preds, golds))
        fp = sum(p == c and g != c for p, g in zip(preds, golds))
        fn = sum(p != c and g == c for p, g in zip(preds, golds))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[str(c)] = {"precision": precision, "recall": recall, "f1": f1, "support": tp + fn}
    accuracy = sum(p == g for p, g in zip(preds, golds)) / len(golds)
    macro_f1 = float(np.mean([v["f1"] for v in per_class.values()]))
    return {"accuracy": accuracy, "macro_f1": macro_f1, "per_class": per_class}


def topic_purity(labels: Sequence[int], truth: Sequence[int]) -> float:
    """Fraction of all docs whose topic's majority true class matches their own.

    OUTLIER docs count as misassigned, so shrinking the outlier class
    correctly raises purity.
    """
    labels, truth = np.asarray(labels), np.asarray(truth)
    if len(labels) == 0:
        raise MetricError("empty assignment")
    correct = 0
    for t in np.unique(labels):
        if t == OUTLIER:
            continue
        members = truth[labels == t]
        correct += np.bincount(members).max()
    return float(correct / len(labels))


def planted_banks(doc_topics: Mapping[str, int], doc_planted: Mapping[str, Sequence[str]]
                  ) -> tuple[dict[int, set[str]], set[str]]:
    """Split planted words into per-topic banks and a global bank.

    A word planted in docs of a single true topic belongs to that topic;
    one planted across two or more topics is global.
    """
    seen: dict[str, set[int]] = {}
    for doc, words in doc_planted.items():
        for w in words:
            seen.setdefault(w, set()).add(doc_topics[doc])
    banks: dict[int, set[str]] = {}
    global_words = set()
    for w, ts in seen.items():
        if len(ts) == 1:
            banks.setdefault(next(iter(ts)), set()).add(w)
        else:
            global_words.add(w)
    return banks, global_words


def planted_recovery(doc_ids: Sequence[str], labels: Sequence[int], doc_topics: Mapping[str, int],
                     doc_planted: Mapping[str, Sequence[str]], topic_words: Mapping[int, Sequence[str]],
                     sentiment_words: Sequence[str]) -> dict:
    """Share of planted words found in the extracted pain-point lists.

    Each true topic is matched to the discovered non-outlier topic holding
    most of its docs (ties to the smaller id); its score is the fraction
    of the true topic's bank present in that topic's list. The sentiment
    score is the fraction of the global bank in ``sentiment_words``.
    """
    labels = np.asarray(labels)
    truth = np.array([doc_topics[d] for d in doc_ids])
    banks, global_words = planted_banks(doc_topics, doc_planted)
    per_topic = {}
    for t in sorted(banks):
        overlap = {int(c): int(np.sum((labels == c) & (truth == t))) for c in topic_words if c != OUTLIER}
        overlap = {c: n for c, n in overlap.items() if n > 0}
        if not overlap:
            per_topic[t] = {"matched_topic": None, "recall": 0.0, "found": []}
            continue
        best = min(overlap, key=lambda c: (-overlap[c], c))
        found = sorted(banks[t] & set(topic_words[best]))
        per_topic[t] = {"matched_topic": best, "recall": len(found) / len(banks[t]), "found": found}
    sent_found = sorted(global_words & set(sentiment_words))
    return {
        "per_topic": per_topic,
        "sentiment": {"recall": len(sent_found) / len(global_words) if global_words else 0.0,
                      "found": sent_found},
    }
