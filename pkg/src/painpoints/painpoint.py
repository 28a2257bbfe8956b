"""Pain-point extraction: top-g attributed tokens, chunk-based expansion, frequency ranking."""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from painpoints import classifier as clf
from painpoints.chunker import DocAnalysis, related_np
from painpoints.corpus import CleanReview
from painpoints.features import Vocabulary
from painpoints.topics import OUTLIER

log = logging.getLogger(__name__)

MAX_EXAMPLES = 5


@dataclass(frozen=True)
class ExtractConfig:
    g: int = 3
    n_sentiment: int = 30
    n_per_topic: int = 10
    stopwords: frozenset[str] = frozenset()
    attribution_method: str = "integrated_gradients"
    ig_steps: int = 64

    def __post_init__(self):
        if self.g < 1 or self.n_sentiment < 1 or self.n_per_topic < 1:
            raise ValueError("g and N values must be >= 1")
        if self.attribution_method not in ("grad_input", "integrated_gradients"):
            raise ValueError(f"unknown attribution method {self.attribution_method!r}")


@dataclass(frozen=True)
class Candidate:
    doc_id: str
    index: int
    word: str
    score: float
    source: str  # "sentiment" or "topic:<id>"


@dataclass(frozen=True)
class ExpandedWord:
    doc_id: str
    word: str
    candidate: Candidate
    expanded: bool = True


@dataclass(frozen=True)
class PainPoint:
    word: str
    frequency: int
    examples: tuple[str, ...]


@dataclass
class PainPointSet:
    scope: str
    entries: list[PainPoint]
    provenance: dict[str, list[Candidate]] = field(default_factory=dict, repr=False)

    def words(self) -> list[str]:
        return [e.word for e in self.entries]

    def to_dict(self) -> dict:
        return {
            "scope": self.scope,
            "entries": [{"word": e.word, "frequency": e.frequency, "examples": list(e.examples)}
                        for e in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PainPointSet":
        return cls(d["scope"], [PainPoint(e["word"], e["frequency"], tuple(e["examples"])) for e in d["entries"]])


def write_painpoints(sets: Sequence[PainPointSet], json_path: str | Path, csv_path: str | Path | None = None) -> None:
    Path(json_path).write_text(json.dumps([s.to_dict() for s in sets], indent=2, sort_keys=True), encoding="utf-8")
    if csv_path is not None:
        with Path(csv_path).open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scope", "rank", "word", "frequency", "examples"])
            for s in sets:
                for rank, e in enumerate(s.entries, 1):
                    w.writerow([s.scope, rank, e.word, e.frequency, ";".join(e.examples)])


def read_painpoints(path: str | Path) -> list[PainPointSet]:
    return [PainPointSet.from_dict(d) for d in json.loads(Path(path).read_text(encoding="utf-8"))]


def topg_tokens(attr: clf.AttributionVector, g: int) -> list[int]:
    """Token positions of the g largest scores; ties go to the smaller position."""
    order = np.lexsort((attr.positions, -attr.scores))[:g]
    return [int(attr.positions[k]) for k in order]


def expand_candidates(candidates: Iterable[Candidate], analyses: Mapping[str, DocAnalysis]) -> list[ExpandedWord]:
    """Replace each candidate by the nouns of its NP, or of the NP related to it.

    Words inside an NP yield that NP's nouns. Words in a VP, or outside
    any chunk, yield the nouns of the nearest NP in the same sentence
    (left first). With no such NP the word itself is kept, marked
    ``expanded=False``.
    """
    out = []
    for c in candidates:
        doc = analyses[c.doc_id]
        chunk = doc.chunk_at(c.index)
        np_chunk = chunk if chunk is not None and chunk.kind == "NP" else related_np(doc, c.index)
        if np_chunk is None:
            out.append(ExpandedWord(c.doc_id, c.word, c, expanded=False))
            continue
        for i in range(np_chunk.start, np_chunk.end):
            if doc.tags[i] == "NOUN":
                out.append(ExpandedWord(c.doc_id, doc.tokens[i], c))
    return out


def rank_painpoints(expanded: Iterable[ExpandedWord] | Mapping[str, int], stopwords: Iterable[str] = (),
                    n: int = 30, scope: str = "sentiment") -> PainPointSet:
    """Top-n words by document frequency after stopword removal; ties by the word.

    A plain ``{word: count}`` mapping is accepted as well.
    """
    stop = set(stopwords)
    if isinstance(expanded, Mapping):
        counts = {w: c for w, c in expanded.items() if w not in stop}
        docs: dict[str, list[str]] = {}
        prov: dict[str, list[Candidate]] = {}
    else:
        docs = defaultdict(list)
        prov = defaultdict(list)
        for e in expanded:
            if e.word in stop:
                continue
            if e.doc_id not in docs[e.word]:
                docs[e.word].append(e.doc_id)
            prov[e.word].append(e.candidate)
        counts = {w: len(d) for w, d in docs.items()}
    ranked = sorted(counts, key=lambda w: (-counts[w], w))[:n]
    entries = [PainPoint(w, counts[w], tuple(docs.get(w, [])[:MAX_EXAMPLES])) for w in ranked]
    return PainPointSet(scope, entries, {w: list(prov.get(w, [])) for w in ranked})


def _candidates_for(review: CleanReview, model: clf.TextClassifier, vocab: Vocabulary, target: int,
                    config: ExtractConfig, source: str, task: str) -> list[Candidate]:
    ids, positions = vocab.encode(review.tokens)
    if ids.size == 0:
        log.warning("review %s has no in-vocabulary tokens; skipped", review.id)
        return []
    attr = clf.attribute(model, ids, target, config.attribution_method, positions, task, config.ig_steps)
    score_at = dict(zip(attr.positions.tolist(), attr.scores.tolist()))
    return [Candidate(review.id, i, review.tokens[i], score_at[i], source) for i in topg_tokens(attr, config.g)]


def extract_sentiment_painpoints(reviews: Sequence[CleanReview], model: clf.TextClassifier, vocab: Vocabulary,
                                 analyses: Mapping[str, DocAnalysis], config: ExtractConfig = ExtractConfig(),
                                 negative_class: int | None = None) -> PainPointSet:
    """Pain points from reviews the sentiment model predicts negative."""
    if negative_class is None:
        negative_class = list(model.classes).index("negative") if "negative" in model.classes else 1
    encoded = [vocab.encode(r.tokens)[0] for r in reviews]
    usable = [i for i, e in enumerate(encoded) if e.size]
    if not usable:
        return PainPointSet("sentiment", [])
    probas = clf.predict_proba_batch(model, [encoded[i] for i in usable])
    negatives = [reviews[i] for i, p in zip(usable, probas) if p.argmax() == negative_class]
    if not negatives:
        log.warning("no review is predicted negative; sentiment pain points are empty")
        return PainPointSet("sentiment", [])
    cands = []
    for r in negatives:
        cands.extend(_candidates_for(r, model, vocab, negative_class, config, "sentiment", "sentiment"))
    return rank_painpoints(expand_candidates(cands, analyses), config.stopwords, config.n_sentiment, "sentiment")


def extract_topic_painpoints(reviews: Sequence[CleanReview], labels: Sequence[int], model: clf.TextClassifier,
                             vocab: Vocabulary, analyses: Mapping[str, DocAnalysis],
                             config: ExtractConfig = ExtractConfig()) -> dict[int, PainPointSet]:
    """Per non-outlier topic: attribute member docs against that topic's class, expand, rank."""
    labels = np.asarray(labels)
    classes = list(model.classes)
    out = {}
    for topic in sorted({int(t) for t in labels} | {int(c) for c in classes}):
        if topic == OUTLIER:
            continue
        members = [r for r, t in zip(reviews, labels) if t == topic]
        if not members:
            log.warning("topic %d has no members; skipped", topic)
            continue
        target = classes.index(topic)
        cands = []
        for r in members:
            cands.extend(_candidates_for(r, model, vocab, target, config, f"topic:{topic}", "topic"))
        out[topic] = rank_painpoints(expand_candidates(cands, analyses), config.stopwords,
                                     config.n_per_topic, f"topic:{topic}")
    return out
