"""Seeded synthetic review corpora with ground truth, used as test oracles."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from painpoints.corpus import RawReview, write_jsonl
from painpoints.topics import OUTLIER, TopicAssignment


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class TopicSpec:
    name: str
    keywords: tuple[str, ...]
    fillers: tuple[str, ...]  # templates with a {kw} slot


DEFAULT_FILLERS = (
    "i got this {kw} last month",
    "we use the {kw} every day",
    "this review is about the {kw}",
    "i have had the {kw} for a year",
    "so here is my take on the {kw}",
)

# three planted pain-point keywords per topic
DEFAULT_TOPICS = (
    TopicSpec("cleaning", ("roller", "hose", "bin"), DEFAULT_FILLERS),
    TopicSpec("drying", ("heater", "vent", "sensor"), DEFAULT_FILLERS),
    TopicSpec("connectivity", ("login", "bluetooth", "password"), DEFAULT_FILLERS),
    TopicSpec("scheduling", ("timer", "reminder", "countdown"), DEFAULT_FILLERS),
    TopicSpec("design", ("scratch", "crack", "hinge"), DEFAULT_FILLERS),
)

POSITIVE_PHRASES = ("works great", "is excellent", "is amazing", "is perfect", "performs well",
                    "is lovely", "works nicely")
NEGATIVE_PHRASES = ("stopped working", "is terrible", "keeps failing", "is awful", "broke quickly",
                    "is disappointing", "failed again")
GLOBAL_NEGATIVE = ("battery", "filter", "noise", "warranty", "refund")
NOISE_BANK = tuple("""apple garden window coffee river pencil tiger blanket candle mirror ticket
    guitar rocket planet island forest bottle jacket pillow ladder basket wallet marble anchor
    violin saddle lantern compass feather harbor meadow canyon glacier falcon walnut pepper
    cabbage carrot onion potato tomato lemon cherry mango peach plum grape melon kiwi""".split())


@dataclass(frozen=True)
class GeneratorSpec:
    topics: tuple[TopicSpec, ...] = DEFAULT_TOPICS
    positive_phrases: tuple[str, ...] = POSITIVE_PHRASES
    negative_phrases: tuple[str, ...] = NEGATIVE_PHRASES
    global_negative: tuple[str, ...] = GLOBAL_NEGATIVE
    noise_bank: tuple[str, ...] = NOISE_BANK
    docs_per_topic: int = 200
    negative_fraction: float = 0.4
    noise_rate: float = 0.05
    # chance that a positive review also praises one of the global aspects
    positive_mention_rate: float = 0.5
    keywords_per_doc: int = 2
    seed: int = 0

    def validate(self) -> None:
        if not self.topics:
            raise SynthError("at least one topic is required")
        banks = [set(t.keywords) for t in self.topics] + [set(self.global_negative)]
        for t in self.topics:
            if not t.keywords or not t.fillers:
                raise SynthError(f"topic {t.name!r} has an empty keyword or filler bank")
            if len(t.keywords) < self.keywords_per_doc:
                raise SynthError(f"topic {t.name!r} has fewer than {self.keywords_per_doc} keywords")
        if not self.positive_phrases or not self.negative_phrases:
            raise SynthError("sentiment phrase banks must be non-empty")
        for i in range(len(banks)):
            for j in range(i + 1, len(banks)):
                if banks[i] & banks[j]:
                    raise SynthError(f"keyword banks overlap: {sorted(banks[i] & banks[j])}")
        for rate in (self.negative_fraction, self.noise_rate, self.positive_mention_rate):
            if not 0 <= rate <= 1:
                raise SynthError("rates must lie in [0, 1]")
        if self.keywords_per_doc < 2:
            raise SynthError("each doc needs at least two topic keywords")


@dataclass(frozen=True)
class GroundTruth:
    doc_id: str
    topic: int  # 1-based
    sentiment: str
    planted: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"id": self.doc_id, "topic": self.topic, "sentiment": self.sentiment, "planted": list(self.planted)}


def _pick(rng, bank):
    return bank[int(rng.integers(len(bank)))]


def generate(spec: GeneratorSpec = GeneratorSpec()) -> tuple[list[RawReview], list[GroundTruth]]:
    """Build ``docs_per_topic`` reviews per topic, interleaved so topics are not blocked together.

    Every review has ``keywords_per_doc`` distinct topic keywords and at
    least ten tokens. Negative reviews also plant one global negative
    keyword; positive ones sometimes praise one, so those words are not
    trivially sentiment-exclusive.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    jobs = [(t, k) for k in range(spec.docs_per_topic) for t in range(len(spec.topics))]
    n_neg = int(round(spec.negative_fraction * len(jobs)))
    negative = np.zeros(len(jobs), dtype=bool)
    negative[rng.permutation(len(jobs))[:n_neg]] = True

    reviews, truth = [], []
    width = len(str(len(jobs)))
    for n, ((ti, _), neg) in enumerate(zip(jobs, negative)):
        topic = spec.topics[ti]
        kws = list(rng.choice(topic.keywords, size=spec.keywords_per_doc, replace=False))
        planted = list(kws)
        sentences = [_pick(rng, topic.fillers).format(kw=kws[0])]
        phrases = spec.negative_phrases if neg else spec.positive_phrases
        for kw in kws[1:]:
            sentences.append(f"the {kw} {_pick(rng, phrases)}")
        if neg:
            if spec.global_negative:
                planted.append(_pick(rng, spec.global_negative))
                sentences.append(f"the {planted[-1]} {_pick(rng, spec.negative_phrases)}")
        elif spec.global_negative and rng.random() < spec.positive_mention_rate:
            sentences.append(f"the {_pick(rng, spec.global_negative)} {_pick(rng, spec.positive_phrases)}")

        noisy = []
        for s in sentences:
            words = []
            for w in s.split():
                words.append(w)
                if spec.noise_bank and rng.random() < spec.noise_rate:
                    words.append(_pick(rng, spec.noise_bank))
            noisy.append(" ".join(words))
        text = ". ".join(noisy) + "."
        while len(text.split()) < 10:
            text += " " + _pick(rng, topic.fillers).format(kw=kws[0]) + "."
        doc_id = f"s{n:0{width}d}"
        sentiment = "negative" if neg else "positive"
        reviews.append(RawReview(doc_id, text, sentiment, product_group=topic.name, source_type="synthetic"))
        truth.append(GroundTruth(doc_id, ti + 1, sentiment, tuple(planted)))
    return reviews, truth


_CORRUPT_STREAM = 7919


def corrupt_assignment(truth: Sequence[GroundTruth] | Sequence[int], outlier_rate: float, flip_rate: float,
                       seed: int = 0, doc_ids: Sequence[str] | None = None) -> TopicAssignment:
    """Relabel exactly round(outlier_rate*n) docs to OUTLIER and round(flip_rate*n) to a wrong topic.

    The random stream is keyed separately from ``generate``, so reusing one
    seed for both does not tie the corrupted docs to the negative ones.
    """
    if not (0 <= outlier_rate <= 1 and 0 <= flip_rate <= 1) or outlier_rate + flip_rate > 1:
        raise SynthError("rates must lie in [0, 1] and sum to at most 1")
    if truth and isinstance(truth[0], GroundTruth):
        doc_ids = [g.doc_id for g in truth]
        labels = np.array([g.topic for g in truth], dtype=np.int64)
    else:
        labels = np.asarray(truth, dtype=np.int64)
        doc_ids = list(doc_ids) if doc_ids is not None else [str(i) for i in range(len(labels))]
    n = len(labels)
    topics = np.unique(labels[labels != OUTLIER])
    rng = np.random.default_rng([seed, _CORRUPT_STREAM])
    order = rng.permutation(n)
    n_out = int(round(outlier_rate * n))
    n_flip = int(round(flip_rate * n))
    out = labels.copy()
    out[order[:n_out]] = OUTLIER
    for i in order[n_out:n_out + n_flip]:
        wrong = topics[topics != labels[i]]
        if len(wrong):
            out[i] = wrong[int(rng.integers(len(wrong)))]
    return TopicAssignment(tuple(doc_ids), out)


def write_corpus(reviews: Sequence[RawReview], truth: Sequence[GroundTruth], path: str | Path) -> Path:
    """Write the corpus JSONL and a ``<stem>.truth.jsonl`` sidecar; returns the sidecar path."""
    path = Path(path)
    write_jsonl(path, (r.to_dict() for r in reviews))
    sidecar = path.with_name(path.stem + ".truth.jsonl")
    write_jsonl(sidecar, (g.to_dict() for g in truth))
    return sidecar


def read_truth(path: str | Path) -> list[GroundTruth]:
    with Path(path).open(encoding="utf-8") as fh:
        return [GroundTruth(d["id"], d["topic"], d["sentiment"], tuple(d["planted"]))
                for d in map(json.loads, fh) if d]
