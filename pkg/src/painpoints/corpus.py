"""Review ingestion, text normalization, keyword lexicon and review filtering."""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from painpoints.features import split_sentences

SENTIMENTS = ("positive", "negative")
DROP_REASONS = ("duplicate", "too_short", "no_keyword")
_FIELDS = ("id", "text", "sentiment", "product_group", "source_type", "timestamp")


class CorpusError(ValueError):
    """Raised for malformed input files or invalid corpus operations."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RawReview:
    id: str
    text: str
    sentiment: str | None = None
    product_group: str | None = None
    source_type: str | None = None
    timestamp: str | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in _FIELDS if getattr(self, k) is not None}


@dataclass(frozen=True)
class CleanReview:
    id: str
    tokens: tuple[str, ...]
    normalized_text: str
    kept: bool = True
    drop_reason: str | None = None
    sentiment: str | None = None
    # token offsets where each sentence starts; always begins with 0
    sentence_starts: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.kept and self.drop_reason is not None:
            raise CorpusError(f"review {self.id}: kept review cannot carry a drop reason")
        if not self.kept and self.drop_reason not in DROP_REASONS:
            raise CorpusError(f"review {self.id}: unknown drop reason {self.drop_reason!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "tokens": list(self.tokens),
            "normalized_text": self.normalized_text,
            "kept": self.kept,
            "drop_reason": self.drop_reason,
            "sentiment": self.sentiment,
            "sentence_starts": list(self.sentence_starts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CleanReview":
        return cls(
            id=d["id"],
            tokens=tuple(d["tokens"]),
            normalized_text=d["normalized_text"],
            kept=d["kept"],
            drop_reason=d.get("drop_reason"),
            sentiment=d.get("sentiment"),
            sentence_starts=tuple(d.get("sentence_starts", (0,))),
        )


@dataclass(frozen=True)
class KeywordLexicon:
    keywords: frozenset[str]
    stopwords: frozenset[str]
    min_negative_freq: int = 5

    def __post_init__(self):
        if self.keywords & self.stopwords:
            raise CorpusError("keywords and stopwords must be disjoint")
        if self.min_negative_freq < 1:
            raise CorpusError("min_negative_freq must be positive")

    def to_dict(self) -> dict:
        return {
            "keywords": sorted(self.keywords),
            "stopwords": sorted(self.stopwords),
            "min_negative_freq": self.min_negative_freq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KeywordLexicon":
        return cls(frozenset(d["keywords"]), frozenset(d["stopwords"]), d["min_negative_freq"])


@dataclass(frozen=True)
class FilterConfig:
    min_tokens: int = 10
    dedupe: bool = True
    require_keyword: bool = True
    normalization_rules: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.min_tokens < 1:
            raise ConfigError("min_tokens must be >= 1")
        compile_rules(self.normalization_rules)


# ---------------------------------------------------------------- ingest

def _review_from_record(rec: dict, where: str) -> RawReview:
    if not isinstance(rec, dict):
        raise CorpusError(f"{where}: record is not an object")
    rid, text = rec.get("id"), rec.get("text")
    if rid is None or str(rid) == "":
        raise CorpusError(f"{where}: missing id")
    if not isinstance(text, str) or not text.strip():
        raise CorpusError(f"{where}: missing or empty text")
    sentiment = rec.get("sentiment") or None
    if sentiment is not None and sentiment not in SENTIMENTS:
        raise CorpusError(f"{where}: sentiment must be one of {SENTIMENTS}, got {sentiment!r}")
    opt = {k: (rec.get(k) or None) for k in ("product_group", "source_type", "timestamp")}
    return RawReview(id=str(rid), text=text, sentiment=sentiment, **opt)


def ingest(path: str | Path, format: str | None = None) -> list[RawReview]:
    """Read reviews from a JSONL or CSV file.

    Duplicate ids are an error, not silently renamed.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("jsonl", "csv"):
        raise CorpusError(f"unsupported format {format!r}")
    if not path.exists():
        raise CorpusError(f"input file not found: {path}")

    reviews: list[RawReview] = []
    with path.open(encoding="utf-8", newline="") as fh:
        if format == "jsonl":
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
                reviews.append(_review_from_record(rec, f"{path}:{lineno}"))
        else:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return []
            missing = {"id", "text"} - set(reader.fieldnames)
            if missing:
                raise CorpusError(f"{path}:1: CSV header lacks columns {sorted(missing)}")
            for row in reader:
                reviews.append(_review_from_record(row, f"{path}:{reader.line_num}"))

    seen: set[str] = set()
    for r in reviews:
        if r.id in seen:
            raise CorpusError(f"duplicate review id {r.id!r} in {path}")
        seen.add(r.id)
    return reviews


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """One token per line, UTF-8. ``None`` loads the bundled English list."""
    if path is None:
        text = resources.files("painpoints.data").joinpath("stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))


# ---------------------------------------------------------------- normalize

_WS = re.compile(r"\s+")


def compile_rules(rules: Sequence[tuple[str, str]]) -> list[tuple[re.Pattern, str]]:
    compiled = []
    for pattern, repl in rules:
        try:
            compiled.append((re.compile(pattern), repl))
        except re.error as exc:
            raise ConfigError(f"invalid normalization rule {pattern!r}: {exc}") from None
    return compiled


def normalize(text: str, rules: Sequence[tuple[str, str]] = ()) -> str:
    """Apply rewrite rules in order, then collapse whitespace.

    Rules are re-applied until the text stops changing so that
    ``normalize(normalize(s)) == normalize(s)`` holds for any rule set
    that converges (capped at 10 passes).
    """
    compiled = compile_rules(rules)
    out = _WS.sub(" ", text).strip()
    for _ in range(10):
        prev = out
        for pat, repl in compiled:
            out = pat.sub(repl, out)
        out = _WS.sub(" ", out).strip()
        if out == prev:
            break
    return out


# ---------------------------------------------------------------- lexicon

def build_keyword_lexicon(
    reviews: Sequence[CleanReview], stopwords: Iterable[str], min_negative_freq: int = 5
) -> KeywordLexicon:
    stop = frozenset(stopwords)
    negatives = [r for r in reviews if r.sentiment == "negative"]
    if not negatives:
        raise CorpusError("keyword lexicon needs at least one review labeled negative")
    counts = Counter(tok for r in negatives for tok in r.tokens)
    keywords = frozenset(w for w, c in counts.items() if c >= min_negative_freq and w not in stop)
    return KeywordLexicon(keywords, stop, min_negative_freq)


# ---------------------------------------------------------------- filter

def preprocess(reviews: Sequence[RawReview], config: FilterConfig = FilterConfig()) -> list[CleanReview]:
    """Normalize and tokenize; every review comes back kept (filtering is separate)."""
    out = []
    for r in reviews:
        text = normalize(r.text, config.normalization_rules)
        sents = split_sentences(text)
        tokens, starts = [], []
        for s in sents:
            if s:
                starts.append(len(tokens))
                tokens.extend(s)
        out.append(CleanReview(r.id, tuple(tokens), text, sentiment=r.sentiment,
                               sentence_starts=tuple(starts) or (0,)))
    return out


def filter_reviews(
    reviews: Sequence[CleanReview], lexicon: KeywordLexicon | None, config: FilterConfig = FilterConfig()
) -> list[CleanReview]:
    """Mark each review kept or dropped; output order equals input order.

    A duplicate group keeps its lexicographically smallest id. Checks run
    in the order duplicate, too_short, no_keyword; the first failing one
    becomes the drop reason.
    """
    if config.require_keyword and lexicon is None:
        raise CorpusError("require_keyword is set but no lexicon was given")
    keeper: dict[str, str] = {}
    if config.dedupe:
        for r in reviews:
            cur = keeper.get(r.normalized_text)
            if cur is None or r.id < cur:
                keeper[r.normalized_text] = r.id

    out = []
    for r in reviews:
        reason = None
        if config.dedupe and keeper[r.normalized_text] != r.id:
            reason = "duplicate"
        elif len(r.tokens) < config.min_tokens:
            reason = "too_short"
        elif config.require_keyword and not any(t in lexicon.keywords for t in r.tokens):
            reason = "no_keyword"
        out.append(replace(r, kept=reason is None, drop_reason=reason))
    return out


def kept(reviews: Iterable[CleanReview]) -> list[CleanReview]:
    return [r for r in reviews if r.kept]
