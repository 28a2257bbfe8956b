"""Rule-based POS tagging and NP/VP chunking, with an external-annotation escape hatch.

Grammar (left to right, greedy, non-overlapping)::

    NP = DET? ADJ* NOUN+     head = last NOUN
    VP = ADV* VERB+ ADJ*     head = first VERB
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

TAGS = ("NOUN", "VERB", "ADJ", "ADV", "DET", "PRON", "ADP", "OTHER")


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class PosTaggedToken:
    token: str
    tag: str


@dataclass(frozen=True)
class PhraseChunk:
    kind: str  # NP or VP
    start: int
    end: int  # exclusive
    head: int  # absolute token index

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError("chunk span must be non-empty")
        if not self.start <= self.head < self.end:
            raise ValueError("chunk head must lie inside the span")

    def __contains__(self, i: int) -> bool:
        return self.start <= i < self.end


_W = lambda s: frozenset(s.split())  # noqa: E731

LEXICON: dict[str, str] = {}
for _tag, _words in {
    "DET": _W("a an the this that these those my your his her its our their some any no every each "
              "another either neither all both"),
    "PRON": _W("i me you he she it we they them us him mine yours ours theirs myself yourself itself "
               "themselves ourselves who whom what which something anything nothing everything someone"),
    "ADP": _W("in on at by for with about against between into through during before after above below "
              "to from up down of off over under again than as like without within along across behind"),
    "ADV": _W("please not never very too so really quite just also always often sometimes still already soon "
              "again almost rather pretty even only much more most less least well fast hard now then "
              "here there today yesterday tomorrow ever once twice"),
    "VERB": _W("is am are was were be been being do does did done have has had get gets got make makes made "
               "work works go goes went take takes took keep keeps kept break breaks broke broken stop stops "
               "leak leaks drain drains buy bought use uses feel feels felt look looks seem seems come comes "
               "came run runs ran turn turns fail fails need needs want wants love loves hate hates like likes "
               "can could will would should must may might shall charge charges smell smells die dies died "
               "clean cleans cleaned dry dries dried performs perform hold holds held fix fixes replace replaces"),
    "ADJ": _W("good bad great poor terrible awful excellent amazing nice perfect horrible loud quiet big small "
              "slow cheap expensive new old weak strong hot cold easy difficult heavy light lovely happy sad "
              "disappointing annoying useless worse worst better best broken noisy dirty fine decent weird "
              "impressive satisfied unhappy reliable unreliable solid flimsy sturdy wrong"),
    "OTHER": _W("and or but if because while although though yes"),
}.items():
    for _w in _words:
        LEXICON.setdefault(_w, _tag)

SUFFIX_RULES: tuple[tuple[str, str], ...] = (
    ("ly", "ADV"),
    ("ing", "VERB"),
    ("ed", "VERB"),
    ("ous", "ADJ"),
    ("ful", "ADJ"),
    ("less", "ADJ"),
    ("able", "ADJ"),
    ("ible", "ADJ"),
    ("ive", "ADJ"),
    ("ish", "ADJ"),
)


def tag_word(word: str, lexicon: dict[str, str] | None = None) -> str:
    lex = LEXICON if lexicon is None else lexicon
    w = word.lower()
    if w in lex:
        return lex[w]
    if w.isdigit():
        return "OTHER"
    for suffix, tag in SUFFIX_RULES:
        if len(w) > len(suffix) + 2 and w.endswith(suffix):
            return tag
    return "NOUN"


def pos_tag(tokens: Sequence[str], lexicon: dict[str, str] | None = None) -> list[PosTaggedToken]:
    """Lexicon lookup, then suffix rules, then NOUN."""
    return [PosTaggedToken(t, tag_word(t, lexicon)) for t in tokens]


def _run(tags, i, tag):
    while i < len(tags) and tags[i] == tag:
        i += 1
    return i


def chunk(tagged: Sequence[PosTaggedToken] | Sequence[str], offset: int = 0) -> list[PhraseChunk]:
    """Greedy left-to-right NP/VP chunking of one sentence.

    Accepts tagged tokens or bare tag strings. ``offset`` is added to all
    indices so chunks of later sentences carry document positions.
    """
    tags = [t.tag if isinstance(t, PosTaggedToken) else t for t in tagged]
    chunks = []
    i = 0
    while i < len(tags):
        # NP
        j = i + 1 if tags[i] == "DET" else i
        j = _run(tags, j, "ADJ")
        k = _run(tags, j, "NOUN")
        if k > j:
            chunks.append(PhraseChunk("NP", i + offset, k + offset, k - 1 + offset))
            i = k
            continue
        # VP
        j = _run(tags, i, "ADV")
        k = _run(tags, j, "VERB")
        if k > j:
            end = _run(tags, k, "ADJ")
            chunks.append(PhraseChunk("VP", i + offset, end + offset, j + offset))
            i = end
            continue
        i += 1
    return chunks


@dataclass(frozen=True)
class DocAnalysis:
    """Tags and chunks for one document plus its sentence boundaries."""

    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    chunks: tuple[PhraseChunk, ...]
    sentence_starts: tuple[int, ...] = (0,)

    def sentence_of(self, i: int) -> int:
        s = 0
        for k, start in enumerate(self.sentence_starts):
            if start <= i:
                s = k
        return s

    def chunk_at(self, i: int) -> PhraseChunk | None:
        for c in self.chunks:
            if i in c:
                return c
        return None


def analyze(tokens: Sequence[str], sentence_starts: Sequence[int] = (0,),
            lexicon: dict[str, str] | None = None) -> DocAnalysis:
    tagged = pos_tag(tokens, lexicon)
    starts = sorted(set(sentence_starts) | {0})
    bounds = starts + [len(tokens)]
    chunks = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        chunks.extend(chunk(tagged[a:b], offset=a))
    return DocAnalysis(tuple(tokens), tuple(t.tag for t in tagged), tuple(chunks), tuple(starts))


def related_np(doc: DocAnalysis, i: int) -> PhraseChunk | None:
    """Nearest NP to the left of token ``i`` within its sentence, else nearest to the right."""
    s = doc.sentence_of(i)
    same = [c for c in doc.chunks if c.kind == "NP" and doc.sentence_of(c.start) == s and i not in c]
    left = [c for c in same if c.end <= i]
    if left:
        return max(left, key=lambda c: c.end)
    right = [c for c in same if c.start > i]
    if right:
        return min(right, key=lambda c: c.start)
    return None


# ---------------------------------------------------------------- external annotations

ANNOTATION_COLUMNS = ("doc_id", "token_index", "token", "tag", "chunk_kind", "chunk_id", "head_index")


def load_annotations(path: str | Path) -> dict[str, DocAnalysis]:
    """Read a TSV of per-token annotations (see ``ANNOTATION_COLUMNS``).

    ``chunk_kind`` is NP, VP or O (outside); ``chunk_id`` groups the rows of
    one chunk; ``head_index`` is the document token index of that chunk's
    head (ignored for O rows). Sentence boundaries are not encoded, so an
    annotated document is one sentence.
    """
    rows: dict[str, list[tuple[int, list[str]]]] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), 1):
            if not row or (lineno == 1 and row[0] == "doc_id"):
                continue
            if len(row) != len(ANNOTATION_COLUMNS):
                raise AnnotationError(f"{path}:{lineno}: expected {len(ANNOTATION_COLUMNS)} columns, got {len(row)}")
            doc_id, idx, tok, tag, kind, cid, head = row
            if tag not in TAGS:
                raise AnnotationError(f"{path}:{lineno}: unknown tag {tag!r}")
            if kind not in ("NP", "VP", "O"):
                raise AnnotationError(f"{path}:{lineno}: unknown chunk kind {kind!r}")
            try:
                idx_i = int(idx)
            except ValueError:
                raise AnnotationError(f"{path}:{lineno}: token_index is not an integer") from None
            rows.setdefault(doc_id, []).append((idx_i, [tok, tag, kind, cid, head, lineno]))

    out = {}
    for doc_id, items in rows.items():
        items.sort(key=lambda x: x[0])
        if [i for i, _ in items] != list(range(len(items))):
            raise AnnotationError(f"{path}: doc {doc_id!r} token indices are not 0..n-1")
        tokens = tuple(it[1][0] for it in items)
        tags = tuple(it[1][1] for it in items)
        spans: dict[str, list] = {}
        for i, (tok, tag, kind, cid, head, lineno) in items:
            if kind == "O":
                continue
            sp_ = spans.get(cid)
            if sp_ is None:
                spans[cid] = [kind, i, i + 1, head, lineno]
                continue
            if sp_[0] != kind or i != sp_[2] or sp_[3] != head:
                raise AnnotationError(f"{path}:{lineno}: doc {doc_id!r} chunk {cid!r} is inconsistent")
            sp_[2] = i + 1
        chunks = []
        for kind, a, b, head, lineno in spans.values():
            try:
                chunks.append(PhraseChunk(kind, a, b, int(head)))
            except ValueError as exc:
                raise AnnotationError(f"{path}:{lineno}: doc {doc_id!r}: {exc}") from None
        chunks.sort(key=lambda c: c.start)
        out[doc_id] = DocAnalysis(tokens, tags, tuple(chunks), (0,))
    return out


def resolve_analyses(docs: dict[str, tuple[Sequence[str], Sequence[int]]],
                     annotations: dict[str, DocAnalysis] | None = None) -> dict[str, DocAnalysis]:
    """Built-in analysis per doc, replaced wholesale by external annotations where present."""
    annotations = annotations or {}
    unknown = sorted(set(annotations) - set(docs))
    if unknown:
        raise AnnotationError(f"annotations reference unknown doc ids: {unknown[:5]}")
    out = {}
    for doc_id, (tokens, starts) in docs.items():
        ann = annotations.get(doc_id)
        if ann is not None:
            if len(ann.tokens) != len(tokens):
                raise AnnotationError(
                    f"doc {doc_id!r}: annotation has {len(ann.tokens)} tokens, corpus has {len(tokens)}")
            out[doc_id] = ann
        else:
            out[doc_id] = analyze(tokens, starts)
    return out
