"""Staged pipeline. Every stage reads and writes plain files in the output directory,
so any stage can be rerun on its own once its inputs exist."""

from __future__ import annotations

import json
import logging
import platform
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from painpoints import __version__
from painpoints import classifier as clf
from painpoints import corpus, features, itm, metrics, painpoint, synth, topics
from painpoints.chunker import load_annotations, resolve_analyses
from painpoints.config import PipelineConfig

log = logging.getLogger(__name__)

STAGES = ("ingest", "preprocess", "train-sent", "topics-init", "topics-merge", "itm", "extract", "evaluate",
          "report")

SENTIMENT_CLASSES = ("positive", "negative")
SPLIT = (0.8, 0.1, 0.1)

# artifact file names, relative to the output directory
REVIEWS = "reviews.jsonl"
CLEAN = "clean.jsonl"
LEXICON = "lexicon.json"
VOCAB = "vocab.txt"
SENT_MODEL = "sentiment_model.json"
SENT_METRICS = "sentiment_metrics.json"
TOPICS_INIT = "topics_init.csv"
TOPICS_INIT_INFO = "topics_init.json"
SUMMARIES_INIT = "summaries_init.json"
TOPICS_MERGED = "topics_merged.csv"
SUMMARIES_MERGED = "summaries_merged.json"
MERGE_LOG = "merge_log.json"
TOPICS_FINAL = "topics_final.csv"
SUMMARIES_FINAL = "summaries_final.json"
ITM_HISTORY = "itm_history.jsonl"
ITM_RESULT = "itm_result.json"
TOPIC_MODEL = "topic_model.json"
PAINPOINTS_JSON = "painpoints.json"
PAINPOINTS_CSV = "painpoints.csv"
METRICS = "metrics.json"
REPORT_JSON = "report.json"
REPORT_MD = "report.md"
MANIFEST = "manifest.json"


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage} failed: {message}")
        self.stage = stage


@dataclass
class RunManifest:
    config_hash: str
    versions: dict[str, str]
    stages: list[dict] = field(default_factory=list)
    artifacts: dict[str, list[str]] = field(default_factory=dict)
    failed_stage: str | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "versions": self.versions,
            "stages": self.stages,
            "artifacts": self.artifacts,
            "failed_stage": self.failed_stage,
            "error": self.error,
        }

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")


def versions() -> dict[str, str]:
    import matplotlib
    import scipy
    import sklearn

    return {"painpoints": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "scikit-learn": sklearn.__version__, "matplotlib": matplotlib.__version__}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True), encoding="utf-8")


def _load(path: Path):
    return json.loads(path.read_text(encoding="utf-8"))


class Workspace:
    """Typed access to one run's artifact directory."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.dir = Path(config.output_dir)
        self._stopwords = None

    def path(self, name: str) -> Path:
        return self.dir / name

    def need(self, stage: str, *names: str) -> list[Path]:
        paths = [self.path(n) for n in names]
        missing = [p.name for p in paths if not p.is_file()]
        if missing:
            raise StageError(stage, f"missing input artifact(s) {missing} in {self.dir}; run the earlier stages first")
        return paths

    @property
    def stopwords(self) -> frozenset[str]:
        if self._stopwords is None:
            self._stopwords = corpus.load_stopwords(self.config.stopwords)
        return self._stopwords

    def clean(self) -> list[corpus.CleanReview]:
        return [corpus.CleanReview.from_dict(d) for d in corpus.read_jsonl(self.path(CLEAN))]

    def kept(self) -> list[corpus.CleanReview]:
        return corpus.kept(self.clean())

    def vocab(self) -> features.Vocabulary:
        return features.Vocabulary(tuple(self.path(VOCAB).read_text(encoding="utf-8").split("\n")[:-1]))

    def scope(self) -> list[corpus.CleanReview]:
        """Reviews that feed topic modeling."""
        kept = self.kept()
        if self.config.topic_scope == "all":
            return kept
        neg = [r for r in kept if r.sentiment == "negative"]
        if not neg:
            raise ValueError("topic_scope=negative but no kept review is labelled negative")
        return neg


# ---------------------------------------------------------------- stages

def stage_ingest(ws: Workspace) -> list[str]:
    cfg = ws.config
    if cfg.input is None:
        raise ValueError("pipeline.input is not set")
    reviews = corpus.ingest(cfg.input, cfg.format)
    corpus.write_jsonl(ws.path(REVIEWS), (r.to_dict() for r in reviews))
    log.info("ingested %d reviews", len(reviews))
    return [REVIEWS]


def stage_preprocess(ws: Workspace) -> list[str]:
    ws.need("preprocess", REVIEWS)
    cfg = ws.config
    raw = [corpus.RawReview(**d) for d in corpus.read_jsonl(ws.path(REVIEWS))]
    clean = corpus.preprocess(raw, cfg.filter)
    lexicon = None
    if cfg.filter.require_keyword:
        lexicon = corpus.build_keyword_lexicon(clean, ws.stopwords, cfg.min_negative_freq)
        _dump(ws.path(LEXICON), lexicon.to_dict())
    filtered = corpus.filter_reviews(clean, lexicon, cfg.filter)
    corpus.write_jsonl(ws.path(CLEAN), (r.to_dict() for r in filtered))
    kept = corpus.kept(filtered)
    if not kept:
        raise ValueError("every review was filtered out")
    vocab = features.build_vocab([r.tokens for r in kept])
    ws.path(VOCAB).write_text("".join(t + "\n" for t in vocab.tokens), encoding="utf-8")
    log.info("kept %d of %d reviews, vocabulary %d", len(kept), len(filtered), vocab.size)
    return [CLEAN, VOCAB] + ([LEXICON] if lexicon is not None else [])


def _split(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = np.random.default_rng([seed, 3]).permutation(n)
    a = int(round(SPLIT[0] * n))
    b = a + int(round(SPLIT[1] * n))
    return np.sort(order[:a]), np.sort(order[a:b]), np.sort(order[b:])


def stage_train_sent(ws: Workspace) -> list[str]:
    ws.need("train-sent", CLEAN, VOCAB)
    cfg = ws.config
    vocab = ws.vocab()
    labelled = [r for r in ws.kept() if r.sentiment in SENTIMENT_CLASSES]
    if len({r.sentiment for r in labelled}) < 2:
        raise ValueError("sentiment training needs kept reviews labelled both positive and negative")
    docs = [vocab.encode(r.tokens)[0] for r in labelled]
    y = np.array([SENTIMENT_CLASSES.index(r.sentiment) for r in labelled])
    tr, va, te = _split(len(labelled), cfg.seed)
    model, history = clf.train([docs[i] for i in tr], y[tr], len(SENTIMENT_CLASSES), cfg.train, vocab=vocab,
                               classes=SENTIMENT_CLASSES)
    model.save(ws.path(SENT_MODEL), vocab)

    def evaluate(idx):
        if len(idx) == 0:
            return None
        pred = clf.predict_proba_batch(model, [docs[i] for i in idx]).argmax(axis=1)
        return metrics.classification_report([SENTIMENT_CLASSES[p] for p in pred],
                                             [SENTIMENT_CLASSES[g] for g in y[idx]])

    _dump(ws.path(SENT_METRICS), {
        "split": {"train": len(tr), "validation": len(va), "test": len(te)},
        "history": [{"epoch": h.epoch, "loss": h.loss, "accuracy": h.accuracy} for h in history],
        "validation": evaluate(va),
        "test": evaluate(te),
    })
    return [SENT_MODEL, SENT_METRICS]


def _scope_matrices(ws: Workspace):
    vocab = ws.vocab()
    scope = ws.scope()
    counts = features.count([r.tokens for r in scope], vocab)
    exclusion = topics.scoring_exclusion(vocab, ws.stopwords, ws.config.merge.noun_filter)
    return vocab, scope, counts, exclusion


def _summaries(assignment, counts, exclusion, vocab, ws) -> dict[int, topics.TopicSummary]:
    table = features.ctfidf(counts, assignment.labels, exclusion)
    return topics.representative_words(assignment, table, vocab, ws.config.merge, ws.stopwords)


def stage_topics_init(ws: Workspace) -> list[str]:
    ws.need("topics-init", CLEAN, VOCAB)
    cfg = ws.config
    vocab, scope, counts, exclusion = _scope_matrices(ws)
    tfidf = features.tfidf(counts, vocab.mask(ws.stopwords))
    d = min(cfg.topics.embed_dim, *tfidf.shape)
    emb = features.svd_embed(tfidf, d, seed=cfg.seed).vectors
    k = cfg.topics.k
    if k is None:
        k = topics.choose_k(emb, cfg.topics.k_candidates, seed=cfg.seed)
    assignment = topics.initial_topics(emb, [r.id for r in scope], k, cfg.topics.outlier_percentile, cfg.seed)
    assignment.to_csv(ws.path(TOPICS_INIT))
    topics.write_summaries(ws.path(SUMMARIES_INIT), _summaries(assignment, counts, exclusion, vocab, ws))
    _dump(ws.path(TOPICS_INIT_INFO), {"k": k, "embed_dim": d, "n_docs": len(scope), "scope": cfg.topic_scope,
                                      "outlier_ratio": metrics.outlier_ratio(assignment)})
    log.info("initial topics: k=%d over %d docs", k, len(scope))
    return [TOPICS_INIT, SUMMARIES_INIT, TOPICS_INIT_INFO]


def stage_topics_merge(ws: Workspace) -> list[str]:
    ws.need("topics-merge", TOPICS_INIT, SUMMARIES_INIT, CLEAN, VOCAB)
    vocab, scope, counts, exclusion = _scope_matrices(ws)
    initial = topics.TopicAssignment.from_csv(ws.path(TOPICS_INIT))
    if list(initial.doc_ids) != [r.id for r in scope]:
        raise ValueError(f"{TOPICS_INIT} does not match the topic-scope reviews; rerun topics-init")
    merged, merge_log = topics.merge_topics(topics.read_summaries(ws.path(SUMMARIES_INIT)), initial)
    adjusted = topics.adjust_minor_topics(merged, ws.config.merge.min_topic_size)
    if adjusted.n_topics == 0:
        raise ValueError("no topic survived merging and minor-topic adjustment")
    adjusted.to_csv(ws.path(TOPICS_MERGED))
    topics.write_summaries(ws.path(SUMMARIES_MERGED), _summaries(adjusted, counts, exclusion, vocab, ws))
    _dump(ws.path(MERGE_LOG), merge_log)
    log.info("merged %d topics into %d", initial.n_topics, adjusted.n_topics)
    return [TOPICS_MERGED, SUMMARIES_MERGED, MERGE_LOG]


def stage_itm(ws: Workspace) -> list[str]:
    ws.need("itm", TOPICS_MERGED, CLEAN, VOCAB)
    vocab, scope, counts, exclusion = _scope_matrices(ws)
    merged = topics.TopicAssignment.from_csv(ws.path(TOPICS_MERGED))
    inputs = itm.ItmInputs([vocab.encode(r.tokens)[0] for r in scope], vocab, counts, exclusion,
                           metrics.CooccurrenceCounts(r.tokens for r in scope), ws.config.merge)
    state = itm.run_itm(inputs, merged, ws.config.itm)
    state.labels.to_csv(ws.path(TOPICS_FINAL))
    state.write_history(ws.path(ITM_HISTORY))
    state.model.save(ws.path(TOPIC_MODEL), vocab)
    topics.write_summaries(ws.path(SUMMARIES_FINAL), _summaries(state.labels, counts, exclusion, vocab, ws))
    _dump(ws.path(ITM_RESULT), {"steps": state.step, "stop_reason": state.stop_reason,
                                "classes": list(state.classes)})
    return [TOPICS_FINAL, ITM_HISTORY, TOPIC_MODEL, SUMMARIES_FINAL, ITM_RESULT]


def _analyses(ws: Workspace, reviews):
    ann = load_annotations(ws.config.annotations) if ws.config.annotations is not None else None
    return resolve_analyses({r.id: (r.tokens, r.sentence_starts) for r in reviews}, ann)


def stage_extract(ws: Workspace) -> list[str]:
    ws.need("extract", SENT_MODEL, TOPIC_MODEL, TOPICS_FINAL, CLEAN, VOCAB)
    vocab = ws.vocab()
    kept = ws.kept()
    analyses = _analyses(ws, kept)
    cfg = replace(ws.config.extract, stopwords=ws.stopwords)
    smodel = clf.TextClassifier.load(ws.path(SENT_MODEL), vocab)
    sets = [painpoint.extract_sentiment_painpoints(kept, smodel, vocab, analyses, cfg,
                                                   SENTIMENT_CLASSES.index("negative"))]
    final = topics.TopicAssignment.from_csv(ws.path(TOPICS_FINAL))
    by_id = {r.id: r for r in kept}
    scope = [by_id[d] for d in final.doc_ids]
    tmodel = clf.TextClassifier.load(ws.path(TOPIC_MODEL), vocab)
    per_topic = painpoint.extract_topic_painpoints(scope, final.labels, tmodel, vocab, analyses, cfg)
    sets.extend(per_topic[t] for t in sorted(per_topic))
    painpoint.write_painpoints(sets, ws.path(PAINPOINTS_JSON), ws.path(PAINPOINTS_CSV))
    return [PAINPOINTS_JSON, PAINPOINTS_CSV]


def _coherence(path: Path, cooc, top_r) -> dict | None:
    if not path.is_file():
        return None
    summ = topics.read_summaries(path)
    return metrics.topic_coherence({t: s for t, s in summ.items()}, cooc, top_r).to_dict()


def stage_evaluate(ws: Workspace) -> list[str]:
    ws.need("evaluate", CLEAN, VOCAB)
    scope = ws.scope()
    cooc = metrics.CooccurrenceCounts(r.tokens for r in scope)
    top_r = ws.config.merge.top_r
    out: dict = {"topics": {}}
    for name, labels_file, summ_file in (("initial", TOPICS_INIT, SUMMARIES_INIT),
                                         ("merged", TOPICS_MERGED, SUMMARIES_MERGED),
                                         ("final", TOPICS_FINAL, SUMMARIES_FINAL)):
        if not ws.path(labels_file).is_file():
            continue
        a = topics.TopicAssignment.from_csv(ws.path(labels_file))
        out["topics"][name] = {"n_topics": a.n_topics, "outlier_ratio": metrics.outlier_ratio(a),
                               "coherence": _coherence(ws.path(summ_file), cooc, top_r)}
    if ws.path(SENT_METRICS).is_file():
        sm = _load(ws.path(SENT_METRICS))
        out["sentiment"] = {"validation": sm["validation"], "test": sm["test"], "split": sm["split"]}
    if ws.path(ITM_RESULT).is_file():
        out["itm"] = _load(ws.path(ITM_RESULT))
    if ws.config.truth is not None:
        out["ground_truth"] = _truth_metrics(ws)
    _dump(ws.path(METRICS), out)
    return [METRICS]


def _truth_metrics(ws: Workspace) -> dict:
    truth = {g.doc_id: g for g in synth.read_truth(ws.config.truth)}
    doc_topics = {d: g.topic for d, g in truth.items()}
    result: dict = {"purity": {}}
    for name, labels_file in (("initial", TOPICS_INIT), ("merged", TOPICS_MERGED), ("final", TOPICS_FINAL)):
        if ws.path(labels_file).is_file():
            a = topics.TopicAssignment.from_csv(ws.path(labels_file))
            result["purity"][name] = metrics.topic_purity(a.labels, [doc_topics[d] for d in a.doc_ids])
    if ws.path(PAINPOINTS_JSON).is_file() and ws.path(TOPICS_FINAL).is_file():
        sets = {s.scope: s.words() for s in painpoint.read_painpoints(ws.path(PAINPOINTS_JSON))}
        final = topics.TopicAssignment.from_csv(ws.path(TOPICS_FINAL))
        topic_words = {int(k.split(":")[1]): v for k, v in sets.items() if k.startswith("topic:")}
        planted = {d: g.planted for d, g in truth.items()}
        rec = metrics.planted_recovery(final.doc_ids, final.labels, doc_topics, planted, topic_words,
                                       sets.get("sentiment", []))
        result["planted_recovery"] = {"per_topic": {str(k): v for k, v in rec["per_topic"].items()},
                                      "sentiment": rec["sentiment"]}
    return result


def stage_report(ws: Workspace) -> list[str]:
    from painpoints import report

    return report.write_report(ws)


STAGE_FUNCS: dict[str, Callable[[Workspace], list[str]]] = {
    "ingest": stage_ingest,
    "preprocess": stage_preprocess,
    "train-sent": stage_train_sent,
    "topics-init": stage_topics_init,
    "topics-merge": stage_topics_merge,
    "itm": stage_itm,
    "extract": stage_extract,
    "evaluate": stage_evaluate,
    "report": stage_report,
}


def run_stage(config: PipelineConfig, stage: str, manifest: RunManifest | None = None) -> list[str]:
    """Run one stage; any failure surfaces as a StageError naming it."""
    if stage not in STAGE_FUNCS:
        raise ValueError(f"unknown stage {stage!r}")
    ws = Workspace(config)
    ws.dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        artifacts = STAGE_FUNCS[stage](ws)
    except StageError as exc:
        _record_failure(manifest, stage, exc, t0)
        raise
    except Exception as exc:
        _record_failure(manifest, stage, exc, t0)
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
    if manifest is not None:
        manifest.stages.append({"name": stage, "status": "ok", "seconds": round(time.perf_counter() - t0, 3)})
        manifest.artifacts[stage] = artifacts
    return artifacts


def _record_failure(manifest, stage, exc, t0):
    if manifest is not None:
        manifest.stages.append({"name": stage, "status": "failed", "seconds": round(time.perf_counter() - t0, 3)})
        manifest.failed_stage = stage
        manifest.error = str(exc)


def run_pipeline(config: PipelineConfig, stages=STAGES) -> RunManifest:
    """Run ``stages`` in order and write ``manifest.json``; raises StageError on the first failure."""
    config.check_inputs()
    manifest = RunManifest(config.digest(), versions())
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        for stage in stages:
            log.info("stage %s", stage)
            run_stage(config, stage, manifest)
    finally:
        manifest.write(out / MANIFEST)
    return manifest
