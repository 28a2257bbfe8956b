"""Iterative topic modification: retrain a topic classifier each step and relabel
documents whose confidence clears a recall-scaled per-class threshold."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from painpoints import classifier as clf
from painpoints.features import Vocabulary, ctfidf
from painpoints.metrics import CooccurrenceCounts, outlier_ratio, topic_coherence
from painpoints.topics import OUTLIER, MergeConfig, TopicAssignment, representative_words

log = logging.getLogger(__name__)

STOP_METRICS = ("npmi", "outlier_ratio", "label_change_count")
# +1: larger is better, -1: smaller is better
_DIRECTION = {"npmi": 1, "outlier_ratio": -1, "label_change_count": -1}


class ItmError(ValueError):
    pass


@dataclass(frozen=True)
class ItmConfig:
    tau: float = 0.6
    max_steps: int = 100
    patience: int = 2
    epochs_per_step: int = 1
    warmup_epochs: int = 5
    cold_start: bool = False
    train: clf.TrainConfig = clf.TrainConfig()
    stop_metrics: tuple[str, ...] = STOP_METRICS

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ItmError("tau must be in (0, 1]")
        if self.max_steps < 0:
            raise ItmError("max_steps must be >= 0")
        if self.patience < 1:
            raise ItmError("patience must be >= 1")
        unknown = set(self.stop_metrics) - set(STOP_METRICS)
        if unknown:
            raise ItmError(f"unknown stop metrics {sorted(unknown)}")


@dataclass(frozen=True)
class ClassDifficulty:
    recall: np.ndarray
    relative: np.ndarray
    threshold: np.ndarray
    zero_support: tuple[int, ...] = ()


def class_recall(pred: Sequence[int], ref: Sequence[int], n_classes: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Per-class recall of ``pred`` against ``ref``; zero-support classes get 0 and are reported."""
    pred, ref = np.asarray(pred), np.asarray(ref)
    support = np.bincount(ref, minlength=n_classes).astype(np.float64)
    hits = np.bincount(ref[pred == ref], minlength=n_classes).astype(np.float64)
    recall = np.divide(hits, support, out=np.zeros(n_classes), where=support > 0)
    return recall, tuple(int(c) for c in np.flatnonzero(support == 0))


def thresholds(recall: Sequence[float], tau: float, zero_support: tuple[int, ...] = ()) -> ClassDifficulty:
    """R(c) = recall(c) / max recall, T(c) = R(c) * tau."""
    recall = np.asarray(recall, dtype=np.float64)
    top = recall.max() if recall.size else 0.0
    if top <= 0:
        raise ItmError("every class has zero recall; the classifier learned nothing from the current labels")
    relative = recall / top
    return ClassDifficulty(recall, relative, relative * tau, zero_support)


def modify_labels(probas: np.ndarray, labels_prev: Sequence[int], threshold: Sequence[float]):
    """Move a doc to its argmax class c* iff c* differs from its label and p(c*) > T(c*)."""
    probas = np.asarray(probas)
    prev = np.asarray(labels_prev)
    best = probas.argmax(axis=1)
    conf = probas[np.arange(len(prev)), best]
    change = (best != prev) & (conf > np.asarray(threshold)[best])
    return np.where(change, best, prev), change


@dataclass
class StepRecord:
    step: int
    recall: list[float]
    relative: list[float]
    threshold: list[float]
    zero_support: list[int]
    n_changes: int
    metrics: dict[str, float]
    predicted: np.ndarray = field(repr=False)
    confidence: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    def to_dict(self, classes: Sequence[int], doc_ids: Sequence[str], prev: np.ndarray) -> dict:
        changed = np.flatnonzero(self.labels != prev)
        return {
            "step": self.step,
            "classes": list(classes),
            "recall": self.recall,
            "relative_recall": self.relative,
            "threshold": self.threshold,
            "zero_support": [classes[c] for c in self.zero_support],
            "n_changes": self.n_changes,
            "metrics": self.metrics,
            "changes": [
                {"doc_id": doc_ids[i], "from": classes[prev[i]], "to": classes[self.labels[i]],
                 "confidence": float(self.confidence[i])}
                for i in changed
            ],
            "predicted": [classes[c] for c in self.predicted],
            "confidence": self.confidence.tolist(),
        }


@dataclass
class ItmInputs:
    """What the loop needs besides labels: encoded docs and coherence material."""

    docs: list[np.ndarray]
    vocab: Vocabulary
    counts: object  # sparse doc x term counts
    exclude: np.ndarray | None = None  # stopword column mask
    cooccurrence: CooccurrenceCounts | None = None
    merge: MergeConfig = MergeConfig()


@dataclass
class ItmState:
    step: int
    labels: TopicAssignment
    model: clf.TextClassifier
    classes: tuple[int, ...]
    initial: TopicAssignment
    history: list[StepRecord] = field(default_factory=list)
    stop_reason: str = "max_steps"

    def write_history(self, path: str | Path) -> None:
        prev = np.array([self.classes.index(int(t)) for t in self.initial.labels])
        with Path(path).open("w", encoding="utf-8") as fh:
            for rec in self.history:
                fh.write(json.dumps(rec.to_dict(self.classes, self.labels.doc_ids, prev), sort_keys=True) + "\n")
                prev = rec.labels


def coherence_of(labels: np.ndarray, inputs: ItmInputs) -> float:
    if inputs.cooccurrence is None:
        return float("nan")
    if not np.any(labels != OUTLIER):
        return float("nan")
    table = ctfidf(inputs.counts, labels, inputs.exclude)
    dummy = TopicAssignment(tuple(str(i) for i in range(len(labels))), labels)
    summaries = representative_words(dummy, table, inputs.vocab, inputs.merge)
    words = {t: [w for w, _ in s.words] for t, s in summaries.items() if t != OUTLIER}
    return topic_coherence(words, inputs.cooccurrence, inputs.merge.top_r).mean


def _step_metrics(topic_labels: np.ndarray, n_changes: int, inputs: ItmInputs, wanted) -> dict[str, float]:
    out = {}
    if "npmi" in wanted:
        out["npmi"] = coherence_of(topic_labels, inputs)
    if "outlier_ratio" in wanted:
        out["outlier_ratio"] = outlier_ratio(topic_labels)
    if "label_change_count" in wanted:
        out["label_change_count"] = float(n_changes)
    return out


def run_itm(inputs: ItmInputs, initial: TopicAssignment, config: ItmConfig = ItmConfig()) -> ItmState:
    """Run the modification loop until no label changes, a metric plateau, or ``max_steps``.

    Plateau: at least two of the stop metrics fail to beat their best value
    for ``patience`` consecutive steps.
    """
    if len(initial.doc_ids) != len(inputs.docs):
        raise ItmError("initial assignment and documents differ in length")
    if initial.n_topics == 0:
        raise ItmError("initial assignment has no non-outlier topic")
    classes = tuple(sorted({OUTLIER, *initial.topics}))
    to_class = {t: i for i, t in enumerate(classes)}
    labels = np.array([to_class[int(t)] for t in initial.labels], dtype=np.int64)
    cls_arr = np.array(classes)

    def new_trainer():
        model = clf.init_model(inputs.vocab.size, len(classes), config.train, classes=classes,
                               vocab_digest=inputs.vocab.digest())
        return clf.Trainer(model, config.train)

    trainer = new_trainer()
    state = ItmState(0, initial, trainer.model, classes, initial)
    if config.max_steps == 0:
        state.stop_reason = "max_steps"
        return state
    if config.warmup_epochs and not config.cold_start:
        trainer.fit(inputs.docs, labels, config.warmup_epochs)

    best: dict[str, float] = {}
    streak = 0
    for t in range(1, config.max_steps + 1):
        if config.cold_start:
            trainer = new_trainer()
            trainer.fit(inputs.docs, labels, config.warmup_epochs + config.epochs_per_step)
        else:
            trainer.fit(inputs.docs, labels, config.epochs_per_step)
        probas = clf.predict_proba_batch(trainer.model, inputs.docs)
        pred = probas.argmax(axis=1)
        recall, zero = class_recall(pred, labels, len(classes))
        diff = thresholds(recall, config.tau, zero)
        new_labels, changed = modify_labels(probas, labels, diff.threshold)
        n_changes = int(changed.sum())
        metrics = _step_metrics(cls_arr[new_labels], n_changes, inputs, config.stop_metrics)
        state.history.append(StepRecord(
            t, recall.tolist(), diff.relative.tolist(), diff.threshold.tolist(), list(zero), n_changes,
            metrics, pred, probas[np.arange(len(pred)), pred], new_labels,
        ))
        log.info("itm step %d: %d changes, %s", t, n_changes,
                 ", ".join(f"{k}={v:.4f}" for k, v in metrics.items()))
        labels = new_labels
        state.step = t
        if n_changes == 0:
            state.stop_reason = "no_change"
            break

        failed = 0
        for name, value in metrics.items():
            sign = _DIRECTION[name]
            if name not in best or (np.isfinite(value) and sign * value > sign * best[name]):
                best[name] = value
            else:
                failed += 1
        streak = streak + 1 if failed >= 2 else 0
        if streak >= config.patience:
            state.stop_reason = "plateau"
            break

    state.model = trainer.model
    state.labels = initial.with_labels(cls_arr[labels])
    return state


def replay_violations(state: ItmState) -> list[tuple[int, int]]:
    """Re-derive every step's labels from the recorded predictions and thresholds.

    Returns (step, doc index) pairs where the recorded label disagrees with
    the update rule; an empty list means the history is fully justified.
    """
    prev = np.array([state.classes.index(int(t)) for t in state.initial.labels])
    bad = []
    for rec in state.history:
        thr = np.asarray(rec.threshold)
        expect = np.where((rec.predicted != prev) & (rec.confidence > thr[rec.predicted]), rec.predicted, prev)
        bad.extend((rec.step, int(i)) for i in np.flatnonzero(expect != rec.labels))
        prev = rec.labels
    return bad
