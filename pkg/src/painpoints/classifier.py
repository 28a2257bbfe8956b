"""Shallow embedding-bag text classifier with analytic gradients and token attribution.

The model mean-pools token embeddings, optionally passes the result through
one tanh hidden layer and ends in a softmax over K classes. Everything is
plain numpy so gradients with respect to the token embeddings are exact
and cheap, which is what the attribution functions need.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from painpoints.features import Vocabulary

FORMAT_NAME = "painpoints.text-classifier"
FORMAT_VERSION = 1
SCORES = ("loss", "log_prob", "logit")


class ClassifierError(ValueError):
    pass


class UnattributableDocument(ClassifierError):
    """The document has no in-vocabulary tokens, so nothing can be scored."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 20
    batch_size: int = 64
    optimizer: str = "adam"
    seed: int = 0
    embed_dim: int = 64
    hidden: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ClassifierError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ClassifierError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ClassifierError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ClassifierError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TextClassifier:
    embeddings: np.ndarray  # V x d
    w_out: np.ndarray  # (d or hidden) x K
    b_out: np.ndarray  # K
    w_hidden: np.ndarray | None = None  # d x H
    b_hidden: np.ndarray | None = None  # H
    classes: tuple = ()
    seed: int = 0
    vocab_digest: str = ""

    @property
    def n_classes(self) -> int:
        return self.b_out.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.embeddings.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        p = {"embeddings": self.embeddings, "w_out": self.w_out, "b_out": self.b_out}
        if self.w_hidden is not None:
            p["w_hidden"] = self.w_hidden
            p["b_hidden"] = self.b_hidden
        return p

    def copy(self) -> "TextClassifier":
        kw = {k: v.copy() for k, v in self.params().items()}
        return TextClassifier(**kw, classes=self.classes, seed=self.seed, vocab_digest=self.vocab_digest)

    # -- serialization -------------------------------------------------

    def to_dict(self, vocab: Vocabulary | None = None) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "classes": list(self.classes),
            "seed": self.seed,
            "vocab_sha256": self.vocab_digest,
            "vocab": list(vocab.tokens) if vocab is not None else None,
            "shapes": {k: list(v.shape) for k, v in self.params().items()},
            "params": {k: [repr(float(x)) for x in v.ravel()] for k, v in self.params().items()},
        }

    @classmethod
    def from_dict(cls, d: dict, vocab: Vocabulary | None = None) -> "TextClassifier":
        if d.get("format") != FORMAT_NAME:
            raise ClassifierError("not a serialized text classifier")
        if d.get("version") != FORMAT_VERSION:
            raise ClassifierError(f"unsupported model version {d.get('version')}")
        if vocab is not None and vocab.digest() != d["vocab_sha256"]:
            raise ClassifierError("vocabulary hash mismatch: model was trained on a different vocabulary")
        params = {
            k: np.array([float(x) for x in vals], dtype=np.float64).reshape(d["shapes"][k])
            for k, vals in d["params"].items()
        }
        return cls(**params, classes=tuple(d["classes"]), seed=d["seed"], vocab_digest=d["vocab_sha256"])

    def save(self, path: str | Path, vocab: Vocabulary | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(vocab)), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, vocab: Vocabulary | None = None) -> "TextClassifier":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")), vocab)


def init_model(vocab_size: int, n_classes: int, config: TrainConfig = TrainConfig(),
               classes: Sequence = (), vocab_digest: str = "") -> TextClassifier:
    if n_classes < 2:
        raise ClassifierError("need at least two classes")
    rng = np.random.default_rng(config.seed)
    d = config.embed_dim
    emb = rng.normal(0.0, config.init_scale, size=(vocab_size, d))
    w_hidden = b_hidden = None
    width = d
    if config.hidden:
        w_hidden = rng.normal(0.0, 1.0 / np.sqrt(d), size=(d, config.hidden))
        b_hidden = np.zeros(config.hidden)
        width = config.hidden
    w_out = rng.normal(0.0, 1.0 / np.sqrt(width), size=(width, n_classes))
    return TextClassifier(emb, w_out, np.zeros(n_classes), w_hidden, b_hidden,
                          classes=tuple(classes) or tuple(range(n_classes)),
                          seed=config.seed, vocab_digest=vocab_digest)


# ---------------------------------------------------------------- forward / backward

def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def _head(model: TextClassifier, pooled: np.ndarray):
    if model.w_hidden is None:
        return pooled @ model.w_out + model.b_out, None
    act = np.tanh(pooled @ model.w_hidden + model.b_hidden)
    return act @ model.w_out + model.b_out, act


def _head_backward(model: TextClassifier, pooled, act, dz):
    """Backprop dL/dlogits through the head; returns (dL/dpooled, param grads)."""
    grads = {"b_out": dz.sum(axis=0)}
    if model.w_hidden is None:
        grads["w_out"] = pooled.T @ dz
        return dz @ model.w_out.T, grads
    grads["w_out"] = act.T @ dz
    da = (dz @ model.w_out.T) * (1.0 - act**2)
    grads["w_hidden"] = pooled.T @ da
    grads["b_hidden"] = da.sum(axis=0)
    return da @ model.w_hidden.T, grads


def pooling_matrix(docs: Sequence[np.ndarray], vocab_size: int) -> sp.csr_matrix:
    """Sparse docs x V matrix whose product with the embedding table mean-pools each doc."""
    rows, cols, vals = [], [], []
    for i, ids in enumerate(docs):
        n = len(ids)
        if n == 0:
            raise UnattributableDocument(f"document {i} has no in-vocabulary tokens")
        rows.extend([i] * n)
        cols.extend(np.asarray(ids).tolist())
        vals.extend([1.0 / n] * n)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(len(docs), vocab_size))
    m.sum_duplicates()
    return m


def logits_batch(model: TextClassifier, docs: Sequence[np.ndarray]) -> np.ndarray:
    pooled = pooling_matrix(docs, model.vocab_size) @ model.embeddings
    return _head(model, pooled)[0]


def predict_proba_batch(model: TextClassifier, docs: Sequence[np.ndarray]) -> np.ndarray:
    return softmax(logits_batch(model, docs))


def predict_proba(model: TextClassifier, ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids)
    if ids.size == 0:
        raise UnattributableDocument("document has no in-vocabulary tokens")
    return predict_proba_batch(model, [ids])[0]


def logits_from_embeddings(model: TextClassifier, x: np.ndarray) -> np.ndarray:
    """Logits for one document given its token embedding rows (n x d)."""
    return _head(model, x.mean(axis=0, keepdims=True))[0][0]


def score_from_embeddings(model: TextClassifier, x: np.ndarray, target: int, score: str = "loss") -> float:
    z = logits_from_embeddings(model, x)
    if score == "logit":
        return float(z[target])
    lp = float(log_softmax(z)[target])
    if score == "log_prob":
        return lp
    if score == "loss":
        return -lp
    raise ClassifierError(f"unknown score {score!r}")


def embedding_gradients(model: TextClassifier, x: np.ndarray, target: int, score: str = "loss") -> np.ndarray:
    """d score / d e_i for each token row of ``x`` (shape n x d)."""
    n = x.shape[0]
    pooled = x.mean(axis=0, keepdims=True)
    z, act = _head(model, pooled)
    if score == "logit":
        dz = np.zeros_like(z)
        dz[0, target] = 1.0
    elif score in ("loss", "log_prob"):
        dz = softmax(z)
        dz[0, target] -= 1.0
        if score == "log_prob":
            dz = -dz
    else:
        raise ClassifierError(f"unknown score {score!r}")
    dpooled, _ = _head_backward(model, pooled, act, dz)
    return np.repeat(dpooled / n, n, axis=0)


def _batched_pooled_gradients(model: TextClassifier, pooled: np.ndarray, target: int, score: str) -> np.ndarray:
    """d score / d pooled for many pooled vectors at once (rows of ``pooled``)."""
    z, act = _head(model, pooled)
    if score == "logit":
        dz = np.zeros_like(z)
        dz[:, target] = 1.0
    else:
        dz = softmax(z)
        dz[:, target] -= 1.0
        if score == "log_prob":
            dz = -dz
    return _head_backward(model, pooled, act, dz)[0]


# ---------------------------------------------------------------- training

@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float
    recall: list[float]


class Trainer:
    """Mini-batch cross-entropy trainer that can resume (warm start)."""

    def __init__(self, model: TextClassifier, config: TrainConfig = TrainConfig()):
        self.model = model
        self.config = config
        self.rng = np.random.default_rng([config.seed, 1])
        self.step = 0
        self.epochs_done = 0
        self._m = {k: np.zeros_like(v) for k, v in model.params().items()}
        self._v = {k: np.zeros_like(v) for k, v in model.params().items()}

    def _apply(self, grads: dict[str, np.ndarray]) -> None:
        cfg = self.config
        params = self.model.params()
        if cfg.optimizer == "sgd":
            for k, g in grads.items():
                params[k] -= cfg.learning_rate * g
            return
        b1, b2, eps = 0.9, 0.999, 1e-8
        self.step += 1
        c1 = 1.0 - b1**self.step
        c2 = 1.0 - b2**self.step
        for k, g in grads.items():
            m = self._m[k]
            v = self._v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[k] -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + eps)

    def fit(self, docs: Sequence[np.ndarray], labels: Sequence[int], epochs: int | None = None) -> list[EpochStats]:
        model = self.model
        y = np.asarray(labels, dtype=np.int64)
        if len(docs) == 0:
            raise ClassifierError("empty training set")
        if len(y) != len(docs):
            raise ClassifierError("labels and docs differ in length")
        if y.min() < 0 or y.max() >= model.n_classes:
            raise ClassifierError(f"label out of range [0, {model.n_classes})")
        pool = pooling_matrix(docs, model.vocab_size)
        epochs = self.config.epochs if epochs is None else epochs
        history = []
        bs = self.config.batch_size
        for _ in range(epochs):
            order = self.rng.permutation(len(y))
            for start in range(0, len(y), bs):
                idx = order[start:start + bs]
                p_b = pool[idx]
                pooled = p_b @ model.embeddings
                z, act = _head(model, pooled)
                dz = softmax(z)
                dz[np.arange(len(idx)), y[idx]] -= 1.0
                dz /= len(idx)
                dpooled, grads = _head_backward(model, pooled, act, dz)
                grads["embeddings"] = np.asarray(p_b.T @ dpooled)
                self._apply(grads)
            self.epochs_done += 1
            history.append(evaluate_fit(model, pool, y, self.epochs_done))
        return history


def evaluate_fit(model: TextClassifier, pool: sp.csr_matrix, y: np.ndarray, epoch: int = 0) -> EpochStats:
    z = _head(model, pool @ model.embeddings)[0]
    lp = log_softmax(z)
    pred = z.argmax(axis=1)
    loss = float(-lp[np.arange(len(y)), y].mean())
    recall = []
    for c in range(model.n_classes):
        sup = y == c
        recall.append(float((pred[sup] == c).mean()) if sup.any() else 0.0)
    return EpochStats(epoch, loss, float((pred == y).mean()), recall)


def train(docs: Sequence[np.ndarray], labels: Sequence[int], n_classes: int,
          config: TrainConfig = TrainConfig(), vocab: Vocabulary | None = None,
          vocab_size: int | None = None, classes: Sequence = ()) -> tuple[TextClassifier, list[EpochStats]]:
    """Train a fresh seeded model; returns the model and per-epoch history."""
    if vocab is None and vocab_size is None:
        raise ClassifierError("pass a vocabulary or a vocab_size")
    size = vocab.size if vocab is not None else vocab_size
    model = init_model(size, n_classes, config, classes=classes,
                       vocab_digest=vocab.digest() if vocab is not None else "")
    trainer = Trainer(model, config)
    history = trainer.fit(docs, labels)
    return model, history


# ---------------------------------------------------------------- attribution

@dataclass
class AttributionVector:
    scores: np.ndarray
    positions: np.ndarray
    task: str = "sentiment"
    method: str = "grad_input"
    target: int = 0
    raw: np.ndarray = field(default=None, repr=False)
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.scores)


def normalize_attribution(raw: np.ndarray) -> tuple[np.ndarray, bool]:
    """|raw| / sum |raw|; uniform when everything is zero (flagged degenerate)."""
    mag = np.abs(np.asarray(raw, dtype=np.float64))
    total = mag.sum()
    if not np.isfinite(total) or total == 0.0:
        return np.full(len(mag), 1.0 / len(mag)), True
    return mag / total, False


def _prepare(model: TextClassifier, ids, positions):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size == 0:
        raise UnattributableDocument("document has no in-vocabulary tokens")
    if positions is None:
        positions = np.arange(len(ids))
    return ids, np.asarray(positions), model.embeddings[ids]


def grad_input_raw(model: TextClassifier, x: np.ndarray, target: int, score: str = "loss") -> np.ndarray:
    """Signed per-token ``grad . embedding`` products."""
    return np.einsum("ij,ij->i", embedding_gradients(model, x, target, score), x)


def grad_input_attribution(model: TextClassifier, ids, target: int, positions=None,
                           task: str = "sentiment") -> AttributionVector:
    """a_i = |dL/de_i . e_i| / sum_j |dL/de_j . e_j| with L cross-entropy against ``target``."""
    ids, positions, x = _prepare(model, ids, positions)
    raw = grad_input_raw(model, x, target, "loss")
    scores, degenerate = normalize_attribution(raw)
    return AttributionVector(scores, positions, task, "grad_input", target, raw, degenerate)


def integrated_gradients_raw(model: TextClassifier, x: np.ndarray, target: int, steps: int = 64,
                             baseline: np.ndarray | None = None, score: str = "log_prob") -> np.ndarray:
    """Unnormalized IG per token using the midpoint Riemann rule."""
    if steps < 1:
        raise ClassifierError("integrated gradients needs steps >= 1")
    n = x.shape[0]
    base = np.zeros_like(x) if baseline is None else np.broadcast_to(baseline, x.shape)
    alphas = (np.arange(steps) + 0.5) / steps
    diff = x - base
    # pooling is linear, so the pooled path is base_mean + alpha * diff_mean
    pooled = base.mean(axis=0)[None, :] + alphas[:, None] * diff.mean(axis=0)[None, :]
    avg_grad = _batched_pooled_gradients(model, pooled, target, score).mean(axis=0) / n
    return diff @ avg_grad


def integrated_gradients(model: TextClassifier, ids, target: int, steps: int = 64, positions=None,
                         baseline: np.ndarray | None = None, score: str = "log_prob",
                         task: str = "sentiment") -> AttributionVector:
    """Integrated gradients from a zero-embedding baseline, folded and normalized like grad x input."""
    ids, positions, x = _prepare(model, ids, positions)
    raw = integrated_gradients_raw(model, x, target, steps, baseline, score)
    scores, degenerate = normalize_attribution(raw)
    return AttributionVector(scores, positions, task, "integrated_gradients", target, raw, degenerate)


def attribute(model: TextClassifier, ids, target: int, method: str = "integrated_gradients",
              positions=None, task: str = "sentiment", steps: int = 64) -> AttributionVector:
    if method == "grad_input":
        return grad_input_attribution(model, ids, target, positions, task)
    if method == "integrated_gradients":
        return integrated_gradients(model, ids, target, steps, positions, task=task)
    raise ClassifierError(f"unknown attribution method {method!r}")
