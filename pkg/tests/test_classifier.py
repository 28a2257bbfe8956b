import numpy as np
import pytest

from painpoints import classifier as C
from painpoints.features import Vocabulary


def separable(rng, n=200, bank=10, length=8):
    """Class c docs draw only from token ids [c*bank, (c+1)*bank)."""
    labels = rng.integers(0, 2, size=n)
    docs = [rng.integers(c * bank, (c + 1) * bank, size=length) for c in labels]
    return docs, labels


def random_instance(rng, seed, hidden=0):
    v, k = int(rng.integers(5, 30)), int(rng.integers(2, 5))
    model = C.init_model(v, k, C.TrainConfig(seed=seed, embed_dim=8, hidden=hidden, init_scale=1.0))
    ids = rng.integers(0, v, size=int(rng.integers(1, 10)))
    return model, ids, int(rng.integers(k))


def test_separable_training_reaches_high_accuracy(rng):
    docs, labels = separable(rng)
    model, hist = C.train(docs, labels, 2, C.TrainConfig(epochs=20), vocab_size=20)
    assert len(hist) == 20
    assert hist[-1].accuracy >= 0.99
    assert len(hist[-1].recall) == 2


def test_zero_epochs_returns_initialization(rng):
    docs, labels = separable(rng)
    cfg = C.TrainConfig(epochs=0, seed=4)
    model, hist = C.train(docs, labels, 2, cfg, vocab_size=20)
    ref = C.init_model(20, 2, cfg)
    assert hist == []
    for k, v in ref.params().items():
        assert np.array_equal(model.params()[k], v)


def test_training_is_deterministic(rng):
    docs, labels = separable(rng)
    for hidden in (0, 16):
        cfg = C.TrainConfig(epochs=3, seed=9, hidden=hidden)
        a, _ = C.train(docs, labels, 2, cfg, vocab_size=20)
        b, _ = C.train(docs, labels, 2, cfg, vocab_size=20)
        for k in a.params():
            assert np.array_equal(a.params()[k], b.params()[k])


def test_sgd_optimizer_learns(rng):
    docs, labels = separable(rng)
    _, hist = C.train(docs, labels, 2, C.TrainConfig(optimizer="sgd", learning_rate=0.5, epochs=20,
                                                     init_scale=1.0), vocab_size=20)
    assert hist[-1].loss < hist[0].loss


def test_training_errors(rng):
    docs, labels = separable(rng, n=10)
    with pytest.raises(C.ClassifierError, match="range"):
        C.train(docs, np.full(10, 2), 2, vocab_size=20)
    with pytest.raises(C.ClassifierError, match="empty"):
        C.train([], [], 2, vocab_size=20)
    with pytest.raises(C.ClassifierError):
        C.TrainConfig(learning_rate=0)
    with pytest.raises(C.ClassifierError):
        C.TrainConfig(epochs=-1)


def test_symmetric_zero_output_weights():
    model = C.init_model(5, 2)
    model.w_out[:] = 0.0
    assert np.array_equal(C.predict_proba(model, np.array([0, 3])), [0.5, 0.5])


def test_probabilities_sum_to_one(rng):
    model = C.init_model(50, 4, C.TrainConfig(init_scale=2.0))
    docs = [rng.integers(0, 50, size=int(rng.integers(1, 20))) for _ in range(1000)]
    p = C.predict_proba_batch(model, docs)
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-9)
    assert np.all(p >= 0)


def test_softmax_shift_invariance(rng):
    z = rng.normal(size=(100, 5)) * 10
    for shift in (-1000.0, 3.7, 1e4):
        assert np.allclose(C.softmax(z + shift), C.softmax(z), atol=1e-12, rtol=0)
    assert np.allclose(np.exp(C.log_softmax(z)), C.softmax(z), atol=1e-12)


def test_empty_doc_is_unattributable():
    model = C.init_model(5, 2)
    with pytest.raises(C.UnattributableDocument):
        C.predict_proba(model, np.array([], dtype=int))
    with pytest.raises(C.UnattributableDocument):
        C.grad_input_attribution(model, [], 0)
    with pytest.raises(C.UnattributableDocument):
        C.integrated_gradients(model, [], 0)


def test_single_token_and_identical_embeddings():
    model = C.init_model(5, 3, C.TrainConfig(init_scale=1.0))
    for method in ("grad_input", "integrated_gradients"):
        assert C.attribute(model, [2], 1, method).scores.tolist() == [1.0]
        a = C.attribute(model, [2, 2], 1, method)
        assert a.scores.tolist() == [0.5, 0.5]
    model.embeddings[4] = model.embeddings[1]
    assert C.grad_input_attribution(model, [1, 4], 0).scores.tolist() == [0.5, 0.5]


def test_degenerate_attribution_is_uniform_and_flagged():
    model = C.init_model(5, 2)
    model.embeddings[:] = 0.0
    a = C.grad_input_attribution(model, [0, 1, 2, 3], 0)
    assert a.degenerate and np.allclose(a.scores, 0.25)


def test_attribution_metadata(rng):
    model = C.init_model(10, 2, C.TrainConfig(init_scale=1.0))
    a = C.attribute(model, [1, 5, 7], 1, "integrated_gradients", positions=[0, 3, 4], task="topic")
    assert (a.task, a.method, a.target, a.positions.tolist()) == ("topic", "integrated_gradients", 1, [0, 3, 4])
    assert len(a) == 3 and not a.degenerate
    with pytest.raises(C.ClassifierError):
        C.attribute(model, [1], 0, "saliency")


def _finite_difference(model, x, target, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        up, dn = x.copy(), x.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (C.score_from_embeddings(model, up, target) - C.score_from_embeddings(model, dn, target)) / (2 * h)
    return g


def test_gradients_match_finite_differences(rng):
    for seed in range(15):
        model, ids, target = random_instance(rng, seed, hidden=8 if seed % 2 else 0)
        x = model.embeddings[ids]
        g = C.embedding_gradients(model, x, target)
        fd = _finite_difference(model, x, target)
        assert np.abs(g - fd).max() / max(np.abs(fd).max(), 1e-12) < 1e-4


def test_score_kinds_are_consistent(rng):
    model, ids, target = random_instance(rng, 1)
    x = model.embeddings[ids]
    assert C.score_from_embeddings(model, x, target, "loss") == -C.score_from_embeddings(model, x, target, "log_prob")
    assert np.allclose(C.embedding_gradients(model, x, target, "loss"),
                       -C.embedding_gradients(model, x, target, "log_prob"))
    with pytest.raises(C.ClassifierError):
        C.score_from_embeddings(model, x, target, "margin")


def _completeness_error(model, x, target, steps):
    gap = (C.score_from_embeddings(model, x, target, "log_prob")
           - C.score_from_embeddings(model, np.zeros_like(x), target, "log_prob"))
    return abs(C.integrated_gradients_raw(model, x, target, steps).sum() - gap), gap


def test_ig_completeness(rng):
    for seed in range(20):
        model, ids, target = random_instance(rng, seed, hidden=16 if seed % 2 else 0)
        err, gap = _completeness_error(model, model.embeddings[ids], target, 256)
        assert err <= 0.01 * abs(gap) + 1e-12


def test_ig_single_step_on_linear_model_equals_grad_input(rng):
    model, ids, target = random_instance(rng, 3)
    x = model.embeddings[ids]
    # with a zero baseline the only midpoint is x/2; a linear logit has a constant gradient
    ig = C.integrated_gradients_raw(model, x, target, steps=1, score="logit")
    gi = C.grad_input_raw(model, x, target, score="logit")
    assert np.allclose(ig, gi, atol=1e-14, rtol=0)


def test_ig_error_shrinks_when_steps_double(rng):
    for seed in range(20):
        model, ids, target = random_instance(rng, seed, hidden=16 if seed % 3 == 2 else 0)
        x = model.embeddings[ids]
        errs = [_completeness_error(model, x, target, m)[0] for m in (2, 4, 8, 16, 32, 64, 128, 256)]
        for a, b in zip(errs, errs[1:]):
            assert b <= a * (1 + 1e-9) + 1e-15


def test_ig_rejects_zero_steps():
    model = C.init_model(5, 2)
    with pytest.raises(C.ClassifierError):
        C.integrated_gradients(model, [1], 0, steps=0)


def test_serialization_round_trip(tmp_path):
    vocab = Vocabulary(("a", "b", "c"))
    model = C.init_model(3, 2, C.TrainConfig(hidden=4, embed_dim=5), classes=("positive", "negative"),
                         vocab_digest=vocab.digest())
    path = tmp_path / "m.json"
    model.save(path, vocab)
    back = C.TextClassifier.load(path, vocab)
    assert back.classes == ("positive", "negative")
    for k, v in model.params().items():
        assert np.array_equal(back.params()[k], v)
    with pytest.raises(C.ClassifierError, match="hash"):
        C.TextClassifier.load(path, Vocabulary(("a", "b", "d")))
