import numpy as np
import pytest

from painpoints import itm
from painpoints import metrics as M
from painpoints.topics import TopicAssignment

from support import itm_case


def test_recall_examples():
    r, zero = itm.class_recall([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert r.tolist() == [1.0, 1.0, 1.0] and zero == ()
    r, _ = itm.class_recall([1, 1, 1, 0, 0], [1, 1, 1, 1, 0], 2)
    assert r[1] == 0.75


def test_recall_matches_confusion_matrix(rng):
    for _ in range(30):
        k = int(rng.integers(2, 6))
        n = int(rng.integers(1, 40))
        pred, ref = rng.integers(0, k, size=n), rng.integers(0, k, size=n)
        cm = np.zeros((k, k))
        for p, g in zip(pred, ref):
            cm[g, p] += 1
        expect = [cm[c, c] / cm[c].sum() if cm[c].sum() else 0.0 for c in range(k)]
        got, zero = itm.class_recall(pred, ref, k)
        assert got.tolist() == expect
        assert zero == tuple(c for c in range(k) if cm[c].sum() == 0)


def test_threshold_examples():
    d = itm.thresholds([0.8, 0.4], 0.5)
    assert d.relative.tolist() == [1.0, 0.5] and d.threshold.tolist() == [0.5, 0.25]
    assert itm.thresholds([0.3, 0.3, 0.3], 0.6).threshold.tolist() == [0.6] * 3
    assert itm.thresholds([0.9, 0.0], 0.6).threshold[1] == 0.0
    with pytest.raises(itm.ItmError):
        itm.thresholds([0.0, 0.0], 0.6)


def test_threshold_arithmetic_on_random_vectors(rng):
    for _ in range(1000):
        k = int(rng.integers(2, 30))
        r = rng.random(k) * (rng.random(k) > 0.2)
        r[int(rng.integers(k))] = rng.random() + 1e-3
        tau = float(rng.choice([0.4, 0.5, 0.6, 0.7, rng.random() + 1e-9]))
        d = itm.thresholds(r, tau)
        ref_rel = [x / max(r) for x in r]
        assert np.allclose(d.relative, ref_rel, atol=1e-12, rtol=0)
        assert np.allclose(d.threshold, [x * tau for x in ref_rel], atol=1e-12, rtol=0)
        assert d.threshold.max() == pytest.approx(tau, abs=1e-12)
        assert np.all((d.threshold >= 0) & (d.threshold <= tau))
        scaled = itm.thresholds(r * float(rng.random() * 5 + 0.01), tau)
        assert np.allclose(scaled.threshold, d.threshold, atol=1e-12, rtol=0)


def test_modify_labels_branches():
    probas = np.array([[0.3, 0.7], [0.5, 0.5], [0.4, 0.6], [0.9, 0.1]])
    prev = np.array([0, 0, 0, 0])
    new, changed = itm.modify_labels(probas, prev, [0.6, 0.6])
    # 0.7 > 0.6 moves; 0.5 ties go to argmax 0 = prev; 0.6 is not strictly above; argmax = prev stays
    assert new.tolist() == [1, 0, 0, 0] and changed.tolist() == [True, False, False, False]
    new, _ = itm.modify_labels(np.array([[0.2, 0.8]]), [1], [0.0, 0.0])
    assert new.tolist() == [1]


def test_config_validation():
    for bad in ({"tau": 0.0}, {"tau": 1.5}, {"max_steps": -1}, {"stop_metrics": ("accuracy",)}):
        with pytest.raises(itm.ItmError):
            itm.ItmConfig(**bad)


@pytest.fixture(scope="module")
def case():
    return itm_case(seed=0)


def test_zero_steps_returns_initial(case):
    inputs, init, _ = case
    state = itm.run_itm(inputs, init, itm.ItmConfig(max_steps=0))
    assert state.step == 0 and state.history == []
    assert np.array_equal(state.labels.labels, init.labels)


def test_run_is_replayable_and_deterministic(case, tmp_path):
    inputs, init, _ = case
    cfg = itm.ItmConfig(max_steps=6)
    a, b = itm.run_itm(inputs, init, cfg), itm.run_itm(inputs, init, cfg)
    assert np.array_equal(a.labels.labels, b.labels.labels)
    assert itm.replay_violations(a) == []
    assert 1 <= a.step <= 6 and len(a.history) == a.step
    for rec in a.history:
        assert set(rec.metrics) == {"npmi", "outlier_ratio", "label_change_count"}
        assert max(rec.threshold) == pytest.approx(cfg.tau)
    a.write_history(tmp_path / "h.jsonl")
    lines = (tmp_path / "h.jsonl").read_text().splitlines()
    assert len(lines) == a.step


def test_replay_detects_tampering(case):
    inputs, init, _ = case
    state = itm.run_itm(inputs, init, itm.ItmConfig(max_steps=2))
    rec = state.history[0]
    unchanged = int(np.flatnonzero(rec.labels == rec.predicted)[0])
    rec.labels = rec.labels.copy()
    rec.labels[unchanged] = (rec.labels[unchanged] + 1) % len(state.classes)
    assert (1, unchanged) in itm.replay_violations(state)


def test_zero_change_stops_at_first_such_step():
    # a trivially learnable assignment: every doc already sits in its argmax class
    docs = [np.array([i % 3 + 1]) for i in range(30)]
    labels = np.array([i % 3 for i in range(30)])
    from painpoints import features as F
    vocab = F.Vocabulary(("pad", "a", "b", "c"))
    counts = F.count([[vocab.tokens[int(d[0])]] for d in docs], vocab)
    inputs = itm.ItmInputs(docs, vocab, counts)
    init = TopicAssignment(tuple(map(str, range(30))), labels)
    state = itm.run_itm(inputs, init, itm.ItmConfig(max_steps=10, warmup_epochs=30,
                                                     stop_metrics=("outlier_ratio", "label_change_count")))
    assert state.stop_reason == "no_change" and state.step == 1
    assert np.array_equal(state.labels.labels, labels)


def test_needs_a_topic(case):
    inputs, init, _ = case
    with pytest.raises(itm.ItmError):
        itm.run_itm(inputs, init.with_labels(np.zeros(len(init.labels), dtype=int)))


def test_default_tau_reduces_outliers_without_hurting_purity(case):
    inputs, init, true = case
    state = itm.run_itm(inputs, init, itm.ItmConfig())
    assert M.outlier_ratio(state.labels) < M.outlier_ratio(init)
    assert M.topic_purity(state.labels.labels, true) >= M.topic_purity(init.labels, true)


def test_lower_tau_rescues_more(case):
    inputs, init, _ = case
    loose = itm.run_itm(inputs, init, itm.ItmConfig(tau=0.5))
    strict = itm.run_itm(inputs, init, itm.ItmConfig(tau=0.7))
    assert M.outlier_ratio(loose.labels) <= M.outlier_ratio(strict.labels)
