"""Shared builders for the synthetic corpora used across tests."""

import numpy as np

from painpoints import corpus, itm, synth
from painpoints import features as F
from painpoints import metrics as M
from painpoints import topics as T


def kept_synthetic(seed=0, **spec):
    reviews, truth = synth.generate(synth.GeneratorSpec(seed=seed, **spec))
    clean = corpus.preprocess(reviews)
    stop = corpus.load_stopwords()
    lex = corpus.build_keyword_lexicon(clean, stop)
    kept = corpus.kept(corpus.filter_reviews(clean, lex))
    by_id = {g.doc_id: g for g in truth}
    return kept, [by_id[r.id] for r in kept], stop


def itm_case(seed=0, outlier_rate=0.3, flip_rate=0.1):
    """Synthetic reviews with a corrupted topic assignment; returns (inputs, corrupted, true labels)."""
    kept, truth, stop = kept_synthetic(seed)
    docs = [r.tokens for r in kept]
    vocab = F.build_vocab(docs)
    inputs = itm.ItmInputs([vocab.encode(d)[0] for d in docs], vocab, F.count(docs, vocab),
                           T.scoring_exclusion(vocab, stop), M.CooccurrenceCounts(docs))
    true = np.array([g.topic for g in truth])
    init = synth.corrupt_assignment(list(true), outlier_rate, flip_rate, seed=seed,
                                    doc_ids=[r.id for r in kept])
    return inputs, init, true
