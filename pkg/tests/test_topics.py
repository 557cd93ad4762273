import math

import numpy as np
import pytest

from journal_schemes.metrics import nmi
from journal_schemes.topics import (DEFAULT_T_GRID, BowCorpus, LdaConfig, coherence_scan, cv_coherence,
                                    dominant_topic, fit_lda, umass_coherence)


def disjoint_corpus(seed=123, per=100, length=20):
    rng = np.random.default_rng(seed)
    docs = [list(rng.choice(["a", "b"], length)) for _ in range(per)]
    docs += [list(rng.choice(["x", "y"], length)) for _ in range(per)]
    return BowCorpus.from_token_lists(docs), np.repeat([0, 1], per)


@pytest.fixture(scope="module")
def disjoint_fit():
    corpus, truth = disjoint_corpus()
    return corpus, truth, fit_lda(corpus, LdaConfig(n_topics=2, iterations=200, burn_in=50, seed=7))


def test_disjoint_vocabularies_separate_perfectly(disjoint_fit):
    _, truth, model = disjoint_fit
    assert nmi(dominant_topic(model.theta), truth) == 1.0


def test_distributions_normalized(disjoint_fit):
    _, _, model = disjoint_fit
    assert np.abs(model.theta.sum(axis=1) - 1).max() < 1e-9
    assert np.abs(model.phi.sum(axis=1) - 1).max() < 1e-9


def test_token_count_conserved_every_sweep(disjoint_fit):
    corpus, _, model = disjoint_fit
    assert len(model.token_totals) == 200
    assert set(model.token_totals) == {len(corpus.words)}


def test_log_likelihood_improves_over_initialization(disjoint_fit):
    _, _, model = disjoint_fit
    assert len(model.log_likelihood) == 201
    assert model.log_likelihood[-1] > model.log_likelihood[0]


def test_fixed_seed_reproducible():
    corpus, _ = disjoint_corpus(per=20)
    cfg = LdaConfig(n_topics=2, iterations=30, burn_in=10, seed=3)
    a, b = fit_lda(corpus, cfg), fit_lda(corpus, cfg)
    assert np.array_equal(a.theta, b.theta) and np.array_equal(a.phi, b.phi)


def test_vocabulary_smaller_than_topics():
    corpus, _ = disjoint_corpus(per=5)
    with pytest.raises(ValueError):
        fit_lda(corpus, LdaConfig(n_topics=5, iterations=10, burn_in=0))


def test_config_validation_and_prior():
    with pytest.raises(ValueError):
        LdaConfig(n_topics=1)
    with pytest.raises(ValueError):
        LdaConfig(iterations=10, burn_in=10)
    assert LdaConfig(n_topics=25).doc_prior == 2.0
    assert DEFAULT_T_GRID == tuple(range(10, 201, 10))


def test_empty_documents_dropped():
    corpus = BowCorpus.from_texts(["a b", "", "  ", "c"])
    assert corpus.n_docs == 2 and corpus.doc_index.tolist() == [0, 3]
    with pytest.raises(ValueError):
        fit_lda(BowCorpus.from_texts([""]))


def test_dominant_topic_examples():
    theta = np.array([[0.1, 0.7, 0.2], [1 / 3, 1 / 3, 1 / 3]])
    assert dominant_topic(theta).tolist() == [1, 0]


def umass_brute(top, docs):
    score = 0.0
    for m in range(1, len(top)):
        for l in range(m):
            dl = sum(1 for d in docs if top[l] in d)
            both = sum(1 for d in docs if top[l] in d and top[m] in d)
            score += math.log((both + 1) / dl)
    return score


def test_umass_matches_document_count_oracle():
    rng = np.random.default_rng(0)
    docs = [list(rng.choice(list("abcdefgh"), rng.integers(1, 6))) for _ in range(40)]
    corpus = BowCorpus.from_token_lists(docs)
    top = [[0, 1, 2, 3], [4, 5, 6, 7]]
    sets = [set(corpus.doc(d).tolist()) for d in range(corpus.n_docs)]
    got = umass_coherence(top, corpus)
    assert got == pytest.approx([umass_brute(t, sets) for t in top], abs=1e-12)


@pytest.mark.parametrize("measure", [umass_coherence, cv_coherence])
def test_cooccurring_topic_beats_scattered_topic(measure):
    # words 0..9 always appear together; words 10..19 each appear alone
    together = [[f"t{i}" for i in range(10)] for _ in range(10)]
    alone = [[f"s{i}"] * 3 for i in range(10)]
    corpus = BowCorpus.from_token_lists(together + alone)
    good, bad = measure([list(range(10)), list(range(10, 20))], corpus)
    assert good > bad


def test_scan_single_grid_point_selected():
    corpus, _ = disjoint_corpus(per=20)
    scan = coherence_scan(corpus, [2], LdaConfig(iterations=20, burn_in=5), sample_fraction=1.0, top_n=2)
    assert scan.best == 2 and list(scan.scores) == [2]


def test_scan_records_failures_and_continues():
    corpus, _ = disjoint_corpus(per=20)
    scan = coherence_scan(corpus, [2, 10], LdaConfig(iterations=20, burn_in=5), sample_fraction=0.5, top_n=2)
    assert scan.best == 2 and 10 in scan.failures
    assert scan.sample_size == 20
    with pytest.raises(ValueError):
        coherence_scan(corpus, [])
