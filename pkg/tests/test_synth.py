import numpy as np
import pytest

from journal_schemes.synth import SynthSpec, generate_synthetic_corpus, make_corpus, subject_code

SMALL = SynthSpec(communities=3, papers_per_community=60, periodicals_per_community=2, vocab_per_community=10,
                  refs_per_paper=5, seed=4)


def test_fixed_seed_is_byte_identical(tmp_path):
    a = generate_synthetic_corpus(tmp_path / "a", SMALL)
    b = generate_synthetic_corpus(tmp_path / "b", SMALL)
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes()
    c = generate_synthetic_corpus(tmp_path / "c", SynthSpec(**{**SMALL.__dict__, "seed": 5}))
    assert c["citations"].read_bytes() != a["citations"].read_bytes()


@pytest.mark.parametrize("bad", [
    {"communities": 1}, {"communities": 27}, {"papers_per_community": 0}, {"vocab_per_community": 0},
    {"inter_rate": 1.5}, {"noise_rate": -0.1}, {"noise_rate": 0.3, "shared_vocab": 0},
    {"first_year": 2020, "last_year": 2010}, {"refs_per_paper": -1},
])
def test_degenerate_specs_rejected(bad):
    with pytest.raises(ValueError):
        make_corpus(SynthSpec(**{**SMALL.__dict__, **bad}))


def intra_fraction(corpus):
    c = corpus.paper_community[corpus.citations]
    return (c[:, 0] == c[:, 1]).mean()


def test_intra_rate_follows_settings():
    spec = SynthSpec(communities=4, papers_per_community=300, inter_rate=0.1, seed=1)
    # a mixed reference still lands inside with probability 1/4
    assert abs(intra_fraction(make_corpus(spec)) - (0.9 + 0.1 / 4)) < 0.01


def test_fully_mixed_citations_are_chance_level():
    spec = SynthSpec(communities=4, papers_per_community=300, inter_rate=1.0, seed=1)
    assert abs(intra_fraction(make_corpus(spec)) - 0.25) < 0.01


def test_structure_of_corpus():
    corpus = make_corpus(SMALL)
    assert len(corpus.paper_ids) == 180 and len(set(corpus.paper_ids)) == 180
    assert (corpus.citations[:, 0] != corpus.citations[:, 1]).all()
    assert len(np.unique(corpus.citations, axis=0)) == len(corpus.citations)
    assert (corpus.periodical_community[corpus.paper_periodical] == corpus.paper_community).all()
    assert corpus.scopus_codes[0] == [subject_code(0)] == [1100]
    for text, c in zip(corpus.abstracts, corpus.paper_community):
        assert all(w.startswith(f"topic{c}word") for w in text.split())
    assert ((corpus.years >= 2010) & (corpus.years <= 2019)).all()


def test_noise_words_come_from_shared_vocabulary():
    corpus = make_corpus(SynthSpec(**{**SMALL.__dict__, "noise_rate": 0.5, "shared_vocab": 3}))
    words = " ".join(corpus.abstracts).split()
    shared = [w for w in words if w.startswith("shared")]
    assert set(shared) <= {"shared0", "shared1", "shared2"}
    assert abs(len(shared) / len(words) - 0.5) < 0.05
