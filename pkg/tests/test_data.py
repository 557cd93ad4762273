import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from journal_schemes.data import (IngestError, PaperTable, PeriodicalRegistry, assign_scopus_monolabel,
                                  canonical_name, decade, filter_decade, ingest_abstracts, ingest_citations,
                                  ingest_papers, ingest_scopus, monolabel_from_neighbors)
from journal_schemes.sgns import EmbeddingMatrix


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def table(years, venues=None):
    venues = venues if venues is not None else [0] * len(years)
    return PaperTable([f"p{i}" for i in range(len(years))], np.array(venues), np.array(years))


def test_ingest_three_rows_two_periodicals(tmp_path):
    f = write(tmp_path / "papers.tsv", "a\tJ. Foo\t2011\nb\tJ Bar\t2012\nc\tj. foo \t2013\n")
    reg, papers, summary = ingest_papers(f)
    assert len(papers) == 3 and len(reg) == 2
    assert papers.periodical.tolist() == [0, 1, 0]
    assert [papers.dense(p) for p in "abc"] == [0, 1, 2]
    assert summary.duplicates == 0


def test_ingest_empty_file(tmp_path):
    reg, papers, summary = ingest_papers(write(tmp_path / "p.tsv", ""))
    assert len(reg) == 0 and len(papers) == 0 and summary.papers == 0


def test_ingest_duplicates_counted(tmp_path):
    f = write(tmp_path / "p.tsv", "a\tX\t2011\na\tY\t2015\nb\tX\t2012\n")
    reg, papers, summary = ingest_papers(f)
    assert summary.duplicates == 1 and len(papers) == 2
    assert papers.year.tolist() == [2011, 2012]


@pytest.mark.parametrize("row", ["a\tX\n", "a\tX\tnot-a-year\n", "a\t  \t2011\n", "a\tX\t1799\n"])
def test_ingest_malformed_row_reports_line(tmp_path, row):
    f = write(tmp_path / "p.tsv", "ok\tX\t2011\n" + row)
    with pytest.raises(IngestError, match=":2:"):
        ingest_papers(f)


def test_canonical_names_collapse():
    assert canonical_name("J. Appl. Phys") == canonical_name("j  appl phys ")


def test_citations_unknown_dropped(tmp_path):
    _, papers, _ = ingest_papers(write(tmp_path / "p.tsv", "a\tX\t2011\nb\tX\t2012\n"))
    edges, unknown = ingest_citations(write(tmp_path / "c.tsv", "a\tb\na\tzzz\n"), papers)
    assert edges.tolist() == [[0, 1]] and unknown == 1


def test_scopus_and_abstracts(tmp_path):
    reg, _, _ = ingest_papers(write(tmp_path / "p.tsv", "a\tJournal X\t2011\nb\tJournal Y\t2012\n"))
    n = ingest_scopus(write(tmp_path / "s.tsv", "journal x\t1100,1200\nUnknown\t1300\n"), reg)
    assert n == 1 and reg.asjc[0] == {1100, 1200} and 1 not in reg.asjc
    ab = ingest_abstracts(write(tmp_path / "a.jsonl", '{"paper_id": "a", "text": "hi"}\n\n'))
    assert ab == {"a": "hi"}
    with pytest.raises(IngestError):
        ingest_abstracts(write(tmp_path / "b.jsonl", '{"paper": "a"}\n'))


def test_registry_round_trip(tmp_path):
    reg = PeriodicalRegistry()
    for name in ["B journal", "A journal", "C"]:
        reg.add(name)
    reg.set_asjc(1, [2700, 1000])
    reg.save(tmp_path / "r.tsv")
    back = PeriodicalRegistry.load(tmp_path / "r.tsv")
    assert back.names == reg.names and back.asjc == reg.asjc
    assert [back.lookup(n) for n in reg.names] == [0, 1, 2]


def test_decade_floor():
    assert [decade(y) for y in (2009, 2010, 2019, 2020)] == [2000, 2010, 2010, 2020]


@pytest.mark.parametrize("years,kept", [
    ((2015, 2012), True),
    ((2015, 2009), False),   # min_year also excludes 2009
    ((2021, 2019), False),   # 2020 vs 2010
])
def test_filter_decade_examples(years, kept):
    g = filter_decade(table(list(years)), np.array([[0, 1]]))
    assert (g.n_edges == 1) == kept


def test_filter_decade_cross_decade_without_year_cut():
    g = filter_decade(table([2015, 2009]), np.array([[0, 1]]), min_year=1990)
    assert g.n_edges == 0 and g.stats.dropped_decade == 1


def test_filter_counts_drops():
    g = filter_decade(table([2011, 2012, 2005]), np.array([[0, 1], [0, 1], [1, 1], [0, 2], [0, 7]]))
    s = g.stats
    assert (s.kept, s.dropped_duplicate, s.dropped_self, s.dropped_year, s.dropped_unknown) == (1, 1, 1, 1, 1)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_filter_idempotent_and_same_decade(seed):
    rng = np.random.default_rng(seed)
    n = 30
    papers = table(rng.integers(2005, 2025, n).tolist(), rng.integers(0, 4, n).tolist())
    edges = rng.integers(0, n, size=(80, 2))
    g1 = filter_decade(papers, edges)
    g2 = filter_decade(papers, g1.edges())
    assert np.array_equal(g1.indptr, g2.indptr) and np.array_equal(g1.indices, g2.indices)
    e = g1.edges()
    assert (papers.year[e[:, 0]] // 10 == papers.year[e[:, 1]] // 10).all()
    for p in range(n):
        refs = g1.out_refs(p)
        assert (np.diff(refs) > 0).all()


def test_monolabel_majority():
    neigh = [{2700}] * 30 + [{1600}] * 20
    assert monolabel_from_neighbors(neigh) == 2700
    assert monolabel_from_neighbors([{1600}] * 50) == 1600


def test_monolabel_ties_and_exclusions():
    assert monolabel_from_neighbors([{1300}, {1200}]) == 1200
    assert monolabel_from_neighbors([{1000}, {1000, 1300}]) == 1300
    assert monolabel_from_neighbors([set(), {1000}]) is None


@settings(max_examples=50, deadline=None)
@given(st.lists(st.frozensets(st.sampled_from([1000, 1100, 1200, 1300]), max_size=3), min_size=1, max_size=20),
       st.randoms())
def test_monolabel_order_invariant(neigh, rnd):
    shuffled = list(neigh)
    rnd.shuffle(shuffled)
    assert monolabel_from_neighbors(neigh) == monolabel_from_neighbors(shuffled)


def test_assign_monolabel_uses_nearest_labeled_peers():
    reg = PeriodicalRegistry()
    for n in "abcde":
        reg.add(n)
    reg.set_asjc(1, [1100])
    reg.set_asjc(2, [1100])
    reg.set_asjc(3, [1200])
    vecs = np.array([[1, 0], [1, 0.1], [1, 0.2], [0, 1], [0.1, 1]], dtype=float)
    emb = EmbeddingMatrix(vecs, np.arange(5))
    assert assign_scopus_monolabel(0, emb, reg, k=2) == 1100
    # nearest peer of 4 is 3, labeled 1200
    assert assign_scopus_monolabel(4, emb, reg, k=1) == 1200
