import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from journal_schemes.clustering import SchemeLabeling, scheme_sizes
from journal_schemes.exports import (export_similarity_map, export_sankey, flow_threshold, load_coordinates,
                                     pca_coordinates, write_sankey, write_similarity_map)
from journal_schemes.metrics import GridSpec, element_centric_similarity
from journal_schemes.sgns import EmbeddingMatrix


def lab(name, labels, periodicals=None):
    periodicals = np.arange(len(labels)) if periodicals is None else periodicals
    return SchemeLabeling(name, periodicals, labels)


@pytest.mark.parametrize("n,expected", [(100, 10), (1000, 50), (20, 2), (500, 50)])
def test_flow_threshold(n, expected):
    assert flow_threshold(n) == expected


def test_identical_labelings_give_diagonal_table():
    a = lab("a", [0, 0, 1, 2, 2, 2])
    t = export_sankey(a, lab("b", [0, 0, 1, 2, 2, 2]))
    tab = t.crosstab()
    assert np.array_equal(tab, np.diag([2, 1, 3]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rows_sum_to_scheme_sizes_and_filter_is_subset(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 300))
    la = rng.integers(0, 4, n)
    la[:4] = np.arange(4)
    lb = rng.integers(0, 6, n)
    lb[:6] = np.arange(6)
    a, b = lab("a", la), lab("b", lb)
    t = export_sankey(a, b)
    sums = t.crosstab().sum(axis=1)
    assert sums.tolist() == [c for c, _ in scheme_sizes(a).values()]
    assert set(t.filtered) <= set(t.rows)
    for s, _, c in t.filtered:
        assert c >= min(0.1 * t.totals[s], 50)
    for s, _, c in set(t.rows) - set(t.filtered):
        assert c < min(0.1 * t.totals[s], 50)


def test_sankey_uses_shared_periodicals_only():
    a = lab("a", [0, 1, 1], periodicals=[1, 2, 3])
    b = lab("b", [0, 0, 1], periodicals=[2, 3, 9])
    t = export_sankey(a, b)
    assert t.rows == [(1, 0, 2)] and t.totals == {1: 2}


def test_disjoint_universes_error():
    with pytest.raises(ValueError):
        export_sankey(lab("a", [0, 1], [1, 2]), lab("b", [0, 1], [3, 4]))


def test_write_sankey(tmp_path):
    t = export_sankey(lab("a", [0] * 30 + [1]), lab("b", [0] * 29 + [1, 1]))
    paths = write_sankey(t, tmp_path)
    lines = paths["unfiltered"].read_text().splitlines()
    assert lines[0] == "source_label\ttarget_label\tjournal_count"
    assert lines[1:] == ["0\t0\t29", "0\t1\t1", "1\t1\t1"]
    # threshold for source 0 is 3, for source 1 it is 0.1
    assert paths["filtered"].read_text().splitlines()[1:] == ["0\t0\t29", "1\t1\t1"]


def test_constant_field_gives_constant_grid():
    a = lab("a", [0, 0, 1, 1])
    coords = {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (0.0, 1.0), 3: (1.0, 1.0)}
    sm = export_similarity_map(a, lab("b", [1, 1, 0, 0]), coords, grid_size=7)
    assert sm.values.shape == (7, 7)
    assert np.allclose(sm.values, 1.0, atol=1e-12)


def test_two_journal_field_matches_idw_arithmetic():
    # similarities 0.5, 0.5, 1.0; journal 1 has no coordinates
    a, b = lab("a", [0, 0, 1]), lab("b", [0, 1, 2])
    coords = {0: (0.0, 0.0), 2: (3.0, 0.0)}
    sm = export_similarity_map(a, b, coords, grid=GridSpec(0, 3, 0, 0, 4, 1), power=2)
    assert sm.missing == [1]
    assert sm.similarity == pytest.approx([0.5, 1.0], abs=1e-12)
    # query (1, 0): weights 1 and 1/4
    assert sm.values[0, 1] == pytest.approx((0.5 * 1 + 1.0 * 0.25) / 1.25, abs=1e-12)
    assert sm.values[0, 0] == 0.5 and sm.values[0, 3] == 1.0


def test_similarity_matches_metric():
    rng = np.random.default_rng(5)
    la, lb = rng.integers(0, 3, 25), rng.integers(0, 4, 25)
    la[:3], lb[:4] = np.arange(3), np.arange(4)
    coords = {i: tuple(rng.random(2)) for i in range(25)}
    sm = export_similarity_map(lab("a", la), lab("b", lb), coords, alpha=0.9)
    assert np.allclose(sm.similarity, element_centric_similarity(la, lb, 0.9), atol=1e-12)


def test_no_coordinates_at_all():
    with pytest.raises(ValueError):
        export_similarity_map(lab("a", [0, 1]), lab("b", [0, 1]), {})


def test_write_similarity_map(tmp_path):
    a, b = lab("a", [0, 0, 1]), lab("b", [0, 1, 2])
    sm = export_similarity_map(a, b, {0: (0.0, 0.0), 1: (1.0, 1.0), 2: (3.0, 0.0)}, grid_size=5)
    paths = write_similarity_map(sm, tmp_path, names=lambda p: f"J{p}")
    rows = paths["journals"].read_text().splitlines()
    assert rows[0] == "periodical\tname\tx\ty\tsimilarity" and rows[1].startswith("0\tJ0\t")
    assert len(paths["grid"].read_text().splitlines()) == 1 + 25
    meta = json.loads(paths["meta"].read_text())
    assert meta["power"] == 2.0 and meta["journals"] == 3 and meta["missing_coordinates"] == 0


def test_load_coordinates(tmp_path):
    f = tmp_path / "c.tsv"
    f.write_text("# id x y\n3\t1.5\t-2\n\n7\t0\t0\n")
    assert load_coordinates(f) == {3: (1.5, -2.0), 7: (0.0, 0.0)}
    f.write_text("3\t1.5\n")
    with pytest.raises(ValueError, match=":1:"):
        load_coordinates(f)


def test_pca_coordinates_shape_and_sign():
    emb = EmbeddingMatrix(np.array([[0.0, 0, 0], [2, 0, 0], [4, 0, 1]]), np.array([5, 6, 7]))
    xy = pca_coordinates(emb)
    assert set(xy) == {5, 6, 7}
    assert xy[7][0] > xy[5][0]
