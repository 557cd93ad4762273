"""Acceptance gate: one test per criterion, each reported as a PASS/FAIL line
in the terminal summary (see conftest.py)."""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from journal_schemes.classify import (DEFAULT_FOLDS, DEFAULT_N_FEATURES, cnb_fit, cnb_predict, crossval_multiclass,
                                      feature_index, hash_vectorize, hash_vectorize_many)
from journal_schemes.cli import main
from journal_schemes.clustering import DEFAULT_K, KmeansConfig, SchemeLabeling, kmeans_fit
from journal_schemes.data import MONOLABEL_NEIGHBORS, PeriodicalRegistry
from journal_schemes.exports import IDW_POWER, flow_threshold
from journal_schemes.metrics import (ari, element_centric_similarity, fmi, idw_at, nmi, pr_roc_curves,
                                     ranking_average_precision, ranking_loss)
from journal_schemes.pipeline import ClassifierConfig, ExportConfig, PipelineConfig, TopicConfig
from journal_schemes.sgns import SgnsConfig, sgns_objective
from journal_schemes.synth import SynthSpec, make_corpus
from journal_schemes.topics import DEFAULT_T_GRID, BowCorpus, LdaConfig, dominant_topic, fit_lda
from journal_schemes.walks import NODE2VEC_DEFAULTS

from . import oracles

VECTORS = Path(__file__).parent / "data" / "fnv_vectors.tsv"


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# ---------------------------------------------------------------------------


def test_criterion_1_metric_oracle_equivalence(criterion):
    with criterion(1, "metric-oracle equivalence on 1,000 random instances") as notes:
        rng = np.random.default_rng(20240601)
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(2, 201))
            a = rng.integers(0, int(rng.integers(1, 9)), n).tolist()
            b = rng.integers(0, int(rng.integers(1, 9)), n).tolist()
            for f, o in ((nmi, oracles.nmi), (ari, oracles.ari), (fmi, oracles.fmi)):
                worst = max(worst, abs(f(a, b) - o(a, b)))
            y = rng.random(n) < rng.uniform(0.1, 0.9)
            y[0], y[1] = True, False
            s = np.round(rng.random(n), int(rng.integers(1, 4)))
            c = pr_roc_curves(y, s)
            worst = max(worst, abs(c.ap - oracles.average_precision(y.tolist(), s.tolist())),
                        abs(c.auc - oracles.auc_pairs(y.tolist(), s.tolist())))
            L = int(rng.integers(2, 6))
            m = int(rng.integers(1, 200 // L + 1))
            mask = rng.random((m, L)) < 0.4
            mask[np.arange(m), rng.integers(0, L, m)] = True
            full = mask.all(axis=1)
            mask[full, 0] = False
            scores = np.round(rng.random((m, L)), 1)
            sets = [np.flatnonzero(r).tolist() for r in mask]
            worst = max(worst, abs(ranking_average_precision(mask, scores) - oracles.rap(sets, scores.tolist())),
                        abs(ranking_loss(mask, scores) - oracles.ranking_loss(sets, scores.tolist())))
        elapsed = time.perf_counter() - t0
        notes.update(max_dev=worst, seconds=elapsed)
        assert worst <= 1e-12, f"max deviation {worst:.3g}"
        assert elapsed < 60, f"{elapsed:.1f}s"


def test_criterion_2_worked_examples(criterion):
    with criterion(2, "hand-derived worked examples reproduced"):
        a, b = [0, 0, 1, 1], [0, 0, 1, 2]
        assert abs(nmi(a, b) - 1 / math.sqrt(1.5)) <= 1e-12 and round(nmi(a, b), 4) == 0.8165
        assert abs(ari(a, b) - 4 / 7) <= 1e-12
        assert abs(fmi(a, b) - 1 / math.sqrt(2)) <= 1e-12
        c = pr_roc_curves([1, 0, 1], [0.9, 0.8, 0.7])
        assert abs(c.auc - 0.5) <= 1e-12 and abs(c.ap - 5 / 6) <= 1e-12
        assert abs(ranking_average_precision([0, 0], np.array([[0.9, 0.1, 0.0], [0.5, 0.8, 0.1]])) - 0.75) <= 1e-12
        s = element_centric_similarity([0, 0, 1], [0, 1, 2], 0.9)
        assert np.abs(s - [0.5, 0.5, 1.0]).max() <= 1e-12
        assert abs(idw_at([[0, 0], [3, 0]], [0, 1], [[1, 0]], power=2)[0] - 0.2) <= 1e-12
        X = hash_vectorize_many(["a a", "b"])
        model = cnb_fit(X, [1, 2], alpha=1.0)
        col = {int(f): i for i, f in enumerate(model.features)}
        ia, ib = col[feature_index("a")], col[feature_index("b")]
        p = np.exp(model.log_complement)
        want = {(0, ia): 1 / 3, (0, ib): 2 / 3, (1, ia): 3 / 4, (1, ib): 1 / 4}
        assert max(abs(p[k] - v) for k, v in want.items()) <= 1e-12
        label, _ = cnb_predict(model, hash_vectorize_many(["a"]))
        assert label.tolist() == [1]


def test_criterion_3_sgns_gradient_check(criterion):
    with criterion(3, "SGNS analytic vs finite-difference gradient, 5-token model") as notes:
        rng = np.random.default_rng(3)
        w_in, w_out = rng.normal(scale=0.5, size=(5, 6)), rng.normal(scale=0.5, size=(5, 6))
        centers = np.array([0, 1, 2, 3, 4, 2, 1])
        contexts = np.array([1, 2, 3, 4, 0, 0, 4])
        negs = rng.integers(0, 5, size=(7, 3))
        _, g_in, g_out = sgns_objective(w_in, w_out, centers, contexts, negs)
        eps = 1e-6
        worst = 0.0
        for w, g in ((w_in, g_in), (w_out, g_out)):
            num = np.zeros_like(w)
            for idx in np.ndindex(w.shape):
                old = w[idx]
                w[idx] = old + eps
                hi = sgns_objective(w_in, w_out, centers, contexts, negs)[0]
                w[idx] = old - eps
                lo = sgns_objective(w_in, w_out, centers, contexts, negs)[0]
                w[idx] = old
                num[idx] = (hi - lo) / (2 * eps)
            worst = max(worst, np.linalg.norm(g - num) / (np.linalg.norm(g) + np.linalg.norm(num)))
        notes["rel_err"] = worst
        assert worst < 1e-4, f"relative error {worst:.3g}"


# ---------------------------------------------------------------------------
# end-to-end on the planted 4-community corpus


@pytest.fixture(scope="module")
def planted_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("planted")
    t0 = time.perf_counter()
    assert main(["synth", "--out", str(root), "--communities", "4", "--papers-per-community", "500",
                 "--inter-rate", "0.1", "--seed", "11"]) == 0
    assert main(["run", "--config", str(root / "config.json")]) == 0
    return root, time.perf_counter() - t0


def test_criterion_4_end_to_end_recovery(criterion, planted_run):
    with criterion(4, "planted partition recovered (NMI >= 0.9) and CNB macro F1 >= 0.95 in < 5 min") as notes:
        root, elapsed = planted_run
        out = root / "out"
        cfg = json.loads((root / "config.json").read_text())
        assert cfg["kmeans"]["k"] == 4
        papers = (root / "papers.tsv").read_text().splitlines()
        assert len(papers) == 2000
        truth = dict(line.split("\t") for line in (root / "truth_periodicals.tsv").read_text().splitlines())
        reg = PeriodicalRegistry.load(out / "ingest" / "registry.tsv")
        lab = SchemeLabeling.load(out / "cluster" / "p2v" / "labels.tsv")
        planted = [int(truth[reg.names[p]]) for p in lab.periodicals]
        score = nmi(lab.labels, planted)
        rep = json.loads((out / "classify" / "p2v" / "report.json").read_text())
        f1 = rep["aggregate"]["macro_f1"]["mean"]
        notes.update(nmi=score, macro_f1=f1, pipeline_seconds=elapsed)
        assert len(rep["folds"]) == 10
        assert score >= 0.9, f"NMI {score:.4f}"
        assert f1 >= 0.95, f"macro F1 {f1:.4f}"
        assert elapsed < 300, f"{elapsed:.1f}s"


def test_criterion_5_aligned_labels_beat_shuffled(criterion):
    with criterion(5, "planted-aligned labels beat shuffled labels on macro recall") as notes:
        spec = SynthSpec(communities=4, papers_per_community=500, noise_rate=0.6, shared_vocab=200,
                         words_per_abstract=30, seed=5)
        corpus = make_corpus(spec)
        X = hash_vectorize_many(corpus.abstracts)
        rng = np.random.default_rng(9)
        aligned = corpus.paper_community.copy()
        flip = rng.random(len(aligned)) < 0.2
        aligned[flip] = rng.integers(0, 4, flip.sum())
        shuffled = rng.permutation(aligned)
        r_aligned = crossval_multiclass(X, aligned, 10).aggregate["macro_recall"]["mean"]
        r_shuffled = crossval_multiclass(X, shuffled, 10).aggregate["macro_recall"]["mean"]
        notes.update(aligned_recall=r_aligned, shuffled_recall=r_shuffled)
        assert abs(r_shuffled - 0.25) <= 0.05, f"shuffled recall {r_shuffled:.4f}"
        assert r_aligned > r_shuffled, f"{r_aligned:.4f} vs {r_shuffled:.4f}"


def test_criterion_6_kmeans_invariants(criterion):
    with criterion(6, "k-means monotone inertia, blob recovery, determinism"):
        rng = np.random.default_rng(6)
        for i in range(100):
            n, d, k = int(rng.integers(10, 200)), int(rng.integers(1, 8)), int(rng.integers(2, 9))
            x = rng.normal(size=(n, d)) * rng.uniform(0.1, 10)
            res = kmeans_fit(x, KmeansConfig(k=k, restarts=2, seed=i))
            trace = np.asarray(res.inertia_trace)
            assert (np.diff(trace) <= 1e-9 * trace[0]).all(), f"dataset {i}"
        centers = np.array([[0, 0, 0], [30, 0, 0], [0, 30, 0], [0, 0, 30], [30, 30, 30]], dtype=float)
        truth = np.repeat(np.arange(5), 50)
        blobs = centers[truth] + rng.normal(size=(250, 3))
        res = kmeans_fit(blobs, KmeansConfig(k=5, seed=1))
        assert nmi(res.labels, truth) == 1.0
        again = kmeans_fit(blobs, KmeansConfig(k=5, seed=1))
        assert np.array_equal(res.labels, again.labels) and np.array_equal(res.centroids, again.centroids)


def test_criterion_7_lda_invariants(criterion):
    with criterion(7, "LDA conservation, normalization, disjoint-vocabulary separation in < 2 min") as notes:
        t0 = time.perf_counter()
        rng = np.random.default_rng(123)
        docs = [list(rng.choice(["a", "b"], 20)) for _ in range(100)]
        docs += [list(rng.choice(["x", "y"], 20)) for _ in range(100)]
        corpus = BowCorpus.from_token_lists(docs)
        model = fit_lda(corpus, LdaConfig(n_topics=2, seed=7))
        assert model.config.iterations == 1000
        assert set(model.token_totals) == {len(corpus.words)} and len(model.token_totals) == 1000
        assert np.abs(model.theta.sum(axis=1) - 1).max() <= 1e-9
        assert np.abs(model.phi.sum(axis=1) - 1).max() <= 1e-9
        assert nmi(dominant_topic(model.theta), np.repeat([0, 1], 100)) == 1.0
        notes["seconds"] = time.perf_counter() - t0
        assert notes["seconds"] < 120


def test_criterion_8_determinism_and_formats(criterion, planted_run, tmp_path):
    with criterion(8, "byte-identical reruns, hash test vectors, Sankey thresholds") as notes:
        root, _ = planted_run
        fresh = tmp_path / "rerun"
        assert main(["run", "--config", str(root / "config.json"), "--out", str(fresh)]) == 0
        first, second = tree(root / "out"), tree(fresh)
        assert first.keys() == second.keys()
        differ = [k for k in first if first[k] != second[k]]
        notes["files_compared"] = len(first)
        assert not differ, f"differing files: {differ[:5]}"
        for line in VECTORS.read_text(encoding="utf-8").splitlines():
            if line.startswith("#") or not line:
                continue
            parts = line.split("\t")
            if parts[0] == "hash":
                from journal_schemes.classify import fnv1a_64
                assert fnv1a_64(parts[1].encode()) == int(parts[2], 16)
            else:
                want = {int(k): int(v) for k, v in (p.split(":") for p in parts[3].split(",") if p)}
                assert hash_vectorize(parts[1], int(parts[2])).as_dict() == want, parts[1]
        assert flow_threshold(100) == 10 and flow_threshold(1000) == 50


def test_criterion_9_default_constants(criterion):
    with criterion(9, "default configuration carries the reference constants"):
        snapshot = {
            "K": KmeansConfig().k,
            "m": ClassifierConfig().n_features,
            "node2vec": (SgnsConfig().dimension, NODE2VEC_DEFAULTS.walk_length, NODE2VEC_DEFAULTS.walks_per_source,
                         NODE2VEC_DEFAULTS.p, NODE2VEC_DEFAULTS.q),
            "folds": ClassifierConfig().folds,
            "T_grid": tuple(TopicConfig().grid),
            "idw_power": ExportConfig().idw_power,
            "monolabel_neighbors": PipelineConfig("p", "c", "a").monolabel_neighbors,
        }
        assert snapshot == {
            "K": 26,
            "m": 2 ** 20,
            "node2vec": (128, 80, 10, 1.0, 1.0),
            "folds": 10,
            "T_grid": tuple(range(10, 201, 10)),
            "idw_power": 2.0,
            "monolabel_neighbors": 50,
        }
        assert (DEFAULT_K, DEFAULT_N_FEATURES, DEFAULT_FOLDS, IDW_POWER, MONOLABEL_NEIGHBORS) == (26, 2 ** 20, 10, 2.0, 50)
        assert DEFAULT_T_GRID == snapshot["T_grid"]
        cfg = PipelineConfig("p", "c", "a")
        assert cfg.node2vec == NODE2VEC_DEFAULTS and cfg.sgns.dimension == 128 and cfg.kmeans.k == 26
