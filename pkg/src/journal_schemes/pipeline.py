"""Config-driven, cached pipeline from raw corpus files to evaluation reports.

Every stage owns one directory under the output root and communicates only
through the files it writes there. A stage's cache key hashes its resolved
parameters, the keys of the stages it reads from and, for stages that read
raw inputs, the input file contents. A stage whose stamp matches its key
is skipped.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import shutil
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import classify as clf
from .clustering import KmeansConfig, SchemeLabeling, kmeans, scheme_sizes, scopus_scheme
from .data import (DEFAULT_MIN_YEAR, MONOLABEL_NEIGHBORS, MULTIDISCIPLINARY_ASJC, PaperTable,
                   PeriodicalRegistry, filter_decade, ingest_abstracts, ingest_citations, ingest_papers,
                   ingest_scopus)
from .exports import (FLOW_CAP, FLOW_FRACTION, IDW_POWER, export_sankey, export_similarity_map,
                      load_coordinates, pca_coordinates, write_sankey, write_similarity_map)
from .matrices import PeriodicalMatrix, build_citation_matrix, build_cocitation_matrix, row_normalize
from .metrics import ari, fmi, macro_average, macro_pr_curve, macro_roc_curve, nmi, pr_roc_curves
from .sgns import EmbeddingMatrix, SgnsConfig, train_sgns
from .topics import COHERENCE_MEASURES, DEFAULT_T_GRID, BowCorpus, LdaConfig, coherence_scan, dominant_topic, fit_lda
from .walks import NODE2VEC_DEFAULTS, TRAIL_DEFAULTS, TrailCorpus, WalkConfig, generate_citation_trails, node2vec_walks

log = logging.getLogger(__name__)

SCHEMES = ("p2v", "citation", "citation-n2v", "cocitation", "cocitation-n2v", "scopus")
MATRIX_SCHEMES = {"citation": "citation", "cocitation": "cocitation"}
N2V_SCHEMES = {"citation-n2v": "citation", "cocitation-n2v": "cocitation"}
STAGE_TARGETS = ("ingest", "graph", "matrices", "walks", "embed", "n2v", "cluster", "features",
                 "classify", "topics", "agreement", "exports", "report")


class ConfigError(ValueError):
    """Invalid pipeline configuration (CLI exit code 2)."""


class StageError(RuntimeError):
    """A stage raised; completed stages keep their stamps so a rerun resumes."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ClassifierConfig:
    n_features: int = clf.DEFAULT_N_FEATURES
    alpha: float = 1.0
    folds: int = clf.DEFAULT_FOLDS
    weight_normalized: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_features < 2:
            raise ValueError("n_features must be >= 2")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")


@dataclass(frozen=True)
class TopicConfig:
    lda: LdaConfig = LdaConfig()
    grid: tuple = DEFAULT_T_GRID
    select: bool = True
    sample_fraction: float = 0.05
    measure: str = "umass"
    top_n: int = 10
    fit_on: str = "full"           # final model on the full corpus or on the scan sample

    def __post_init__(self):
        if self.select and not self.grid:
            raise ValueError("empty topic grid")
        if not 0 < self.sample_fraction <= 1:
            raise ValueError("sample_fraction must lie in (0, 1]")
        if self.fit_on not in ("full", "sample"):
            raise ValueError("fit_on must be 'full' or 'sample'")
        if self.measure not in COHERENCE_MEASURES:
            raise ValueError(f"measure must be one of {sorted(COHERENCE_MEASURES)}")


@dataclass(frozen=True)
class ExportConfig:
    sankey: tuple = (("scopus", "p2v"),)
    similarity: tuple = (("scopus", "p2v"),)
    coordinates: str | None = None   # periodical-name \t x \t y; PCA of the P2V embedding otherwise
    grid_size: int = 100
    idw_power: float = IDW_POWER
    ec_alpha: float = 0.9
    flow_fraction: float = FLOW_FRACTION
    flow_cap: float = FLOW_CAP
    figures: bool = True

    def __post_init__(self):
        if not self.idw_power > 0:
            raise ValueError("idw_power must be positive")
        if not 0 < self.ec_alpha < 1:
            raise ValueError("ec_alpha must lie in (0, 1)")
        if self.grid_size < 2:
            raise ValueError("grid_size must be >= 2")


_NESTED = {
    "trails": WalkConfig, "node2vec": WalkConfig, "sgns": SgnsConfig, "kmeans": KmeansConfig,
    "classifier": ClassifierConfig, "topics": TopicConfig, "exports": ExportConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    papers: str
    citations: str
    abstracts: str
    scopus: str | None = None
    out: str = "out"
    seed: int | None = None
    schemes: tuple = SCHEMES
    min_year: int = DEFAULT_MIN_YEAR
    trails: WalkConfig = TRAIL_DEFAULTS
    node2vec: WalkConfig = NODE2VEC_DEFAULTS
    sgns: SgnsConfig = SgnsConfig()
    kmeans: KmeansConfig = KmeansConfig()
    monolabel_neighbors: int = MONOLABEL_NEIGHBORS
    monolabel_exclude: tuple = (MULTIDISCIPLINARY_ASJC,)
    classifier: ClassifierConfig = ClassifierConfig()
    topics: TopicConfig = TopicConfig()
    exports: ExportConfig = ExportConfig()

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "PipelineConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            for key, typ in _NESTED.items():
                if key in d and isinstance(d[key], dict):
                    d[key] = _build(typ, d[key], key)
            for key in ("schemes", "monolabel_exclude"):
                if key in d:
                    d[key] = tuple(d[key])
            for key in ("papers", "citations", "abstracts", "scopus", "out"):
                if d.get(key) is not None and base_dir is not None:
                    d[key] = str(Path(base_dir) / d[key])
            if base_dir is not None and d.get("exports") and d["exports"].coordinates:
                d["exports"] = replace(d["exports"], coordinates=str(Path(base_dir) / d["exports"].coordinates))
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        text = path.read_text(encoding="utf-8")
        try:
            if path.suffix in (".yml", ".yaml"):
                import yaml
                d = yaml.safe_load(text)
            else:
                d = json.loads(text)
        except Exception as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(d, base_dir=path.parent)

    def validate(self) -> None:
        if not self.schemes:
            raise ConfigError("scheme list is empty")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad:
            raise ConfigError(f"unknown schemes {bad}; choose from {list(SCHEMES)}")
        if len(set(self.schemes)) != len(self.schemes):
            raise ConfigError("scheme listed twice")
        for key in ("papers", "citations", "abstracts"):
            if not Path(getattr(self, key)).is_file():
                raise ConfigError(f"{key} file {getattr(self, key)} does not exist")
        if "scopus" in self.schemes:
            if not self.scopus:
                raise ConfigError("the scopus scheme needs a scopus input file")
            if not Path(self.scopus).is_file():
                raise ConfigError(f"scopus file {self.scopus} does not exist")
        if self.exports.coordinates and not Path(self.exports.coordinates).is_file():
            raise ConfigError(f"coordinates file {self.exports.coordinates} does not exist")
        if self.monolabel_neighbors < 1:
            raise ConfigError("monolabel_neighbors must be >= 1")

    def resolved(self) -> "PipelineConfig":
        """Apply the global seed: every stage gets its own seed derived from it."""
        if self.seed is None:
            return self
        s = self.seed
        return replace(
            self,
            trails=replace(self.trails, seed=derive_seed(s, "trails")),
            node2vec=replace(self.node2vec, seed=derive_seed(s, "node2vec")),
            sgns=replace(self.sgns, seed=derive_seed(s, "sgns")),
            kmeans=replace(self.kmeans, seed=derive_seed(s, "kmeans")),
            classifier=replace(self.classifier, seed=derive_seed(s, "classifier")),
            topics=replace(self.topics, lda=replace(self.topics.lda, seed=derive_seed(s, "lda"))),
        )

    def as_dict(self) -> dict:
        return _jsonable(asdict(self))


def _build(typ, d: dict, where: str):
    known = {f.name for f in dataclasses.fields(typ)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    d = dict(d)
    if typ is TopicConfig:
        if isinstance(d.get("lda"), dict):
            d["lda"] = _build(LdaConfig, d["lda"], f"{where}.lda")
        if "grid" in d:
            d["grid"] = tuple(int(t) for t in d["grid"])
    if typ is ExportConfig:
        for key in ("sankey", "similarity"):
            if key in d:
                d[key] = tuple(tuple(p) for p in d[key])
    return typ(**d)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def derive_seed(seed: int, name: str) -> int:
    """Stable 32-bit stage seed from the global seed and a stage name."""
    h = hashlib.sha256(f"{int(seed)}/{name}".encode()).digest()
    return int.from_bytes(h[:4], "little")


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def design_decisions(cfg: PipelineConfig) -> dict:
    """Every setting the method description leaves open, as used in this run."""
    return {
        "decade_filter": {"min_year": cfg.min_year, "same_decade": "floor(year/10)*10 equal"},
        "trail_direction": "citing -> cited, uniform over references, stop at dead ends",
        "walk_rng": "splitmix64 counter streams keyed on (seed, source, walk, step)",
        "sgns": {"noise": f"unigram^{cfg.sgns.noise_power}", "lr_decay": "linear",
                 "subsample": cfg.sgns.subsample, "negatives_skip": "context and center tokens",
                 "vectors": "input vectors kept, context vectors discarded"},
        "kmeans": {"init": "k-means++", "restarts": cfg.kmeans.restarts, "empty_cluster": "farthest-point reseed",
                   "normalize": cfg.kmeans.normalize, "label_order": "descending cluster size"},
        "matrix_schemes_input": "row-normalized periodical matrix rows",
        "n2v_edge_weights": "raw citation / co-citation counts",
        "scopus_monolabel": {"neighbors": cfg.monolabel_neighbors, "excluded_codes": list(cfg.monolabel_exclude),
                             "space": "P2V cosine", "voters": "neighbors with subject codes", "ties": "smallest code"},
        "tokenizer": "lowercase, split on runs of non-alphanumeric characters",
        "hash": "FNV-1a 64-bit over UTF-8 token bytes, mod m, no sign trick",
        "cnb": {"alpha": cfg.classifier.alpha, "m_effective": "hashed indices observed in training",
                "unseen_features": "ignored", "weight_normalized": cfg.classifier.weight_normalized,
                "absent_class_prior": "add-one smoothing"},
        "folds": {"n": cfg.classifier.folds, "stratified": True, "std": "population (ddof=0)"},
        "one_vs_rest": "out-of-fold scores pooled across folds; score = positive minus negative CNB score",
        "rank_ties": "average rank",
        "entropy_log": "natural",
        "lda": {"alpha": cfg.topics.lda.doc_prior if not cfg.topics.select else "50/T",
                "beta": cfg.topics.lda.beta, "iterations": cfg.topics.lda.iterations,
                "burn_in": cfg.topics.lda.burn_in, "coherence": cfg.topics.measure, "top_n": cfg.topics.top_n,
                "scan_sample_fraction": cfg.topics.sample_fraction, "final_fit": cfg.topics.fit_on},
        "sankey_filter": f"drop flows with count < min({cfg.exports.flow_fraction} * N_source, {cfg.exports.flow_cap})",
        "similarity": {"element_centric_alpha": cfg.exports.ec_alpha, "idw_power": cfg.exports.idw_power,
                       "coordinates": cfg.exports.coordinates or "PCA of P2V embedding"},
    }


# ---------------------------------------------------------------------------
# small file helpers


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(obj), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _write_pairs(path, arr) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in np.asarray(arr).reshape(-1, 2):
            fh.write(f"{a}\t{b}\n")


def _read_pairs(path) -> np.ndarray:
    rows = [line.split("\t") for line in Path(path).read_text(encoding="utf-8").splitlines() if line]
    return np.array(rows, dtype=np.int64).reshape(-1, 2)


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# stage context: loading other stages' outputs


@dataclass
class Context:
    cfg: PipelineConfig
    root: Path

    def dir(self, stage: str) -> Path:
        return self.root.joinpath(*stage.split(":"))

    def ingest(self):
        d = self.dir("ingest")
        registry = PeriodicalRegistry.load(d / "registry.tsv")
        ids, venues, years = [], [], []
        for line in (d / "papers.tsv").read_text(encoding="utf-8").splitlines():
            pid, v, y = line.split("\t")
            ids.append(pid)
            venues.append(int(v))
            years.append(int(y))
        papers = PaperTable(ids, np.array(venues, dtype=np.int64), np.array(years, dtype=np.int64))
        return registry, papers

    def graph(self):
        _, papers = self.ingest()
        edges = _read_pairs(self.dir("graph") / "edges.tsv")
        return filter_decade(papers, edges, self.cfg.min_year)

    def matrix(self, kind: str) -> PeriodicalMatrix:
        return PeriodicalMatrix.load(self.dir("matrices") / f"{kind}.tsv")

    def embedding(self, stage: str) -> EmbeddingMatrix:
        return EmbeddingMatrix.load(self.dir(stage) / "embedding.txt")

    def labeling(self, scheme: str) -> SchemeLabeling:
        return SchemeLabeling.load(self.dir(f"cluster:{scheme}") / "labels.tsv")

    def documents(self):
        """(paper_ids, periodicals, hashed csr matrix) of the feature stage."""
        d = self.dir("features")
        ids, per, rows, cols, vals = [], [], [], [], []
        for i, line in enumerate((d / "docs.tsv").read_text(encoding="utf-8").splitlines()):
            pid, p, feats = line.split("\t")
            ids.append(pid)
            per.append(int(p))
            for item in filter(None, feats.split(",")):
                j, c = item.split(":")
                rows.append(i)
                cols.append(int(j))
                vals.append(float(c))
        m = self.cfg.classifier.n_features
        X = sp.csr_matrix((vals, (rows, cols)), shape=(len(ids), m), dtype=np.float64)
        return ids, np.array(per, dtype=np.int64), X


# ---------------------------------------------------------------------------
# stages


def _stage_ingest(ctx: Context, out: Path) -> None:
    cfg = ctx.cfg
    registry, papers, summary = ingest_papers(cfg.papers)
    edges, unknown = ingest_citations(cfg.citations, papers)
    matched = ingest_scopus(cfg.scopus, registry) if cfg.scopus else 0
    registry.save(out / "registry.tsv")
    with open(out / "papers.tsv", "w", encoding="utf-8") as fh:
        for pid, v, y in zip(papers.paper_ids, papers.periodical, papers.year):
            fh.write(f"{pid}\t{v}\t{y}\n")
    _write_pairs(out / "citations.tsv", edges)
    _write_json(out / "summary.json", {**summary.as_dict(), "citations": int(len(edges)),
                                       "citations_unknown": unknown, "scopus_matched": matched})


def _stage_graph(ctx: Context, out: Path) -> None:
    _, papers = ctx.ingest()
    edges = _read_pairs(ctx.dir("ingest") / "citations.tsv")
    g = filter_decade(papers, edges, ctx.cfg.min_year)
    _write_pairs(out / "edges.tsv", g.edges())
    _write_json(out / "stats.json", {**g.stats.as_dict(), "active_papers": int(g.active.sum())})


def _stage_matrices(ctx: Context, out: Path) -> None:
    g = ctx.graph()
    info = {}
    for kind, build in (("citation", build_citation_matrix), ("cocitation", build_cocitation_matrix)):
        pm = build(g)
        pm.save(out / f"{kind}.tsv")
        norm = row_normalize(pm)
        norm.save(out / f"{kind}_normalized.tsv")
        info[kind] = {"dimension": pm.dimension, "nnz": int(pm.matrix.nnz), "zero_rows": len(norm.zero_rows)}
    _write_json(out / "dimensions.json", info)


def _stage_walks(ctx: Context, out: Path) -> None:
    corpus = generate_citation_trails(ctx.graph(), ctx.cfg.trails)
    corpus.save(out / "trails.txt.gz")
    _write_json(out / "stats.json", {"trails": len(corpus), "tokens": int(len(corpus.tokens))})


def _save_embedding(emb: EmbeddingMatrix, out: Path) -> None:
    emb.save(out / "embedding.txt")
    _write_json(out / "loss.json", {"loss_trace": [float(x) for x in emb.loss_trace]})


def _stage_embed(ctx: Context, out: Path) -> None:
    corpus = TrailCorpus.load(ctx.dir("walks") / "trails.txt.gz")
    _save_embedding(train_sgns(corpus, ctx.cfg.sgns), out)


def _n2v_stage(base: str):
    def run(ctx: Context, out: Path) -> None:
        corpus = node2vec_walks(ctx.matrix(base), ctx.cfg.node2vec)
        corpus.save(out / "walks.txt.gz")
        _save_embedding(train_sgns(corpus, ctx.cfg.sgns), out)
    return run


def _cluster_stage(scheme: str):
    def run(ctx: Context, out: Path) -> None:
        cfg = ctx.cfg
        if scheme == "scopus":
            registry, _ = ctx.ingest()
            lab, unlabelable = scopus_scheme(registry, ctx.embedding("embed"), cfg.monolabel_neighbors,
                                             cfg.monolabel_exclude, name=scheme)
            if len(lab) == 0:
                raise ValueError("no periodical could be mono-labeled from subject codes")
        elif scheme == "p2v":
            emb = ctx.embedding("embed")
            lab, _ = kmeans(emb.vectors, emb.tokens, cfg.kmeans, name=scheme)
        elif scheme in N2V_SCHEMES:
            emb = ctx.embedding(f"n2v:{N2V_SCHEMES[scheme]}")
            lab, _ = kmeans(emb.vectors, emb.tokens, cfg.kmeans, name=scheme)
        else:
            pm = ctx.matrix(f"{MATRIX_SCHEMES[scheme]}_normalized")
            lab, _ = kmeans(pm.matrix, pm.periodicals, cfg.kmeans, name=scheme)
        lab.save(out / "labels.tsv")
        with open(out / "sizes.tsv", "w", encoding="utf-8") as fh:
            fh.write("label\tname\tcount\tfraction\n")
            for k, (c, f) in scheme_sizes(lab).items():
                fh.write(f"{k}\t{lab.label_names[k]}\t{c}\t{_fmt(f)}\n")
    return run


def _stage_features(ctx: Context, out: Path) -> None:
    _, papers = ctx.ingest()
    texts = ingest_abstracts(ctx.cfg.abstracts)
    m = ctx.cfg.classifier.n_features
    n_skipped = 0
    with open(out / "docs.tsv", "w", encoding="utf-8") as fh:
        for pid, v, y in zip(papers.paper_ids, papers.periodical, papers.year):
            text = texts.get(pid)
            if text is None or y < ctx.cfg.min_year:
                n_skipped += 1
                continue
            hv = clf.hash_vectorize(text, m)
            feats = ",".join(f"{i}:{c}" for i, c in zip(hv.indices.tolist(), hv.counts.tolist()))
            fh.write(f"{pid}\t{v}\t{feats}\n")
    _write_json(out / "stats.json", {"abstracts": len(texts), "papers_without_document": n_skipped})


def _write_curve(path, header, t, a, b) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header)
        for row in zip(t, a, b):
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _classify_stage(scheme: str):
    def run(ctx: Context, out: Path) -> None:
        cc = ctx.cfg.classifier
        ids, per, X = ctx.documents()
        lab = ctx.labeling(scheme)
        y = clf.document_labels(per, lab)
        keep = np.flatnonzero(y >= 0)
        if len(keep) < cc.folds:
            raise ValueError(f"only {len(keep)} documents covered by scheme {scheme!r}")
        X, y = X[keep], y[keep]
        report = clf.crossval_multiclass(X, y, cc.folds, cc.alpha, cc.seed, scheme, cc.weight_normalized)
        with open(out / "scores.tsv", "w", encoding="utf-8") as fh:
            for i, t, s in zip(keep, y, report.oof_scores):
                fh.write(f"{ids[i]}\t{t}\t{','.join(_fmt(v) for v in s)}\n")
        ovr = clf.one_vs_rest(X, y, cc.folds, cc.alpha, cc.seed)
        curves_dir = out / "curves"
        curves_dir.mkdir()
        per_class, curves = {}, []
        for k, c in enumerate(ovr.classes):
            truth, s = ovr.class_scores(k)
            if truth.all() or not truth.any():
                per_class[int(c)] = None
                continue
            bc = pr_roc_curves(truth, s)
            curves.append(bc)
            per_class[int(c)] = {"ap": bc.ap, "auc": bc.auc}
            _write_curve(curves_dir / f"pr_{c}.tsv", "threshold\tprecision\trecall\n",
                         bc.thresholds, bc.precision, bc.recall)
            _write_curve(curves_dir / f"roc_{c}.tsv", "threshold\tfpr\ttpr\n", bc.thresholds, bc.fpr, bc.tpr)
        macro = {}
        if curves:
            r, p = macro_pr_curve(curves)
            f, t = macro_roc_curve(curves)
            _write_curve(out / "macro_curves.tsv", "grid\tprecision_at_recall\ttpr_at_fpr\n", r, p, t)
            macro = {"macro_ap": macro_average([c.ap for c in curves]),
                     "macro_auc": macro_average([c.auc for c in curves])}
        _write_json(out / "report.json", {**report.as_dict(), **macro, "per_class": per_class,
                                          "documents_uncovered": int(len(ids) - len(keep)),
                                          "ovr_skipped": ovr.skipped})
    return run


def _stage_topics(ctx: Context, out: Path) -> None:
    tc = ctx.cfg.topics
    _, papers = ctx.ingest()
    texts = ingest_abstracts(ctx.cfg.abstracts)
    doc_ids = [pid for pid, y in zip(papers.paper_ids, papers.year) if pid in texts and y >= ctx.cfg.min_year]
    corpus = BowCorpus.from_texts([texts[p] for p in doc_ids])
    config = tc.lda
    scan_info = None
    if tc.select:
        scan = coherence_scan(corpus, tc.grid, config, tc.sample_fraction, tc.top_n, tc.measure)
        if scan.best is None:
            raise ValueError(f"every topic count failed: {scan.failures}")
        config = replace(config, n_topics=scan.best)
        scan_info = {"measure": scan.measure, "sample_size": scan.sample_size, "selected": scan.best,
                     "scores": {str(k): v for k, v in scan.scores.items()},
                     "failures": {str(k): v for k, v in scan.failures.items()}}
    fit_corpus = corpus
    if tc.fit_on == "sample":
        rng = np.random.default_rng(config.seed)
        size = max(1, int(round(tc.sample_fraction * corpus.n_docs)))
        fit_corpus = corpus.subset(np.sort(rng.choice(corpus.n_docs, size=size, replace=False)))
    model = fit_lda(fit_corpus, config)
    kept = [doc_ids[i] for i in corpus.doc_index[fit_corpus.doc_index]] if tc.fit_on == "sample" else \
        [doc_ids[i] for i in corpus.doc_index]
    dom = dominant_topic(model.theta)
    with open(out / "theta.tsv", "w", encoding="utf-8") as fh:
        for pid, row in zip(kept, model.theta):
            fh.write(f"{pid}\t{','.join(_fmt(v) for v in row)}\n")
    _write_pairs(out / "dominant.tsv", np.column_stack([np.array(kept, dtype=object), dom]))
    with open(out / "topics.tsv", "w", encoding="utf-8") as fh:
        for t, words in enumerate(model.top_words(10)):
            fh.write(f"{t}\t" + " ".join(f"{model.vocab[w]}:{model.phi[t, w]:.6f}" for w in words) + "\n")
    _write_json(out / "model.json", {"config": config.as_dict(), "documents": len(kept),
                                     "log_likelihood_final": model.log_likelihood[-1],
                                     "log_likelihood_init": model.log_likelihood[0], "scan": scan_info})


def _stage_agreement(ctx: Context, out: Path) -> None:
    _, papers = ctx.ingest()
    dom = {}
    for line in (ctx.dir("topics") / "dominant.tsv").read_text(encoding="utf-8").splitlines():
        pid, t = line.split("\t")
        dom[pid] = int(t)
    per = np.array([papers.periodical[papers.index[p]] for p in dom], dtype=np.int64)
    topics = np.array(list(dom.values()), dtype=np.int64)
    report = {}
    for scheme in ctx.cfg.schemes:
        y = ctx.labeling(scheme).lookup(per)
        ok = y >= 0
        if ok.sum() < 2:
            report[scheme] = {"documents": int(ok.sum()), "nmi": None, "ari": None, "fmi": None}
            continue
        report[scheme] = {"documents": int(ok.sum()), "nmi": nmi(topics[ok], y[ok]),
                          "ari": ari(topics[ok], y[ok]), "fmi": fmi(topics[ok], y[ok])}
    _write_json(out / "report.json", report)
    with open(out / "agreement.tsv", "w", encoding="utf-8") as fh:
        fh.write("scheme\tdocuments\tnmi\tari\tfmi\n")
        for s, r in report.items():
            vals = ["" if r[k] is None else _fmt(r[k]) for k in ("nmi", "ari", "fmi")]
            fh.write(f"{s}\t{r['documents']}\t" + "\t".join(vals) + "\n")


def _export_pairs(cfg: PipelineConfig, pairs) -> list[tuple[str, str]]:
    keep = []
    for a, b in pairs:
        if a in cfg.schemes and b in cfg.schemes:
            keep.append((a, b))
        else:
            log.info("export %s/%s skipped: scheme not configured", a, b)
    return keep


def _stage_exports(ctx: Context, out: Path) -> None:
    from . import plotting

    ec = ctx.cfg.exports
    registry, _ = ctx.ingest()
    summary = {"sankey": {}, "similarity": {}}
    for a, b in _export_pairs(ctx.cfg, ec.sankey):
        table = export_sankey(ctx.labeling(a), ctx.labeling(b), ec.flow_fraction, ec.flow_cap)
        write_sankey(table, out)
        summary["sankey"][f"{a}__{b}"] = {"flows": len(table.rows), "kept": len(table.filtered)}
        if ec.figures:
            plotting.flow_figure(table.crosstab(), a, b, out / f"flows_{a}__{b}.png")
    sim_pairs = _export_pairs(ctx.cfg, ec.similarity)
    if sim_pairs:
        if ec.coordinates:
            coords, source = load_coordinates(ec.coordinates, registry), ec.coordinates
        else:
            coords, source = pca_coordinates(ctx.embedding("embed")), "pca:p2v"
        for a, b in sim_pairs:
            sm = export_similarity_map(ctx.labeling(a), ctx.labeling(b), coords, power=ec.idw_power,
                                       alpha=ec.ec_alpha, grid_size=ec.grid_size)
            sub = out / f"similarity_{a}__{b}"
            write_similarity_map(sm, sub, registry.name)
            summary["similarity"][f"{a}__{b}"] = {"journals": int(len(sm.periodicals)),
                                                  "missing_coordinates": len(sm.missing),
                                                  "mean_similarity": float(np.mean(sm.similarity)),
                                                  "coordinates": source}
            if ec.figures:
                plotting.similarity_map_figure(sm, sub / "similarity_map.png")
    _write_json(out / "summary.json", summary)


_REPORT_METRICS = ("macro_precision", "macro_recall", "macro_f1", "weighted_precision", "weighted_recall",
                   "weighted_f1", "rank_avg_precision", "ranking_loss")


def _stage_report(ctx: Context, out: Path) -> None:
    from . import plotting

    agreement = _read_json(ctx.dir("agreement") / "report.json")
    rows, curves, sizes = [], {}, {}
    for scheme in ctx.cfg.schemes:
        rep = _read_json(ctx.dir(f"classify:{scheme}") / "report.json")
        lab = ctx.labeling(scheme)
        sizes[scheme] = scheme_sizes(lab)
        row = {"scheme": scheme, "labels": lab.n_labels, "documents": rep["n_samples"]}
        for m in _REPORT_METRICS:
            row[f"{m}_mean"] = rep["aggregate"][m]["mean"]
            row[f"{m}_std"] = rep["aggregate"][m]["std"]
        row["macro_ap"] = rep.get("macro_ap")
        row["macro_auc"] = rep.get("macro_auc")
        for m in ("nmi", "ari", "fmi"):
            row[m] = agreement[scheme][m]
        rows.append(row)
        mc = ctx.dir(f"classify:{scheme}") / "macro_curves.tsv"
        if mc.exists():
            arr = np.loadtxt(mc, delimiter="\t", skiprows=1, ndmin=2)
            curves[scheme] = {"recall": arr[:, 0], "precision": arr[:, 1], "fpr": arr[:, 0], "tpr": arr[:, 2],
                              "ap": row["macro_ap"], "auc": row["macro_auc"]}
    cols = list(rows[0])
    with open(out / "summary.tsv", "w", encoding="utf-8") as fh:
        fh.write("\t".join(cols) + "\n")
        for r in rows:
            fh.write("\t".join("" if r[c] is None else (_fmt(r[c]) if isinstance(r[c], float) else str(r[c]))
                               for c in cols) + "\n")
    _write_json(out / "summary.json", rows)
    if ctx.cfg.exports.figures:
        if curves:
            plotting.pr_roc_figure(curves, out / "pr_roc.png")
        plotting.scheme_sizes_figure(sizes, out / "scheme_sizes.png")


# ---------------------------------------------------------------------------
# stage graph


@dataclass
class Stage:
    name: str
    deps: tuple[str, ...]
    params: dict
    run: Callable[[Context, Path], None]
    inputs: tuple[str, ...] = ()


def plan_stages(cfg: PipelineConfig) -> list[Stage]:
    """All stages the configured schemes need, in dependency order."""
    schemes = cfg.schemes
    need_walks = bool({"p2v", "scopus"} & set(schemes)) or bool(_export_pairs(cfg, cfg.exports.similarity)) \
        and not cfg.exports.coordinates
    need_matrices = bool((set(MATRIX_SCHEMES) | set(N2V_SCHEMES)) & set(schemes))
    inputs = tuple(x for x in (cfg.papers, cfg.citations, cfg.scopus) if x)
    stages = [
        Stage("ingest", (), {"scopus": bool(cfg.scopus)}, _stage_ingest, inputs),
        Stage("graph", ("ingest",), {"min_year": cfg.min_year}, _stage_graph),
    ]
    if need_matrices:
        stages.append(Stage("matrices", ("graph",), {}, _stage_matrices))
    if need_walks:
        stages.append(Stage("walks", ("graph",), {"trails": cfg.trails.as_dict()}, _stage_walks))
        stages.append(Stage("embed", ("walks",), {"sgns": cfg.sgns.as_dict()}, _stage_embed))
    for scheme, base in N2V_SCHEMES.items():
        if scheme in schemes:
            stages.append(Stage(f"n2v:{base}", ("matrices",),
                                {"node2vec": cfg.node2vec.as_dict(), "sgns": cfg.sgns.as_dict()}, _n2v_stage(base)))
    for scheme in schemes:
        if scheme == "scopus":
            deps, params = ("ingest", "embed"), {"neighbors": cfg.monolabel_neighbors,
                                                 "exclude": list(cfg.monolabel_exclude)}
        elif scheme == "p2v":
            deps, params = ("embed",), {"kmeans": cfg.kmeans.as_dict()}
        elif scheme in N2V_SCHEMES:
            deps, params = (f"n2v:{N2V_SCHEMES[scheme]}",), {"kmeans": cfg.kmeans.as_dict()}
        else:
            deps, params = ("matrices",), {"kmeans": cfg.kmeans.as_dict()}
        stages.append(Stage(f"cluster:{scheme}", deps, params, _cluster_stage(scheme)))
    stages.append(Stage("features", ("ingest",), {"n_features": cfg.classifier.n_features,
                                                  "min_year": cfg.min_year}, _stage_features, (cfg.abstracts,)))
    for scheme in schemes:
        stages.append(Stage(f"classify:{scheme}", ("features", f"cluster:{scheme}"),
                            {"classifier": asdict(cfg.classifier)}, _classify_stage(scheme)))
    stages.append(Stage("topics", ("ingest",), {"topics": _jsonable(asdict(cfg.topics)),
                                                "lda_alpha": cfg.topics.lda.doc_prior,
                                                "min_year": cfg.min_year}, _stage_topics, (cfg.abstracts,)))
    stages.append(Stage("agreement", ("ingest", "topics") + tuple(f"cluster:{s}" for s in schemes),
                        {"schemes": list(schemes)}, _stage_agreement))
    export_deps = {"ingest"} | {f"cluster:{s}" for p in _export_pairs(cfg, cfg.exports.sankey + cfg.exports.similarity)
                                for s in p}
    if _export_pairs(cfg, cfg.exports.similarity) and not cfg.exports.coordinates:
        export_deps.add("embed")
    stages.append(Stage("exports", tuple(sorted(export_deps)), {"exports": _jsonable(asdict(cfg.exports))},
                        _stage_exports, (cfg.exports.coordinates,) if cfg.exports.coordinates else ()))
    stages.append(Stage("report", ("agreement", "exports") + tuple(f"classify:{s}" for s in schemes),
                        {"figures": cfg.exports.figures}, _stage_report))
    return stages


def _select(stages: list[Stage], target: str | None) -> list[Stage]:
    if target is None:
        return stages
    if target not in STAGE_TARGETS:
        raise ConfigError(f"unknown stage {target!r}; choose from {list(STAGE_TARGETS)}")
    by_name = {s.name: s for s in stages}
    wanted = {s.name for s in stages if s.name.split(":")[0] == target}
    if not wanted:
        raise ConfigError(f"stage {target!r} is not needed by the configured schemes")
    todo = list(wanted)
    while todo:
        for d in by_name[todo.pop()].deps:
            if d not in wanted:
                wanted.add(d)
                todo.append(d)
    return [s for s in stages if s.name in wanted]


def _prune(root: Path, stages: list[Stage]) -> list[str]:
    """Remove directories of stages no longer in the plan (e.g. a dropped scheme)."""
    planned = {s.name for s in stages}
    removed = []
    for top in STAGE_TARGETS:
        d = root / top
        if not d.is_dir():
            continue
        if top in ("n2v", "cluster", "classify"):
            for child in sorted(d.iterdir()):
                if f"{top}:{child.name}" not in planned:
                    shutil.rmtree(child)
                    removed.append(f"{top}:{child.name}")
            if not any(d.iterdir()):
                d.rmdir()
        elif top not in planned:
            shutil.rmtree(d)
            removed.append(top)
    return removed


@dataclass
class RunResult:
    out: Path
    ran: list[str] = field(default_factory=list)
    cached: list[str] = field(default_factory=list)
    pruned: list[str] = field(default_factory=list)


def run_pipeline(config: PipelineConfig, out=None, stage: str | None = None) -> RunResult:
    """Execute (or resume) the pipeline; returns which stages ran and which were cached."""
    config.validate()
    cfg = config.resolved()
    root = Path(out if out is not None else cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    all_stages = plan_stages(cfg)
    stages = _select(all_stages, stage)
    ctx = Context(cfg, root)
    result = RunResult(root)
    if stage is None:
        result.pruned = _prune(root, all_stages)

    digests: dict[str, str] = {}
    keys: dict[str, str] = {}
    for st in all_stages:
        for p in st.inputs:
            if p not in digests:
                digests[p] = file_digest(p)
        payload = {"stage": st.name, "params": _jsonable(st.params),
                   "deps": {d: keys[d] for d in st.deps}, "inputs": [digests[p] for p in st.inputs]}
        keys[st.name] = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    for st in stages:
        d = ctx.dir(st.name)
        stamp = d / ".stamp"
        if stamp.exists() and stamp.read_text() == keys[st.name]:
            result.cached.append(st.name)
            log.info("stage %s: cached", st.name)
            continue
        if d.exists():
            shutil.rmtree(d)
        d.mkdir(parents=True)
        log.info("stage %s: running", st.name)
        try:
            st.run(ctx, d)
        except Exception as exc:
            raise StageError(st.name, exc) from exc
        stamp.write_text(keys[st.name])
        result.ran.append(st.name)

    manifest = {
        "config": {k: v for k, v in cfg.as_dict().items() if k != "out"},
        "inputs": {name: digests[p] for name, p in (("papers", cfg.papers), ("citations", cfg.citations),
                                                     ("abstracts", cfg.abstracts), ("scopus", cfg.scopus),
                                                     ("coordinates", cfg.exports.coordinates))
                   if p and p in digests},
        "seeds": {"global": cfg.seed, "trails": cfg.trails.seed, "node2vec": cfg.node2vec.seed,
                  "sgns": cfg.sgns.seed, "kmeans": cfg.kmeans.seed, "classifier": cfg.classifier.seed,
                  "lda": cfg.topics.lda.seed},
        "design_decisions": design_decisions(cfg),
        "stages": {st.name: {"key": keys[st.name], "deps": list(st.deps), "params": _jsonable(st.params)}
                   for st in all_stages},
    }
    _write_json(root / "manifest.json", manifest)
    return result
