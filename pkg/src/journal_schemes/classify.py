"""Abstract classification: hashed bag-of-words features and Complement Naive Bayes.

Feature index of a token is FNV-1a-64 of its UTF-8 bytes modulo m. Tokens
are lowercase runs of Unicode letters and digits. Counts are raw term
frequencies; no sign trick, no idf.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .metrics import prf_scores, ranking_average_precision, ranking_loss

log = logging.getLogger(__name__)

DEFAULT_N_FEATURES = 2 ** 20
DEFAULT_FOLDS = 10

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1 << 18)
def _token_hash(token: str) -> int:
    return fnv1a_64(token.encode("utf-8"))


def feature_index(token: str, m: int = DEFAULT_N_FEATURES) -> int:
    return _token_hash(token) % m


@dataclass
class HashedVector:
    indices: np.ndarray
    counts: np.ndarray
    m: int

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.indices.tolist(), self.counts.tolist()))

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.m, dtype=np.int64)
        out[self.indices] = self.counts
        return out


def hash_vectorize(text: str, m: int = DEFAULT_N_FEATURES) -> HashedVector:
    if m < 2:
        raise ValueError("m must be >= 2")
    idx = np.fromiter((_token_hash(t) % m for t in tokenize(text)), dtype=np.int64)
    uniq, counts = np.unique(idx, return_counts=True)
    return HashedVector(uniq, counts.astype(np.int64), m)


def hash_vectorize_many(texts, m: int = DEFAULT_N_FEATURES) -> sp.csr_matrix:
    """Stack hashed count vectors of many documents into an (n, m) CSR matrix."""
    indptr = [0]
    indices = []
    data = []
    for text in texts:
        v = hash_vectorize(text, m)
        indices.append(v.indices)
        data.append(v.counts)
        indptr.append(indptr[-1] + len(v.indices))
    indices = np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64)
    data = np.concatenate(data) if data else np.zeros(0, dtype=np.int64)
    return sp.csr_matrix((data.astype(np.float64), indices, np.asarray(indptr)), shape=(len(indptr) - 1, m))


# ---------------------------------------------------------------------------
# Complement Naive Bayes


@dataclass
class CnbModel:
    classes: np.ndarray
    log_prior: np.ndarray
    features: np.ndarray          # observed feature indices, sorted
    log_complement: np.ndarray    # (n_classes, n_features) log P(x_i | not y)
    alpha: float
    m: int
    weight_normalized: bool = False
    degenerate: bool = False
    absent_classes: list = field(default_factory=list)

    @property
    def n_classes(self) -> int:
        return len(self.classes)


def cnb_fit(X, y, alpha: float = 1.0, classes=None, binary: bool = False,
            weight_normalized: bool = False) -> CnbModel:
    """Fit complement-class likelihoods from hashed count vectors.

    P(i | not y) = (N_{not y, i} + alpha) / (N_{not y} + alpha * m_eff), where
    m_eff counts the feature indices seen anywhere in training. Priors are
    class frequencies; if a class in ``classes`` has no training samples all
    priors get add-one smoothing instead and the class is reported in
    ``absent_classes``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    X = sp.csr_matrix(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y) if classes is None else np.asarray(classes)
    present = np.unique(y)
    if len(present) < 2 and not binary:
        raise ValueError("multi-class fit needs at least two classes in the training data")
    col = np.asarray(X.getnnz(axis=0)).ravel()
    features = np.flatnonzero(col > 0)
    Xf = X[:, features]
    cls_idx = np.searchsorted(classes, y)
    if (classes[np.clip(cls_idx, 0, len(classes) - 1)] != y).any():
        raise ValueError("training labels outside the declared classes")
    onehot = sp.csr_matrix((np.ones(len(y)), (cls_idx, np.arange(len(y)))), shape=(len(classes), len(y)))
    per_class = np.asarray((onehot @ Xf).todense())
    comp = per_class.sum(axis=0, keepdims=True) - per_class
    m_eff = max(len(features), 1)
    log_comp = np.log(comp + alpha) - np.log(comp.sum(axis=1, keepdims=True) + alpha * m_eff)
    counts = np.bincount(cls_idx, minlength=len(classes)).astype(np.float64)
    absent = classes[counts == 0].tolist()
    if absent:
        prior = (counts + 1.0) / (counts.sum() + len(classes))
    else:
        prior = counts / counts.sum()
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    degenerate = len(present) < 2
    if degenerate:
        log.info("CNB fit with a single class present; complement statistics are empty")
    return CnbModel(classes, log_prior, features, log_comp, alpha, X.shape[1],
                    weight_normalized, degenerate, absent)


def cnb_scores(model: CnbModel, X) -> np.ndarray:
    """Per-class scores log P(y) - sum_i x_i log P(i | not y), shape (n, n_classes).

    Features never seen in training are outside the model's support and are
    ignored. With ``weight_normalized`` the log-likelihood rows are first
    divided by their L1 norm.
    """
    X = sp.csr_matrix(X, dtype=np.float64)
    if X.shape[1] != model.m:
        raise ValueError(f"feature dimension {X.shape[1]} != model dimension {model.m}")
    Xf = X[:, model.features]
    w = model.log_complement
    if model.weight_normalized:
        w = w / np.abs(w).sum(axis=1, keepdims=True)
    return model.log_prior[None, :] - np.asarray(Xf @ w.T)


def cnb_predict(model: CnbModel, X):
    """Arg-max labels (ties to the smallest label) and the full score matrix."""
    scores = cnb_scores(model, X)
    return model.classes[np.argmax(scores, axis=1)], scores


# ---------------------------------------------------------------------------
# cross-validation


@dataclass
class FoldPlan:
    n_folds: int
    fold_of: np.ndarray
    stratified: bool = True

    def split(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.fold_of == k)
        train = np.flatnonzero(self.fold_of != k)
        return train, test


def stratified_folds(y, n_folds: int = DEFAULT_FOLDS, seed: int = 0) -> FoldPlan:
    """Deal each class's shuffled samples round-robin into folds.

    The round-robin start rotates across classes so fold sizes stay within
    one sample of each other overall, and each class within one per fold.
    """
    y = np.asarray(y)
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if len(y) < n_folds:
        raise ValueError(f"{len(y)} samples cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(y), dtype=np.int64)
    start = 0
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(len(idx))]
        fold_of[idx] = (start + np.arange(len(idx))) % n_folds
        start = (start + len(idx)) % n_folds
    return FoldPlan(n_folds, fold_of, True)


def document_labels(doc_periodicals, labeling) -> np.ndarray:
    """Label of each document's periodical under a scheme; -1 where uncovered."""
    return labeling.lookup(doc_periodicals)


@dataclass
class EvaluationReport:
    scheme: str
    n_samples: int
    n_classes: int
    folds: list[dict]
    aggregate: dict
    oof_scores: np.ndarray | None = None
    oof_pred: np.ndarray | None = None
    y: np.ndarray | None = None
    flagged_folds: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"scheme": self.scheme, "n_samples": self.n_samples, "n_classes": self.n_classes,
                "folds": self.folds, "aggregate": self.aggregate, "flagged_folds": self.flagged_folds}


_FOLD_METRICS = [
    ("macro", "precision"), ("macro", "recall"), ("macro", "f1"),
    ("weighted", "precision"), ("weighted", "recall"), ("weighted", "f1"),
]


def crossval_multiclass(X, y, n_folds: int = DEFAULT_FOLDS, alpha: float = 1.0, seed: int = 0,
                        scheme: str = "", weight_normalized: bool = False) -> EvaluationReport:
    """Stratified k-fold CNB evaluation; metrics reported as mean and std over folds.

    Standard deviations are population (ddof = 0) over the folds.
    """
    X = sp.csr_matrix(X, dtype=np.float64)
    y = np.asarray(y)
    if (y < 0).any():
        raise ValueError("documents without a label under this scheme; filter them first")
    classes = np.unique(y)
    plan = stratified_folds(y, n_folds, seed)
    oof = np.zeros((len(y), len(classes)))
    oof_pred = np.empty(len(y), dtype=y.dtype)
    folds = []
    flagged = []
    for k in range(n_folds):
        tr, te = plan.split(k)
        model = cnb_fit(X[tr], y[tr], alpha, classes=classes, weight_normalized=weight_normalized)
        if model.absent_classes:
            flagged.append({"fold": k, "absent_classes": [int(c) for c in model.absent_classes]})
        pred, scores = cnb_predict(model, X[te])
        oof[te] = scores
        oof_pred[te] = pred
        prf = prf_scores(y[te], pred, labels=classes)
        ti = np.searchsorted(classes, y[te])
        row = {f"{a}_{b}": getattr(prf, a)[b] for a, b in _FOLD_METRICS}
        row["rank_avg_precision"] = ranking_average_precision(ti, scores)
        row["ranking_loss"] = ranking_loss(ti, scores) if len(classes) > 1 else 0.0
        row["fold"] = k
        row["n_test"] = int(len(te))
        folds.append(row)
    keys = [f"{a}_{b}" for a, b in _FOLD_METRICS] + ["rank_avg_precision", "ranking_loss"]
    agg = {key: {"mean": float(np.mean([f[key] for f in folds])),
                 "std": float(np.std([f[key] for f in folds]))} for key in keys}
    return EvaluationReport(scheme, len(y), len(classes), folds, agg, oof, oof_pred, y, flagged)


@dataclass
class OvrResult:
    classes: np.ndarray
    scores: np.ndarray        # (n_samples, n_classes) out-of-fold positive-class scores, NaN if skipped
    y: np.ndarray
    skipped: list = field(default_factory=list)

    def class_scores(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Binary truth and scores for class index k, skipped samples removed."""
        s = self.scores[:, k]
        ok = ~np.isnan(s)
        return (self.y[ok] == self.classes[k]), s[ok]


def one_vs_rest(X, y, n_folds: int = DEFAULT_FOLDS, alpha: float = 1.0, seed: int = 0) -> OvrResult:
    """K binary CNB classifiers (class k vs the rest), out-of-fold scores pooled.

    A sample's score for class k is the positive-minus-negative CNB score of
    the binary model that did not see it. Classes with no positive training
    samples in a fold are skipped for that fold's test samples.
    """
    X = sp.csr_matrix(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    plan = stratified_folds(y, n_folds, seed)
    scores = np.full((len(y), len(classes)), np.nan)
    skipped = []
    for f in range(n_folds):
        tr, te = plan.split(f)
        for k, c in enumerate(classes):
            yb = (y[tr] == c).astype(np.int64)
            if yb.sum() == 0:
                skipped.append({"fold": f, "class": int(c)})
                log.info("one-vs-rest: class %s has no positives in fold %d training set; skipped", c, f)
                continue
            model = cnb_fit(X[tr], yb, alpha, classes=np.array([0, 1]), binary=True)
            s = cnb_scores(model, X[te])
            scores[te, k] = s[:, 1] - s[:, 0]
    return OvrResult(classes, scores, y, skipped)
