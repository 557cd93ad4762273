"""Evaluation metrics for classification schemes.

Classification (precision/recall/F1), label ranking (ranking average
precision, ranking loss), binary curves (PR/ROC with AP and AUC),
partition agreement (NMI, ARI, FMI), element-centric similarity and
inverse-distance-weighted interpolation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# precision / recall / F1


@dataclass
class PrfReport:
    labels: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro: dict
    weighted: dict
    no_predictions: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "per_class": {
                int(l): {"precision": float(p), "recall": float(r), "f1": float(f), "support": int(s)}
                for l, p, r, f, s in zip(self.labels, self.precision, self.recall, self.f1, self.support)
            },
            "macro": self.macro,
            "weighted": self.weighted,
            "no_predictions": [int(x) for x in self.no_predictions],
        }


def prf_scores(y_true, y_pred, labels=None) -> PrfReport:
    """Per-class precision, recall and F1 with macro and support-weighted means.

    A class never predicted gets precision 0 and is listed in
    ``no_predictions``.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if len(y_true) == 0:
        raise ValueError("empty input")
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    if labels is None:
        labels = np.union1d(y_true, y_pred)
    labels = np.asarray(labels)
    t = np.searchsorted(labels, y_true)
    p = np.searchsorted(labels, y_pred)
    L = len(labels)
    tp = np.bincount(t[t == p], minlength=L).astype(np.float64)
    pred_count = np.bincount(p, minlength=L).astype(np.float64)
    support = np.bincount(t, minlength=L)
    prec = np.divide(tp, pred_count, out=np.zeros(L), where=pred_count > 0)
    rec = np.divide(tp, support, out=np.zeros(L), where=support > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros(L), where=denom > 0)
    no_pred = labels[pred_count == 0].tolist()
    w = support / support.sum()
    macro = {"precision": float(prec.mean()), "recall": float(rec.mean()), "f1": float(f1.mean())}
    weighted = {"precision": float(w @ prec), "recall": float(w @ rec), "f1": float(w @ f1)}
    return PrfReport(labels, prec, rec, f1, support, macro, weighted, no_pred)


# ---------------------------------------------------------------------------
# label ranking


def _true_mask(y, n_labels: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 2:
        return y.astype(bool)
    mask = np.zeros((len(y), n_labels), dtype=bool)
    mask[np.arange(len(y)), y] = True
    return mask


def _avg_rank(scores: np.ndarray, among: np.ndarray) -> np.ndarray:
    """Average rank (1 = best) of every label among the labels flagged in ``among``.

    rank(j) = 1 + #{k in among: s_k > s_j} + 0.5 * #{k in among, k != j: s_k == s_j}
    """
    s = scores
    gt = (s[:, None, :] > s[:, :, None]) & among[:, None, :]
    eq = (s[:, None, :] == s[:, :, None]) & among[:, None, :]
    eq_count = eq.sum(axis=2) - among  # drop j itself when j is in `among`
    return 1.0 + gt.sum(axis=2) + 0.5 * eq_count


def ranking_average_precision(y_true, scores) -> float:
    """Mean over samples of the average, over true labels j, of

        (rank of j among the true labels) / (rank of j among all labels)

    Ranks are average ranks, so ties split credit. Without ties this is the
    usual label-ranking average precision; with one true label per sample it
    is the mean reciprocal rank. ``y_true`` is a label vector or a boolean
    indicator matrix.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or len(scores) == 0:
        raise ValueError("scores must be a non-empty (n_samples, n_labels) array")
    mask = _true_mask(y_true, scores.shape[1])
    if not mask.any(axis=1).all():
        raise ValueError("every sample needs at least one true label")
    total = 0.0
    for lo in range(0, len(scores), 1024):
        s, m = scores[lo:lo + 1024], mask[lo:lo + 1024]
        r_all = _avg_rank(s, np.ones_like(m))
        r_true = _avg_rank(s, m)
        ratio = np.where(m, r_true / r_all, 0.0)
        total += float((ratio.sum(axis=1) / m.sum(axis=1)).sum())
    return total / len(scores)


def ranking_loss(y_true, scores) -> float:
    """Mean fraction of (true, false) label pairs with score(true) <= score(false)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or len(scores) == 0:
        raise ValueError("scores must be a non-empty (n_samples, n_labels) array")
    mask = _true_mask(y_true, scores.shape[1])
    n_true = mask.sum(axis=1)
    n_false = scores.shape[1] - n_true
    if (n_true == 0).any() or (n_false == 0).any():
        raise ValueError("every sample needs at least one true and one false label")
    total = 0.0
    for lo in range(0, len(scores), 1024):
        s, m = scores[lo:lo + 1024], mask[lo:lo + 1024]
        bad = (s[:, :, None] <= s[:, None, :]) & m[:, :, None] & ~m[:, None, :]
        total += float((bad.sum(axis=(1, 2)) / (n_true[lo:lo + 1024] * n_false[lo:lo + 1024])).sum())
    return total / len(scores)


# ---------------------------------------------------------------------------
# binary curves


@dataclass
class BinaryCurves:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    ap: float
    auc: float


def pr_roc_curves(y_true, scores) -> BinaryCurves:
    """Threshold sweep over the distinct scores, highest first.

    At threshold t a sample is called positive when its score >= t.
    AP = sum_n (R_n - R_{n-1}) P_n; AUC integrates ROC by trapezoids
    starting from (0, 0).
    """
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError("labels and scores must be 1-D and equally long")
    pos = int(y.sum())
    neg = len(y) - pos
    if pos == 0 or neg == 0:
        raise ValueError("both classes must be present")
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    last = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(s) - 1]
    tp = np.cumsum(y_sorted)[last].astype(np.float64)
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / pos
    tpr = recall
    fpr = fp / neg
    # summed in count space so perfect rankings give exactly 1.0
    dtp = np.diff(np.r_[0.0, tp])
    ap = float(np.sum(dtp * precision) / pos)
    tp0 = np.r_[0.0, tp]
    auc = float(np.sum(np.diff(np.r_[0.0, fp]) * (tp0[1:] + tp0[:-1])) / (2.0 * pos * neg))
    return BinaryCurves(s_sorted[last], precision, recall, fpr, tpr, ap, auc)


def macro_average(values) -> float:
    values = [v for v in values if v is not None and not math.isnan(v)]
    if not values:
        raise ValueError("nothing to average")
    return float(np.mean(values))


def macro_pr_curve(curves: list[BinaryCurves], grid: np.ndarray | None = None):
    """Class-averaged PR curve on a common recall grid (interpolated precision)."""
    grid = np.linspace(0.0, 1.0, 101) if grid is None else grid
    prec = []
    for c in curves:
        # interpolated precision: best precision at recall >= r
        p_interp = np.maximum.accumulate(c.precision[::-1])[::-1]
        idx = np.searchsorted(c.recall, grid, side="left")
        idx = np.clip(idx, 0, len(c.recall) - 1)
        prec.append(p_interp[idx])
    return grid, np.mean(prec, axis=0)


def macro_roc_curve(curves: list[BinaryCurves], grid: np.ndarray | None = None):
    grid = np.linspace(0.0, 1.0, 101) if grid is None else grid
    tprs = [np.interp(grid, np.r_[0.0, c.fpr], np.r_[0.0, c.tpr]) for c in curves]
    return grid, np.mean(tprs, axis=0)


# ---------------------------------------------------------------------------
# partition agreement


def contingency(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("labelings must cover the same elements")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ai = ai.ravel()
    bi = bi.ravel()
    m = sp.coo_matrix((np.ones(len(ai), dtype=np.int64), (ai, bi)),
                      shape=(ai.max() + 1 if len(ai) else 0, bi.max() + 1 if len(bi) else 0))
    return m.toarray()


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def _same_partition(c: np.ndarray) -> bool:
    return c.shape[0] == c.shape[1] and bool(((c > 0).sum(axis=0) == 1).all() and ((c > 0).sum(axis=1) == 1).all())


def nmi(a, b) -> float:
    """Mutual information over the geometric mean of the two entropies (natural log).

    Identical partitions give exactly 1. If either entropy is zero and the
    partitions differ, 0.
    """
    c = contingency(a, b)
    n = c.sum()
    if n == 0:
        raise ValueError("empty universe")
    if _same_partition(c):
        return 1.0
    ha = _entropy(c.sum(axis=1), n)
    hb = _entropy(c.sum(axis=0), n)
    if ha == 0.0 or hb == 0.0:
        return 0.0
    ra = c.sum(axis=1)
    cb = c.sum(axis=0)
    ii, jj = np.nonzero(c)
    v = c[ii, jj].astype(np.float64)
    mi = float((v / n * (np.log(v) + math.log(n) - np.log(ra[ii]) - np.log(cb[jj]))).sum())
    return max(0.0, mi / math.sqrt(ha * hb))


def _comb2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def ari(a, b) -> float:
    """Adjusted Rand index via pair counts from the contingency table."""
    c = contingency(a, b)
    n = int(c.sum())
    if n < 2:
        raise ValueError("ARI needs at least two elements")
    sum_ij = int(_comb2(c).sum())
    sum_a = int(_comb2(c.sum(axis=1)).sum())
    sum_b = int(_comb2(c.sum(axis=0)).sum())
    total = n * (n - 1) // 2
    expected = sum_a * sum_b / total
    max_idx = (sum_a + sum_b) / 2
    if max_idx == expected:
        return 1.0
    return (sum_ij - expected) / (max_idx - expected)


def fmi(a, b) -> float:
    """Fowlkes-Mallows index, TP / sqrt((TP + FP)(TP + FN)) over co-clustered pairs.

    ``a`` is the reference. Returns 0 when either labeling puts no pair
    together (logged).
    """
    c = contingency(a, b)
    n = int(c.sum())
    if n < 2:
        raise ValueError("FMI needs at least two elements")
    tp = int(_comb2(c).sum())
    tp_fn = int(_comb2(c.sum(axis=1)).sum())
    tp_fp = int(_comb2(c.sum(axis=0)).sum())
    if tp_fn == 0 or tp_fp == 0:
        log.info("FMI: a labeling has no co-clustered pairs; returning 0")
        return 0.0
    return tp / math.sqrt(tp_fp * tp_fn)


def element_centric_similarity(a, b, alpha: float = 0.9) -> np.ndarray:
    """Per-element agreement between two hard partitions.

    Each partition induces for element i the affinity
    p(i, j) = alpha * [j in C(i)] / |C(i)| + (1 - alpha) * [i == j], and
    S_i = 1 - sum_j |p_A(i, j) - p_B(i, j)| / (2 * alpha). Computed in closed
    form from cluster sizes and overlaps, O(n).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("labelings must cover the same elements")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    ai = ai.ravel()
    bi = bi.ravel()
    size_a = np.bincount(ai)[ai].astype(np.float64)
    size_b = np.bincount(bi)[bi].astype(np.float64)
    c = contingency(ai, bi)
    overlap = c[ai, bi].astype(np.float64)
    # sum_j |p_A - p_B| = alpha * (m |1/a - 1/b| + (a - m)/a + (b - m)/b)
    l1 = overlap * np.abs(1.0 / size_a - 1.0 / size_b) + (size_a - overlap) / size_a + (size_b - overlap) / size_b
    return np.clip(1.0 - 0.5 * l1, 0.0, 1.0)


# ---------------------------------------------------------------------------
# inverse distance weighting


@dataclass(frozen=True)
class GridSpec:
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    nx: int
    ny: int

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        return np.linspace(self.xmin, self.xmax, self.nx), np.linspace(self.ymin, self.ymax, self.ny)

    @classmethod
    def around(cls, xy: np.ndarray, n: int = 100, pad: float = 0.05) -> "GridSpec":
        lo = xy.min(axis=0)
        hi = xy.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        lo = lo - pad * span
        hi = hi + pad * span
        return cls(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]), n, n)


def idw_at(points, values, queries, power: float = 2.0, eps: float = 1e-12, chunk: int = 4096) -> np.ndarray:
    """Shepard interpolation of ``values`` at ``points`` onto ``queries``.

    A query within ``eps`` of a sample returns that sample's value exactly
    (the first such sample if several coincide).
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    values = np.asarray(values, dtype=np.float64).ravel()
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 2)
    if len(points) == 0:
        raise ValueError("no samples to interpolate")
    if len(points) != len(values):
        raise ValueError("one value per sample point required")
    if not power > 0:
        raise ValueError("power must be positive")
    out = np.empty(len(queries))
    for lo in range(0, len(queries), chunk):
        q = queries[lo:lo + chunk]
        d = np.sqrt(((q[:, None, :] - points[None, :, :]) ** 2).sum(axis=2))
        hit = d < eps
        with np.errstate(divide="ignore"):
            w = 1.0 / d ** power
        w[hit] = 0.0
        res = (w @ values) / w.sum(axis=1)
        exact = hit.any(axis=1)
        if exact.any():
            res[exact] = values[np.argmax(hit[exact], axis=1)]
        out[lo:lo + chunk] = res
    return out


def idw_interpolate(points, values, grid: GridSpec, power: float = 2.0) -> np.ndarray:
    """IDW over a regular grid; returns an (ny, nx) array, row = y."""
    gx, gy = grid.axes()
    xx, yy = np.meshgrid(gx, gy)
    q = np.column_stack([xx.ravel(), yy.ravel()])
    return idw_at(points, values, q, power).reshape(grid.ny, grid.nx)
