"""k-means classification schemes and the shared labeling container."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

DEFAULT_K = 26


@dataclass(frozen=True)
class KmeansConfig:
    k: int = DEFAULT_K
    max_iters: int = 300
    tolerance: float = 1e-6
    restarts: int = 10
    seed: int = 0
    normalize: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SchemeLabeling:
    """A total map from periodical ids to contiguous label ids 0..L-1."""

    name: str
    periodicals: np.ndarray
    labels: np.ndarray
    label_names: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.periodicals = np.asarray(self.periodicals, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.periodicals.shape != self.labels.shape:
            raise ValueError("periodicals and labels differ in length")
        if len(np.unique(self.periodicals)) != len(self.periodicals):
            raise ValueError("periodical listed twice in labeling")
        if len(self.labels):
            used = np.unique(self.labels)
            if used[0] < 0 or not np.array_equal(used, np.arange(len(used))):
                raise ValueError("label ids must be contiguous from 0")
        if not self.label_names:
            self.label_names = [str(i) for i in range(self.n_labels)]

    def __len__(self) -> int:
        return len(self.periodicals)

    @property
    def n_labels(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.periodicals.tolist(), self.labels.tolist()))

    def lookup(self, periodicals, missing: int = -1) -> np.ndarray:
        """Labels for an array of periodical ids, ``missing`` where uncovered."""
        periodicals = np.asarray(periodicals, dtype=np.int64)
        order = np.argsort(self.periodicals)
        keys = self.periodicals[order]
        pos = np.searchsorted(keys, periodicals)
        pos = np.clip(pos, 0, max(len(keys) - 1, 0))
        hit = (keys[pos] == periodicals) if len(keys) else np.zeros(len(periodicals), dtype=bool)
        out = np.full(len(periodicals), missing, dtype=np.int64)
        out[hit] = self.labels[order][pos[hit]]
        return out

    def save(self, path) -> None:
        order = np.argsort(self.periodicals, kind="stable")
        with open(path, "w", encoding="utf-8") as fh:
            for p, l in zip(self.periodicals[order], self.labels[order]):
                fh.write(f"{p}\t{l}\n")
        meta = {"scheme": self.name, "K": self.n_labels, "label_names": self.label_names, **self.meta}
        with open(f"{path}.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path) -> "SchemeLabeling":
        arr = np.loadtxt(path, dtype=np.int64, delimiter="\t", ndmin=2)
        try:
            with open(f"{path}.json", encoding="utf-8") as fh:
                meta = json.load(fh)
        except FileNotFoundError:
            meta = {}
        name = meta.pop("scheme", str(path))
        names = meta.pop("label_names", [])
        meta.pop("K", None)
        return cls(name, arr[:, 0], arr[:, 1], names, meta)


def relabel_by_size(labels: np.ndarray) -> np.ndarray:
    """Renumber so label 0 is the largest cluster; ties keep first-seen order."""
    labels = np.asarray(labels)
    uniq, first, counts = np.unique(labels, return_index=True, return_counts=True)
    order = np.lexsort((first, -counts))
    remap = np.empty(uniq.max() + 1 if len(uniq) else 0, dtype=np.int64)
    remap[uniq[order]] = np.arange(len(uniq))
    return remap[labels]


def scheme_sizes(labeling: SchemeLabeling) -> dict[int, tuple[int, float]]:
    if len(labeling) == 0:
        raise ValueError("empty labeling")
    counts = np.bincount(labeling.labels, minlength=labeling.n_labels)
    n = counts.sum()
    return {i: (int(c), c / n) for i, c in enumerate(counts)}


# ---------------------------------------------------------------------------
# k-means


@dataclass
class KmeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_trace: list[float]
    n_iter: int
    restart: int


def _as_matrix(x):
    if sp.issparse(x):
        x = sp.csr_matrix(x, dtype=np.float64)
        if not np.isfinite(x.data).all():
            raise ValueError("non-finite input vectors")
        return x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a 2-D array of vectors")
    if not np.isfinite(x).all():
        raise ValueError("non-finite input vectors")
    return x


def _row_sq_norms(x) -> np.ndarray:
    if sp.issparse(x):
        return np.asarray(x.multiply(x).sum(axis=1)).ravel()
    return np.einsum("ij,ij->i", x, x)


def _sq_dists(x, xx, c) -> np.ndarray:
    """Squared distances (n, k), clipped at 0."""
    cc = np.einsum("ij,ij->i", c, c)
    d = xx[:, None] - 2.0 * np.asarray(x @ c.T) + cc[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def _exact_inertia(x, labels, c) -> float:
    if sp.issparse(x):
        diff = x - sp.csr_matrix(c[labels])
        return float(diff.multiply(diff).sum())
    diff = x - c[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _kmeanspp(x, xx, k, rng) -> np.ndarray:
    n = x.shape[0]
    first = int(rng.integers(n))
    rows = [first]
    c = _dense_rows(x, [first])
    closest = _sq_dists(x, xx, c)[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a center; take unused ones in order
            unused = np.setdiff1d(np.arange(n), rows)
            nxt = int(unused[0])
        else:
            nxt = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            nxt = min(nxt, n - 1)
        rows.append(nxt)
        closest = np.minimum(closest, _sq_dists(x, xx, _dense_rows(x, [nxt]))[:, 0])
    return _dense_rows(x, rows)


def _dense_rows(x, rows) -> np.ndarray:
    r = x[rows]
    return r.toarray() if sp.issparse(r) else np.array(r, dtype=np.float64)


def _centroids(x, labels, k, old) -> np.ndarray:
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    onehot = sp.csr_matrix((np.ones(len(labels)), (labels, np.arange(len(labels)))), shape=(k, len(labels)))
    sums = onehot @ x
    sums = sums.toarray() if sp.issparse(sums) else np.asarray(sums)
    c = old.copy()
    nz = counts > 0
    c[nz] = sums[nz] / counts[nz, None]
    return c


def _lloyd(x, xx, centroids, cfg: KmeansConfig):
    k = len(centroids)
    trace = []
    labels = None
    for it in range(cfg.max_iters):
        d = _sq_dists(x, xx, centroids)
        new = np.argmin(d, axis=1)
        # repair empty clusters with the farthest points
        counts = np.bincount(new, minlength=k)
        if (counts == 0).any():
            far = d[np.arange(len(new)), new]
            taken = set()
            for j in np.flatnonzero(counts == 0):
                for i in np.argsort(-far, kind="stable"):
                    if i in taken or counts[new[i]] <= 1:
                        continue
                    counts[new[i]] -= 1
                    new[i] = j
                    counts[j] += 1
                    taken.add(int(i))
                    centroids[j] = _dense_rows(x, [int(i)])[0]
                    break
        trace.append(_exact_inertia(x, new, centroids))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        if len(trace) > 1 and trace[-2] - trace[-1] <= cfg.tolerance * trace[-2]:
            break
        centroids = _centroids(x, labels, k, centroids)
    return labels, centroids, trace, it + 1


def kmeans_fit(vectors, config: KmeansConfig = KmeansConfig()) -> KmeansResult:
    """Lloyd's algorithm from k-means++ seeds, best of ``restarts`` by inertia.

    ``vectors`` may be a dense array or a scipy sparse matrix (rows of a
    citation matrix, say). ``inertia_trace`` records the objective at every
    assignment step of the winning restart.
    """
    x = _as_matrix(vectors)
    n = x.shape[0]
    if n < config.k:
        raise ValueError(f"cannot form {config.k} clusters from {n} points")
    if config.normalize:
        norms = np.sqrt(_row_sq_norms(x))
        inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
        x = sp.diags(inv) @ x if sp.issparse(x) else x * inv[:, None]
        if sp.issparse(x):
            x = x.tocsr()
    xx = _row_sq_norms(x)
    rng = np.random.default_rng(config.seed)
    best = None
    for r in range(config.restarts):
        c0 = _kmeanspp(x, xx, config.k, rng)
        labels, cents, trace, n_iter = _lloyd(x, xx, c0, config)
        inertia = trace[-1]
        if best is None or inertia < best.inertia:
            best = KmeansResult(labels, cents, inertia, trace, n_iter, r)
    remap_labels = relabel_by_size(best.labels)
    perm = np.empty(config.k, dtype=np.int64)
    perm[remap_labels] = best.labels
    best.centroids = best.centroids[perm]
    best.labels = remap_labels
    return best


def kmeans(vectors, periodicals, config: KmeansConfig = KmeansConfig(), name: str = "kmeans"):
    """Cluster periodical vectors; returns ``(SchemeLabeling, KmeansResult)``."""
    res = kmeans_fit(vectors, config)
    meta = {"config": config.as_dict(), "inertia": res.inertia, "n_iter": res.n_iter}
    return SchemeLabeling(name, periodicals, res.labels, meta=meta), res


def scopus_scheme(registry, embeddings, k: int = 50, exclude=(1000,), name: str = "scopus") -> tuple[SchemeLabeling, list[int]]:
    """Mono-label every ASJC-tagged periodical that has an embedding.

    Returns the labeling (labels index the sorted ASJC codes in use) and the
    periodicals left unlabelable.
    """
    from .data import assign_scopus_monolabel

    assigned: dict[int, int] = {}
    unlabelable = []
    for p in sorted(registry.asjc):
        if p not in embeddings:
            continue
        code = assign_scopus_monolabel(p, embeddings, registry, k=k, exclude=exclude)
        if code is None:
            unlabelable.append(p)
        else:
            assigned[p] = code
    codes = sorted(set(assigned.values()))
    code_idx = {c: i for i, c in enumerate(codes)}
    periodicals = np.array(sorted(assigned), dtype=np.int64)
    labels = np.array([code_idx[assigned[p]] for p in periodicals.tolist()], dtype=np.int64)
    if unlabelable:
        log.info("scopus mono-label: %d periodicals unlabelable", len(unlabelable))
    meta = {"neighbors": k, "excluded_codes": list(exclude), "unlabelable": unlabelable}
    return SchemeLabeling(name, periodicals, labels, [str(c) for c in codes], meta), unlabelable
