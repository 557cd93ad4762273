"""Random walks: paper-level citation trails and periodical-level node2vec walks.

Randomness is counter based. Every step draws from
``splitmix64(key(seed, source, walk) + step)``, so a walk's content depends
only on its coordinates and never on how sources are split across workers.
"""
from __future__ import annotations

import gzip
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict

import numpy as np
from numba import njit

from .data import CitationGraph
from .matrices import PeriodicalMatrix

log = logging.getLogger(__name__)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@dataclass(frozen=True)
class WalkConfig:
    walks_per_source: int = 10
    walk_length: int = 80
    p: float = 1.0
    q: float = 1.0
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.walks_per_source < 1 or self.walk_length < 1:
            raise ValueError("walks_per_source and walk_length must be >= 1")
        if not (self.p > 0 and self.q > 0):
            raise ValueError("p and q must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


# node2vec defaults; citation trails use a shorter paper-level length
NODE2VEC_DEFAULTS = WalkConfig(walks_per_source=10, walk_length=80, p=1.0, q=1.0)
TRAIL_DEFAULTS = WalkConfig(walks_per_source=10, walk_length=10)


@dataclass
class TrailCorpus:
    """Ragged token sequences stored flat; trail i is tokens[offsets[i]:offsets[i+1]]."""

    tokens: np.ndarray
    offsets: np.ndarray

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def __getitem__(self, i: int) -> np.ndarray:
        return self.tokens[self.offsets[i]:self.offsets[i + 1]]

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    @classmethod
    def from_sequences(cls, seqs) -> "TrailCorpus":
        seqs = [np.asarray(s, dtype=np.int64) for s in seqs]
        if any(len(s) == 0 for s in seqs):
            raise ValueError("trails must have length >= 1")
        offsets = np.zeros(len(seqs) + 1, dtype=np.int64)
        np.cumsum([len(s) for s in seqs], out=offsets[1:])
        tokens = np.concatenate(seqs) if seqs else np.zeros(0, dtype=np.int64)
        return cls(tokens, offsets)

    def save(self, path) -> None:
        path = str(path)
        if path.endswith(".gz"):
            raw = open(path, "wb")
            fh = gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0)
        else:
            raw, fh = None, open(path, "wb")
        try:
            for t in self:
                fh.write((" ".join(map(str, t.tolist())) + "\n").encode())
        finally:
            fh.close()
            if raw is not None:
                raw.close()

    @classmethod
    def load(cls, path) -> "TrailCorpus":
        path = str(path)
        opener = gzip.open if path.endswith(".gz") else open
        with opener(path, "rt", encoding="utf-8") as fh:
            return cls.from_sequences([int(x) for x in line.split()] for line in fh if line.strip())


@njit(inline="always")
def _mix(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def _walk_key(seed, source, walk):
    h = _mix(np.uint64(seed))
    h = _mix(h ^ np.uint64(source))
    return _mix(h ^ np.uint64(walk))


@njit(inline="always")
def _uniform(key, step):
    return float(_mix(key + np.uint64(step) * _GOLDEN) >> _S11) * _INV53


@njit(nogil=True, cache=True)
def _citation_trails(indptr, indices, periodical, sources, r, l, seed, buf, lengths):
    for si in range(sources.shape[0]):
        s = sources[si]
        for w in range(r):
            key = _walk_key(seed, s, w)
            base = (si * r + w) * l
            cur = s
            buf[base] = periodical[cur]
            n = 1
            while n < l:
                a = indptr[cur]
                b = indptr[cur + 1]
                if b == a:
                    break
                k = a + np.int64(_uniform(key, n) * (b - a))
                if k >= b:
                    k = b - 1
                cur = indices[k]
                buf[base + n] = periodical[cur]
                n += 1
            lengths[si * r + w] = n


@njit(inline="always")
def _has_edge(indptr, indices, u, v):
    lo = indptr[u]
    hi = indptr[u + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        x = indices[mid]
        if x == v:
            return True
        if x < v:
            lo = mid + 1
        else:
            hi = mid
    return False


@njit(nogil=True, cache=True)
def _node2vec_walks(indptr, indices, weights, sources, r, l, inv_p, inv_q, seed, buf, lengths):
    first_order = inv_p == 1.0 and inv_q == 1.0
    for si in range(sources.shape[0]):
        s = sources[si]
        for w in range(r):
            key = _walk_key(seed, s, w)
            base = (si * r + w) * l
            prev = -1
            cur = s
            buf[base] = cur
            n = 1
            while n < l:
                a = indptr[cur]
                b = indptr[cur + 1]
                total = 0.0
                for k in range(a, b):
                    wt = weights[k]
                    if not first_order and prev >= 0:
                        x = indices[k]
                        if x == prev:
                            wt *= inv_p
                        elif not _has_edge(indptr, indices, prev, x):
                            wt *= inv_q
                    total += wt
                if total <= 0.0:
                    break
                target = _uniform(key, n) * total
                acc = 0.0
                nxt = -1
                for k in range(a, b):
                    wt = weights[k]
                    if wt <= 0.0:
                        continue
                    if not first_order and prev >= 0:
                        x = indices[k]
                        if x == prev:
                            wt *= inv_p
                        elif not _has_edge(indptr, indices, prev, x):
                            wt *= inv_q
                    acc += wt
                    nxt = indices[k]
                    if target < acc:
                        break
                prev = cur
                cur = nxt
                buf[base + n] = cur
                n += 1
            lengths[si * r + w] = n


def _run_chunked(kernel, sources: np.ndarray, r: int, l: int, workers: int, args) -> TrailCorpus:
    if len(sources) == 0:
        return TrailCorpus(np.zeros(0, dtype=np.int64), np.zeros(1, dtype=np.int64))
    workers = max(1, int(workers))
    chunks = np.array_split(sources, min(workers * 4, len(sources)) if workers > 1 else 1)

    def run(chunk):
        buf = np.empty(len(chunk) * r * l, dtype=np.int64)
        lengths = np.empty(len(chunk) * r, dtype=np.int64)
        kernel(*args[0], chunk, r, l, *args[1], buf, lengths)
        mask = np.arange(l) < lengths[:, None]
        return buf.reshape(-1, l)[mask], lengths

    if workers == 1:
        parts = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, chunks))
    tokens = np.concatenate([p[0] for p in parts])
    lengths = np.concatenate([p[1] for p in parts])
    offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    return TrailCorpus(tokens, offsets)


def generate_citation_trails(graph: CitationGraph, config: WalkConfig = TRAIL_DEFAULTS) -> TrailCorpus:
    """Follow references from every active paper, emitting periodical ids.

    Each step picks one of the current paper's references uniformly. A walk
    stops after ``walk_length`` papers or at a paper with no references.
    Trails are ordered by (source paper, walk index).
    """
    if graph.n_papers == 0:
        raise ValueError("empty citation graph")
    sources = graph.active_papers().astype(np.int64)
    corpus = _run_chunked(
        _citation_trails, sources, config.walks_per_source, config.walk_length, config.workers,
        ((graph.indptr, graph.indices, graph.periodical.astype(np.int64)), (np.uint64(config.seed),)),
    )
    log.info("generated %d citation trails (%d tokens)", len(corpus), len(corpus.tokens))
    return corpus


def node2vec_walks(pm: PeriodicalMatrix, config: WalkConfig = NODE2VEC_DEFAULTS) -> TrailCorpus:
    """Second-order biased walks over a weighted periodical graph.

    Edge weights are the matrix entries (row = from, column = to); tokens
    are registry periodical ids. With p = q = 1 this is plain
    weight-proportional sampling.
    """
    m = pm.matrix.tocsr().astype(np.float64)
    m.sort_indices()
    if m.nnz and m.data.min() < 0:
        raise ValueError("node2vec needs non-negative edge weights")
    sources = np.arange(m.shape[0], dtype=np.int64)
    corpus = _run_chunked(
        _node2vec_walks, sources, config.walks_per_source, config.walk_length, config.workers,
        ((m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data),
         (1.0 / config.p, 1.0 / config.q, np.uint64(config.seed))),
    )
    corpus.tokens = np.asarray(pm.periodicals, dtype=np.int64)[corpus.tokens]
    return corpus
