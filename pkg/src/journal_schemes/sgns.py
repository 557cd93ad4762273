"""Skip-gram with negative sampling over token trails.

One trainer serves both the periodical2vec embeddings (trails over the
paper citation graph) and the node2vec baselines (walks over periodical
graphs). The inner loop is a numba kernel following the classic word2vec
update: for a (center, context) pair with noise words n_1..n_k,

    loss = -log s(u.v_ctx) - sum_k log s(-u.v_nk)

with u the center's input vector, v the output ("context") vectors and s
the logistic function. Input vectors are the representation kept.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from .walks import TrailCorpus

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SgnsConfig:
    dimension: int = 128
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_learning_rate: float = 0.0001
    subsample: float | None = None
    noise_power: float = 0.75
    seed: int = 1
    workers: int = 1

    def __post_init__(self):
        if self.dimension < 1 or self.window < 1 or self.negatives < 1 or self.epochs < 1:
            raise ValueError("dimension, window, negatives and epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray
    tokens: np.ndarray
    context: np.ndarray | None = None
    loss_trace: list[float] = field(default_factory=list)
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if len(self.tokens) != len(self.vectors):
            raise ValueError("one vector per token required")
        if not np.isfinite(self.vectors).all():
            raise ValueError("embedding contains non-finite values")
        self._index = {int(t): i for i, t in enumerate(self.tokens)}
        if len(self._index) != len(self.tokens):
            raise ValueError("duplicate vocabulary token")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, token) -> bool:
        return int(token) in self._index

    def row(self, token) -> int:
        try:
            return self._index[int(token)]
        except KeyError:
            raise KeyError(f"token {token} not in vocabulary") from None

    def vector(self, token) -> np.ndarray:
        return self.vectors[self.row(token)]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self)} {self.dimension}\n")
            for t, v in zip(self.tokens, self.vectors):
                fh.write(f"{t} " + " ".join(repr(float(x)) for x in v) + "\n")

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        with open(path, encoding="utf-8") as fh:
            v, d = (int(x) for x in fh.readline().split())
            tokens = np.empty(v, dtype=np.int64)
            vecs = np.empty((v, d), dtype=np.float64)
            for i in range(v):
                parts = fh.readline().split()
                if len(parts) != d + 1:
                    raise ValueError(f"{path}: row {i + 2} has {len(parts) - 1} values, expected {d}")
                tokens[i] = int(parts[0])
                vecs[i] = [float(x) for x in parts[1:]]
        return cls(vecs, tokens)


# ---------------------------------------------------------------------------
# numba kernels

_LCG_A = np.uint64(25214903917)
_LCG_C = np.uint64(11)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(inline="always")
def _softplus(x):
    # log(1 + exp(x)), stable for large |x|
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


@njit(nogil=True, cache=True)
def sgd_pair(w_in, w_out, center, context, negs, lr, work):
    """One SGD step on a single (center, context, noise words) example.

    Returns the example's loss before the update. Noise words equal to the
    context or to the center itself are skipped; letting a token act as its
    own negative pushes co-occurring tokens apart in tiny vocabularies.
    """
    d = w_in.shape[1]
    for i in range(d):
        work[i] = 0.0
    u = w_in[center]
    loss = 0.0
    for t in range(negs.shape[0] + 1):
        if t == 0:
            tgt = context
            label = 1.0
        else:
            tgt = negs[t - 1]
            if tgt == context or tgt == center:
                continue
            label = 0.0
        v = w_out[tgt]
        f = 0.0
        for i in range(d):
            f += u[i] * v[i]
        if label == 1.0:
            loss += _softplus(-f)
            s = 1.0 / (1.0 + math.exp(-f)) if f > -500 else 0.0
            g = lr * (1.0 - s)
        else:
            loss += _softplus(f)
            s = 1.0 / (1.0 + math.exp(-f)) if f > -500 else 0.0
            g = -lr * s
        for i in range(d):
            work[i] += g * v[i]
            v[i] += g * u[i]
    for i in range(d):
        u[i] += work[i]
    return loss


@njit(nogil=True, cache=True)
def _train_chunk(tokens, offsets, trail_ids, w_in, w_out, window, negatives, cdf, keep_prob,
                 lr0, lr_min, done0, total, seed):
    d = w_in.shape[1]
    work = np.empty(d, dtype=np.float64)
    negs = np.empty(negatives, dtype=np.int64)
    state = np.uint64(seed)
    sent = np.empty(np.max(offsets[1:] - offsets[:-1]) if offsets.shape[0] > 1 else 1, dtype=np.int64)
    loss = 0.0
    pairs = 0
    done = done0
    subsample = keep_prob.shape[0] > 0
    for ti in range(trail_ids.shape[0]):
        t = trail_ids[ti]
        a = offsets[t]
        b = offsets[t + 1]
        lr = lr0 * (1.0 - done / total)
        if lr < lr_min:
            lr = lr_min
        n = 0
        for k in range(a, b):
            tok = tokens[k]
            if subsample:
                state = state * _LCG_A + _LCG_C
                if float(state >> _S11) * _INV53 > keep_prob[tok]:
                    continue
            sent[n] = tok
            n += 1
        done += b - a
        for i in range(n):
            lo = i - window if i - window > 0 else 0
            hi = i + window + 1 if i + window + 1 < n else n
            for j in range(lo, hi):
                if j == i:
                    continue
                for k in range(negatives):
                    state = state * _LCG_A + _LCG_C
                    negs[k] = np.searchsorted(cdf, float(state >> _S11) * _INV53, side="right")
                    if negs[k] >= cdf.shape[0]:
                        negs[k] = cdf.shape[0] - 1
                loss += sgd_pair(w_in, w_out, sent[i], sent[j], negs, lr, work)
                pairs += 1
    return loss, pairs


# ---------------------------------------------------------------------------


def sgns_objective(w_in, w_out, centers, contexts, negs):
    """Summed SGNS loss and its exact gradients, in plain numpy.

    ``negs`` is (n_pairs, k). Noise words equal to their pair's context or
    center are masked out, matching the kernel. Used for gradient checking.
    """
    centers = np.asarray(centers)
    contexts = np.asarray(contexts)
    negs = np.asarray(negs).reshape(len(centers), -1)
    g_in = np.zeros_like(w_in)
    g_out = np.zeros_like(w_out)
    u = w_in[centers]
    pos = np.einsum("ij,ij->i", u, w_out[contexts])
    loss = np.logaddexp(0.0, -pos).sum()
    coef_pos = -1.0 / (1.0 + np.exp(pos))  # d/df of softplus(-f)
    np.add.at(g_in, centers, coef_pos[:, None] * w_out[contexts])
    np.add.at(g_out, contexts, coef_pos[:, None] * u)
    mask = (negs != contexts[:, None]) & (negs != centers[:, None])
    for k in range(negs.shape[1]):
        idx = negs[:, k]
        m = mask[:, k]
        f = np.einsum("ij,ij->i", u, w_out[idx])
        loss += np.logaddexp(0.0, f)[m].sum()
        coef = np.where(m, 1.0 / (1.0 + np.exp(-f)), 0.0)
        np.add.at(g_in, centers, coef[:, None] * w_out[idx])
        np.add.at(g_out, idx, coef[:, None] * u)
    return loss, g_in, g_out


def noise_distribution(counts: np.ndarray, power: float = 0.75) -> np.ndarray:
    p = np.asarray(counts, dtype=np.float64) ** power
    return p / p.sum()


def train_sgns(corpus: TrailCorpus, config: SgnsConfig = SgnsConfig()) -> EmbeddingMatrix:
    """Train input/output vectors by SGD over every trail for ``epochs`` passes.

    With ``workers > 1`` chunks of trails update the shared matrices from
    concurrent threads without locking, so results vary run to run. With one
    worker the output is a deterministic function of corpus and seed.
    """
    if len(corpus) == 0 or len(corpus.tokens) == 0:
        raise ValueError("empty corpus")
    vocab, flat = np.unique(corpus.tokens, return_inverse=True)
    flat = flat.astype(np.int64).ravel()
    if len(vocab) < 2:
        raise ValueError("need at least two distinct tokens for negative sampling")
    counts = np.bincount(flat, minlength=len(vocab))
    cdf = np.cumsum(noise_distribution(counts, config.noise_power))
    cdf[-1] = 1.0
    if config.subsample:
        freq = counts / counts.sum()
        thr = config.subsample
        keep = np.minimum(1.0, (np.sqrt(freq / thr) + 1.0) * thr / freq)
    else:
        keep = np.zeros(0, dtype=np.float64)

    rng = np.random.default_rng(config.seed)
    d = config.dimension
    w_in = (rng.random((len(vocab), d)) - 0.5) / d
    w_out = np.zeros((len(vocab), d))
    offsets = corpus.offsets.astype(np.int64)
    n_tokens = len(flat)
    total = float(n_tokens * config.epochs)
    workers = max(1, config.workers)
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(corpus)).astype(np.int64)
        seeds = rng.integers(1, 2**62, size=workers)
        done0 = float(epoch * n_tokens)
        if workers == 1:
            loss, pairs = _train_chunk(flat, offsets, order, w_in, w_out, config.window, config.negatives,
                                       cdf, keep, config.learning_rate, config.min_learning_rate,
                                       done0, total, np.uint64(seeds[0]))
        else:
            parts = np.array_split(order, workers)
            with ThreadPoolExecutor(workers) as ex:
                futs = [ex.submit(_train_chunk, flat, offsets, part, w_in, w_out, config.window,
                                  config.negatives, cdf, keep, config.learning_rate,
                                  config.min_learning_rate, done0, total, np.uint64(s))
                        for part, s in zip(parts, seeds)]
                res = [f.result() for f in futs]
            loss = sum(r[0] for r in res)
            pairs = sum(r[1] for r in res)
        trace.append(loss / max(pairs, 1))
        log.info("sgns epoch %d/%d: mean pair loss %.5f over %d pairs", epoch + 1, config.epochs, trace[-1], pairs)
    return EmbeddingMatrix(w_in, vocab, context=w_out, loss_trace=trace)


def cosine_top_k(emb: EmbeddingMatrix, query, k: int) -> list[tuple[int, float]]:
    """The k tokens most cosine-similar to ``query``, excluding itself.

    Ordered by descending similarity, ties by ascending token id.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    qi = emb.row(query)
    norms = np.linalg.norm(emb.vectors, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    sims = (emb.vectors @ emb.vectors[qi]) / (safe * safe[qi])
    sims[norms == 0] = 0.0
    cand = np.flatnonzero(np.arange(len(emb)) != qi)
    order = np.lexsort((emb.tokens[cand], -sims[cand]))[:k]
    return [(int(emb.tokens[cand[i]]), float(sims[cand[i]])) for i in order]
