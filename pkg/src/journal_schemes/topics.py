"""LDA by collapsed Gibbs sampling, dominant topics and coherence-based selection of T."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from numba import njit

from .classify import tokenize

log = logging.getLogger(__name__)

DEFAULT_T_GRID = tuple(range(10, 201, 10))


@dataclass(frozen=True)
class LdaConfig:
    n_topics: int = 30
    alpha: float | None = None   # document prior; None -> 50 / T
    beta: float = 0.01
    iterations: int = 1000
    burn_in: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_topics < 2:
            raise ValueError("need at least 2 topics")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must lie in [0, iterations)")

    @property
    def doc_prior(self) -> float:
        return self.alpha if self.alpha is not None else 50.0 / self.n_topics

    def as_dict(self) -> dict:
        d = asdict(self)
        d["alpha"] = self.doc_prior
        return d


@dataclass
class BowCorpus:
    """Documents as flat word-id arrays plus the vocabulary."""

    words: np.ndarray
    doc_of: np.ndarray
    offsets: np.ndarray
    vocab: list[str]
    doc_index: np.ndarray  # position of each kept doc in the input sequence

    @property
    def n_docs(self) -> int:
        return len(self.offsets) - 1

    def doc(self, d: int) -> np.ndarray:
        return self.words[self.offsets[d]:self.offsets[d + 1]]

    @classmethod
    def from_texts(cls, texts, vocab: list[str] | None = None) -> "BowCorpus":
        return cls.from_token_lists((tokenize(t) for t in texts), vocab)

    @classmethod
    def from_token_lists(cls, docs, vocab: list[str] | None = None) -> "BowCorpus":
        index = {w: i for i, w in enumerate(vocab)} if vocab is not None else {}
        grow = vocab is None
        vocab = list(vocab) if vocab is not None else []
        words, lengths, kept = [], [], []
        dropped = 0
        for i, toks in enumerate(docs):
            ids = []
            for t in toks:
                j = index.get(t)
                if j is None:
                    if not grow:
                        continue
                    j = index[t] = len(vocab)
                    vocab.append(t)
                ids.append(j)
            if not ids:
                dropped += 1
                continue
            words.extend(ids)
            lengths.append(len(ids))
            kept.append(i)
        if dropped:
            log.warning("dropped %d empty documents", dropped)
        offsets = np.zeros(len(lengths) + 1, dtype=np.int64)
        np.cumsum(lengths, out=offsets[1:])
        doc_of = np.repeat(np.arange(len(lengths), dtype=np.int64), lengths)
        return cls(np.asarray(words, dtype=np.int64), doc_of, offsets, vocab, np.asarray(kept, dtype=np.int64))

    def subset(self, docs: np.ndarray) -> "BowCorpus":
        return BowCorpus.from_token_lists(([self.vocab[w] for w in self.doc(d)] for d in docs), self.vocab)


@dataclass
class LdaModel:
    theta: np.ndarray
    phi: np.ndarray
    vocab: list[str]
    config: LdaConfig
    log_likelihood: list[float] = field(default_factory=list)
    token_totals: list[int] = field(default_factory=list)
    doc_index: np.ndarray | None = None

    def top_words(self, n: int = 10) -> list[list[int]]:
        return [list(np.argsort(-row, kind="stable")[:n]) for row in self.phi]


@njit(cache=True)
def _gibbs(words, doc_of, z, ndk, nkw, nk, alpha, beta, iterations, burn_in, seed,
           sum_ndk, sum_nkw, ll_trace, tot_trace):
    np.random.seed(seed)
    n_topics = nk.shape[0]
    V = nkw.shape[1]
    vbeta = V * beta
    p = np.empty(n_topics)
    for it in range(iterations):
        for i in range(words.shape[0]):
            w = words[i]
            d = doc_of[i]
            k = z[i]
            ndk[d, k] -= 1
            nkw[k, w] -= 1
            nk[k] -= 1
            acc = 0.0
            for t in range(n_topics):
                acc += (ndk[d, t] + alpha) * (nkw[t, w] + beta) / (nk[t] + vbeta)
                p[t] = acc
            u = np.random.random() * acc
            k = 0
            while k < n_topics - 1 and p[k] <= u:
                k += 1
            z[i] = k
            ndk[d, k] += 1
            nkw[k, w] += 1
            nk[k] += 1
        tot = 0
        for t in range(n_topics):
            for v in range(V):
                tot += nkw[t, v]
        tot_trace[it] = tot
        # log p(w | z), collapsed over phi
        lgb = math.lgamma(beta)
        ll = n_topics * math.lgamma(vbeta)
        for t in range(n_topics):
            for v in range(V):
                if nkw[t, v] > 0:
                    ll += math.lgamma(nkw[t, v] + beta) - lgb
            ll -= math.lgamma(nk[t] + vbeta)
        ll_trace[it] = ll
        if it >= burn_in:
            sum_ndk += ndk
            sum_nkw += nkw


def _log_likelihood(nkw, beta):
    T, V = nkw.shape
    ll = T * math.lgamma(V * beta)
    for t in range(T):
        ll += sum(math.lgamma(c + beta) - math.lgamma(beta) for c in nkw[t] if c > 0)
        ll -= math.lgamma(nkw[t].sum() + V * beta)
    return ll


def fit_lda(corpus: BowCorpus, config: LdaConfig = LdaConfig()) -> LdaModel:
    """Collapsed Gibbs sampling; theta and phi from averaged post-burn-in counts.

    ``log_likelihood[0]`` is log p(w | z) at the random initialization, the
    rest one value per sweep. ``token_totals`` holds the topic-word count
    total after every sweep.
    """
    if corpus.n_docs == 0:
        raise ValueError("empty corpus")
    V = len(corpus.vocab)
    T = config.n_topics
    if V < T:
        raise ValueError(f"vocabulary of {V} words is smaller than {T} topics")
    rng = np.random.default_rng(config.seed)
    z = rng.integers(0, T, size=len(corpus.words)).astype(np.int64)
    ndk = np.zeros((corpus.n_docs, T), dtype=np.int64)
    nkw = np.zeros((T, V), dtype=np.int64)
    np.add.at(ndk, (corpus.doc_of, z), 1)
    np.add.at(nkw, (z, corpus.words), 1)
    nk = nkw.sum(axis=1)
    init_ll = _log_likelihood(nkw, config.beta)
    sum_ndk = np.zeros(ndk.shape, dtype=np.int64)
    sum_nkw = np.zeros(nkw.shape, dtype=np.int64)
    ll = np.zeros(config.iterations)
    tot = np.zeros(config.iterations, dtype=np.int64)
    alpha = config.doc_prior
    _gibbs(corpus.words, corpus.doc_of, z, ndk, nkw, nk, alpha, config.beta, config.iterations,
           config.burn_in, int(rng.integers(0, 2**31 - 1)), sum_ndk, sum_nkw, ll, tot)
    samples = config.iterations - config.burn_in
    mean_ndk = sum_ndk / samples
    mean_nkw = sum_nkw / samples
    theta = mean_ndk + alpha
    theta /= theta.sum(axis=1, keepdims=True)
    phi = mean_nkw + config.beta
    phi /= phi.sum(axis=1, keepdims=True)
    return LdaModel(theta, phi, corpus.vocab, config, [init_ll] + ll.tolist(), tot.tolist(), corpus.doc_index)


def dominant_topic(theta) -> np.ndarray:
    """Arg-max topic per document, ties to the smallest topic index."""
    return np.argmax(np.asarray(theta), axis=1)


# ---------------------------------------------------------------------------
# coherence


def _doc_sets(corpus: BowCorpus) -> list[set]:
    return [set(corpus.doc(d).tolist()) for d in range(corpus.n_docs)]


def umass_coherence(top_words: list[list[int]], corpus: BowCorpus) -> list[float]:
    """UMass coherence per topic: sum over ranked pairs of log((D(w_m, w_l) + 1) / D(w_l)).

    D counts documents containing the word(s); w_l is ranked above w_m.
    """
    docs = _doc_sets(corpus)
    needed = {w for tw in top_words for w in tw}
    occ = {w: set() for w in needed}
    for d, ws in enumerate(docs):
        for w in ws & needed:
            occ[w].add(d)
    out = []
    for tw in top_words:
        score = 0.0
        for m in range(1, len(tw)):
            for l in range(m):
                dl = len(occ[tw[l]])
                if dl == 0:
                    continue
                score += math.log((len(occ[tw[m]] & occ[tw[l]]) + 1) / dl)
        out.append(score)
    return out


def cv_coherence(top_words: list[list[int]], corpus: BowCorpus, window: int = 110, eps: float = 1e-12) -> list[float]:
    """A C_v-style coherence: boolean sliding-window NPMI, one-set segmentation, cosine.

    Each top word gets a context vector of its NPMI with all top words of the
    topic; the topic score is the mean cosine between each word vector and
    the summed vector.
    """
    needed = sorted({w for tw in top_words for w in tw})
    pos = {w: i for i, w in enumerate(needed)}
    n = len(needed)
    single = np.zeros(n)
    joint = np.zeros((n, n))
    n_windows = 0
    for d in range(corpus.n_docs):
        doc = corpus.doc(d)
        starts = range(max(1, len(doc) - window + 1))
        for s in starts:
            present = sorted({pos[w] for w in doc[s:s + window].tolist() if w in pos})
            n_windows += 1
            if present:
                idx = np.asarray(present)
                single[idx] += 1
                joint[np.ix_(idx, idx)] += 1
    p1 = single / max(n_windows, 1)
    p12 = joint / max(n_windows, 1)
    out = []
    for tw in top_words:
        ix = np.asarray([pos[w] for w in tw])
        pj = p12[np.ix_(ix, ix)]
        pi = p1[ix]
        with np.errstate(divide="ignore", invalid="ignore"):
            pmi = np.log((pj + eps) / (pi[:, None] * pi[None, :] + eps))
            npmi = pmi / -np.log(pj + eps)
        npmi = np.nan_to_num(npmi)
        total = npmi.sum(axis=0)
        num = npmi @ total
        den = np.linalg.norm(npmi, axis=1) * np.linalg.norm(total)
        cos = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
        out.append(float(cos.mean()))
    return out


COHERENCE_MEASURES = {"umass": umass_coherence, "c_v": cv_coherence}


@dataclass
class CoherenceScan:
    scores: dict[int, float]
    failures: dict[int, str]
    best: int | None
    measure: str
    sample_size: int


def coherence_scan(corpus: BowCorpus, grid=DEFAULT_T_GRID, config: LdaConfig = LdaConfig(),
                   sample_fraction: float = 0.05, top_n: int = 10, measure: str = "umass",
                   min_sample: int = 1) -> CoherenceScan:
    """Fit one LDA per T on a random document sample and pick the most coherent T.

    A T that fails (e.g. more topics than vocabulary words) is recorded in
    ``failures`` and the scan moves on.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty T grid")
    if measure not in COHERENCE_MEASURES:
        raise ValueError(f"unknown coherence measure {measure!r}")
    rng = np.random.default_rng(config.seed)
    size = min(corpus.n_docs, max(min_sample, int(round(sample_fraction * corpus.n_docs))))
    docs = np.sort(rng.choice(corpus.n_docs, size=size, replace=False))
    sample = corpus.subset(docs) if size < corpus.n_docs else corpus
    scores: dict[int, float] = {}
    failures: dict[int, str] = {}
    fn = COHERENCE_MEASURES[measure]
    for T in grid:
        try:
            model = fit_lda(sample, replace(config, n_topics=T))
            scores[T] = float(np.mean(fn(model.top_words(top_n), sample)))
        except Exception as exc:  # recorded, scan continues
            failures[T] = f"{type(exc).__name__}: {exc}"
            log.warning("coherence scan: T=%d failed: %s", T, exc)
    best = max(scores, key=lambda t: (scores[t], -t)) if scores else None
    return CoherenceScan(scores, failures, best, measure, size)
