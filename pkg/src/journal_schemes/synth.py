"""Planted-partition test corpora: papers, citations, abstracts and subject labels."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SynthSpec:
    communities: int = 4
    papers_per_community: int = 500
    periodicals_per_community: int = 5
    vocab_per_community: int = 50
    refs_per_paper: int = 8
    inter_rate: float = 0.1      # chance a reference goes to a uniformly random paper anywhere
    words_per_abstract: int = 40
    noise_rate: float = 0.0      # chance an abstract word comes from the shared vocabulary
    shared_vocab: int = 0
    scopus_noise: float = 0.0    # chance a periodical gets an extra random subject code
    first_year: int = 2010
    last_year: int = 2019
    seed: int = 0

    def validate(self) -> None:
        if self.communities < 2:
            raise ValueError("need at least 2 communities")
        if min(self.papers_per_community, self.periodicals_per_community, self.vocab_per_community,
               self.words_per_abstract) < 1:
            raise ValueError("community sizes and abstract length must be >= 1")
        if self.refs_per_paper < 0:
            raise ValueError("refs_per_paper must be >= 0")
        if not (0.0 <= self.inter_rate <= 1.0 and 0.0 <= self.noise_rate <= 1.0 and 0.0 <= self.scopus_noise <= 1.0):
            raise ValueError("rates must lie in [0, 1]")
        if self.noise_rate > 0 and self.shared_vocab < 1:
            raise ValueError("noise_rate > 0 needs a shared vocabulary")
        if self.communities > 26:
            raise ValueError("at most 26 communities (one subject code each)")
        if self.first_year > self.last_year:
            raise ValueError("first_year after last_year")


@dataclass
class SynthCorpus:
    paper_ids: list[str]
    paper_community: np.ndarray
    paper_periodical: np.ndarray
    years: np.ndarray
    citations: np.ndarray
    abstracts: list[str]
    periodical_names: list[str]
    periodical_community: np.ndarray
    scopus_codes: list[list[int]]
    spec: SynthSpec


def subject_code(community: int) -> int:
    return 1100 + 100 * community


def make_corpus(spec: SynthSpec = SynthSpec()) -> SynthCorpus:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    C, n_per, P = spec.communities, spec.papers_per_community, spec.periodicals_per_community
    n = C * n_per
    community = np.repeat(np.arange(C), n_per)
    periodical = community * P + rng.integers(0, P, size=n)
    years = rng.integers(spec.first_year, spec.last_year + 1, size=n)

    refs = []
    if spec.refs_per_paper:
        R = spec.refs_per_paper
        src = np.repeat(np.arange(n), R)
        mixed = rng.random(n * R) < spec.inter_rate
        anywhere = rng.integers(0, n, size=n * R)
        inside = community[src] * n_per + rng.integers(0, n_per, size=n * R)
        dst = np.where(mixed, anywhere, inside)
        ok = dst != src
        pairs = np.unique(np.column_stack([src[ok], dst[ok]]), axis=0)
        refs = pairs
    citations = np.asarray(refs, dtype=np.int64).reshape(-1, 2)

    abstracts = []
    W = spec.words_per_abstract
    for i in range(n):
        c = community[i]
        noisy = rng.random(W) < spec.noise_rate
        own = rng.integers(0, spec.vocab_per_community, size=W)
        shared = rng.integers(0, max(spec.shared_vocab, 1), size=W)
        words = [f"shared{s}" if z else f"topic{c}word{o}" for z, o, s in zip(noisy, own, shared)]
        abstracts.append(" ".join(words))

    names = [f"Journal of Field {c} Letters {j}" for c in range(C) for j in range(P)]
    pcomm = np.repeat(np.arange(C), P)
    codes = []
    for p in range(C * P):
        cs = [subject_code(int(pcomm[p]))]
        if rng.random() < spec.scopus_noise:
            extra = subject_code(int(rng.integers(0, C)))
            if extra not in cs:
                cs.append(extra)
        codes.append(cs)
    ids = [f"W{i:07d}" for i in range(n)]
    return SynthCorpus(ids, community, periodical, years, citations, abstracts, names, pcomm, codes, spec)


def write_corpus(corpus: SynthCorpus, out_dir) -> dict[str, Path]:
    """Write the corpus in the pipeline's input formats plus ground-truth files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "papers": out / "papers.tsv",
        "citations": out / "citations.tsv",
        "abstracts": out / "abstracts.jsonl",
        "scopus": out / "scopus.tsv",
        "truth_periodicals": out / "truth_periodicals.tsv",
        "truth_papers": out / "truth_papers.tsv",
        "spec": out / "synth_spec.json",
    }
    with open(paths["papers"], "w", encoding="utf-8") as fh:
        for pid, p, y in zip(corpus.paper_ids, corpus.paper_periodical, corpus.years):
            fh.write(f"{pid}\t{corpus.periodical_names[p]}\t{y}\n")
    with open(paths["citations"], "w", encoding="utf-8") as fh:
        for a, b in corpus.citations:
            fh.write(f"{corpus.paper_ids[a]}\t{corpus.paper_ids[b]}\n")
    with open(paths["abstracts"], "w", encoding="utf-8") as fh:
        for pid, text in zip(corpus.paper_ids, corpus.abstracts):
            fh.write(json.dumps({"paper_id": pid, "text": text}) + "\n")
    with open(paths["scopus"], "w", encoding="utf-8") as fh:
        for name, cs in zip(corpus.periodical_names, corpus.scopus_codes):
            fh.write(f"{name}\t{','.join(map(str, cs))}\n")
    with open(paths["truth_periodicals"], "w", encoding="utf-8") as fh:
        for name, c in zip(corpus.periodical_names, corpus.periodical_community):
            fh.write(f"{name}\t{c}\n")
    with open(paths["truth_papers"], "w", encoding="utf-8") as fh:
        for pid, c in zip(corpus.paper_ids, corpus.paper_community):
            fh.write(f"{pid}\t{c}\n")
    with open(paths["spec"], "w", encoding="utf-8") as fh:
        json.dump(asdict(corpus.spec), fh, indent=1, sort_keys=True)
    return paths


def generate_synthetic_corpus(out_dir, spec: SynthSpec = SynthSpec()) -> dict[str, Path]:
    return write_corpus(make_corpus(spec), out_dir)
