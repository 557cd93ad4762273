"""Corpus ingestion: papers, citations, abstracts and Scopus subject areas.

Everything downstream works on dense integer ids. Papers get ids in
first-seen order from ``papers.tsv``; periodicals likewise, keyed on a
canonicalized name so that "J. Appl. Phys" and "j appl  phys" collapse.
"""
from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_MIN_YEAR = 2010
MONOLABEL_NEIGHBORS = 50
MULTIDISCIPLINARY_ASJC = 1000

_CANON_RE = re.compile(r"[\W_]+", re.UNICODE)


class IngestError(ValueError):
    """Malformed input row. Carries the offending file and line number."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = str(path)
        self.lineno = lineno


def canonical_name(name: str) -> str:
    return _CANON_RE.sub(" ", name.lower()).strip()


def decade(year):
    """Calendar decade, floor(year / 10) * 10. Works on scalars and arrays."""
    return (year // 10) * 10


@dataclass(frozen=True)
class PaperRecord:
    paper_id: str
    dense_id: int
    periodical_id: int
    year: int


@dataclass
class PeriodicalRegistry:
    names: list[str] = field(default_factory=list)
    asjc: dict[int, frozenset[int]] = field(default_factory=dict)
    _by_canon: dict[str, int] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.names)

    def add(self, name: str) -> int:
        key = canonical_name(name)
        if not key:
            raise ValueError(f"periodical name {name!r} is empty after canonicalization")
        idx = self._by_canon.get(key)
        if idx is None:
            idx = len(self.names)
            self._by_canon[key] = idx
            self.names.append(name.strip())
        return idx

    def lookup(self, name: str) -> int | None:
        return self._by_canon.get(canonical_name(name))

    def name(self, idx: int) -> str:
        return self.names[idx]

    def set_asjc(self, idx: int, codes) -> None:
        codes = frozenset(int(c) for c in codes)
        if not codes:
            raise ValueError("ASJC code set must be non-empty")
        self.asjc[idx] = codes

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for i, name in enumerate(self.names):
                codes = ",".join(str(c) for c in sorted(self.asjc.get(i, ())))
                fh.write(f"{i}\t{name}\t{codes}\n")

    @classmethod
    def load(cls, path) -> "PeriodicalRegistry":
        reg = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise IngestError(path, lineno, "expected 3 fields")
                idx = reg.add(parts[1])
                if idx != int(parts[0]):
                    raise IngestError(path, lineno, f"dense id {parts[0]} out of order")
                if parts[2]:
                    reg.set_asjc(idx, parts[2].split(","))
        return reg


@dataclass
class PaperTable:
    """Column store of ingested papers, indexed by dense id."""

    paper_ids: list[str]
    periodical: np.ndarray  # int64
    year: np.ndarray  # int64
    index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.index:
            self.index = {pid: i for i, pid in enumerate(self.paper_ids)}

    def __len__(self) -> int:
        return len(self.paper_ids)

    def __iter__(self) -> Iterator[PaperRecord]:
        for i, pid in enumerate(self.paper_ids):
            yield PaperRecord(pid, i, int(self.periodical[i]), int(self.year[i]))

    def dense(self, paper_id: str) -> int | None:
        return self.index.get(paper_id)


@dataclass
class IngestSummary:
    rows: int = 0
    papers: int = 0
    periodicals: int = 0
    duplicates: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _rows(path) -> Iterator[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            yield lineno, line.split("\t")


def ingest_papers(path, registry: PeriodicalRegistry | None = None):
    """Read ``paper_id \\t periodical_name \\t year`` rows.

    Returns ``(registry, papers, summary)``. Duplicate paper ids keep the
    first occurrence and are counted; malformed rows raise `IngestError`.
    """
    registry = registry if registry is not None else PeriodicalRegistry()
    summary = IngestSummary()
    ids: list[str] = []
    index: dict[str, int] = {}
    venues: list[int] = []
    years: list[int] = []
    for lineno, parts in _rows(path):
        summary.rows += 1
        if len(parts) != 3:
            raise IngestError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        pid, venue, year_s = (p.strip() for p in parts)
        if not pid:
            raise IngestError(path, lineno, "empty paper_id")
        if not canonical_name(venue):
            raise IngestError(path, lineno, "unknown or empty periodical name")
        try:
            year = int(year_s)
        except ValueError:
            raise IngestError(path, lineno, f"year {year_s!r} is not an integer") from None
        if year < 1800:
            raise IngestError(path, lineno, f"year {year} < 1800")
        if pid in index:
            summary.duplicates += 1
            continue
        index[pid] = len(ids)
        ids.append(pid)
        venues.append(registry.add(venue))
        years.append(year)
    papers = PaperTable(ids, np.asarray(venues, dtype=np.int64), np.asarray(years, dtype=np.int64), index)
    summary.papers = len(papers)
    summary.periodicals = len(registry)
    if summary.duplicates:
        log.warning("%s: %d duplicate paper ids rejected", path, summary.duplicates)
    return registry, papers, summary


def ingest_citations(path, papers: PaperTable) -> tuple[np.ndarray, int]:
    """Read ``citing \\t cited`` rows into an (E, 2) dense-id array.

    Rows naming unknown papers are dropped; their count is returned.
    """
    pairs = []
    unknown = 0
    for lineno, parts in _rows(path):
        if len(parts) != 2:
            raise IngestError(path, lineno, f"expected 2 tab-separated fields, got {len(parts)}")
        a = papers.dense(parts[0].strip())
        b = papers.dense(parts[1].strip())
        if a is None or b is None:
            unknown += 1
            continue
        pairs.append((a, b))
    edges = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if unknown:
        log.info("%s: %d citations reference unknown papers", path, unknown)
    return edges, unknown


def ingest_scopus(path, registry: PeriodicalRegistry) -> int:
    """Attach ASJC codes (``name \\t code[,code...]``) to matching periodicals.

    Returns the number of registry periodicals matched by name.
    """
    matched = 0
    for lineno, parts in _rows(path):
        if len(parts) != 2:
            raise IngestError(path, lineno, "expected periodical_name \\t codes")
        try:
            codes = [int(c) for c in parts[1].split(",") if c.strip()]
        except ValueError:
            raise IngestError(path, lineno, f"bad ASJC code list {parts[1]!r}") from None
        if not codes:
            raise IngestError(path, lineno, "empty ASJC code list")
        idx = registry.lookup(parts[0])
        if idx is None:
            continue
        if idx not in registry.asjc:
            matched += 1
        registry.set_asjc(idx, registry.asjc.get(idx, frozenset()) | set(codes))
    return matched


def ingest_abstracts(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                out[str(obj["paper_id"])] = str(obj["text"])
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise IngestError(path, lineno, f"bad abstract record: {exc}") from None
    return out


def save_papers(path, papers: PaperTable, registry: PeriodicalRegistry) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in papers:
            fh.write(f"{rec.paper_id}\t{registry.name(rec.periodical_id)}\t{rec.year}\n")


# --------------------------------------------------------------------------
# decade-filtered citation graph


@dataclass
class FilterStats:
    input_edges: int = 0
    kept: int = 0
    dropped_decade: int = 0
    dropped_year: int = 0
    dropped_unknown: int = 0
    dropped_self: int = 0
    dropped_duplicate: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CitationGraph:
    """Paper-level citation graph in CSR form (citing -> sorted cited ids).

    Papers keep their global dense ids; ``active`` marks the ones that
    passed the year filter. Immutable after construction.
    """

    indptr: np.ndarray
    indices: np.ndarray
    periodical: np.ndarray
    decade: np.ndarray
    active: np.ndarray
    min_year: int
    stats: FilterStats = field(default_factory=FilterStats)

    @property
    def n_papers(self) -> int:
        return len(self.periodical)

    @property
    def n_edges(self) -> int:
        return int(self.indptr[-1])

    def out_refs(self, paper: int) -> np.ndarray:
        return self.indices[self.indptr[paper]:self.indptr[paper + 1]]

    def edges(self) -> np.ndarray:
        src = np.repeat(np.arange(self.n_papers, dtype=np.int64), np.diff(self.indptr))
        return np.column_stack([src, self.indices.astype(np.int64)])

    def active_papers(self) -> np.ndarray:
        return np.flatnonzero(self.active)


def filter_decade(papers: PaperTable, edges: np.ndarray, min_year: int = DEFAULT_MIN_YEAR) -> CitationGraph:
    """Keep papers from ``min_year`` on and citations within one calendar decade."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n = len(papers)
    stats = FilterStats(input_edges=len(edges))
    year = papers.year
    active = year >= min_year
    dec = (year // 10) * 10

    known = (edges >= 0).all(axis=1) & (edges < n).all(axis=1)
    stats.dropped_unknown = int((~known).sum())
    e = edges[known]
    not_self = e[:, 0] != e[:, 1]
    stats.dropped_self = int((~not_self).sum())
    e = e[not_self]
    in_range = active[e[:, 0]] & active[e[:, 1]]
    stats.dropped_year = int((~in_range).sum())
    e = e[in_range]
    same = dec[e[:, 0]] == dec[e[:, 1]]
    stats.dropped_decade = int((~same).sum())
    e = e[same]

    if len(e):
        order = np.lexsort((e[:, 1], e[:, 0]))
        e = e[order]
        first = np.ones(len(e), dtype=bool)
        first[1:] = (e[1:] != e[:-1]).any(axis=1)
        stats.dropped_duplicate = int((~first).sum())
        e = e[first]
    stats.kept = len(e)

    counts = np.bincount(e[:, 0], minlength=n) if len(e) else np.zeros(n, dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = e[:, 1].astype(np.int64) if len(e) else np.zeros(0, dtype=np.int64)
    log.info("decade filter: kept %d of %d citations (%s)", stats.kept, stats.input_edges, stats.as_dict())
    return CitationGraph(indptr, indices, papers.periodical.copy(), dec, active, min_year, stats)


# --------------------------------------------------------------------------
# Scopus mono-labels


def monolabel_from_neighbors(neighbor_codes, exclude=(MULTIDISCIPLINARY_ASJC,)) -> int | None:
    """Modal ASJC area over a collection of neighbor code sets.

    Unlabeled neighbors are passed as empty sets. Ties go to the smallest
    code. Returns None when no neighbor carries a usable code.
    """
    counts: Counter = Counter()
    for codes in neighbor_codes:
        counts.update(c for c in codes if c not in exclude)
    if not counts:
        return None
    best = max(counts.values())
    return min(c for c, v in counts.items() if v == best)


def assign_scopus_monolabel(periodical: int, embeddings, registry: PeriodicalRegistry,
                            k: int = MONOLABEL_NEIGHBORS, exclude=(MULTIDISCIPLINARY_ASJC,)) -> int | None:
    """Mono-label one periodical by majority vote of its k nearest peers.

    Neighbors are the k most cosine-similar periodicals in ``embeddings``
    (self excluded); only those carrying ASJC codes vote. None means the
    periodical is unlabelable.
    """
    from .sgns import cosine_top_k

    neigh = cosine_top_k(embeddings, periodical, k)
    return monolabel_from_neighbors((registry.asjc.get(int(t), ()) for t, _ in neigh), exclude)
