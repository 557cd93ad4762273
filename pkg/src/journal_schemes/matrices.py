"""Periodical-level citation and co-citation matrices.

Rows and columns cover only the periodicals that take part in at least one
counted relation, so the citation and co-citation matrices built from the
same graph generally differ in dimension. ``PeriodicalMatrix.periodicals``
maps row index back to the registry id.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .data import CitationGraph

CITATION = "citation"
COCITATION = "co-citation"
ROW_NORMALIZED = "row-normalized"


@dataclass
class PeriodicalMatrix:
    matrix: sp.csr_matrix
    kind: str
    periodicals: np.ndarray
    zero_rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    base_kind: str | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def row(self, i: int) -> np.ndarray:
        return self.matrix.getrow(i).toarray().ravel()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def position(self) -> dict[int, int]:
        return {int(p): i for i, p in enumerate(self.periodicals)}

    def save(self, path) -> None:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", encoding="utf-8") as fh:
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
                val = str(int(v)) if self.kind != ROW_NORMALIZED else repr(float(v))
                fh.write(f"{r}\t{c}\t{val}\n")
        sidecar = {
            "dimension": self.dimension,
            "kind": self.kind,
            "base_kind": self.base_kind,
            "zero_rows": [int(x) for x in self.zero_rows],
            "periodicals": [int(x) for x in self.periodicals],
        }
        with open(f"{path}.json", "w", encoding="utf-8") as fh:
            json.dump(sidecar, fh, indent=1)

    @classmethod
    def load(cls, path) -> "PeriodicalMatrix":
        with open(f"{path}.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        n = meta["dimension"]
        rows, cols, vals = [], [], []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                r, c, v = line.split("\t")
                rows.append(int(r))
                cols.append(int(c))
                vals.append(float(v))
        dtype = np.float64 if meta["kind"] == ROW_NORMALIZED else np.int64
        m = sp.csr_matrix((np.asarray(vals, dtype=dtype), (rows, cols)), shape=(n, n))
        return cls(m, meta["kind"], np.asarray(meta["periodicals"], dtype=np.int64),
                   np.asarray(meta["zero_rows"], dtype=np.int64), meta.get("base_kind"))


def _compact(rows: np.ndarray, cols: np.ndarray):
    """Map periodical ids in use onto 0..n-1."""
    used = np.unique(np.concatenate([rows, cols]))
    return used, np.searchsorted(used, rows), np.searchsorted(used, cols)


def build_citation_matrix(graph: CitationGraph) -> PeriodicalMatrix:
    """E[i, j] = number of paper citations from periodical i to periodical j."""
    edges = graph.edges()
    src = graph.periodical[edges[:, 0]]
    dst = graph.periodical[edges[:, 1]]
    used, r, c = _compact(src, dst)
    n = len(used)
    m = sp.coo_matrix((np.ones(len(r), dtype=np.int64), (r, c)), shape=(n, n)).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return PeriodicalMatrix(m, CITATION, used)


def build_cocitation_matrix(graph: CitationGraph) -> PeriodicalMatrix:
    """E[i, j] = number of citing papers whose references span both i and j.

    Each citing paper contributes at most one to any pair, however many of
    its references fall in either periodical. The diagonal is zero.
    """
    edges = graph.edges()
    citing = edges[:, 0]
    venue = graph.periodical[edges[:, 1]]
    if len(citing) == 0:
        return PeriodicalMatrix(sp.csr_matrix((0, 0), dtype=np.int64), COCITATION, np.zeros(0, dtype=np.int64))
    # paper x periodical incidence, binarized
    _, prow = np.unique(citing, return_inverse=True)
    vused, vcol = np.unique(venue, return_inverse=True)
    inc = sp.coo_matrix((np.ones(len(prow), dtype=np.int64), (prow, vcol)),
                        shape=(prow.max() + 1, len(vused))).tocsr()
    inc.sum_duplicates()
    inc.data[:] = 1
    co = (inc.T @ inc).tocsr()
    co.setdiag(0)
    co.eliminate_zeros()
    # keep only periodicals that appear in some pair
    deg = np.asarray(co.getnnz(axis=1)).ravel()
    keep = np.flatnonzero(deg > 0)
    co = co[keep][:, keep].tocsr()
    co.sort_indices()
    return PeriodicalMatrix(co.astype(np.int64), COCITATION, vused[keep])


def row_normalize(pm: PeriodicalMatrix) -> PeriodicalMatrix:
    m = pm.matrix.astype(np.float64).tocsr()
    sums = np.asarray(m.sum(axis=1)).ravel()
    zero = np.flatnonzero(sums == 0)
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
    out = sp.diags(scale) @ m
    out = out.tocsr()
    out.sort_indices()
    return PeriodicalMatrix(out, ROW_NORMALIZED, pm.periodicals.copy(), zero, base_kind=pm.kind)
