"""Analysis exports: label flow tables and interpolated similarity maps."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import SchemeLabeling
from .metrics import GridSpec, element_centric_similarity, idw_interpolate

log = logging.getLogger(__name__)

FLOW_FRACTION = 0.10
FLOW_CAP = 50
IDW_POWER = 2.0


def flow_threshold(n_source: int, fraction: float = FLOW_FRACTION, cap: float = FLOW_CAP) -> float:
    """Smallest journal count a flow needs to survive filtering."""
    return min(fraction * n_source, cap)


@dataclass
class SankeyFlowTable:
    source_scheme: str
    target_scheme: str
    rows: list[tuple[int, int, int]]          # (source_label, target_label, journal_count)
    totals: dict[int, int]                    # journals per source label
    filtered: list[tuple[int, int, int]]
    thresholds: dict[int, float] = field(default_factory=dict)

    def write(self, path, rows=None) -> None:
        rows = self.rows if rows is None else rows
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("source_label\ttarget_label\tjournal_count\n")
            for s, t, c in rows:
                fh.write(f"{s}\t{t}\t{c}\n")

    def crosstab(self) -> np.ndarray:
        ns = max((r[0] for r in self.rows), default=-1) + 1
        nt = max((r[1] for r in self.rows), default=-1) + 1
        tab = np.zeros((ns, nt), dtype=np.int64)
        for s, t, c in self.rows:
            tab[s, t] = c
        return tab


def _common(a: SchemeLabeling, b: SchemeLabeling):
    common = np.intersect1d(a.periodicals, b.periodicals)
    if len(common) == 0:
        raise ValueError(f"schemes {a.name!r} and {b.name!r} share no periodicals")
    return common, a.lookup(common), b.lookup(common)


def export_sankey(a: SchemeLabeling, b: SchemeLabeling, fraction: float = FLOW_FRACTION,
                  cap: float = FLOW_CAP) -> SankeyFlowTable:
    """Cross-tabulate two schemes over their shared periodicals.

    Flows with fewer than min(fraction * N_source, cap) journals are dropped
    from the filtered table; N_source counts the shared journals carrying
    that source label.
    """
    _, la, lb = _common(a, b)
    pairs, counts = np.unique(np.column_stack([la, lb]), axis=0, return_counts=True)
    rows = [(int(s), int(t), int(c)) for (s, t), c in zip(pairs, counts)]
    src, tot = np.unique(la, return_counts=True)
    totals = dict(zip(src.tolist(), tot.tolist()))
    thresholds = {s: flow_threshold(n, fraction, cap) for s, n in totals.items()}
    filtered = [r for r in rows if r[2] >= thresholds[r[0]]]
    return SankeyFlowTable(a.name, b.name, rows, totals, filtered, thresholds)


def write_sankey(table: SankeyFlowTable, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"sankey_{table.source_scheme}__{table.target_scheme}"
    paths = {"unfiltered": out / f"{stem}.tsv", "filtered": out / f"{stem}.filtered.tsv"}
    table.write(paths["unfiltered"])
    table.write(paths["filtered"], table.filtered)
    return paths


# ---------------------------------------------------------------------------
# similarity map


def load_coordinates(path, registry=None) -> dict[int, tuple[float, float]]:
    """Read ``periodical \\t x \\t y``; the key is a dense id or, with a registry, a name."""
    coords = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields")
            key = parts[0]
            if registry is not None:
                pid = registry.lookup(key)
                if pid is None:
                    continue
            else:
                pid = int(key)
            coords[pid] = (float(parts[1]), float(parts[2]))
    return coords


def pca_coordinates(embeddings) -> dict[int, tuple[float, float]]:
    """First two principal components of the embedding, signs fixed so each
    component's largest-magnitude loading is positive."""
    x = embeddings.vectors - embeddings.vectors.mean(axis=0)
    _, _, vt = np.linalg.svd(x, full_matrices=False)
    comps = vt[:2]
    flip = np.sign(comps[np.arange(len(comps)), np.argmax(np.abs(comps), axis=1)])
    flip[flip == 0] = 1
    xy = x @ (comps * flip[:, None]).T
    if xy.shape[1] < 2:
        xy = np.column_stack([xy, np.zeros(len(xy))])
    return {int(t): (float(a), float(b)) for t, (a, b) in zip(embeddings.tokens, xy)}


@dataclass
class SimilarityMap:
    periodicals: np.ndarray
    similarity: np.ndarray
    xy: np.ndarray
    grid: GridSpec
    values: np.ndarray            # (ny, nx)
    missing: list[int]
    power: float


def export_similarity_map(a: SchemeLabeling, b: SchemeLabeling, coordinates: dict,
                          grid: GridSpec | None = None, power: float = IDW_POWER,
                          alpha: float = 0.9, grid_size: int = 100) -> SimilarityMap:
    """Per-journal element-centric similarity, interpolated on a grid by IDW.

    Journals without coordinates are excluded from the map and counted in
    ``missing``.
    """
    common, la, lb = _common(a, b)
    sim = element_centric_similarity(la, lb, alpha)
    has = np.array([int(p) in coordinates for p in common], dtype=bool)
    missing = common[~has].tolist()
    if missing:
        log.warning("similarity map: %d journals lack coordinates and are excluded", len(missing))
    pts = common[has]
    if len(pts) == 0:
        raise ValueError("no journal has coordinates")
    xy = np.array([coordinates[int(p)] for p in pts], dtype=np.float64)
    if grid is None:
        grid = GridSpec.around(xy, grid_size)
    values = idw_interpolate(xy, sim[has], grid, power)
    return SimilarityMap(pts, sim[has], xy, grid, values, missing, power)


def write_similarity_map(sm: SimilarityMap, out_dir, names=None) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"journals": out / "similarity_journals.tsv", "grid": out / "similarity_grid.tsv",
             "meta": out / "similarity_grid.json"}
    with open(paths["journals"], "w", encoding="utf-8") as fh:
        fh.write("periodical\tname\tx\ty\tsimilarity\n")
        for p, (x, y), s in zip(sm.periodicals, sm.xy, sm.similarity):
            name = names(int(p)) if names else ""
            fh.write(f"{p}\t{name}\t{x!r}\t{y!r}\t{float(s)!r}\n")
    xs, ys = sm.grid.axes()
    with open(paths["grid"], "w", encoding="utf-8") as fh:
        fh.write("x\ty\tvalue\n")
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                fh.write(f"{float(x)!r}\t{float(y)!r}\t{float(sm.values[j, i])!r}\n")
    g = sm.grid
    meta = {"xmin": g.xmin, "xmax": g.xmax, "ymin": g.ymin, "ymax": g.ymax, "nx": g.nx, "ny": g.ny,
            "power": sm.power, "journals": int(len(sm.periodicals)), "missing_coordinates": len(sm.missing)}
    with open(paths["meta"], "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
    return paths
