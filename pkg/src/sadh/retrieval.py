"""Hamming ranking and retrieval metrics (AP/MAP, PR curves, topK precision)."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import batch_similarity
from .errors import DataError, DimensionError
from .linalg import pack_codes, packed_hamming, sign_binarize
from .nn import MlpNetwork, forward


@dataclass(frozen=True)
class TrainedHashModel:
    net: MlpNetwork

    @property
    def K(self) -> int:
        return self.net.K

    def hash_outputs(self, features) -> np.ndarray:
        return forward(self.net, features).H

    def codes(self, features) -> np.ndarray:
        return sign_binarize(self.hash_outputs(features))


@dataclass(frozen=True, eq=False)
class CodeDatabase:
    packed: np.ndarray
    K: int
    ids: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        if len(np.unique(self.ids)) != len(self.ids):
            raise DataError("database ids must be unique")
        if self.packed.shape[1] != (self.K + 7) // 8:
            raise DimensionError("packed width does not match K")

    @classmethod
    def from_codes(cls, codes, ids=None, labels=None) -> "CodeDatabase":
        codes = np.atleast_2d(np.asarray(codes, dtype=np.float64))
        ids = np.arange(len(codes)) if ids is None else np.asarray(ids)
        return cls(pack_codes(codes), codes.shape[1], ids, None if labels is None else np.asarray(labels))

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other):
        if not isinstance(other, CodeDatabase):
            return NotImplemented
        same_labels = (self.labels is None and other.labels is None) or (
            self.labels is not None and other.labels is not None
            and np.array_equal(self.labels, other.labels)
        )
        return (self.K == other.K and np.array_equal(self.packed, other.packed)
                and np.array_equal(self.ids, other.ids) and same_labels)


def encode(model, features, ids=None, labels=None) -> CodeDatabase:
    if isinstance(model, MlpNetwork):
        model = TrainedHashModel(model)
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if features.shape[1] != model.net.input_dim:
        raise DimensionError(f"feature width {features.shape[1]} != model input {model.net.input_dim}")
    return CodeDatabase.from_codes(model.codes(features), ids=ids, labels=labels)


def _query_packed(query, db: CodeDatabase) -> np.ndarray:
    q = np.asarray(query)
    if q.dtype == np.uint8 and q.shape[-1] == db.packed.shape[1]:
        return q.reshape(-1)
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.size != db.K:
        raise DimensionError(f"query has {q.size} bits, database K={db.K}")
    return pack_codes(q[None, :])[0]


def hamming_to_db(query, db: CodeDatabase) -> np.ndarray:
    return packed_hamming(_query_packed(query, db), db.packed)


def rank_positions(dist: np.ndarray, ids: np.ndarray, K: int) -> np.ndarray:
    """Positions into the database in ascending (distance, id) order.

    Bucket (counting) sort over the K+1 possible distances; inside a bucket
    positions keep ascending-id order.
    """
    by_id = np.argsort(ids, kind="stable")
    d = dist[by_id]
    return np.concatenate([by_id[d == r] for r in range(K + 1)])


def rank(query, db: CodeDatabase) -> np.ndarray:
    """Database ids ordered by Hamming distance, ties by ascending id."""
    dist = hamming_to_db(query, db)
    return db.ids[rank_positions(dist, db.ids, db.K)]


def average_precision(relevance, cutoff: int | None = None) -> float:
    """AP of a ranked relevance list, normalized by relevant items within the cutoff.

    Returns 0.0 when nothing relevant is retrieved within the cutoff.
    """
    rel = np.asarray(relevance, dtype=np.float64).reshape(-1)
    if rel.size == 0:
        raise DataError("empty ranking")
    if cutoff is not None:
        if cutoff < 1:
            raise DataError("cutoff must be positive")
        rel = rel[:cutoff]
    n_rel = rel.sum()
    if n_rel == 0:
        return 0.0
    prec = np.cumsum(rel) / np.arange(1, rel.size + 1)
    return float((prec * rel).sum() / n_rel)


def _relevance(query_labels, db: CodeDatabase) -> np.ndarray:
    if db.labels is None:
        raise DataError("database carries no labels; relevance is undefined")
    return batch_similarity(query_labels, db.labels)


@dataclass
class RetrievalRun:
    rankings: np.ndarray = field(repr=False)
    relevance: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)
    evaluable: np.ndarray = field(repr=False)
    K: int
    cutoff: int | None
    map: float
    ap: np.ndarray = field(repr=False, default=None)

    @property
    def n_queries(self) -> int:
        return len(self.evaluable)

    @property
    def n_skipped(self) -> int:
        return int((~self.evaluable).sum())

    def pr_curve(self, mode: str = "radius") -> list[tuple[float, float]]:
        return pr_curve_from(self, mode)

    def topk_precision(self, k_grid) -> list[tuple[int, float]]:
        return topk_from(self, k_grid)


def retrieve(query_codes, query_labels, db: CodeDatabase, cutoff: int | None = None) -> RetrievalRun:
    """Rank the database for every query and compute MAP.

    Queries with no relevant database item are excluded from every
    average; an all-excluded run raises :class:`DataError`.
    """
    query_codes = np.atleast_2d(np.asarray(query_codes))
    if query_codes.dtype != np.uint8:
        if query_codes.shape[1] != db.K:
            raise DimensionError(f"query codes have {query_codes.shape[1]} bits, database K={db.K}")
        packed = pack_codes(query_codes)
    else:
        packed = query_codes
    if cutoff is not None and cutoff > len(db):
        raise DataError(f"cutoff {cutoff} exceeds database size {len(db)}")
    rel_all = _relevance(query_labels, db)
    nq = len(packed)
    ranks = np.empty((nq, len(db)), dtype=np.int64)
    rel = np.empty((nq, len(db)))
    dists = np.empty((nq, len(db)), dtype=np.int64)
    for q in range(nq):
        dist = packed_hamming(packed[q], db.packed)
        pos = rank_positions(dist, db.ids, db.K)
        ranks[q] = db.ids[pos]
        rel[q] = rel_all[q, pos]
        dists[q] = dist[pos]
    evaluable = rel_all.sum(axis=1) > 0
    if not evaluable.any():
        raise DataError("no query has a relevant database item")
    ap = np.array([average_precision(rel[q], cutoff) for q in range(nq)])
    return RetrievalRun(ranks, rel, dists, evaluable, db.K, cutoff,
                        float(ap[evaluable].mean()), ap)


def mean_ap(query_codes, query_labels, db: CodeDatabase, cutoff: int | None = None) -> float:
    return retrieve(query_codes, query_labels, db, cutoff).map


def pr_curve_from(run: RetrievalRun, mode: str = "radius") -> list[tuple[float, float]]:
    """Mean (recall, precision) points over evaluable queries.

    ``radius``: one point per Hamming radius 0..K, retrieving everything
    within the radius; queries retrieving nothing at a radius are left out
    of that radius's precision mean, and radii where no query retrieves
    anything are dropped. ``rank``: one point per list depth 1..N.
    """
    rel = run.relevance[run.evaluable]
    dist = run.distances[run.evaluable]
    total_rel = rel.sum(axis=1)
    points = []
    if mode == "radius":
        for r in range(run.K + 1):
            within = dist <= r
            n_ret = within.sum(axis=1)
            hits = (rel * within).sum(axis=1)
            got = n_ret > 0
            if not got.any():
                continue
            precision = float((hits[got] / n_ret[got]).mean())
            recall = float((hits / total_rel).mean())
            points.append((recall, precision))
    elif mode == "rank":
        hits = np.cumsum(rel, axis=1)
        depth = np.arange(1, rel.shape[1] + 1)
        prec = (hits / depth).mean(axis=0)
        rec = (hits / total_rel[:, None]).mean(axis=0)
        points = [(float(a), float(b)) for a, b in zip(rec, prec)]
    else:
        raise ValueError(f"unknown PR mode {mode!r}")
    return points


def topk_from(run: RetrievalRun, k_grid) -> list[tuple[int, float]]:
    rel = run.relevance[run.evaluable]
    hits = np.cumsum(rel, axis=1)
    out = []
    for k in k_grid:
        k = int(k)
        if k < 1:
            raise DataError("topK values must be positive")
        kk = min(k, rel.shape[1])
        out.append((k, float((hits[:, kk - 1] / kk).mean())))
    return out


def pr_curve(query_codes, query_labels, db, mode: str = "radius"):
    return pr_curve_from(retrieve(query_codes, query_labels, db), mode)


def topk_precision(query_codes, query_labels, db, k_grid=None):
    if k_grid is None:
        k_grid = default_k_grid(len(db))
    return topk_from(retrieve(query_codes, query_labels, db), k_grid)


def default_k_grid(n_db: int, top: int = 1000) -> list[int]:
    grid = [1, 5, 10, 20, 50, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000]
    return [k for k in grid if k <= min(top, n_db)]


# --- export ------------------------------------------------------------------

def write_metrics(run: RetrievalRun, out_dir, k_grid, extra: dict | None = None,
                  pr_mode: str = "radius", prefix: str = "") -> dict:
    """Write ``pr_curve.csv``, ``topk.csv`` and ``summary.json`` under ``out_dir``.

    CSV columns are ``radius_or_depth,recall,precision`` and ``k,precision``;
    floats use ``repr`` so reruns are byte-identical.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pr = pr_curve_from(run, pr_mode)
    with open(out_dir / f"{prefix}pr_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point", "recall", "precision"])
        for i, (r, p) in enumerate(pr):
            w.writerow([i, repr(r), repr(p)])
    topk = topk_from(run, k_grid)
    with open(out_dir / f"{prefix}topk.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "precision"])
        for k, p in topk:
            w.writerow([k, repr(p)])
    summary = {
        "map": run.map,
        "cutoff": run.cutoff if run.cutoff is not None else "ALL",
        "K": run.K,
        "n_queries": run.n_queries,
        "n_skipped_queries": run.n_skipped,
        "pr_mode": pr_mode,
    }
    if extra:
        summary.update(extra)
    with open(out_dir / f"{prefix}summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
