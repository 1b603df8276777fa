"""Per-sample scoring rules: binary (BSR), density (DSR), coverage (CSR) and
probabilistic (PSR), plus the shared threshold radius used by PSR.

All ball tests are closed: a point at distance exactly ``r`` is inside
``B(x, r)``.  Every score is computed per query row, chunked over query rows
and reduced over reference rows in index order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embed_io import EmbeddingError
from .nn import ChunkPlan, DistanceSource, KnnRadii, knn_radii, map_row_chunks

__all__ = [
    "RULES",
    "ScoreVector",
    "ThresholdRadius",
    "bsr_scores",
    "csr_scores",
    "dsr_scores",
    "membership_prob",
    "nonmembership",
    "psr_scores",
    "threshold_radius",
]

RULES = ("BSR", "DSR", "CSR", "PSR")


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    rule: str

    def __len__(self) -> int:
        return len(self.scores)

    def __array__(self, dtype=None, copy=None):
        return self.scores if dtype is None else self.scores.astype(dtype)

    def mean(self) -> float:
        return float(np.mean(self.scores))


@dataclass(frozen=True)
class ThresholdRadius:
    """Global PSR kernel width: ``a`` times the mean k-NN radius of a reference set."""

    value: float
    a: float
    k: int
    label: str = ""

    def __post_init__(self):
        if not self.value >= 0 or not np.isfinite(self.value):
            raise ValueError(f"threshold radius must be finite and >= 0, got {self.value}")

    def __float__(self) -> float:
        return float(self.value)


def threshold_radius(ref, k: int, a: float, plan: ChunkPlan | None = None,
                     threads: int | None = None) -> ThresholdRadius:
    if not a > 0:
        raise ValueError(f"a must be > 0, got {a}")
    mean = knn_radii(ref, k, plan, threads).mean()
    return ThresholdRadius(a * mean, float(a), int(k), getattr(ref, "label", ""))


def _radius_value(R) -> float:
    return float(R.value if isinstance(R, ThresholdRadius) else R)


def membership_prob(d, R):
    """Probability that a point at distance ``d`` lies in a reference subsupport.

    Linear decay ``1 - d/R`` inside the threshold and 0 beyond it.  With
    ``R == 0`` only exact coincidence (``d == 0``) counts.  Accepts scalars or
    arrays.
    """
    r = _radius_value(R)
    if r < 0:
        raise ValueError(f"threshold radius must be >= 0, got {r}")
    d_arr = np.asarray(d, dtype=np.float64)
    if np.any(d_arr < 0):
        raise ValueError("distance must be non-negative")
    if r == 0:
        out = np.where(d_arr == 0, 1.0, 0.0)
    else:
        out = np.where(d_arr <= r, 1.0 - d_arr / r, 0.0)
    return float(out) if out.ndim == 0 else out


def nonmembership(d: np.ndarray, r: float) -> np.ndarray:
    """``1 - membership_prob`` for a block of distances (no validation)."""
    if r == 0:
        return np.where(d == 0, 0.0, 1.0)
    # 1 - (1 - d/r) inside the threshold, 1 beyond it.
    with np.errstate(over="ignore"):
        out = np.divide(d, r)
    return np.minimum(out, 1.0, out=out)


def _radii_array(radii, n_ref: int) -> tuple[np.ndarray, int | None]:
    if isinstance(radii, KnnRadii):
        arr, k = radii.radii, radii.k
    else:
        arr, k = np.asarray(radii, dtype=np.float64), None
    if arr.shape != (n_ref,):
        raise EmbeddingError(f"radii length {arr.shape[0] if arr.ndim else 0} != reference size {n_ref}")
    return arr, k


def _per_query(src: DistanceSource, plan, threads, init, update, finish=None) -> np.ndarray:
    """Row-chunked reduction of distance blocks over reference column chunks.

    ``update(acc, block, r0, c0, c1)`` returns the new accumulator, or ``None``
    to stop scanning further columns; in that case it must have updated
    ``acc`` in place.
    """
    plan = plan or ChunkPlan()
    m = src.b.shape[0]

    def chunk(r0: int, r1: int):
        acc = init(r1 - r0)
        for c0, c1 in plan.cols(m):
            nxt = update(acc, src.block(r0, r1, c0, c1), r0, c0, c1)
            if nxt is None:
                break
            acc = nxt
        return acc if finish is None else finish(acc)

    return np.concatenate(map_row_chunks(chunk, src.a.shape[0], plan, threads))


def bsr_scores(query, ref, radii, plan: ChunkPlan | None = None,
               threads: int | None = None) -> ScoreVector:
    """1 where a query falls inside the union of the reference k-NN balls."""
    src = DistanceSource(query, ref)
    r, _ = _radii_array(radii, src.b.shape[0])

    def update(hit, d, r0, c0, c1):
        hit |= np.any(d <= r[None, c0:c1], axis=1)
        return None if hit.all() else hit

    hits = _per_query(src, plan, threads, lambda n: np.zeros(n, dtype=bool), update)
    return ScoreVector(hits.astype(np.float64), "BSR")


def dsr_scores(query, ref, radii, k: int | None = None, plan: ChunkPlan | None = None,
               threads: int | None = None) -> ScoreVector:
    """Number of reference k-NN balls containing each query, divided by k."""
    src = DistanceSource(query, ref)
    r, radii_k = _radii_array(radii, src.b.shape[0])
    if k is None:
        if radii_k is None:
            raise ValueError("k is required when radii is a plain array")
        k = radii_k
    elif radii_k is not None and radii_k != k:
        raise ValueError(f"k={k} does not match radii computed with k={radii_k}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    def update(count, d, r0, c0, c1):
        return count + np.count_nonzero(d <= r[None, c0:c1], axis=1)

    counts = _per_query(src, plan, threads, lambda n: np.zeros(n, dtype=np.int64), update)
    return ScoreVector(counts / float(k), "DSR")


def csr_scores(realset, radii, fakeset, plan: ChunkPlan | None = None,
               threads: int | None = None) -> ScoreVector:
    """1 where a real sample's own k-NN ball holds at least one fake sample."""
    src = DistanceSource(realset, fakeset)
    r, _ = _radii_array(radii, src.a.shape[0])

    def update(hit, d, r0, c0, c1):
        hit |= d.min(axis=1) <= r[r0:r0 + len(hit)]
        return None if hit.all() else hit

    hits = _per_query(src, plan, threads, lambda n: np.zeros(n, dtype=bool), update)
    return ScoreVector(hits.astype(np.float64), "CSR")


def psr_scores(query, ref, R, plan: ChunkPlan | None = None,
               threads: int | None = None) -> ScoreVector:
    """``1 - prod_i (1 - membership_prob(d(query, ref_i), R))`` per query."""
    src = DistanceSource(query, ref)
    r = _radius_value(R)
    if r < 0:
        raise ValueError(f"threshold radius must be >= 0, got {r}")

    def update(prod, d, r0, c0, c1):
        prod *= np.prod(nonmembership(d, r), axis=1)
        return None if not prod.any() else prod

    prods = _per_query(src, plan, threads, lambda n: np.ones(n), update)
    return ScoreVector(1.0 - prods, "PSR")
