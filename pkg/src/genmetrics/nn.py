"""Chunked Euclidean distances and k-nearest-neighbour radii.

Distances use the expanded form ``|a|^2 + |b|^2 - 2 a.b`` so each block is a
matrix product; both inputs are first shifted by the query-set mean.  The radicand is clamped at zero, and entries whose squared
distance is tiny relative to the norms (where cancellation dominates) are
recomputed from explicit differences of the original rows.  Coincident rows therefore get a
distance of exactly 0.

Work is split into row chunks.  Each chunk is computed independently and
written to its own output slot, so results do not depend on the number of
threads; only the :class:`ChunkPlan` can change the last bits.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, TypeVar

import numpy as np

from .embed_io import EmbeddingError, as_matrix

__all__ = [
    "ChunkPlan",
    "KnnRadii",
    "default_threads",
    "knn_radii",
    "knn_radii_multi",
    "map_row_chunks",
    "mean_knn_radius",
    "pairwise_block",
    "sq_norms",
]

T = TypeVar("T")

# Relative size of a squared distance, compared to |a|^2 + |b|^2, below which
# the expanded form is replaced by an explicit difference.
REFINE_RTOL = 1e-6


@dataclass(frozen=True)
class ChunkPlan:
    row_chunk: int = 1024
    col_chunk: int | None = None  # None: all columns in one block

    def __post_init__(self):
        if self.row_chunk < 1:
            raise ValueError(f"row_chunk must be >= 1, got {self.row_chunk}")
        if self.col_chunk is not None and self.col_chunk < 1:
            raise ValueError(f"col_chunk must be >= 1, got {self.col_chunk}")

    def rows(self, n: int) -> list[tuple[int, int]]:
        return [(r, min(r + self.row_chunk, n)) for r in range(0, n, self.row_chunk)]

    def cols(self, m: int) -> list[tuple[int, int]]:
        step = m if self.col_chunk is None else self.col_chunk
        return [(c, min(c + step, m)) for c in range(0, m, max(step, 1))]


DEFAULT_PLAN = ChunkPlan()


def default_threads() -> int:
    env = os.environ.get("GENMETRICS_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"GENMETRICS_THREADS must be an integer, got {env!r}") from None
        if value >= 1:
            return value
    return os.cpu_count() or 1


def map_row_chunks(
    fn: Callable[[int, int], T],
    n_rows: int,
    plan: ChunkPlan | None = None,
    threads: int | None = None,
) -> list[T]:
    """Apply ``fn(r0, r1)`` to every row chunk; results come back in chunk order."""
    spans = (plan or DEFAULT_PLAN).rows(n_rows)
    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(spans) == 1:
        return [fn(r0, r1) for r0, r1 in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda span: fn(*span), spans))


def sq_norms(a: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, a)


def _distances(a, a_sq, b, b_sq, a_raw, b_raw) -> np.ndarray:
    # Scaling by -2 is exact, so folding it into the small operand is free.
    sq = (-2.0 * a) @ b.T
    sq += a_sq[:, None]
    sq += b_sq[None, :]
    np.maximum(sq, 0.0, out=sq)
    # Per-row bound using the largest column norm: a superset of the entries
    # whose squared distance is within REFINE_RTOL of |a|^2 + |b|^2.
    bound = REFINE_RTOL * (a_sq + (b_sq.max() if b_sq.size else 0.0))
    ii, jj = np.nonzero(sq <= bound[:, None])
    if ii.size:
        diff = a_raw[ii] - b_raw[jj]
        sq[ii, jj] = np.einsum("ij,ij->i", diff, diff)
    return np.sqrt(sq, out=sq)


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[1] != b.shape[1]:
        raise EmbeddingError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")


class DistanceSource:
    """Matrix pair with cached squared norms, serving distance blocks."""

    def __init__(self, a, b=None):
        a = as_matrix(a)
        # Shifting to the query mean keeps |a|^2 and |b|^2 small, which is
        # what the expanded form's accuracy depends on.  The shift ignores
        # the reference rows, so adding one never perturbs other distances.
        center = a.mean(axis=0)
        self.a_raw = a
        self.a = a - center
        self.a_sq = sq_norms(self.a)
        if b is None:
            self.b, self.b_sq, self.b_raw = self.a, self.a_sq, a
            return
        b = as_matrix(b)
        _check_dims(a, b)
        self.b_raw = b
        self.b = b - center
        self.b_sq = sq_norms(self.b)

    def block(self, r0: int, r1: int, c0: int = 0, c1: int | None = None) -> np.ndarray:
        c1 = self.b.shape[0] if c1 is None else c1
        return _distances(self.a[r0:r1], self.a_sq[r0:r1], self.b[c0:c1], self.b_sq[c0:c1],
                          self.a_raw[r0:r1], self.b_raw[c0:c1])


def pairwise_block(A, B, rows: tuple[int, int] | None = None) -> np.ndarray:
    """Euclidean distances between rows ``rows`` of ``A`` and every row of ``B``.

    Returns a ``(r1 - r0) x M`` float64 array; all rows of ``A`` by default.
    """
    src = DistanceSource(A, B)
    r0, r1 = rows if rows is not None else (0, src.a.shape[0])
    if not 0 <= r0 <= r1 <= src.a.shape[0]:
        raise IndexError(f"row range [{r0}, {r1}) outside [0, {src.a.shape[0]})")
    return src.block(r0, r1)


@dataclass(frozen=True)
class KnnRadii:
    """Distance from each sample to its k-th nearest neighbour (self excluded)."""

    radii: np.ndarray
    k: int
    source_n: int

    def __post_init__(self):
        if self.radii.shape != (self.source_n,):
            raise ValueError("radii length must equal source_n")
        if self.k < 1 or self.k > self.source_n - 1:
            raise ValueError(f"k={self.k} invalid for N={self.source_n}")

    def __len__(self) -> int:
        return self.source_n

    def mean(self) -> float:
        # Sequential left-to-right sum keeps the value independent of numpy's
        # pairwise summation blocking.
        return float(np.add.accumulate(self.radii)[-1]) / self.source_n


def _validate_k(k: int, n: int) -> None:
    if isinstance(k, bool) or int(k) != k:
        raise ValueError(f"k must be an integer, got {k!r}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= n:
        raise ValueError(f"k={k} requires at least {k + 1} samples, got N={n}")


def knn_radii_multi(
    X,
    ks: Iterable[int],
    plan: ChunkPlan | None = None,
    threads: int | None = None,
) -> dict[int, KnnRadii]:
    """k-th nearest-neighbour radii for several ``k`` from one distance pass.

    Per row, the ``max(ks)`` smallest distances to other rows are kept while
    streaming over column chunks; ties count with multiplicity.
    """
    ks = sorted({int(k) for k in ks})
    if not ks:
        raise ValueError("at least one k is required")
    src = DistanceSource(X)
    n = src.a.shape[0]
    for k in ks:
        _validate_k(k, n)
    kmax = ks[-1]
    plan = plan or DEFAULT_PLAN

    def chunk(r0: int, r1: int) -> np.ndarray:
        best = np.empty((r1 - r0, 0))
        rows = np.arange(r0, r1)
        for c0, c1 in plan.cols(n):
            d = src.block(r0, r1, c0, c1)
            own = (rows >= c0) & (rows < c1)
            d[own.nonzero()[0], rows[own] - c0] = np.inf
            cand = np.concatenate([best, d], axis=1) if best.shape[1] else d
            keep = min(kmax, cand.shape[1])
            if cand.shape[1] > keep:
                cand = np.partition(cand, keep - 1, axis=1)[:, :keep]
            best = cand
        best.sort(axis=1)
        return best

    best = np.concatenate(map_row_chunks(chunk, n, plan, threads), axis=0)
    return {k: KnnRadii(np.ascontiguousarray(best[:, k - 1]), k, n) for k in ks}


def knn_radii(X, k: int, plan: ChunkPlan | None = None, threads: int | None = None) -> KnnRadii:
    """Distance from every row of ``X`` to its k-th nearest other row."""
    return knn_radii_multi(X, [k], plan, threads)[int(k)]


def mean_knn_radius(X, k: int, plan: ChunkPlan | None = None, threads: int | None = None) -> float:
    return knn_radii(X, k, plan, threads).mean()


