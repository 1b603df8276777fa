"""Fidelity/diversity metric pairs built on the scoring rules.

=======  ==================  ==================  ===========
family   fidelity            diversity           default k
=======  ==================  ==================  ===========
ipr      improved precision  improved recall     3
dc       density             coverage            5
pppr     P-precision         P-recall            4 (a=1.2)
=======  ==================  ==================  ===========

``real`` is always the reference sample set X and ``fake`` the evaluated set Y.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .embed_io import EmbeddingError, as_matrix
from .nn import ChunkPlan, DistanceSource, knn_radii, knn_radii_multi, map_row_chunks
from .scoring import (
    bsr_scores,
    csr_scores,
    dsr_scores,
    nonmembership,
    psr_scores,
    threshold_radius,
)

__all__ = [
    "DEFAULT_K",
    "FAMILIES",
    "FAMILY_METRICS",
    "GapResult",
    "MetricConfig",
    "MetricReport",
    "compute_report",
    "coverage",
    "density",
    "evaluate",
    "f1",
    "improved_precision",
    "improved_recall",
    "p_precision",
    "p_recall",
    "scoring_gap",
]

FAMILIES = ("ipr", "dc", "pppr")
FAMILY_METRICS = {"ipr": ("ip", "ir"), "dc": ("density", "coverage"), "pppr": ("pp", "pr")}
DEFAULT_K = {"ipr": 3, "dc": 5, "pppr": 4}
DEFAULT_A = 1.2


@dataclass(frozen=True)
class MetricConfig:
    family: str = "pppr"
    k: int | None = None
    a: float = DEFAULT_A
    plan: ChunkPlan = field(default_factory=ChunkPlan)
    threads: int | None = None

    def __post_init__(self):
        family = self.family.lower()
        if family not in FAMILIES:
            raise ValueError(f"unknown metric family {self.family!r}; expected one of {FAMILIES}")
        object.__setattr__(self, "family", family)
        if self.k is None:
            object.__setattr__(self, "k", DEFAULT_K[family])
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        if not self.a > 0:
            raise ValueError(f"a must be > 0, got {self.a}")

    def with_family(self, family: str) -> "MetricConfig":
        return replace(self, family=family, k=None)


def _cfg(cfg: MetricConfig | None, family: str) -> MetricConfig:
    if cfg is None:
        return MetricConfig(family)
    return cfg


def _check_pair(real, fake):
    x, y = as_matrix(real), as_matrix(fake)
    if x.shape[1] != y.shape[1]:
        raise EmbeddingError(f"dimension mismatch: real has D={x.shape[1]}, fake has D={y.shape[1]}")
    return x, y


def improved_precision(real, fake, cfg: MetricConfig | None = None) -> float:
    """Fraction of fake samples inside the union of real k-NN balls."""
    cfg = _cfg(cfg, "ipr")
    x, y = _check_pair(real, fake)
    radii = knn_radii(x, cfg.k, cfg.plan, cfg.threads)
    return bsr_scores(y, x, radii, cfg.plan, cfg.threads).mean()


def improved_recall(real, fake, cfg: MetricConfig | None = None) -> float:
    """Fraction of real samples inside the union of fake k-NN balls."""
    return improved_precision(fake, real, _cfg(cfg, "ipr"))


def density(real, fake, cfg: MetricConfig | None = None) -> float:
    cfg = _cfg(cfg, "dc")
    x, y = _check_pair(real, fake)
    radii = knn_radii(x, cfg.k, cfg.plan, cfg.threads)
    return dsr_scores(y, x, radii, cfg.k, cfg.plan, cfg.threads).mean()


def coverage(real, fake, cfg: MetricConfig | None = None) -> float:
    cfg = _cfg(cfg, "dc")
    x, y = _check_pair(real, fake)
    radii = knn_radii(x, cfg.k, cfg.plan, cfg.threads)
    return csr_scores(x, radii, y, cfg.plan, cfg.threads).mean()


def p_precision(real, fake, cfg: MetricConfig | None = None) -> float:
    """Mean probabilistic score of fake samples against the real support."""
    cfg = _cfg(cfg, "pppr")
    x, y = _check_pair(real, fake)
    R = threshold_radius(x, cfg.k, cfg.a, cfg.plan, cfg.threads)
    return psr_scores(y, x, R, cfg.plan, cfg.threads).mean()


def p_recall(real, fake, cfg: MetricConfig | None = None) -> float:
    return p_precision(fake, real, _cfg(cfg, "pppr"))


def f1(fidelity: float, diversity: float) -> float:
    """Harmonic mean; also applied as-is when density exceeds 1."""
    if fidelity < 0 or diversity < 0:
        raise ValueError(f"f1 needs non-negative inputs, got {fidelity}, {diversity}")
    total = fidelity + diversity
    return 0.0 if total == 0 else 2.0 * fidelity * diversity / total


_PAIRS = {
    "ipr": (improved_precision, improved_recall),
    "dc": (density, coverage),
    "pppr": (p_precision, p_recall),
}


def _fmt(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


@dataclass(frozen=True)
class MetricReport:
    family: str
    fidelity: float
    diversity: float
    f1: float
    config: MetricConfig
    n_real: int
    n_fake: int
    seconds: float = 0.0

    KEYS = ("family", "fidelity", "diversity", "f1", "k", "a", "n_real", "n_fake", "seconds")

    @property
    def k(self) -> int:
        return self.config.k

    @property
    def a(self) -> float | None:
        return self.config.a if self.family == "pppr" else None

    @property
    def metric_names(self) -> tuple[str, str]:
        return FAMILY_METRICS[self.family]

    def as_row(self) -> list:
        return [getattr(self, key) for key in self.KEYS]

    def to_dict(self) -> dict:
        return dict(zip(self.KEYS, self.as_row()))

    def to_json(self) -> str:
        """Fixed key order, floats with 17 significant digits."""
        parts = [f'"family": {json.dumps(self.family)}']
        parts += [f'"{key}": {_fmt(getattr(self, key))}' for key in self.KEYS[1:]]
        return "{" + ", ".join(parts) + "}"

    def to_csv_row(self) -> str:
        row = self.as_row()
        return ",".join([row[0]] + ["" if v is None else _fmt(v) for v in row[1:]])


def compute_report(real, fake, family: str | None = None, cfg: MetricConfig | None = None) -> MetricReport:
    """Fidelity, diversity and F1 for one metric family."""
    if cfg is None:
        cfg = MetricConfig(family or "pppr")
    elif family is not None and family.lower() != cfg.family:
        cfg = cfg.with_family(family)
    x, y = _check_pair(real, fake)
    fid_fn, div_fn = _PAIRS[cfg.family]
    start = time.perf_counter()
    fid = fid_fn(x, y, cfg)
    div = div_fn(x, y, cfg)
    seconds = time.perf_counter() - start
    return MetricReport(cfg.family, fid, div, f1(fid, div), cfg, x.shape[0], y.shape[0], seconds)


@dataclass(frozen=True)
class GapResult:
    """Per-fake-sample PSR, max-normalised DSR and their difference."""

    psr: np.ndarray
    dsr_norm: np.ndarray
    gap: np.ndarray
    order: np.ndarray  # indices by descending gap, ties by index


def scoring_gap(real, fake, cfg_pppr: MetricConfig | None = None,
                cfg_dc: MetricConfig | None = None) -> GapResult:
    cfg_pppr = _cfg(cfg_pppr, "pppr")
    cfg_dc = _cfg(cfg_dc, "dc")
    x, y = _check_pair(real, fake)
    R = threshold_radius(x, cfg_pppr.k, cfg_pppr.a, cfg_pppr.plan, cfg_pppr.threads)
    psr = psr_scores(y, x, R, cfg_pppr.plan, cfg_pppr.threads).scores
    radii = knn_radii(x, cfg_dc.k, cfg_dc.plan, cfg_dc.threads)
    dsr = dsr_scores(y, x, radii, cfg_dc.k, cfg_dc.plan, cfg_dc.threads).scores
    peak = dsr.max()
    dsr_norm = dsr / peak if peak > 0 else np.zeros_like(dsr)
    gap = psr - dsr_norm
    order = np.argsort(-gap, kind="stable")
    return GapResult(psr, dsr_norm, gap, order)


def evaluate(real, fake, configs: Sequence[MetricConfig], plan: ChunkPlan | None = None,
             threads: int | None = None) -> list[tuple[float, float]]:
    """(fidelity, diversity) for several configs from one cross-distance pass.

    Same values as the per-metric functions up to summation/product order
    (agreement well inside 1e-9); used by the experiment sweeps.
    """
    if not configs:
        return []
    x, y = _check_pair(real, fake)
    plan = plan or configs[0].plan
    kx = {c.k for c in configs}
    ky = {c.k for c in configs if c.family in ("ipr", "pppr")}
    rx = knn_radii_multi(x, kx, plan, threads)
    ry = knn_radii_multi(y, ky, plan, threads) if ky else {}
    radius_x = {c: c.a * rx[c.k].mean() for c in configs if c.family == "pppr"}
    radius_y = {c: c.a * ry[c.k].mean() for c in configs if c.family == "pppr"}
    src = DistanceSource(x, y)

    def chunk(r0: int, r1: int) -> list[tuple]:
        d = src.block(r0, r1)
        inside_x = {k: d <= rx[k].radii[r0:r1, None] for k in kx}
        out = []
        for c in configs:
            if c.family == "ipr":
                out.append((inside_x[c.k].any(axis=0),
                            (d <= ry[c.k].radii[None, :]).any(axis=1)))
            elif c.family == "dc":
                inside = inside_x[c.k]
                out.append((int(np.count_nonzero(inside)), inside.any(axis=1)))
            else:
                out.append((np.prod(nonmembership(d, radius_x[c]), axis=0),
                            np.prod(nonmembership(d, radius_y[c]), axis=1)))
        return out

    parts = map_row_chunks(chunk, x.shape[0], plan, threads)
    m = y.shape[0]
    results = []
    for idx, c in enumerate(configs):
        cols = [p[idx][0] for p in parts]
        rows = np.concatenate([p[idx][1] for p in parts])
        if c.family == "ipr":
            fid = float(np.mean(np.logical_or.reduce(cols)))
            div = float(np.mean(rows))
        elif c.family == "dc":
            fid = sum(cols) / (c.k * m)
            div = float(np.mean(rows))
        else:
            prod = np.ones(m)
            for part in cols:
                prod *= part
            fid = float(np.mean(1.0 - prod))
            div = float(np.mean(1.0 - rows))
        results.append((fid, div))
    return results
