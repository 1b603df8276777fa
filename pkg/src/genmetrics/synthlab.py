"""Synthetic Gaussian experiments: shift and variance sweeps, stability bias,
k ablation, and the outlier split / replacement protocol.

Random numbers
--------------
Every sample matrix comes from NumPy's ``Philox`` (4x64 counter-based)
bit generator wrapped in ``numpy.random.Generator``; normal variates use
the generator's ziggurat ``standard_normal``.  Streams are keyed with
``SeedSequence(entropy=seed, spawn_key=(experiment, point, run, role))``,
so a given (seed, experiment, grid point, run, role) always yields the same
matrix, whatever order or thread the point is evaluated on.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .embed_io import EmbeddingError, EmbeddingSet, as_matrix, concat
from .metrics import DEFAULT_A, FAMILIES, FAMILY_METRICS, MetricConfig, evaluate
from .nn import ChunkPlan, knn_radii

__all__ = [
    "GaussianSpec",
    "OutlierSplit",
    "SweepResult",
    "k_ablation",
    "replacement_sweep",
    "rng_for",
    "sample_gaussian",
    "shift_sweep",
    "split_outliers",
    "stability_bias",
    "synthetic_outlier_pools",
    "variance_sweep",
]

log = logging.getLogger(__name__)

PRNG_NAME = "numpy Philox-4x64 + ziggurat normal"

# spawn_key components
SYNTH, SHIFT, VARIANCE, STABILITY, REPLACEMENT, POOLS = range(6)
REAL, FAKE, OUTLIER = range(3)
TRUE_POINT = 0xFFFFFFFF


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the sub-stream ``keys`` of ``seed``."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class GaussianSpec:
    """``n`` samples of N(mean_scalar * 1, var_scale * I) in ``dim`` dimensions."""

    n: int
    dim: int
    mean_scalar: float = 0.0
    var_scale: float = 1.0
    seed: int = 0
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n < 1 or self.dim < 1:
            raise ValueError(f"n and dim must be >= 1, got n={self.n}, dim={self.dim}")
        if not self.var_scale > 0:
            raise ValueError(f"var_scale must be > 0, got {self.var_scale}")
        if not math.isfinite(self.mean_scalar):
            raise ValueError("mean_scalar must be finite")


def sample_gaussian(spec: GaussianSpec, label: str = "") -> EmbeddingSet:
    z = rng_for(spec.seed, *spec.stream).standard_normal((spec.n, spec.dim))
    if spec.var_scale != 1.0:
        z *= math.sqrt(spec.var_scale)
    if spec.mean_scalar != 0.0:
        z += spec.mean_scalar
    return EmbeddingSet(z, label=label)


def _configs(families: Iterable[str], k_list: Sequence[int] | None, a: float,
             plan: ChunkPlan | None) -> list[MetricConfig]:
    families = [f.lower() for f in families]
    for fam in families:
        if fam not in FAMILIES:
            raise ValueError(f"unknown metric family {fam!r}")
    plan = plan or ChunkPlan()
    if k_list is None:
        return [MetricConfig(f, a=a, plan=plan) for f in families]
    return [MetricConfig(f, k=k, a=a, plan=plan) for f in families for k in k_list]


def _fmt_axis(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


@dataclass
class SweepResult:
    """Metric values over a one-dimensional experiment grid.

    ``values`` maps ``(family, metric, k)`` to an array of shape
    ``(len(axis_values), runs)``.  ``reference`` holds presumed true values
    (stability experiments only).
    """

    axis_name: str
    axis_values: np.ndarray
    values: dict[tuple[str, str, int], np.ndarray]
    seed: int
    config: dict
    reference: dict[tuple[str, str, int], float] = field(default_factory=dict)

    def __post_init__(self):
        self.axis_values = np.asarray(self.axis_values)
        for key, arr in self.values.items():
            if arr.shape[0] != len(self.axis_values):
                raise ValueError(f"series {key} has {arr.shape[0]} rows, axis has {len(self.axis_values)}")

    @property
    def runs(self) -> int:
        return next(iter(self.values.values())).shape[1] if self.values else 0

    def key(self, metric: str, k: int | None = None) -> tuple[str, str, int]:
        found = [key for key in self.values if key[1] == metric and (k is None or key[2] == k)]
        if len(found) != 1:
            raise KeyError(f"{metric!r} (k={k}) matches {len(found)} series")
        return found[0]

    def get(self, metric: str, k: int | None = None) -> np.ndarray:
        return self.values[self.key(metric, k)]

    def mean(self, metric: str, k: int | None = None) -> np.ndarray:
        return self.get(metric, k).mean(axis=1)

    def std(self, metric: str, k: int | None = None) -> np.ndarray:
        arr = self.get(metric, k)
        return arr.std(axis=1, ddof=1) if arr.shape[1] > 1 else np.zeros(arr.shape[0])

    def bias(self, metric: str, k: int | None = None) -> np.ndarray:
        key = self.key(metric, k)
        if key not in self.reference:
            raise KeyError(f"no reference value for {key}")
        return np.abs(self.values[key].mean(axis=1) - self.reference[key])

    def to_csv(self, summary: bool = False) -> str:
        """Long-format CSV.

        Per-run rows: ``axis,family,metric,k,value,run``.  Summary rows:
        ``axis,family,metric,k,value,std`` with ``value`` the mean over runs,
        plus a ``bias`` column when reference values exist.
        """
        lines = []
        if summary:
            with_bias = bool(self.reference)
            lines.append("axis,family,metric,k,value,std" + (",bias" if with_bias else ""))
            for key, arr in self.values.items():
                fam, metric, k = key
                mean, std = self.mean(metric, k), self.std(metric, k)
                bias = self.bias(metric, k) if with_bias else None
                for i, ax in enumerate(self.axis_values):
                    row = [_fmt_axis(ax), fam, metric, str(k), repr(float(mean[i])), repr(float(std[i]))]
                    if with_bias:
                        row.append(repr(float(bias[i])))
                    lines.append(",".join(row))
        else:
            lines.append("axis,family,metric,k,value,run")
            for (fam, metric, k), arr in self.values.items():
                for i, ax in enumerate(self.axis_values):
                    for run in range(arr.shape[1]):
                        lines.append(",".join([_fmt_axis(ax), fam, metric, str(k),
                                               repr(float(arr[i, run])), str(run)]))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        series = []
        for (fam, metric, k), arr in self.values.items():
            ref = self.reference.get((fam, metric, k))
            series.append({
                "family": fam,
                "metric": metric,
                "k": k,
                "values": arr.tolist(),
                "mean": self.mean(metric, k).tolist(),
                "std": self.std(metric, k).tolist(),
                "reference": ref,
                "bias": self.bias(metric, k).tolist() if ref is not None else None,
            })
        return {
            "axis_name": self.axis_name,
            "axis_values": self.axis_values.tolist(),
            "runs": self.runs,
            "seed": self.seed,
            "config": self.config,
            "series": series,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, payload: dict) -> "SweepResult":
        values, reference = {}, {}
        for s in payload["series"]:
            key = (s["family"], s["metric"], int(s["k"]))
            values[key] = np.asarray(s["values"], dtype=np.float64)
            if s.get("reference") is not None:
                reference[key] = float(s["reference"])
        return cls(payload["axis_name"], np.asarray(payload["axis_values"]), values,
                   int(payload["seed"]), payload["config"], reference)


def _new_values(configs, n_axis: int, runs: int) -> dict:
    values = {}
    for c in configs:
        for metric in FAMILY_METRICS[c.family]:
            values[(c.family, metric, c.k)] = np.zeros((n_axis, runs))
    return values


def _record(values, configs, results, g: int, r: int) -> None:
    for c, pair in zip(configs, results):
        for metric, value in zip(FAMILY_METRICS[c.family], pair):
            values[(c.family, metric, c.k)][g, r] = value


def shift_sweep(
    u_grid: Sequence[float],
    outlier_mean: float | None = None,
    n: int = 10000,
    dim: int = 64,
    k_list: Sequence[int] | None = None,
    families: Iterable[str] = FAMILIES,
    seed: int = 0,
    runs: int = 1,
    outlier_role: str = "real",
    a: float = DEFAULT_A,
    plan: ChunkPlan | None = None,
    threads: int | None = None,
) -> SweepResult:
    """Real N(0, I) against fake N(u * 1, I) for each ``u`` in ``u_grid``.

    With ``outlier_mean`` set, one extra sample from N(outlier_mean * 1, I)
    is appended to the real set (``outlier_role="real"``, fidelity probe) or
    to the fake set (``"fake"``, diversity probe).  ``k_list`` evaluates
    every family at each listed k instead of the family defaults.
    """
    if outlier_role not in ("real", "fake"):
        raise ValueError(f"outlier_role must be 'real' or 'fake', got {outlier_role!r}")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    configs = _configs(families, k_list, a, plan)
    if n < max(c.k for c in configs) + 1:
        raise ValueError(f"n={n} too small for k={max(c.k for c in configs)}")
    u_grid = np.asarray(u_grid, dtype=np.float64)
    values = _new_values(configs, len(u_grid), runs)
    for r in range(runs):
        for g, u in enumerate(u_grid):
            real = sample_gaussian(GaussianSpec(n, dim, 0.0, 1.0, seed, (SHIFT, g, r, REAL)), "real")
            fake = sample_gaussian(GaussianSpec(n, dim, float(u), 1.0, seed, (SHIFT, g, r, FAKE)), "fake")
            if outlier_mean is not None:
                extra = sample_gaussian(
                    GaussianSpec(1, dim, float(outlier_mean), 1.0, seed, (SHIFT, g, r, OUTLIER)))
                if outlier_role == "real":
                    real = concat(real, extra)
                else:
                    fake = concat(fake, extra)
            log.info("shift run=%d u=%g", r, u)
            _record(values, configs, evaluate(real, fake, configs, threads=threads), g, r)
    config = {
        "experiment": "shift", "n": n, "dim": dim, "families": [c.family for c in configs],
        "k": [c.k for c in configs], "a": a, "runs": runs,
        "outlier_mean": outlier_mean, "outlier_role": outlier_role, "prng": PRNG_NAME,
    }
    return SweepResult("u", u_grid, values, seed, config)


def k_ablation(
    k_grid: Sequence[int],
    u_grid: Sequence[float],
    outlier: bool | float = True,
    n: int = 10000,
    dim: int = 64,
    families: Iterable[str] = ("pppr", "dc", "ipr"),
    seed: int = 0,
    runs: int = 1,
    a: float = DEFAULT_A,
    plan: ChunkPlan | None = None,
    threads: int | None = None,
) -> SweepResult:
    """The shift sweep repeated for each ``k``; samples are shared across k.

    ``outlier=True`` places the real outlier at -2 * 1; a number sets its mean.
    """
    if outlier is True:
        outlier_mean = -2.0
    elif outlier is False or outlier is None:
        outlier_mean = None
    else:
        outlier_mean = float(outlier)
    result = shift_sweep(u_grid, outlier_mean, n, dim, list(k_grid), families, seed, runs,
                         "real", a, plan, threads)
    result.config["experiment"] = "k_ablation"
    return result


def variance_sweep(
    v_grid: Sequence[float],
    n: int = 10000,
    dim: int = 64,
    families: Iterable[str] = FAMILIES,
    seed: int = 0,
    runs: int = 1,
    a: float = DEFAULT_A,
    plan: ChunkPlan | None = None,
    threads: int | None = None,
) -> SweepResult:
    """Real N(0, I) against fake N(0, v I) for each ``v`` in ``v_grid``."""
    configs = _configs(families, None, a, plan)
    v_grid = np.asarray(v_grid, dtype=np.float64)
    if np.any(v_grid <= 0):
        raise ValueError("variance grid values must be > 0")
    values = _new_values(configs, len(v_grid), runs)
    for r in range(runs):
        for g, v in enumerate(v_grid):
            real = sample_gaussian(GaussianSpec(n, dim, 0.0, 1.0, seed, (VARIANCE, g, r, REAL)), "real")
            fake = sample_gaussian(GaussianSpec(n, dim, 0.0, float(v), seed, (VARIANCE, g, r, FAKE)), "fake")
            log.info("variance run=%d v=%g", r, v)
            _record(values, configs, evaluate(real, fake, configs, threads=threads), g, r)
    config = {"experiment": "variance", "n": n, "dim": dim, "families": [c.family for c in configs],
              "k": [c.k for c in configs], "a": a, "runs": runs, "prng": PRNG_NAME}
    return SweepResult("v", v_grid, values, seed, config)


def stability_bias(
    n_grid: Sequence[int],
    runs: int = 50,
    dim: int = 64,
    families: Iterable[str] = FAMILIES,
    seed: int = 0,
    n_true: int = 50000,
    runs_true: int = 50,
    a: float = DEFAULT_A,
    plan: ChunkPlan | None = None,
    threads: int | None = None,
) -> SweepResult:
    """Mean, spread and bias of each metric between two identical N(0, I) sets.

    The presumed true value of each metric is the average over ``runs_true``
    runs with ``n_true`` samples per set; bias is ``|mean at n - true|``.
    """
    if runs < 2:
        raise ValueError("runs must be >= 2 to estimate a standard deviation")
    if runs_true < 1:
        raise ValueError("runs_true must be >= 1")
    configs = _configs(families, None, a, plan)
    n_grid = np.asarray(n_grid, dtype=np.int64)

    def draw(n, point, run):
        real = sample_gaussian(GaussianSpec(int(n), dim, seed=seed, stream=(STABILITY, point, run, REAL)))
        fake = sample_gaussian(GaussianSpec(int(n), dim, seed=seed, stream=(STABILITY, point, run, FAKE)))
        return evaluate(real, fake, configs, threads=threads)

    truth = _new_values(configs, 1, runs_true)
    for r in range(runs_true):
        log.info("stability reference run=%d n=%d", r, n_true)
        _record(truth, configs, draw(n_true, TRUE_POINT, r), 0, r)
    reference = {key: float(arr.mean()) for key, arr in truth.items()}

    values = _new_values(configs, len(n_grid), runs)
    for g, n in enumerate(n_grid):
        for r in range(runs):
            log.info("stability n=%d run=%d", n, r)
            _record(values, configs, draw(n, g, r), g, r)
    config = {"experiment": "stability", "dim": dim, "families": [c.family for c in configs],
              "k": [c.k for c in configs], "a": a, "runs": runs, "n_true": n_true,
              "runs_true": runs_true, "prng": PRNG_NAME}
    return SweepResult("n", n_grid, values, seed, config, reference)


@dataclass(frozen=True)
class OutlierSplit:
    """Partition of ``[0, N)`` by k-NN distance; outliers have the largest."""

    inlier_indices: np.ndarray
    outlier_indices: np.ndarray
    criterion_k: int
    ratio: float
    criterion: np.ndarray

    def apply(self, emb) -> tuple[EmbeddingSet, EmbeddingSet | None]:
        data = as_matrix(emb)
        label = getattr(emb, "label", "")
        inliers = EmbeddingSet(data[self.inlier_indices], label=label)
        outliers = (EmbeddingSet(data[self.outlier_indices], label=label)
                    if len(self.outlier_indices) else None)
        return inliers, outliers

    def manifest(self) -> dict:
        return {
            "k": self.criterion_k,
            "ratio": self.ratio,
            "n": int(len(self.inlier_indices) + len(self.outlier_indices)),
            "inlier_indices": self.inlier_indices.tolist(),
            "outlier_indices": self.outlier_indices.tolist(),
        }


def split_outliers(emb, k: int = 5, ratio: float = 0.05, plan: ChunkPlan | None = None,
                   threads: int | None = None) -> OutlierSplit:
    """Mark the ``ceil(ratio * N)`` samples with the largest k-NN distance as outliers.

    Ties at the cut keep the lower index as an inlier.
    """
    if not 0 <= ratio < 1:
        raise ValueError(f"ratio must be in [0, 1), got {ratio}")
    crit = knn_radii(emb, k, plan, threads).radii
    n = len(crit)
    # Tolerance keeps products like 0.07 * 100 from rounding up a whole sample.
    n_out = math.ceil(ratio * n - 1e-9)
    order = np.argsort(crit, kind="stable")
    inl = np.sort(order[: n - n_out])
    out = np.sort(order[n - n_out:])
    return OutlierSplit(inl, out, int(k), float(ratio), crit)


def synthetic_outlier_pools(
    n: int,
    dim: int = 64,
    ratio: float = 0.05,
    k: int = 5,
    seed: int = 0,
    run: int = 0,
) -> tuple[EmbeddingSet, EmbeddingSet]:
    """Draw ``n / (1 - ratio)`` samples of N(0, I) and split them into
    (inliers, outliers) with :func:`split_outliers`."""
    total = math.ceil(n / (1.0 - ratio))
    pool = sample_gaussian(GaussianSpec(total, dim, seed=seed, stream=(POOLS, 0, run, REAL)))
    split = split_outliers(pool, k, ratio)
    return split.apply(pool)


def replacement_sweep(
    inliers,
    outliers,
    other,
    counts: Sequence[int],
    families: Iterable[str] = FAMILIES,
    role: str = "real",
    seed: int = 0,
    a: float = DEFAULT_A,
    plan: ChunkPlan | None = None,
    threads: int | None = None,
) -> SweepResult:
    """Metric increments as inliers are progressively swapped for outliers.

    For each count ``c``, the first ``c`` inlier positions of a seeded
    permutation are overwritten by the first ``c`` outliers of another
    seeded permutation.  ``role="real"`` modifies the real set (``other`` is
    the fake set); ``role="fake"`` modifies the fake set.  Values are
    differences from ``c = 0``.
    """
    if role not in ("real", "fake"):
        raise ValueError(f"role must be 'real' or 'fake', got {role!r}")
    base = as_matrix(inliers)
    pool = as_matrix(outliers)
    ref = as_matrix(other)
    if pool.shape[1] != base.shape[1] or ref.shape[1] != base.shape[1]:
        raise EmbeddingError("dimension mismatch between inliers, outliers and the other set")
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size and (counts.min() < 0 or counts.max() > min(len(pool), len(base))):
        raise ValueError(
            f"insufficient outlier pool: need {counts.max()}, have {len(pool)} outliers "
            f"and {len(base)} inliers")
    configs = _configs(families, None, a, plan)
    rng = rng_for(seed, REPLACEMENT)
    slots = rng.permutation(len(base))
    picks = rng.permutation(len(pool))

    def run(c: int):
        data = base.copy()
        data[slots[:c]] = pool[picks[:c]]
        real, fake = (data, ref) if role == "real" else (ref, data)
        log.info("replacement role=%s count=%d", role, c)
        return evaluate(real, fake, configs, threads=threads)

    baseline = run(0)
    values = _new_values(configs, len(counts), 1)
    for g, c in enumerate(counts):
        res = baseline if c == 0 else run(int(c))
        deltas = [(f - f0, d - d0) for (f, d), (f0, d0) in zip(res, baseline)]
        _record(values, configs, deltas, g, 0)
    config = {"experiment": "replacement", "role": role, "families": [c.family for c in configs],
              "k": [c.k for c in configs], "a": a, "n_inliers": len(base),
              "n_outliers": len(pool), "n_other": len(ref)}
    return SweepResult("count", counts, values, seed, config)
