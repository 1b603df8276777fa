"""kNN-based fidelity and diversity metrics for generative models.

Improved Precision/Recall, Density/Coverage and P-precision/P-recall from
embedding matrices, plus seeded synthetic experiments for studying them.
"""
from .embed_io import EmbeddingError, EmbeddingSet, concat, load_embeddings, save_embeddings
from .metrics import (
    FAMILIES,
    MetricConfig,
    MetricReport,
    compute_report,
    coverage,
    density,
    evaluate,
    f1,
    improved_precision,
    improved_recall,
    p_precision,
    p_recall,
    scoring_gap,
)
from .nn import ChunkPlan, KnnRadii, knn_radii, mean_knn_radius, pairwise_block
from .scoring import (
    ScoreVector,
    ThresholdRadius,
    bsr_scores,
    csr_scores,
    dsr_scores,
    membership_prob,
    psr_scores,
    threshold_radius,
)
from .synthlab import (
    GaussianSpec,
    OutlierSplit,
    SweepResult,
    k_ablation,
    replacement_sweep,
    sample_gaussian,
    shift_sweep,
    split_outliers,
    stability_bias,
    synthetic_outlier_pools,
    variance_sweep,
)

__all__ = [
    "ChunkPlan",
    "EmbeddingError",
    "EmbeddingSet",
    "FAMILIES",
    "GaussianSpec",
    "KnnRadii",
    "MetricConfig",
    "MetricReport",
    "OutlierSplit",
    "ScoreVector",
    "SweepResult",
    "ThresholdRadius",
    "bsr_scores",
    "compute_report",
    "concat",
    "coverage",
    "csr_scores",
    "density",
    "dsr_scores",
    "evaluate",
    "f1",
    "improved_precision",
    "improved_recall",
    "k_ablation",
    "knn_radii",
    "load_embeddings",
    "mean_knn_radius",
    "membership_prob",
    "p_precision",
    "p_recall",
    "pairwise_block",
    "psr_scores",
    "replacement_sweep",
    "sample_gaussian",
    "save_embeddings",
    "scoring_gap",
    "shift_sweep",
    "split_outliers",
    "stability_bias",
    "synthetic_outlier_pools",
    "threshold_radius",
    "variance_sweep",
]

__version__ = "0.1.0"
