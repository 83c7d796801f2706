"""Post-hoc activation shaping toolkit for out-of-distribution detection."""

__version__ = "0.1.0"

from .errors import AshkitError, ConfigError, DataError, TensorFormatError
from .tensors import (
    DatasetManifest,
    FeatureTensor,
    ManifestEntry,
    load_manifest,
    percentile_threshold,
    read_tensor,
    save_manifest,
    write_tensor,
)
from .shaping import (
    ShapingConfig,
    ShapingReport,
    apply_chain,
    apply_shaping,
    ash_b,
    ash_p,
    ash_rand,
    ash_s,
    calibrate_global_threshold,
    react_clip,
)
from .scoring import KnnIndex, ScoreSet, energy_score, knn_fit, knn_score, softmax_score
from .metrics import MetricReport, aupr, auroc, evaluate, fpr_at_tpr, hist_iou, id_accuracy

__all__ = [
    "AshkitError",
    "ConfigError",
    "DataError",
    "TensorFormatError",
    "DatasetManifest",
    "FeatureTensor",
    "ManifestEntry",
    "load_manifest",
    "percentile_threshold",
    "read_tensor",
    "save_manifest",
    "write_tensor",
    "ShapingConfig",
    "ShapingReport",
    "apply_chain",
    "apply_shaping",
    "ash_b",
    "ash_p",
    "ash_rand",
    "ash_s",
    "calibrate_global_threshold",
    "react_clip",
    "KnnIndex",
    "ScoreSet",
    "energy_score",
    "knn_fit",
    "knn_score",
    "softmax_score",
    "MetricReport",
    "aupr",
    "auroc",
    "evaluate",
    "fpr_at_tpr",
    "hist_iou",
    "id_accuracy",
    "__version__",
]
