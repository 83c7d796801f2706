"""Detection scores: energy, temperature-scaled max-softmax, and KNN distance.

All scores follow the same orientation: in-distribution samples produce a
higher score. Energy and softmax consume logits; the KNN score consumes
feature vectors against a bank of in-distribution training features.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .tensors import FeatureTensor


def _as_logits(z) -> np.ndarray:
    arr = np.asarray(z.values if isinstance(z, FeatureTensor) else z, dtype=np.float64).reshape(-1)
    if arr.size < 2:
        raise DataError(f"need at least 2 logits, got {arr.size}")
    if not np.isfinite(arr).all():
        raise DataError("non-finite logit")
    return arr


def energy_score(z) -> float:
    """log-sum-exp of the logits (the negative energy; higher = more ID).

    Computed with max-subtraction, which is exact for the identity and
    avoids float overflow for large logits.
    """
    arr = _as_logits(z)
    m = arr.max()
    return float(m + np.log(np.exp(arr - m).sum()))


def softmax_score(z, temperature: float = 1.0) -> float:
    """Maximum class probability of the temperature-scaled softmax, in (0, 1]."""
    if not temperature > 0:
        raise ConfigError(f"bad temperature {temperature}: must be positive")
    arr = _as_logits(z) / float(temperature)
    m = arr.max()
    return float(1.0 / np.exp(arr - m).sum())


@dataclass(frozen=True)
class ScoreSet:
    """Labeled scalar detection scores for the two populations."""

    id_scores: tuple[float, ...]
    ood_scores: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "id_scores", tuple(float(s) for s in self.id_scores))
        object.__setattr__(self, "ood_scores", tuple(float(s) for s in self.ood_scores))


def _unit_rows(mat: np.ndarray) -> np.ndarray:
    # Zero rows stay zero; everything else is scaled to unit L2 norm.
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    return mat / np.where(norms == 0.0, 1.0, norms)


@dataclass(frozen=True)
class KnnIndex:
    """Exact nearest-neighbor bank of (optionally unit-normalized) features."""

    bank: np.ndarray = field(repr=False)
    k: int = 50
    normalize: bool = True
    dims: tuple[int, ...] = (0,)


def knn_fit(features, k: int = 50, normalize: bool = True) -> KnnIndex:
    """Build the bank from in-distribution training features (exact search)."""
    if isinstance(features, np.ndarray):
        mat = np.asarray(features, dtype=np.float64)
        dims = (mat.shape[1],) if mat.ndim == 2 else None
    else:
        features = list(features)
        if not features:
            raise DataError("empty feature bank")
        dims = features[0].dims
        for f in features:
            if f.dims != dims:
                raise DataError(f"feature dims mismatch: {f.dims} vs {dims}")
        mat = np.stack([f.values.astype(np.float64) for f in features])
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise DataError("empty feature bank")
    if not 1 <= k <= mat.shape[0]:
        raise ConfigError(f"bad k {k}: bank holds {mat.shape[0]} vectors")
    if normalize:
        mat = _unit_rows(mat)
    mat.flags.writeable = False
    return KnnIndex(bank=mat, k=int(k), normalize=bool(normalize), dims=dims)


def knn_score(index: KnnIndex, q) -> float:
    """Negative Euclidean distance to the k-th nearest bank vector.

    Always <= 0; equals 0 only when the (normalized) query coincides with
    at least k bank vectors.
    """
    vec = np.asarray(q.values if isinstance(q, FeatureTensor) else q, dtype=np.float64).reshape(-1)
    if vec.size != index.bank.shape[1]:
        raise DataError(f"query dim {vec.size} does not match bank dim {index.bank.shape[1]}")
    if index.normalize:
        vec = _unit_rows(vec.reshape(1, -1))[0]
    dists = np.sqrt(((index.bank - vec) ** 2).sum(axis=1))
    kth = float(np.partition(dists, index.k - 1)[index.k - 1])
    return -kth
