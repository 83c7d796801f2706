"""Activation shaping operators and threshold calibration.

The ASH family prunes a sample's activation at a percentile threshold and
then leaves (ASH-P), binarizes (ASH-B), rescales (ASH-S), or randomizes
(ASH-RAND) the survivors. ReAct-style upper-bound clipping and a `none`
pass-through are included so treatments can be chained and compared under
one interface.

All operators are pure: they take a FeatureTensor and a ShapingConfig and
return a new tensor plus a ShapingReport of the quantities they computed
(threshold, pre/post sums, survivor count, applied factor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .tensors import FeatureTensor, percentile_threshold

METHODS = ("ash-p", "ash-b", "ash-s", "ash-rand", "react-clip", "none")
PERCENTILE_METHODS = ("ash-p", "ash-b", "ash-s", "ash-rand")

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class ShapingConfig:
    """One shaping treatment: the method plus its parameters.

    `p` is the pruning percentage shared by all ASH variants. With
    threshold_mode="local" the threshold is the per-sample p-th percentile
    computed on the fly; with "global" the caller supplies a fixed
    `global_threshold` (see calibrate_global_threshold). `scaling` selects
    exponential or linear rescaling for ASH-S. `rand_range` and `seed`
    drive ASH-RAND; `clip_value` drives react-clip.
    """

    method: str = "none"
    p: float = 90.0
    threshold_mode: str = "local"
    global_threshold: float | None = None
    scaling: str = "exponential"
    rand_range: tuple[float, float] = (0.0, 10.0)
    clip_value: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown shaping method {self.method!r}")
        if self.method in PERCENTILE_METHODS:
            if not (0.0 <= self.p < 100.0) or math.isnan(self.p):
                raise ConfigError(f"bad percentile {self.p}: must be in [0, 100)")
        if self.threshold_mode not in ("local", "global"):
            raise ConfigError(f"bad threshold_mode {self.threshold_mode!r}")
        if self.threshold_mode == "global" and self.global_threshold is None:
            raise ConfigError("threshold_mode=global requires global_threshold")
        if self.scaling not in ("exponential", "linear"):
            raise ConfigError(f"bad scaling {self.scaling!r}")
        lo, hi = self.rand_range
        if not (0.0 <= lo <= hi):
            raise ConfigError(f"bad rand_range {self.rand_range}: need 0 <= lo <= hi")
        if self.method == "react-clip" and not self.clip_value > 0:
            raise ConfigError(f"bad clip_value {self.clip_value}: must be positive")
        object.__setattr__(self, "rand_range", (float(lo), float(hi)))

    def with_p(self, p: float) -> "ShapingConfig":
        return replace(self, p=float(p))


@dataclass(frozen=True)
class ShapingReport:
    """Per-application diagnostics.

    t: threshold used (percentile, global value, or the clip bound).
    s1/s2: value sums before and after pruning. n: nonzero count after
    pruning. factor: multiplier applied to survivors (1 when the method
    applies none). degenerate flags the n=0 / s2=0 fallbacks.
    """

    t: float
    s1: float
    s2: float
    n: int
    factor: float
    degenerate: bool = False


def _threshold(x: FeatureTensor, cfg: ShapingConfig) -> float:
    if cfg.threshold_mode == "global":
        return float(cfg.global_threshold)
    return percentile_threshold(x, cfg.p)


def _prune(values: np.ndarray, t: float) -> np.ndarray:
    # Strictly-less-than: elements equal to t always survive. Pruning is by
    # value, not magnitude, so a large negative below t is removed.
    return np.where(values < t, np.float32(0.0), values)


def _sum(values: np.ndarray) -> float:
    return float(values.sum(dtype=np.float64))


def ash_p(x: FeatureTensor, cfg: ShapingConfig) -> tuple[FeatureTensor, ShapingReport]:
    """Prune below the threshold; survivors pass through unchanged."""
    t = _threshold(x, cfg)
    s1 = _sum(x.values)
    pruned = _prune(x.values, t)
    s2 = _sum(pruned)
    n = int(np.count_nonzero(pruned))
    return FeatureTensor(x.dims, pruned), ShapingReport(t=t, s1=s1, s2=s2, n=n, factor=1.0)


def ash_b(x: FeatureTensor, cfg: ShapingConfig) -> tuple[FeatureTensor, ShapingReport]:
    """Prune, then set every surviving nonzero to s1/n (binarize).

    The output sum equals the pre-pruning sum by construction. When nothing
    nonzero survives the output is all zeros and `degenerate` is set; a
    batch pipeline must not abort on one pathological activation map.
    """
    t = _threshold(x, cfg)
    s1 = _sum(x.values)
    pruned = _prune(x.values, t)
    s2 = _sum(pruned)
    mask = pruned != 0
    n = int(np.count_nonzero(mask))
    if n == 0:
        out = np.zeros_like(pruned)
        return FeatureTensor(x.dims, out), ShapingReport(
            t=t, s1=s1, s2=s2, n=0, factor=1.0, degenerate=True
        )
    out = pruned.copy()
    out[mask] = np.float32(s1 / n)
    return FeatureTensor(x.dims, out), ShapingReport(t=t, s1=s1, s2=s2, n=n, factor=1.0)


def ash_s(x: FeatureTensor, cfg: ShapingConfig) -> tuple[FeatureTensor, ShapingReport]:
    """Prune, then multiply survivors by exp(s1/s2) (or s1/s2 when linear).

    The factor is computed in float64 before touching the float32
    activations; s2 == 0 falls back to factor 1 with the degenerate flag.
    """
    t = _threshold(x, cfg)
    s1 = _sum(x.values)
    pruned = _prune(x.values, t)
    s2 = _sum(pruned)
    n = int(np.count_nonzero(pruned))
    if s2 == 0.0:
        return FeatureTensor(x.dims, pruned), ShapingReport(
            t=t, s1=s1, s2=s2, n=n, factor=1.0, degenerate=True
        )
    ratio = s1 / s2
    factor = math.exp(ratio) if cfg.scaling == "exponential" else ratio
    mask = pruned != 0
    out = pruned.copy()
    out[mask] = (pruned[mask].astype(np.float64) * factor).astype(np.float32)
    return FeatureTensor(x.dims, out), ShapingReport(t=t, s1=s1, s2=s2, n=n, factor=factor)


def ash_rand(
    x: FeatureTensor, cfg: ShapingConfig, sample_index: int = 0
) -> tuple[FeatureTensor, ShapingReport]:
    """Prune, then replace each surviving nonzero with a uniform draw.

    Draws come from a counter-based generator keyed by (seed, sample_index)
    with one draw reserved per element position, so results are
    reproducible regardless of batch scheduling and independent of which
    elements happen to survive.
    """
    t = _threshold(x, cfg)
    s1 = _sum(x.values)
    pruned = _prune(x.values, t)
    s2 = _sum(pruned)
    mask = pruned != 0
    n = int(np.count_nonzero(mask))
    lo, hi = cfg.rand_range
    key = np.array([cfg.seed & _U64, sample_index & _U64], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    draws = gen.uniform(lo, hi, size=pruned.size).astype(np.float32)
    out = pruned.copy()
    out[mask] = draws[mask]
    return FeatureTensor(x.dims, out), ShapingReport(t=t, s1=s1, s2=s2, n=n, factor=1.0)


def react_clip(x: FeatureTensor, cfg: ShapingConfig) -> tuple[FeatureTensor, ShapingReport]:
    """Clip every value above clip_value down to it (elementwise min)."""
    c = np.float32(cfg.clip_value)
    s1 = _sum(x.values)
    out = np.minimum(x.values, c)
    s2 = _sum(out)
    n = int(np.count_nonzero(out))
    return FeatureTensor(x.dims, out), ShapingReport(
        t=float(cfg.clip_value), s1=s1, s2=s2, n=n, factor=1.0
    )


def _noop(x: FeatureTensor, cfg: ShapingConfig) -> tuple[FeatureTensor, ShapingReport]:
    s = _sum(x.values)
    return x, ShapingReport(t=0.0, s1=s, s2=s, n=int(np.count_nonzero(x.values)), factor=1.0)


_DISPATCH = {
    "ash-p": ash_p,
    "ash-b": ash_b,
    "ash-s": ash_s,
    "react-clip": react_clip,
    "none": _noop,
}


def apply_shaping(
    x: FeatureTensor, cfg: ShapingConfig, sample_index: int = 0
) -> tuple[FeatureTensor, ShapingReport]:
    if x.size == 0:
        raise DataError("empty input")
    if cfg.method == "ash-rand":
        return ash_rand(x, cfg, sample_index=sample_index)
    return _DISPATCH[cfg.method](x, cfg)


def apply_chain(
    x: FeatureTensor, configs: Sequence[ShapingConfig], sample_index: int = 0
) -> tuple[FeatureTensor, list[ShapingReport]]:
    """Apply treatments left to right; reports come back in the same order."""
    if not configs:
        raise ConfigError("empty shaping chain")
    reports = []
    for cfg in configs:
        x, report = apply_shaping(x, cfg, sample_index=sample_index)
        reports.append(report)
    return x, reports


def calibrate_global_threshold(calibration: Iterable[FeatureTensor], p: float) -> float:
    """p-th percentile of the pooled values of all calibration tensors.

    This is the precomputed alternative to the default per-sample ("local")
    threshold: one scalar gathered from training-data activations, used in
    place of the on-the-fly percentile. All tensors must share dims. The
    pooled multiset is flat, not per-channel.
    """
    chunks = []
    dims = None
    for x in calibration:
        if dims is None:
            dims = x.dims
        elif x.dims != dims:
            raise DataError(f"calibration dims mismatch: {x.dims} vs {dims}")
        chunks.append(x.values)
    if not chunks:
        raise DataError("empty calibration stream")
    pooled = np.concatenate(chunks)
    return percentile_threshold(pooled, p)
