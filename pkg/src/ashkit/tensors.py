"""Dense float32 feature tensors, nearest-rank percentiles, and file formats.

Everything downstream (shaping, scoring, the feedforward lab) consumes the
types defined here. Tensors are immutable once constructed and are stored
on disk in a small little-endian container ("ASHT") so that files written
by any producer load bit-exactly.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, TensorFormatError

MAGIC = b"ASHT"
FORMAT_VERSION = 1
DTYPE_F32 = 0

MANIFEST_ROLES = ("train", "id-eval", "ood-eval")


@dataclass(frozen=True)
class FeatureTensor:
    """A dense activation map or feature vector for one sample.

    `values` is the flat row-major float32 payload; `dims` are the positive
    extents. Elements are guaranteed finite: non-finite payloads are
    rejected at construction, so no downstream operator ever has to define
    NaN ordering.
    """

    dims: tuple[int, ...]
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) == 0 or any(d <= 0 for d in dims):
            raise DataError(f"bad dims {dims}: extents must be positive")
        values = np.ascontiguousarray(self.values, dtype=np.float32).reshape(-1)
        if values.size != math.prod(dims):
            raise DataError(
                f"length mismatch: dims {dims} imply {math.prod(dims)} values, got {values.size}"
            )
        if not np.isfinite(values).all():
            raise DataError("non-finite value in tensor payload")
        values.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.size

    def tolist(self) -> list[float]:
        return [float(v) for v in self.values]

    @staticmethod
    def from_values(values, dims=None) -> "FeatureTensor":
        arr = np.asarray(values, dtype=np.float32)
        if dims is None:
            dims = arr.shape if arr.ndim > 0 else (1,)
        return FeatureTensor(tuple(dims), arr.reshape(-1))


def nearest_rank_index(n: int, p: float) -> int:
    """0-based index of the p-th percentile element in ascending order.

    Nearest-rank convention: 1-indexed k = max(1, ceil(p/100 * n)).
    """
    if n <= 0:
        raise DataError("empty input")
    if not (0.0 <= p < 100.0) or math.isnan(p):
        raise ConfigError(f"bad percentile {p}: must be in [0, 100)")
    return max(1, math.ceil(p / 100.0 * n)) - 1


def percentile_threshold(x: FeatureTensor | np.ndarray, p: float) -> float:
    """Nearest-rank p-th percentile of the tensor's values.

    Returns the k-th smallest element with k = max(1, ceil(p/100 * N)).
    Selection runs in expected O(N); the result is deterministic and is
    always one of the observed values, so strict comparisons against it
    are unambiguous.
    """
    values = x.values if isinstance(x, FeatureTensor) else np.asarray(x)
    if values.size == 0:
        raise DataError("empty input")
    k = nearest_rank_index(values.size, p)
    return float(np.partition(values, k)[k])


# ---------------------------------------------------------------------------
# ASHT container: magic "ASHT", u16 version, u8 dtype, u8 ndim,
# ndim x u32 dims, then product(dims) float32 values. Little-endian throughout.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sHBB")


def write_tensor(x: FeatureTensor, path: str | os.PathLike) -> None:
    """Serialize a tensor; read_tensor(write_tensor(x)) is bit-exact."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_F32, len(x.dims))
    dims = struct.pack(f"<{len(x.dims)}I", *x.dims)
    payload = x.values.astype("<f4", copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(header + dims + payload)


def read_tensor(path: str | os.PathLike) -> FeatureTensor:
    with open(path, "rb") as fh:
        blob = fh.read()
    dims, offset = _parse_header(blob, path)
    expected = math.prod(dims) * 4
    got = len(blob) - offset
    if got < expected:
        raise TensorFormatError(f"truncated payload in {path}: expected {expected} bytes, got {got}")
    if got > expected:
        raise TensorFormatError(
            f"length mismatch in {path}: dims {dims} imply {expected} payload bytes, got {got}"
        )
    values = np.frombuffer(blob, dtype="<f4", count=math.prod(dims), offset=offset)
    if not np.isfinite(values).all():
        raise DataError(f"non-finite value in tensor payload of {path}")
    return FeatureTensor(dims, values)


def read_tensor_dims(path: str | os.PathLike) -> tuple[int, ...]:
    """Read only the header; used to validate manifests cheaply."""
    with open(path, "rb") as fh:
        blob = fh.read(_HEADER.size + 255 * 4)
    dims, _ = _parse_header(blob, path)
    return dims


def _parse_header(blob: bytes, path) -> tuple[tuple[int, ...], int]:
    if len(blob) < _HEADER.size:
        raise TensorFormatError(f"truncated header in {path}")
    magic, version, dtype, ndim = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic in {path}: {magic!r}")
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"version mismatch in {path}: got {version}, want {FORMAT_VERSION}")
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"unsupported dtype {dtype} in {path}")
    if ndim == 0:
        raise TensorFormatError(f"bad dims in {path}: ndim must be >= 1")
    end = _HEADER.size + ndim * 4
    if len(blob) < end:
        raise TensorFormatError(f"truncated dims in {path}")
    dims = struct.unpack_from(f"<{ndim}I", blob, _HEADER.size)
    if any(d == 0 for d in dims):
        raise TensorFormatError(f"bad dims in {path}: zero extent")
    return dims, end


# ---------------------------------------------------------------------------
# Dataset manifests: JSON {"role": ..., "entries": [{"path": ..., "label": ...}]}
# Paths are stored relative to the manifest file.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int


@dataclass(frozen=True)
class DatasetManifest:
    """Points at a set of tensor files plus an integer label per sample.

    `role` tags the set as training data, in-distribution eval, or
    out-of-distribution eval. OOD entries conventionally carry label -1.
    """

    role: str
    entries: tuple[ManifestEntry, ...]
    base_dir: str = "."

    def __post_init__(self):
        if self.role not in MANIFEST_ROLES:
            raise DataError(f"bad manifest role {self.role!r}: must be one of {MANIFEST_ROLES}")

    def __len__(self) -> int:
        return len(self.entries)

    def resolved_paths(self) -> list[str]:
        return [os.path.normpath(os.path.join(self.base_dir, e.path)) for e in self.entries]

    def validate(self) -> tuple[int, ...]:
        """Check every file exists and all dims agree; returns the shared dims."""
        if not self.entries:
            raise DataError("empty manifest")
        dims = None
        for path in self.resolved_paths():
            if not os.path.exists(path):
                raise DataError(f"manifest references missing file {path}")
            d = read_tensor_dims(path)
            if dims is None:
                dims = d
            elif d != dims:
                raise DataError(f"manifest dims mismatch: {path} has {d}, expected {dims}")
        return dims

    def load(self) -> list[tuple[FeatureTensor, int]]:
        return [
            (read_tensor(path), entry.label)
            for path, entry in zip(self.resolved_paths(), self.entries)
        ]


def save_manifest(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    doc = {
        "role": manifest.role,
        "entries": [{"path": e.path, "label": e.label} for e in manifest.entries],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest {path}: {exc}")
    if not isinstance(doc, dict) or "role" not in doc or "entries" not in doc:
        raise DataError(f"malformed manifest {path}: need 'role' and 'entries'")
    entries = tuple(
        ManifestEntry(path=str(e["path"]), label=int(e["label"])) for e in doc["entries"]
    )
    return DatasetManifest(
        role=str(doc["role"]), entries=entries, base_dir=os.path.dirname(os.path.abspath(path))
    )
