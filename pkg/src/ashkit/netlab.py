"""Desk-scale feedforward classifier with a shaping hook, plus data generators.

This is the stand-in for a large pretrained vision backbone: a small
affine+ReLU stack whose forward pass exposes exactly one hook site where a
shaping chain can be applied before the activation continues down the rest
of the network. Hook sites are `pre-relu[i]` (the output of affine i before
its ReLU, i = 1..L-1) and `penultimate` (the input to the final affine).

Activations cross the hook and penultimate interfaces as float32 feature
tensors — the same representation they have on disk — while the affine
arithmetic itself runs in float64. Training is plain mini-batch SGD on
softmax cross-entropy with hand-written backprop, deterministic per seed.
"""

from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .shaping import ShapingConfig, apply_chain
from .tensors import (
    DatasetManifest,
    FeatureTensor,
    ManifestEntry,
    read_tensor,
    save_manifest,
    write_tensor,
)

_PRE_RELU = re.compile(r"^pre-relu\[(\d+)\]$")

DATASET_KINDS = ("gaussian-blobs-id", "shifted-blobs-ood", "uniform-ring-ood")

# Geometry constants for the synthetic generators: class means sit on a
# sphere of this radius; the shifted-OOD variant translates the whole blob
# layout by this fraction of it, pointing away from the layout centroid so
# the translated blobs land in the classifier's low-activity region.
MEAN_NORM = 3.0
SHIFT_FRACTION = 2.0


class FeedforwardNet:
    """Ordered affine layers with ReLU between consecutive layers.

    weights[i] has shape (out_i, in_i); consecutive layers must chain.
    `hook` names the single site where forward() applies a shaping chain.
    """

    def __init__(self, weights, biases, hook: str = "penultimate"):
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DataError("weights and biases must pair up, one per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise DataError(f"layer {i}: weight {w.shape} and bias {b.shape} do not pair")
            if i > 0 and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DataError(
                    f"layer {i}: input dim {w.shape[1]} does not chain from "
                    f"previous output {self.weights[i - 1].shape[0]}"
                )
        self.hook = hook

    @property
    def hook(self) -> str:
        return self._hook

    @hook.setter
    def hook(self, value: str):
        if value not in self.hook_sites():
            raise ConfigError(f"unknown hook site {value!r}; valid: {self.hook_sites()}")
        self._hook = value

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def hook_sites(self) -> list[str]:
        return [f"pre-relu[{i}]" for i in range(1, self.n_layers)] + ["penultimate"]

    def copy(self) -> "FeedforwardNet":
        return FeedforwardNet(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.hook
        )


def init_net(layer_dims, seed: int, hook: str = "penultimate") -> FeedforwardNet:
    """He-initialized net for the given dims chain, deterministic per seed."""
    if len(layer_dims) < 2:
        raise ConfigError(f"need at least input and output dims, got {layer_dims}")
    rng = np.random.default_rng(seed & ((1 << 64) - 1))
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return FeedforwardNet(weights, biases, hook)


def with_zero_final_bias(net: FeedforwardNet) -> FeedforwardNet:
    out = net.copy()
    out.biases[-1] = np.zeros_like(out.biases[-1])
    return out


@dataclass(frozen=True)
class ForwardResult:
    logits: np.ndarray
    penultimate: FeatureTensor
    hook_input: FeatureTensor = field(repr=False)
    reports: tuple = ()

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.logits))


def _through_hook(activation: np.ndarray, chain, sample_index: int):
    ft = FeatureTensor((activation.size,), activation.astype(np.float32))
    reports = ()
    shaped = ft
    if chain:
        shaped, reps = apply_chain(ft, chain, sample_index=sample_index)
        reports = tuple(reps)
    return ft, shaped, reports


def forward(
    net: FeedforwardNet,
    x,
    chain: list[ShapingConfig] | None = None,
    sample_index: int = 0,
) -> ForwardResult:
    """Affine/ReLU forward pass with the chain applied at the net's hook.

    The hook-site activation is materialized at float32 whether or not a
    chain is present, so `chain=[none]` and `chain=None` produce bitwise
    identical logits. The returned penultimate tensor is exactly what the
    final affine consumed.
    """
    values = x.values if isinstance(x, FeatureTensor) else np.asarray(x, dtype=np.float32)
    values = values.reshape(-1)
    in_dim = net.weights[0].shape[1]
    if values.size != in_dim:
        raise DataError(f"input dim {values.size} does not match net input {in_dim}")

    m = _PRE_RELU.match(net.hook)
    hook_layer = int(m.group(1)) if m else None

    h = values.astype(np.float64)
    hook_input = None
    reports = ()
    for i in range(net.n_layers - 1):
        a = net.weights[i] @ h + net.biases[i]
        if hook_layer == i + 1:
            hook_input, shaped, reports = _through_hook(a, chain, sample_index)
            a = shaped.values.astype(np.float64)
        h = np.maximum(a, 0.0)

    pen_raw, pen_shaped, pen_reports = _through_hook(
        h, chain if net.hook == "penultimate" else None, sample_index
    )
    if net.hook == "penultimate":
        hook_input, reports = pen_raw, pen_reports
    logits = net.weights[-1] @ pen_shaped.values.astype(np.float64) + net.biases[-1]
    return ForwardResult(
        logits=logits, penultimate=pen_shaped, hook_input=hook_input, reports=reports
    )


# ---------------------------------------------------------------------------
# Training: softmax cross-entropy, hand-written backprop, plain SGD.
# ---------------------------------------------------------------------------


def _raw_forward(net: FeedforwardNet, X: np.ndarray):
    """Batch forward without hook/float32 crossings; keeps per-layer caches."""
    pre, post = [], [X]
    h = X
    for i in range(net.n_layers - 1):
        a = h @ net.weights[i].T + net.biases[i]
        h = np.maximum(a, 0.0)
        pre.append(a)
        post.append(h)
    logits = h @ net.weights[-1].T + net.biases[-1]
    return logits, pre, post


def loss_and_grads(net: FeedforwardNet, X: np.ndarray, y: np.ndarray):
    """Mean cross-entropy over the batch and its gradients w.r.t. all params."""
    n = X.shape[0]
    logits, pre, post = _raw_forward(net, X)
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    loss = float(-np.mean(shifted[np.arange(n), y] - np.log(exp.sum(axis=1))))

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads_w = [None] * net.n_layers
    grads_b = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        grads_w[i] = delta.T @ post[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i]) * (pre[i - 1] > 0.0)
    return loss, grads_w, grads_b


def train(
    net: FeedforwardNet,
    X,
    y,
    epochs: int = 30,
    lr: float = 0.1,
    seed: int = 0,
    batch_size: int = 32,
) -> tuple[FeedforwardNet, list[float]]:
    """SGD in place; returns the net and the per-epoch mean loss curve."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("empty training set")
    if X.shape[0] != y.shape[0]:
        raise DataError(f"length mismatch: {X.shape[0]} samples vs {y.shape[0]} labels")
    n_classes = net.weights[-1].shape[0]
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError(f"label out of range for {n_classes} classes")

    rng = np.random.default_rng(seed & ((1 << 64) - 1))
    n = X.shape[0]
    curve = []
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            sel = order[start : start + batch_size]
            loss, gw, gb = loss_and_grads(net, X[sel], y[sel])
            total += loss * sel.size
            for i in range(net.n_layers):
                net.weights[i] -= lr * gw[i]
                net.biases[i] -= lr * gb[i]
        curve.append(total / n)
    return net, curve


def train_on_manifest(
    net: FeedforwardNet, manifest: DatasetManifest, epochs, lr, seed, batch_size=32
):
    pairs = manifest.load()
    X = np.stack([t.values.astype(np.float64) for t, _ in pairs])
    y = np.array([label for _, label in pairs], dtype=np.int64)
    return train(net, X, y, epochs=epochs, lr=lr, seed=seed, batch_size=batch_size)


# ---------------------------------------------------------------------------
# Synthetic datasets: Gaussian blob ID data, shifted blobs and a thin
# hypersphere shell as OOD. Reproducible per (kind, dim, classes, seed).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    """`spread` is the blob standard deviation for the blob kinds and the
    shell radius for uniform-ring-ood."""

    kind: str
    dim: int = 16
    classes: int = 4
    samples_per_class: int = 50
    spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}; valid: {DATASET_KINDS}")
        if self.dim < 1 or self.classes < 1 or self.samples_per_class < 1:
            raise ConfigError("dim, classes, and samples_per_class must be positive")
        if not self.spread > 0:
            raise ConfigError(f"bad spread {self.spread}: must be positive")

    @property
    def total(self) -> int:
        return self.classes * self.samples_per_class


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed & ((1 << 64) - 1), stream])


def _blob_layout(spec: SyntheticDatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    # Layout depends only on (seed, dim, classes) so that id and shifted-ood
    # specs sharing a seed share the same blob geometry. The shift direction
    # is the anti-centroid of the class means: translating that way moves
    # every blob away from all trained class directions at once.
    rng = _rng(spec.seed, 0)
    dirs = rng.normal(size=(spec.classes, spec.dim))
    means = MEAN_NORM * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    centroid = means.mean(axis=0)
    return means, -centroid / np.linalg.norm(centroid)


def sample_dataset(spec: SyntheticDatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Draw the full dataset as (X float32 (n, dim), labels int (n,))."""
    if spec.kind == "uniform-ring-ood":
        rng = _rng(spec.seed, 3)
        dirs = rng.normal(size=(spec.total, spec.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = rng.uniform(0.992 * spec.spread, 1.008 * spec.spread, size=(spec.total, 1))
        X = dirs * radii
        y = np.full(spec.total, -1, dtype=np.int64)
        return X.astype(np.float32), y

    means, shift_dir = _blob_layout(spec)
    if spec.kind == "shifted-blobs-ood":
        means = means + SHIFT_FRACTION * MEAN_NORM * shift_dir
        noise_rng = _rng(spec.seed, 2)
    else:
        noise_rng = _rng(spec.seed, 1)

    X = np.repeat(means, spec.samples_per_class, axis=0) + noise_rng.normal(
        0.0, spec.spread, size=(spec.total, spec.dim)
    )
    if spec.kind == "gaussian-blobs-id":
        y = np.repeat(np.arange(spec.classes), spec.samples_per_class)
    else:
        y = np.full(spec.total, -1, dtype=np.int64)
    return X.astype(np.float32), y.astype(np.int64)


def generate(
    spec: SyntheticDatasetSpec, out_dir: str | os.PathLike, role: str | None = None
) -> tuple[DatasetManifest, str]:
    """Write one tensor file per sample plus a manifest.json; reproducible."""
    if role is None:
        role = "id-eval" if spec.kind == "gaussian-blobs-id" else "ood-eval"
    if spec.kind != "gaussian-blobs-id" and role != "ood-eval":
        raise ConfigError(f"{spec.kind} datasets must use role ood-eval, got {role!r}")
    if spec.kind == "gaussian-blobs-id" and role == "ood-eval":
        raise ConfigError("gaussian-blobs-id datasets are ID data; use role train or id-eval")

    X, y = sample_dataset(spec)
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i in range(X.shape[0]):
        name = f"sample-{i:05d}.asht"
        write_tensor(FeatureTensor((spec.dim,), X[i]), os.path.join(out_dir, name))
        entries.append(ManifestEntry(path=name, label=int(y[i])))
    manifest = DatasetManifest(role=role, entries=tuple(entries), base_dir=str(out_dir))
    manifest_path = os.path.join(out_dir, "manifest.json")
    save_manifest(manifest, manifest_path)
    return manifest, manifest_path


# ---------------------------------------------------------------------------
# Network bundles: arch.json plus one tensor file per weight/bias.
# ---------------------------------------------------------------------------


def save_bundle(net: FeedforwardNet, out_dir: str | os.PathLike) -> str:
    os.makedirs(out_dir, exist_ok=True)
    arch = {
        "layer_dims": net.layer_dims,
        "hook": net.hook,
        "weights": [],
        "biases": [],
    }
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        wname, bname = f"w{i}.asht", f"b{i}.asht"
        write_tensor(FeatureTensor(w.shape, w.astype(np.float32)), os.path.join(out_dir, wname))
        write_tensor(FeatureTensor(b.shape, b.astype(np.float32)), os.path.join(out_dir, bname))
        arch["weights"].append(wname)
        arch["biases"].append(bname)
    arch_path = os.path.join(out_dir, "arch.json")
    with open(arch_path, "w", encoding="utf-8") as fh:
        json.dump(arch, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return str(out_dir)


def load_bundle(bundle_dir: str | os.PathLike) -> FeedforwardNet:
    arch_path = os.path.join(bundle_dir, "arch.json")
    try:
        with open(arch_path, "r", encoding="utf-8") as fh:
            arch = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"network bundle missing arch.json: {bundle_dir}")
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed arch.json in {bundle_dir}: {exc}")
    try:
        weight_names, bias_names = arch["weights"], arch["biases"]
        hook = arch.get("hook", "penultimate")
        layer_dims = arch["layer_dims"]
    except KeyError as exc:
        raise DataError(f"arch.json in {bundle_dir} missing field {exc}")
    weights, biases = [], []
    for wname, bname in zip(weight_names, bias_names):
        w = read_tensor(os.path.join(bundle_dir, wname))
        b = read_tensor(os.path.join(bundle_dir, bname))
        weights.append(w.values.astype(np.float64).reshape(w.dims))
        biases.append(b.values.astype(np.float64))
    net = FeedforwardNet(weights, biases, hook)
    if net.layer_dims != list(layer_dims):
        raise DataError(
            f"bundle dims mismatch in {bundle_dir}: arch.json says {layer_dims}, "
            f"tensors give {net.layer_dims}"
        )
    return net
