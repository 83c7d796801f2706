"""Declarative experiment runner: config in, metric table out.

An ExperimentConfig names the data manifests, the network (a saved bundle
or a training recipe), the shaping chains to compare, the detection score,
and an optional sweep over pruning percentages. `run` forwards every
eval sample through the net with each chain applied at the hook site,
scores it, and computes the full metric set per (method, p, score)
combination. All randomness is seeded, so rerunning a config reproduces
the report byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, replace
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import __version__
from .errors import ConfigError, DataError
from .metrics import CSV_COLUMNS, MetricReport, csv_row, evaluate
from .netlab import FeedforwardNet, forward, init_net, load_bundle, train
from .scoring import ScoreSet, energy_score, knn_fit, knn_score, softmax_score
from .shaping import PERCENTILE_METHODS, ShapingConfig
from .tensors import DatasetManifest, load_manifest, read_tensor

P_SENTINEL = -1.0

# Distinct sample-index bases per data role keep ash-rand draws stable no
# matter which roles a particular score kind needs to forward.
_INDEX_BASE = {"train": 0, "id-eval": 1_000_000, "ood-eval": 2_000_000}


class TrainSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: list[int] = Field(default=[64, 32])
    epochs: int = 60
    lr: float = 0.1
    batch_size: int = 32
    seed: Optional[int] = None  # falls back to the experiment seed


class NetworkSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bundle: Optional[str] = None
    train: Optional[TrainSpec] = None


class DataSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id_train: Optional[str] = None
    id_eval: Optional[str] = None
    ood_eval: list[str] = Field(default_factory=list)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    data: DataSpec = Field(default_factory=DataSpec)
    network: NetworkSpec = Field(default_factory=NetworkSpec)
    placement: str = "penultimate"
    chains: list[list[ShapingConfig]] = Field(default_factory=lambda: [[ShapingConfig()]])
    sweep: Optional[list[float]] = None
    score: Literal["energy", "softmax", "knn"] = "energy"
    temperature: float = 1.0
    threshold_mode: Literal["local", "global"] = "local"
    global_thresholds: Optional[str] = None
    knn_k: int = 50
    knn_normalize: bool = True
    bins: int = 50
    out_dir: Optional[str] = None

    def canonical_dict(self) -> dict:
        doc = self.model_dump(mode="json")
        doc.pop("out_dir", None)  # output location is not semantically meaningful
        return doc

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}")
    return parse_config(doc)


def parse_config(doc: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"invalid experiment config: {exc}")


def _p_key(p: float) -> str:
    return f"{float(p):g}"


def chain_label(chain: list[ShapingConfig]) -> str:
    return "+".join(step.method for step in chain)


def _has_percentile_step(chain) -> bool:
    return any(step.method in PERCENTILE_METHODS for step in chain)


def _combinations(config: ExperimentConfig) -> list[tuple[list[ShapingConfig], float]]:
    """Expand chains x sweep. Chains without a percentile step appear once."""
    combos = []
    for chain in config.chains:
        if not chain:
            raise ConfigError("empty shaping chain in config")
        if _has_percentile_step(chain):
            ps = config.sweep if config.sweep else [
                next(s.p for s in chain if s.method in PERCENTILE_METHODS)
            ]
            for p in ps:
                combos.append((chain, float(p)))
        else:
            combos.append((chain, P_SENTINEL))
    return combos


def _materialize_chain(
    chain: list[ShapingConfig], p: float, config: ExperimentConfig, thresholds: dict | None
) -> list[ShapingConfig]:
    """Apply the sweep p and the global-threshold mode to percentile steps."""
    out = []
    for step in chain:
        if step.method in PERCENTILE_METHODS:
            step_p = step.p if p == P_SENTINEL else p
            if config.threshold_mode == "global":
                key = _p_key(step_p)
                if thresholds is None or key not in thresholds:
                    raise ConfigError(
                        f"global threshold for p={key} not found; run calibrate first"
                    )
                step = replace(
                    step,
                    p=step_p,
                    threshold_mode="global",
                    global_threshold=float(thresholds[key]),
                    seed=step.seed ^ config.seed,
                )
            else:
                step = replace(step, p=step_p, seed=step.seed ^ config.seed)
        out.append(step)
    return out


def _load_role_manifest(path: str | None, expected_role: str, what: str) -> DatasetManifest:
    if not path:
        raise ConfigError(f"config needs data.{what}")
    manifest = load_manifest(path)
    manifest.validate()
    if manifest.role != expected_role:
        raise DataError(f"{path} has role {manifest.role!r}, expected {expected_role!r}")
    return manifest


def resolve_network(config: ExperimentConfig) -> FeedforwardNet:
    """Load the bundle or train from scratch per the config, then set the hook."""
    spec = config.network
    if spec.bundle:
        net = load_bundle(spec.bundle)
    elif spec.train:
        manifest = _load_role_manifest(config.data.id_train, "train", "id_train")
        pairs = manifest.load()
        X = np.stack([t.values.astype(np.float64) for t, _ in pairs])
        y = np.array([label for _, label in pairs])
        classes = int(y.max()) + 1
        net = init_net(
            [X.shape[1]] + list(spec.train.hidden) + [classes],
            seed=spec.train.seed if spec.train.seed is not None else config.seed,
        )
        train(
            net,
            X,
            y,
            epochs=spec.train.epochs,
            lr=spec.train.lr,
            seed=spec.train.seed if spec.train.seed is not None else config.seed,
            batch_size=spec.train.batch_size,
        )
    else:
        raise ConfigError("config needs network.bundle or network.train")
    net.hook = config.placement
    return net


def _forward_manifest(net, manifest: DatasetManifest, chain, index_base: int):
    results = []
    for offset, (path, entry) in enumerate(
        zip(manifest.resolved_paths(), manifest.entries)
    ):
        # load per file so any error stays tied to the offending path
        tensor = read_tensor(path)
        try:
            res = forward(net, tensor, chain=chain, sample_index=index_base + offset)
        except DataError as exc:
            raise DataError(f"{path}: {exc}")
        results.append((res, entry.label))
    return results


@dataclass(frozen=True)
class ReportRow:
    method: str
    p: float
    score: str
    metrics: MetricReport
    id_scores: tuple[float, ...]
    ood_scores: tuple[float, ...]

    def to_dict(self) -> dict:
        doc = {"method": self.method, "p": self.p, "score": self.score}
        doc.update(self.metrics.to_dict())
        doc["id_scores"] = list(self.id_scores)
        doc["ood_scores"] = list(self.ood_scores)
        return doc


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple[ReportRow, ...]
    provenance: dict

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "rows": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_csv(self) -> str:
        import io

        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(csv_row(row.method, row.p, row.score, row.metrics))
        return buf.getvalue()


def run(config: ExperimentConfig) -> ExperimentReport:
    net = resolve_network(config)
    id_eval = _load_role_manifest(config.data.id_eval, "id-eval", "id_eval")
    if not config.data.ood_eval:
        raise ConfigError("config needs data.ood_eval")
    ood_manifests = [
        _load_role_manifest(path, "ood-eval", "ood_eval") for path in config.data.ood_eval
    ]

    in_dim = net.weights[0].shape[1]
    for manifest, src in [(id_eval, config.data.id_eval)] + list(
        zip(ood_manifests, config.data.ood_eval)
    ):
        dims = manifest.validate()
        if int(np.prod(dims)) != in_dim:
            raise DataError(f"{src}: tensor dims {dims} do not match net input {in_dim}")

    thresholds = None
    if config.threshold_mode == "global":
        if not config.global_thresholds:
            raise ConfigError("threshold_mode=global requires global_thresholds path")
        thresholds = _read_thresholds(config.global_thresholds)

    train_manifest = None
    if config.score == "knn":
        train_manifest = _load_role_manifest(config.data.id_train, "train", "id_train")

    rows = []
    for chain, p in _combinations(config):
        concrete = _materialize_chain(chain, p, config, thresholds)
        id_results = _forward_manifest(net, id_eval, concrete, _INDEX_BASE["id-eval"])
        ood_results = []
        for j, manifest in enumerate(ood_manifests):
            ood_results.extend(
                _forward_manifest(
                    net, manifest, concrete, _INDEX_BASE["ood-eval"] + j * 100_000
                )
            )

        if config.score == "knn":
            bank_results = _forward_manifest(
                net, train_manifest, concrete, _INDEX_BASE["train"]
            )
            index = knn_fit(
                [res.penultimate for res, _ in bank_results],
                k=config.knn_k,
                normalize=config.knn_normalize,
            )
            scorer = lambda res: knn_score(index, res.penultimate)  # noqa: E731
        elif config.score == "softmax":
            scorer = lambda res: softmax_score(res.logits, config.temperature)  # noqa: E731
        else:
            scorer = lambda res: energy_score(res.logits)  # noqa: E731

        id_scores = tuple(scorer(res) for res, _ in id_results)
        ood_scores = tuple(scorer(res) for res, _ in ood_results)
        preds = [res.prediction for res, _ in id_results]
        labels = [label for _, label in id_results]
        metrics = evaluate(
            ScoreSet(id_scores, ood_scores), predictions=preds, labels=labels,
            bins=config.bins,
        )
        rows.append(
            ReportRow(
                method=chain_label(chain),
                p=p,
                score=config.score,
                metrics=metrics,
                id_scores=id_scores,
                ood_scores=ood_scores,
            )
        )

    report = ExperimentReport(
        rows=tuple(rows),
        provenance={
            "config_hash": config.config_hash(),
            "seed": config.seed,
            "version": __version__,
        },
    )
    if config.out_dir:
        write_report(report, config.out_dir)
    return report


def _next_report_index(out_dir: str) -> int:
    existing = [
        name for name in os.listdir(out_dir)
        if name.startswith("report-") and name.endswith(".json")
    ]
    return len(existing) + 1


def write_report(report: ExperimentReport, out_dir: str) -> tuple[str, str]:
    """Append-only: each run gets a fresh report-NNNN.{json,csv} pair."""
    os.makedirs(out_dir, exist_ok=True)
    idx = _next_report_index(out_dir)
    json_path = os.path.join(out_dir, f"report-{idx:04d}.json")
    while os.path.exists(json_path):
        idx += 1
        json_path = os.path.join(out_dir, f"report-{idx:04d}.json")
    csv_path = os.path.join(out_dir, f"report-{idx:04d}.csv")
    with open(json_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.to_csv())
    return json_path, csv_path


def load_report(path: str) -> ExperimentReport:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"report not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed report {path}: {exc}")
    rows = tuple(
        ReportRow(
            method=r["method"],
            p=r["p"],
            score=r["score"],
            metrics=MetricReport(
                auroc=r["auroc"],
                aupr=r["aupr"],
                fpr95=r["fpr95"],
                id_accuracy=r.get("id_accuracy"),
                iou=r.get("iou"),
                n_id=r.get("n_id", 0),
                n_ood=r.get("n_ood", 0),
            ),
            id_scores=tuple(r.get("id_scores", ())),
            ood_scores=tuple(r.get("ood_scores", ())),
        )
        for r in doc.get("rows", [])
    )
    return ExperimentReport(rows=rows, provenance=doc.get("provenance", {}))


# ---------------------------------------------------------------------------
# Global-threshold calibration
# ---------------------------------------------------------------------------


def calibrate(
    config: ExperimentConfig, ps: list[float] | None = None, out_path: str | None = None
) -> tuple[dict, str | None]:
    """Pool hook-site activations over id_train, percentile them per p.

    Writes {"placement": ..., "thresholds": {p: t}} as JSON when a path is
    available; rerunning with the same data produces an identical file.
    """
    from .shaping import calibrate_global_threshold

    manifest = _load_role_manifest(config.data.id_train, "train", "id_train")
    if ps is None:
        ps = config.sweep
    if not ps:
        raise ConfigError("calibrate needs p values: set sweep or pass --p")
    net = resolve_network(config)
    activations = [
        forward(net, tensor).hook_input for tensor, _ in manifest.load()
    ]
    thresholds = {_p_key(p): calibrate_global_threshold(activations, p) for p in ps}

    doc = {"placement": config.placement, "thresholds": thresholds}
    if out_path is None and config.out_dir:
        out_path = os.path.join(config.out_dir, "thresholds.json")
    if out_path:
        os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return doc, out_path


def _read_thresholds(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"global thresholds file not found: {path}")
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed thresholds file {path}: {exc}")
    return doc.get("thresholds", doc)


# ---------------------------------------------------------------------------
# Plot-data emission (CSV only; rendering is out of scope)
# ---------------------------------------------------------------------------

PLOT_KINDS = ("tradeoff", "accuracy-degradation", "distributions")


def emit_plot_data(
    report: ExperimentReport,
    kind: str,
    out_path: str | None = None,
    method: str | None = None,
    p: float | None = None,
    score: str | None = None,
) -> list[list]:
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}; valid: {PLOT_KINDS}")
    if not report.rows:
        raise DataError("report has no rows")

    if kind == "tradeoff":
        rows = [["p", "id_acc", "auroc"]] + [
            [row.p, row.metrics.id_accuracy, row.metrics.auroc] for row in report.rows
        ]
    elif kind == "accuracy-degradation":
        rows = [["p", "id_acc"]] + [[row.p, row.metrics.id_accuracy] for row in report.rows]
    else:
        selected = [
            row
            for row in report.rows
            if (method is None or row.method == method)
            and (p is None or row.p == p)
            and (score is None or row.score == score)
        ]
        if not selected:
            raise DataError("no report row matches the requested method/p/score")
        row = selected[0]
        if not row.id_scores and not row.ood_scores:
            raise DataError("report row carries no raw scores")
        rows = [["score", "tag"]]
        rows += [[s, "id"] for s in row.id_scores]
        rows += [[s, "ood"] for s in row.ood_scores]

    if out_path:
        os.makedirs(os.path.dirname(out_path) or ".", exist_ok=True)
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh).writerows(rows)
    return rows
