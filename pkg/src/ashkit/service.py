"""HTTP service wrapping the toolkit.

Every capability of the package is reachable through a JSON endpoint so
the CLI (and any other client) can stay a thin shell over the wire format.
Endpoints that reference datasets, bundles, or report files expect the
service and client to share a filesystem; tensor payloads small enough to
inline (single activations, logits, score lists) travel in the request
body directly.

Error mapping: ConfigError -> 400, DataError -> 422, both with a body of
{"detail": {"error": "config"|"data", "message": ...}}.
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict

from . import __version__
from .errors import ConfigError, DataError
from .experiment import (
    ExperimentConfig,
    calibrate,
    emit_plot_data,
    load_report,
    run,
    write_report,
)
from .metrics import evaluate
from .netlab import SyntheticDatasetSpec, generate
from .scoring import ScoreSet, energy_score, knn_fit, knn_score, softmax_score
from .shaping import ShapingConfig, apply_chain
from .tensors import FeatureTensor, percentile_threshold

app = FastAPI(title="activation-shaping OOD service", version=__version__)


@app.exception_handler(ConfigError)
async def _config_error(request: Request, exc: ConfigError):
    return JSONResponse(
        status_code=400, content={"detail": {"error": "config", "message": str(exc)}}
    )


@app.exception_handler(DataError)
async def _data_error(request: Request, exc: DataError):
    return JSONResponse(
        status_code=422, content={"detail": {"error": "data", "message": str(exc)}}
    )


@app.exception_handler(RequestValidationError)
async def _validation_error(request: Request, exc: RequestValidationError):
    # malformed request bodies are configuration mistakes, same as ConfigError
    return JSONResponse(
        status_code=400, content={"detail": {"error": "config", "message": str(exc.errors())}}
    )


@app.get("/healthz")
def healthz():
    return {"status": "ok", "version": __version__}


# --- tensors -----------------------------------------------------------


class PercentileRequest(BaseModel):
    values: list[float]
    p: float


class PercentileResponse(BaseModel):
    threshold: float


@app.post("/tensors/percentile", response_model=PercentileResponse)
def tensors_percentile(req: PercentileRequest):
    t = percentile_threshold(np.asarray(req.values, dtype=np.float32), req.p)
    return PercentileResponse(threshold=t)


# --- shaping -----------------------------------------------------------


class ShapeRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    values: list[float]
    dims: Optional[list[int]] = None
    chain: list[ShapingConfig]
    sample_index: int = 0


class ShapeReportModel(BaseModel):
    t: float
    s1: float
    s2: float
    n: int
    factor: float
    degenerate: bool


class ShapeResponse(BaseModel):
    values: list[float]
    dims: list[int]
    reports: list[ShapeReportModel]


@app.post("/shaping/apply", response_model=ShapeResponse)
def shaping_apply(req: ShapeRequest):
    tensor = FeatureTensor.from_values(
        np.asarray(req.values, dtype=np.float32), req.dims
    )
    shaped, reports = apply_chain(tensor, req.chain, sample_index=req.sample_index)
    return ShapeResponse(
        values=shaped.tolist(),
        dims=list(shaped.dims),
        reports=[ShapeReportModel(**r.__dict__) for r in reports],
    )


# --- scores ------------------------------------------------------------


class ScoreRequest(BaseModel):
    kind: Literal["energy", "softmax"] = "energy"
    logits: list[float]
    temperature: float = 1.0


class ScoreResponse(BaseModel):
    score: float


@app.post("/scores/evaluate", response_model=ScoreResponse)
def scores_evaluate(req: ScoreRequest):
    z = np.asarray(req.logits, dtype=np.float64)
    if req.kind == "softmax":
        return ScoreResponse(score=softmax_score(z, req.temperature))
    return ScoreResponse(score=energy_score(z))


class KnnRequest(BaseModel):
    bank: list[list[float]]
    queries: list[list[float]]
    k: int = 50
    normalize: bool = True


class KnnResponse(BaseModel):
    scores: list[float]


@app.post("/scores/knn", response_model=KnnResponse)
def scores_knn(req: KnnRequest):
    index = knn_fit(np.asarray(req.bank, dtype=np.float64), k=req.k, normalize=req.normalize)
    scores = [knn_score(index, np.asarray(q, dtype=np.float64)) for q in req.queries]
    return KnnResponse(scores=scores)


# --- metrics -----------------------------------------------------------


class MetricsRequest(BaseModel):
    id_scores: list[float]
    ood_scores: list[float]
    predictions: Optional[list[int]] = None
    labels: Optional[list[int]] = None
    bins: int = 50
    tpr_target: float = 0.95


class MetricsResponse(BaseModel):
    auroc: float
    aupr: float
    fpr95: float
    id_accuracy: Optional[float] = None
    iou: Optional[float] = None
    n_id: int
    n_ood: int


@app.post("/metrics/evaluate", response_model=MetricsResponse)
def metrics_evaluate(req: MetricsRequest):
    report = evaluate(
        ScoreSet(tuple(req.id_scores), tuple(req.ood_scores)),
        predictions=req.predictions,
        labels=req.labels,
        bins=req.bins,
        tpr_target=req.tpr_target,
    )
    return MetricsResponse(**report.to_dict())


# --- datasets and demo assets -------------------------------------------


class GenerateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: str
    dim: int = 16
    classes: int = 4
    samples_per_class: int = 50
    spread: float = 1.0
    seed: int = 0
    role: Optional[str] = None
    out_dir: str


class GenerateResponse(BaseModel):
    manifest: str
    count: int


@app.post("/datasets/generate", response_model=GenerateResponse)
def datasets_generate(req: GenerateRequest):
    spec = SyntheticDatasetSpec(
        kind=req.kind,
        dim=req.dim,
        classes=req.classes,
        samples_per_class=req.samples_per_class,
        spread=req.spread,
        seed=req.seed,
    )
    manifest, path = generate(spec, req.out_dir, role=req.role)
    return GenerateResponse(manifest=path, count=len(manifest))


class DemoRequest(BaseModel):
    out_dir: str
    seed: Optional[int] = None


class DemoResponse(BaseModel):
    id_train: str
    id_eval: str
    ood_shift: str
    ood_ring: str
    bundle: str


@app.post("/nets/train-demo", response_model=DemoResponse)
def nets_train_demo(req: DemoRequest):
    from .benchmark import DEFAULT_SEED, build_demo_assets

    seed = DEFAULT_SEED if req.seed is None else req.seed
    paths = build_demo_assets(req.out_dir, seed=seed)
    return DemoResponse(**paths)


# --- experiments ---------------------------------------------------------


class RunResponse(BaseModel):
    report: dict
    report_path: Optional[str] = None
    csv_path: Optional[str] = None


@app.post("/experiments/run", response_model=RunResponse)
def experiments_run(config: ExperimentConfig):
    out_dir = config.out_dir
    config = config.model_copy(update={"out_dir": None})
    report = run(config)
    report_path = csv_path = None
    if out_dir:
        report_path, csv_path = write_report(report, out_dir)
    return RunResponse(report=report.to_dict(), report_path=report_path, csv_path=csv_path)


class CalibrateRequest(BaseModel):
    config: ExperimentConfig
    ps: Optional[list[float]] = None
    out_path: Optional[str] = None


class CalibrateResponse(BaseModel):
    placement: str
    thresholds: dict[str, float]
    path: Optional[str] = None


@app.post("/experiments/calibrate", response_model=CalibrateResponse)
def experiments_calibrate(req: CalibrateRequest):
    doc, path = calibrate(req.config, ps=req.ps, out_path=req.out_path)
    return CalibrateResponse(
        placement=doc["placement"], thresholds=doc["thresholds"], path=path
    )


class PlotRequest(BaseModel):
    report_path: str
    kind: Literal["tradeoff", "accuracy-degradation", "distributions"]
    out_path: Optional[str] = None
    method: Optional[str] = None
    p: Optional[float] = None
    score: Optional[str] = None


class PlotResponse(BaseModel):
    rows: list[list]
    out_path: Optional[str] = None


@app.post("/plots/emit", response_model=PlotResponse)
def plots_emit(req: PlotRequest):
    report = load_report(req.report_path)
    rows = emit_plot_data(
        report,
        req.kind,
        out_path=req.out_path,
        method=req.method,
        p=req.p,
        score=req.score,
    )
    return PlotResponse(rows=rows, out_path=req.out_path)
