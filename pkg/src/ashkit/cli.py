"""Command-line client for the service.

Every subcommand talks to the HTTP surface: by default an in-process
instance of the app (no server needed), or a remote one via --server.
Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys

import httpx

from . import __version__

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class ServiceClient:
    def __init__(self, server: str | None = None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=600.0)
        else:
            import warnings

            with warnings.catch_warnings():
                # starlette's in-process client import warns about httpx pinning
                warnings.simplefilter("ignore", DeprecationWarning)
                from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app)

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        if response.status_code != 200:
            raise ServiceError(response.status_code, response.json().get("detail"))
        return response.json()


class ServiceError(Exception):
    def __init__(self, status: int, detail):
        self.status = status
        self.detail = detail
        super().__init__(f"HTTP {status}: {detail}")

    @property
    def exit_code(self) -> int:
        if isinstance(self.detail, dict) and self.detail.get("error") == "data":
            return EXIT_DATA
        return EXIT_CONFIG

    @property
    def message(self) -> str:
        if isinstance(self.detail, dict) and "message" in self.detail:
            return str(self.detail["message"])
        return json.dumps(self.detail)


def _load_config_doc(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        _fail(f"config not found: {path}", EXIT_CONFIG)
    except json.JSONDecodeError as exc:
        _fail(f"malformed config {path}: {exc}", EXIT_CONFIG)


def _fail(message: str, code: int):
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(code)


def _apply_overrides(doc: dict, args) -> dict:
    if args.method:
        doc["chains"] = [[{"method": args.method}]]
    if args.p is not None:
        doc["sweep"] = [args.p]
    if args.score:
        doc["score"] = args.score
    if args.threshold_mode:
        doc["threshold_mode"] = args.threshold_mode
    if args.temperature is not None:
        doc["temperature"] = args.temperature
    if args.placement:
        doc["placement"] = args.placement
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out:
        doc["out_dir"] = args.out
    return doc


def _add_override_flags(parser):
    parser.add_argument("--method", help="replace the shaping chains with one single-step chain")
    parser.add_argument("--p", type=float, help="replace the sweep with one pruning percentage")
    parser.add_argument("--score", choices=["energy", "softmax", "knn"])
    parser.add_argument("--threshold-mode", dest="threshold_mode", choices=["local", "global"])
    parser.add_argument("--temperature", type=float)
    parser.add_argument("--placement")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory for reports")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ashkit",
        description="Activation-shaping OOD detection toolkit (thin client over the service)",
    )
    parser.add_argument("--server", help="base URL of a running service; default is in-process")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config", help="path to the experiment JSON config")
    _add_override_flags(p_run)

    p_cal = sub.add_parser("calibrate", help="compute global pruning thresholds from id_train")
    p_cal.add_argument("config", help="path to the experiment JSON config")
    p_cal.add_argument("--p", type=float, action="append", dest="ps",
                       help="percentile to calibrate (repeatable; default: config sweep)")
    p_cal.add_argument("--out", help="output path for the thresholds JSON")
    p_cal.add_argument("--seed", type=int)

    p_demo = sub.add_parser("train-demo", help="build the seeded demo benchmark assets")
    p_demo.add_argument("--out", required=True, help="directory for datasets and the net bundle")
    p_demo.add_argument("--seed", type=int)

    p_gen = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p_gen.add_argument("--kind", required=True,
                       choices=["gaussian-blobs-id", "shifted-blobs-ood", "uniform-ring-ood"])
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--dim", type=int, default=16)
    p_gen.add_argument("--classes", type=int, default=4)
    p_gen.add_argument("--samples", type=int, default=50, help="samples per class")
    p_gen.add_argument("--spread", type=float, default=1.0)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--role", choices=["train", "id-eval", "ood-eval"])

    p_plot = sub.add_parser("emit-plot", help="emit plot-ready CSV from a report")
    p_plot.add_argument("--report", required=True, help="path to a report-*.json file")
    p_plot.add_argument("--kind", required=True,
                        choices=["tradeoff", "accuracy-degradation", "distributions"])
    p_plot.add_argument("--out", help="CSV output path (default: print to stdout)")
    p_plot.add_argument("--method")
    p_plot.add_argument("--p", type=float)
    p_plot.add_argument("--score")

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        import uvicorn

        from .service import app

        uvicorn.run(app, host=args.host, port=args.port)
        return EXIT_OK

    client = ServiceClient(args.server)
    try:
        if args.command == "run":
            doc = _apply_overrides(_load_config_doc(args.config), args)
            result = client.post("/experiments/run", doc)
            print(json.dumps(result, indent=2, sort_keys=True))
        elif args.command == "calibrate":
            doc = _load_config_doc(args.config)
            if args.seed is not None:
                doc["seed"] = args.seed
            result = client.post(
                "/experiments/calibrate",
                {"config": doc, "ps": args.ps, "out_path": args.out},
            )
            print(json.dumps(result, indent=2, sort_keys=True))
        elif args.command == "train-demo":
            result = client.post("/nets/train-demo", {"out_dir": args.out, "seed": args.seed})
            print(json.dumps(result, indent=2, sort_keys=True))
        elif args.command == "gen-data":
            result = client.post(
                "/datasets/generate",
                {
                    "kind": args.kind,
                    "dim": args.dim,
                    "classes": args.classes,
                    "samples_per_class": args.samples,
                    "spread": args.spread,
                    "seed": args.seed,
                    "role": args.role,
                    "out_dir": args.out,
                },
            )
            print(json.dumps(result, indent=2, sort_keys=True))
        elif args.command == "emit-plot":
            result = client.post(
                "/plots/emit",
                {
                    "report_path": args.report,
                    "kind": args.kind,
                    "out_path": args.out,
                    "method": args.method,
                    "p": args.p,
                    "score": args.score,
                },
            )
            if args.out:
                print(result["out_path"])
            else:
                for row in result["rows"]:
                    print(",".join(str(v) for v in row))
    except ServiceError as exc:
        _fail(exc.message, exc.exit_code)
    except httpx.HTTPError as exc:
        _fail(f"cannot reach service: {exc}", EXIT_DATA)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
