"""Acceptance suite: every release-gating criterion, one test each.

Each test prints a PASS line when its criterion holds so a `pytest -s`
(or -rA) run reads as a checklist. Tolerances are pinned here and nowhere
else. The desk-scale tests run on the shipped seeded benchmark built once
per session.
"""

import math
import os

import numpy as np
import pytest

from ashkit import (
    ScoreSet,
    ShapingConfig,
    apply_shaping,
    ash_b,
    ash_p,
    ash_s,
    aupr,
    auroc,
    calibrate_global_threshold,
    fpr_at_tpr,
)
from ashkit.benchmark import benchmark_config, build_demo_assets
from ashkit.experiment import calibrate, run
from ashkit.netlab import forward, load_bundle, with_zero_final_bias
from ashkit.tensors import FeatureTensor, load_manifest

from oracles import pairwise_auroc, scan_aupr, scan_fpr_at_tpr


def ok(name):
    print(f"\n[ACCEPTANCE] PASS: {name}")


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance-demo")
    assets = build_demo_assets(str(root))
    report = run(benchmark_config(assets))
    return {"root": root, "assets": assets, "report": report}


class TestAlgorithmExactness:
    """Worked 4-element vectors match hand-derived outputs to 1e-6."""

    def test_worked_examples(self):
        x = FeatureTensor.from_values([1.0, 2.0, 3.0, 4.0])

        out, rep = ash_p(x, ShapingConfig(method="ash-p", p=75))
        np.testing.assert_allclose(out.values, [0, 0, 3, 4], atol=1e-6)

        out, rep = ash_b(x, ShapingConfig(method="ash-b", p=50))
        np.testing.assert_allclose(out.values, [0, 10 / 3, 10 / 3, 10 / 3], rtol=1e-6)

        # 0% pruning turns binarization into the all-mean map
        out, _ = ash_b(x, ShapingConfig(method="ash-b", p=0))
        np.testing.assert_allclose(out.values, [2.5, 2.5, 2.5, 2.5], atol=1e-6)

        factor = math.exp(10.0 / 9.0)
        out, rep = ash_s(x, ShapingConfig(method="ash-s", p=50))
        np.testing.assert_allclose(
            out.values, [0, 2 * factor, 3 * factor, 4 * factor], rtol=1e-6
        )
        assert rep.factor == pytest.approx(factor, rel=1e-12)

        out, _ = ash_s(x, ShapingConfig(method="ash-s", p=50, scaling="linear"))
        np.testing.assert_allclose(out.values, [0, 20 / 9, 30 / 9, 40 / 9], rtol=1e-6)

        ok("algorithm exactness on worked vectors (1e-6)")


class TestSumLaws:
    """10,000 random mixed-sign tensors, sizes 1-4096, p in {0..99}, rel 1e-5."""

    def test_sum_preservation_and_scaling_law(self):
        rng = np.random.default_rng(424242)
        checked_b = checked_s = 0
        for _ in range(10_000):
            n = int(rng.integers(1, 4097))
            x = FeatureTensor.from_values(rng.uniform(-1.0, 3.0, size=n).astype(np.float32))
            p = float(rng.integers(0, 100))

            out, rep = ash_b(x, ShapingConfig(method="ash-b", p=p))
            if rep.n >= 1:
                total = float(out.values.sum(dtype=np.float64))
                assert total == pytest.approx(rep.s1, rel=1e-5)
                checked_b += 1

            out, rep = ash_s(x, ShapingConfig(method="ash-s", p=p))
            if not rep.degenerate:
                total = float(out.values.sum(dtype=np.float64))
                assert total == pytest.approx(rep.s2 * math.exp(rep.s1 / rep.s2), rel=1e-5)
                checked_s += 1
        assert checked_b > 9_000 and checked_s > 9_000
        ok(f"sum laws on 10,000 random tensors (rel 1e-5; {checked_b} binarize, "
           f"{checked_s} scale)")


class TestMetricOracleEquivalence:
    """Fast AUROC/AUPR/FPR95 equal brute-force oracles within 1e-9, with ties."""

    def test_thousand_tied_scoresets(self):
        rng = np.random.default_rng(31337)
        for _ in range(1000):
            n_id = int(rng.integers(1, 51))
            n_ood = int(rng.integers(1, 51))
            grid = rng.integers(0, 12, size=n_id + n_ood) / 2.0
            s = ScoreSet(tuple(grid[:n_id]), tuple(grid[n_id:]))
            assert auroc(s) == pytest.approx(
                pairwise_auroc(s.id_scores, s.ood_scores), abs=1e-9
            )
            assert aupr(s) == pytest.approx(
                scan_aupr(s.id_scores, s.ood_scores), abs=1e-9
            )
            assert fpr_at_tpr(s) == pytest.approx(
                scan_fpr_at_tpr(s.id_scores, s.ood_scores), abs=1e-9
            )
        ok("metric oracle equivalence on 1000 tied score sets (1e-9)")


class TestArgmaxInvariance:
    """Zero-bias head: pruning-only and scaled pruning give identical accuracy
    at every p. Exact equality, no tolerance."""

    def test_accuracy_identical_across_p(self, demo):
        net = with_zero_final_bias(load_bundle(demo["assets"]["bundle"]))
        pairs = load_manifest(demo["assets"]["id_eval"]).load()
        for p in [0, 10, 25, 50, 65, 70, 75, 80, 85, 90, 95, 99, 99.9]:
            accs = {}
            for method in ("ash-p", "ash-s"):
                chain = [ShapingConfig(method=method, p=p)]
                hits = sum(
                    forward(net, tensor, chain=chain, sample_index=i).prediction == label
                    for i, (tensor, label) in enumerate(pairs)
                )
                accs[method] = hits / len(pairs)
            assert accs["ash-p"] == accs["ash-s"], f"divergence at p={p}: {accs}"
        ok("argmax invariance: pruning-only == scaled accuracy at every p (exact)")


class TestDeskScaleTrend:
    """Shipped benchmark ordering: energy baseline < ash-rand@65 < ash-s@90."""

    def test_auroc_ordering(self, demo):
        by = {(r.method, r.p): r.metrics for r in demo["report"].rows}
        base = by[("none", -1.0)].auroc
        rand65 = by[("ash-rand", 65.0)].auroc
        s90 = by[("ash-s", 90.0)].auroc
        assert s90 > base, f"ash-s@90 {s90:.4f} not above baseline {base:.4f}"
        assert base < rand65 < s90, (
            f"ordering violated: baseline {base:.4f}, ash-rand@65 {rand65:.4f}, "
            f"ash-s@90 {s90:.4f}"
        )
        ok(f"desk-scale trend: baseline {base:.4f} < ash-rand@65 {rand65:.4f} "
           f"< ash-s@90 {s90:.4f}")


class TestGlobalVsLocal:
    """Single-sample calibration is exactly local; local beats global on the
    benchmark at matched p."""

    def test_single_sample_calibration_is_local_bitwise(self):
        rng = np.random.default_rng(777)
        for method in ("ash-p", "ash-b", "ash-s"):
            for _ in range(50):
                x = FeatureTensor.from_values(
                    rng.uniform(-1.0, 3.0, size=int(rng.integers(1, 512))).astype(np.float32)
                )
                p = float(rng.integers(0, 100))
                t = calibrate_global_threshold([x], p)
                local, _ = apply_shaping(x, ShapingConfig(method=method, p=p))
                swapped, _ = apply_shaping(
                    x,
                    ShapingConfig(
                        method=method, p=p, threshold_mode="global", global_threshold=t
                    ),
                )
                assert np.array_equal(
                    local.values.view(np.uint32), swapped.values.view(np.uint32)
                )
        ok("global-vs-local: single-sample calibration reproduces local bit-for-bit")

    def test_local_auroc_at_least_global_on_benchmark(self, demo):
        assets = demo["assets"]
        thr_path = os.path.join(str(demo["root"]), "thresholds.json")
        calibrate(benchmark_config(assets, sweep=[90.0]), out_path=thr_path)
        local = run(
            benchmark_config(assets, chains=[[ShapingConfig(method="ash-s", p=90)]])
        ).rows[0].metrics.auroc
        global_ = run(
            benchmark_config(
                assets,
                chains=[[ShapingConfig(method="ash-s", p=90)]],
                threshold_mode="global",
                global_thresholds=thr_path,
            )
        ).rows[0].metrics.auroc
        assert local >= global_
        ok(f"global-vs-local: local ash-s@90 AUROC {local:.4f} >= global {global_:.4f}")


class TestAccuracyDegradation:
    """p=0 leaves accuracy exactly unshaped; p=99.9 strictly degrades it."""

    def test_degradation_endpoints(self, demo):
        assets = demo["assets"]
        unshaped = run(
            benchmark_config(assets, chains=[[ShapingConfig(method="none")]])
        ).rows[0].metrics.id_accuracy
        at_zero = run(
            benchmark_config(assets, chains=[[ShapingConfig(method="ash-p", p=0)]])
        ).rows[0].metrics.id_accuracy
        at_extreme = run(
            benchmark_config(assets, chains=[[ShapingConfig(method="ash-p", p=99.9)]])
        ).rows[0].metrics.id_accuracy
        assert at_zero == unshaped
        assert at_extreme < unshaped
        ok(f"accuracy degradation: p=0 acc {at_zero:.4f} == unshaped {unshaped:.4f}, "
           f"p=99.9 acc {at_extreme:.4f} strictly lower")
