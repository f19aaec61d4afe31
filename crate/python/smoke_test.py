#!/usr/bin/env python3
"""Smoke test for the modelsel_py extension module.

Builds the cdylib with cargo, loads it, and checks the main operations
against known values: the worked proxy-score example, the similarity
example, and the end-to-end epoch arithmetic of the shipped fixtures.

Run from the repository root:

    python3 python/smoke_test.py
"""

import json
import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_and_import():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "modelsel-py"],
        cwd=REPO,
        check=True,
    )
    built = REPO / "target" / "release" / "libmodelsel_py.so"
    if not built.exists():  # e.g. macOS
        built = REPO / "target" / "release" / "libmodelsel_py.dylib"
    stage = Path(tempfile.mkdtemp(prefix="modelsel_py_"))
    shutil.copy2(built, stage / "modelsel_py.so")
    sys.path.insert(0, str(stage))
    import modelsel_py

    return modelsel_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    ms = build_and_import()
    checks = 0

    # Proxy score: worked four-row example, (ln 0.78 + ln 0.71) / 2.
    score = ms.leep_score(
        [[0.9, 0.1], [0.8, 0.2], [0.2, 0.8], [0.1, 0.9]], [0, 0, 1, 1]
    )
    approx(score, (math.log(0.78) + math.log(0.71)) / 2, 1e-12)
    assert abs(score - (-0.29551)) < 1e-4
    # Perfect alignment scores exactly zero.
    approx(ms.leep_score([[1.0, 0.0], [0.0, 1.0]], [0, 1]), 0.0, 0.0)
    checks += 1
    print(f"[ok] leep_score worked example: {score:.6f}")

    # Similarity: top-2 differences (0.2, 0.1) -> 0.85.
    a = {f"d{i}": v for i, v in enumerate([0.9, 0.8, 0.7, 0.6, 0.5, 0.4])}
    b = {f"d{i}": v for i, v in enumerate([0.8, 0.8, 0.5, 0.6, 0.5, 0.4])}
    approx(ms.pair_similarity(a, b, k=2), 0.85, 1e-12)
    approx(ms.pair_similarity(a, a, k=3), 1.0, 0.0)
    checks += 1
    print("[ok] pair_similarity worked example: 0.85")

    # Normalization endpoints.
    assert ms.normalize_scores([-1.0, -0.5, 0.0]) == [0.0, 0.5, 1.0]
    assert ms.normalize_scores([-2.0, -2.0]) == [1.0, 1.0]
    checks += 1
    print("[ok] normalize_scores endpoints")

    # Trend mining and prediction: two regimes, matched by proximity.
    trends = ms.mine_convergence_trends(
        [0.80, 0.82, 0.50, 0.52], [0.85, 0.87, 0.55, 0.57], c=2
    )
    approx(trends[0][0], 0.81, 1e-12)
    approx(trends[0][1], 0.86, 1e-12)
    approx(trends[1][0], 0.51, 1e-12)
    idx, pred = ms.predict_from_trends(trends, 0.79)
    assert idx == 0
    approx(pred, 0.86, 1e-12)
    checks += 1
    print("[ok] trend mining and prediction")

    # End-to-end on the shipped NLP fixture: 19 epochs, 10.53x / 4.05x.
    bundle = ms.Bundle(str(REPO / "fixtures" / "tweet"))
    assert len(bundle.model_ids()) == 40
    config = ms.PipelineConfig()
    clusters = ms.cluster_models(bundle, config)
    non_singleton = sum(1 for c in clusters.clusters if len(c) > 1)
    assert len(clusters.clusters) == 20 and non_singleton == 10, (
        len(clusters.clusters),
        non_singleton,
    )
    result = ms.compare(bundle, config)
    assert result.bf.epochs == 200.0
    assert result.sh.epochs == 77.0
    approx(result.two_phase_epochs, 19.0, 0.0)
    approx(result.speedup_vs_bf, 10.53, 1e-9)
    approx(result.speedup_vs_sh, 4.05, 1e-9)
    assert result.two_phase_winner == "nlp-b0-m0"
    checks += 1
    print("[ok] tweet fixture: 2PH 19 epochs, speedups 10.53x / 4.05x")

    # Two-phase decomposition: 10 proxy evaluations at 0.5 epochs + 14.
    outcome = ms.two_phase(bundle, config)
    assert outcome.proxy_evals == 10
    approx(outcome.coarse_epochs, 5.0, 0.0)
    approx(outcome.fine_epochs, 14.0, 0.0)
    assert len(outcome.recalled) == 10
    assert "nlp-b0-m0" in outcome.recalled
    checks += 1
    print("[ok] two_phase decomposition: 5 coarse + 14 fine epochs")

    # CV fixture with T=4: 18 epochs end to end.
    cv_bundle = ms.Bundle(str(REPO / "fixtures" / "xray"))
    cv_config = ms.PipelineConfig(total_steps=4)
    cv = ms.compare(cv_bundle, cv_config)
    assert cv.bf.epochs == 120.0 and cv.sh.epochs == 55.0
    approx(cv.two_phase_epochs, 18.0, 0.0)
    approx(cv.speedup_vs_bf, 6.67, 1e-9)
    checks += 1
    print("[ok] xray fixture: 2PH 18 epochs, speedup 6.67x")

    # Threshold sweep direction on the threshold fixture.
    thr_bundle = ms.Bundle(str(REPO / "fixtures" / "threshold"))
    sweep = []
    for theta in (0.0, 0.01, 0.05, 0.10):
        log = ms.run_selection(
            thr_bundle, ms.PipelineConfig(threshold=theta), "fs"
        )
        sweep.append((log.epochs, log.winner_test))
    assert sweep[0] == (14.0, 0.86) and sweep[-1] == (16.0, 0.90), sweep
    for (e0, a0), (e1, a1) in zip(sweep, sweep[1:]):
        assert e1 >= e0 and a1 >= a0, sweep
    checks += 1
    print(f"[ok] threshold sweep monotone: {sweep}")

    # Scheduler epoch identities on the fixture repository.
    sh = ms.run_selection(bundle, config, "sh")
    assert sh.epochs == 77.0 and sh.survivors_per_stage == [40, 20, 10, 5, 2]
    bf = ms.run_selection(bundle, config, "bf")
    assert bf.epochs == 200.0
    checks += 1
    print("[ok] schedulers: SH 77 (40/20/10/5/2), BF 200")

    # Synthetic generation from Python is deterministic.
    with tempfile.TemporaryDirectory() as tmp:
        spec = {
            "target_id": "demo",
            "n_benchmarks": 5,
            "stages": 3,
            "blocks": [
                {
                    "models": 3,
                    "level": 0.7,
                    "signature": [0],
                    "boost": 0.2,
                    "jitter": 0.02,
                    "alignment": 0.9,
                    "target_level": 0.8,
                },
                {
                    "models": 2,
                    "level": 0.4,
                    "signature": [],
                    "boost": 0.0,
                    "jitter": 0.02,
                    "alignment": 0.6,
                    "target_level": 0.5,
                },
            ],
            "trace_sigma": 0.01,
            "regime": {"noisy": {"spread": 0.05, "sigma": 0.02}},
            "dump_labels": 3,
            "dump_rows_per_label": 5,
        }
        out_a, out_b = Path(tmp) / "a", Path(tmp) / "b"
        for out in (out_a, out_b):
            ms.generate_bundle(str(out), spec_json=json.dumps(spec), seed=11)
        files_a = sorted(p.relative_to(out_a) for p in out_a.rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(out_b) for p in out_b.rglob("*") if p.is_file())
        assert files_a == files_b
        for rel in files_a:
            assert (out_a / rel).read_bytes() == (out_b / rel).read_bytes(), rel
        generated = ms.Bundle(str(out_a))
        assert len(generated.model_ids()) == 5
    checks += 1
    print("[ok] generate_bundle deterministic and loadable")

    print(f"\nsmoke test passed ({checks} checks)")


if __name__ == "__main__":
    main()
