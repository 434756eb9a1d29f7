"""Acceptance gate: one test per acceptance criterion, each printing a
single PASS/FAIL line with the measured values.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import math
import os

import numpy as np
import pytest

from trafficlab.adversary import (
    DetectorParams,
    RateSeries,
    bin_rates,
    identify_by_dns,
    split_streams,
    windows_to_features,
)
from trafficlab.cli import main as cli_main
from trafficlab.config import DefenseSpec, ExperimentConfig
from trafficlab.defenses import conceal_dns, inject_decoys, shape_constant_rate, tunnel
from trafficlab.harness import run_experiment, score_events, sweep
from trafficlab.knn import AnalysisParams, make_folds
from trafficlab.synth import (
    BehaviorEvent,
    BehaviorTimeline,
    find_violations,
    get_scenario,
    render_traffic,
    sample_timeline,
)
from trafficlab.trace import AdversaryView, project_view


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}")
    assert ok, f"criterion {number} ({title}): {detail}"


DEFAULT_ANALYSIS = AnalysisParams(s=10.0, w=300.0, k=5, folds=10)


@pytest.fixture(scope="module")
def default_trace():
    sc = get_scenario("default")
    tl = sample_timeline(sc, seed=0)
    return sc, render_traffic(tl, sc, seed=0)


class TestAcceptance:
    def test_1_identification_accuracy(self):
        report = run_experiment(ExperimentConfig(analysis=DEFAULT_ANALYSIS, seed=0))
        acc = report.mean_accuracy
        verdict(
            1,
            "identification accuracy",
            acc is not None and acc >= 0.95,
            f"default scenario s=10 w=300 k=5 10-fold CV mean accuracy {acc:.4f} (need >= 0.95)",
        )

    def test_2_sweep_robustness(self):
        rows, skipped = sweep(ExperimentConfig(analysis=DEFAULT_ANALYSIS, seed=0))
        good = sum(1 for *_, acc in rows if acc >= 0.90)
        frac = good / len(rows)
        verdict(
            2,
            "sweep robustness",
            frac >= 0.75,
            f"{good}/{len(rows)} valid grid points >= 0.90 accuracy "
            f"({frac:.0%}, need >= 75%; {len(skipped)} infeasible points skipped)",
        )

    def test_3_shaping_defeats_identification(self, default_trace):
        _, trace = default_trace
        target_rate, cell = 4000.0, 2000
        shaped, _ = shape_constant_rate(trace, target_rate, cell)

        s = 10.0
        streams = split_streams(project_view(shaped, AdversaryView.LAST_MILE))
        expected_bin = int(target_rate * s)
        bins_exact = all(
            (bin_rates(recs, s, shaped.duration_s, k).counts == expected_bin).all()
            for k, recs in streams.items()
        )

        cfg = ExperimentConfig(
            analysis=DEFAULT_ANALYSIS,
            defenses=[
                DefenseSpec("shape_constant", {"target_rate": target_rate, "cell_size": cell})
            ],
            seed=0,
        )
        acc = run_experiment(cfg).mean_accuracy
        bound = 1 / 6 + 0.10
        verdict(
            3,
            "shaping defeats identification",
            bins_exact and acc is not None and acc <= bound,
            f"shaped accuracy {acc:.4f} (need <= {bound:.4f}); "
            f"every {s:g}s bin carries exactly {expected_bin} bytes: {bins_exact}",
        )

    def test_4_dns_concealment(self, default_trace):
        _, trace = default_trace
        defended, _ = conceal_dns(trace)
        streams = split_streams(project_view(defended, AdversaryView.LAST_MILE))
        dictionary = {"nestify": "security_camera", "voxhome": "personal_assistant"}
        hidden = sum(
            1 for recs in streams.values() if identify_by_dns(recs, dictionary) is None
        )
        conserved = defended.total_bytes() == trace.total_bytes()
        verdict(
            4,
            "DNS concealment",
            hidden == len(streams) and conserved,
            f"{hidden}/{len(streams)} streams unidentifiable; "
            f"byte totals unchanged: {conserved}",
        )

    def test_5_tunneling(self, default_trace):
        _, trace = default_trace
        wifi_before = project_view(trace, AdversaryView.WIFI_EAVESDROPPER)
        defended, cost = tunnel(trace, overhead_bytes=40)
        n_streams = len(split_streams(project_view(defended, AdversaryView.LAST_MILE)))
        overhead_exact = cost.overhead_bytes == 40 * len(trace.records)
        wifi_unchanged = project_view(trace, AdversaryView.WIFI_EAVESDROPPER) == wifi_before
        verdict(
            5,
            "tunneling",
            n_streams == 1 and overhead_exact and wifi_unchanged,
            f"last-mile streams after tunnel: {n_streams} (need 1); "
            f"overhead {cost.overhead_bytes} = 40 x {len(trace.records)} records: "
            f"{overhead_exact}; pre-tunnel wifi capture unchanged: {wifi_unchanged}",
        )

    def test_6_decoys_halve_precision(self):
        n_seeds = 20
        analysis = AnalysisParams(s=5.0, w=60.0, k=1, folds=10)
        detector = DetectorParams(
            baseline_s=60.0, threshold_c=4.0, sustain_s=10.0, merge_gap_s=5.0
        )
        precisions, recalls = [], []
        violations = 0
        sc = get_scenario("clean_burst")
        for seed in range(n_seeds):
            cfg = ExperimentConfig(
                scenario="clean_burst",
                analysis=analysis,
                detector=detector,
                defenses=[DefenseSpec("inject_decoys", {"multiplier": 1.0})],
                tolerance_s=10.0,
                seed=seed,
            )
            report = run_experiment(cfg)
            precisions.append(report.behavior.precision)
            recalls.append(report.behavior.recall)

            tl = sample_timeline(sc, seed=seed)
            trace = render_traffic(tl, sc, seed=seed)
            _, decoy_tl, _ = inject_decoys(trace, sc, tl, 1.0, seed=seed)
            combined = list(tl.events) + list(decoy_tl.events)
            violations += len(find_violations(combined, sc.constraints))

        mp, mr = float(np.mean(precisions)), float(np.mean(recalls))
        ok = 0.35 <= mp <= 0.65 and mr >= 0.9 and violations == 0
        verdict(
            6,
            "decoy injection halves precision",
            ok,
            f"mean precision {mp:.3f} over {n_seeds} seeds (need in [0.35, 0.65]); "
            f"mean recall {mr:.3f} (need >= 0.9); combined constraint violations: "
            f"{violations} (need 0)",
        )

    def test_7_oracle_suites(self):
        rng = np.random.default_rng(123)

        # windowed mean/stddev vs direct summation on 1000 random windows
        feature_checked = 0
        feature_ok = True
        while feature_checked < 1000:
            per = int(rng.integers(1, 12))
            n_windows = int(rng.integers(1, 6))
            counts = rng.integers(0, 10**6, size=per * n_windows)
            fvs = windows_to_features(RateSeries("d", 1.0, counts), float(per))
            for w, fv in enumerate(fvs):
                window = counts[w * per : (w + 1) * per]
                mean = sum(int(x) for x in window) / per
                var = sum((int(x) - mean) ** 2 for x in window) / per
                std = math.sqrt(var)
                if not (
                    math.isclose(fv.mean, mean, rel_tol=1e-9, abs_tol=1e-12)
                    and math.isclose(fv.stddev, std, rel_tol=1e-9, abs_tol=1e-9)
                ):
                    feature_ok = False
            feature_checked += len(fvs)

        # score_events vs independent greedy matcher on random instances
        # with at most 10 events on each side
        score_ok = True
        for _ in range(300):
            devices = ["cam", "plug"]
            dets = [
                (
                    None if rng.random() < 0.3 else devices[int(rng.integers(2))],
                    float(t := rng.uniform(0, 400)),
                    float(t + rng.uniform(1, 20)),
                )
                for _ in range(int(rng.integers(0, 11)))
            ]
            truth = BehaviorTimeline(
                events=tuple(
                    BehaviorEvent(
                        float(rng.uniform(0, 400)),
                        devices[int(rng.integers(2))],
                        "burst",
                        float(rng.uniform(1, 20)),
                    )
                    for _ in range(int(rng.integers(0, 11)))
                )
            )
            tol = float(rng.uniform(0, 20))

            candidates = []
            for di, (dev, a, b) in enumerate(dets):
                for ti, e in enumerate(truth.events):
                    if dev is not None and dev != e.device_id:
                        continue
                    ov = min(b, e.end) - max(a, e.time)
                    if ov >= -tol:
                        candidates.append((-ov, di, ti))
            candidates.sort()
            used_d, used_t = set(), set()
            for _, di, ti in candidates:
                if di not in used_d and ti not in used_t:
                    used_d.add(di)
                    used_t.add(ti)
            got = score_events(dets, truth, None, tol)
            if got.true_positives != len(used_d):
                score_ok = False

        # CV fold partition + stratification (+-1 per class) on 200 sets
        folds_ok = True
        for trial in range(200):
            n_classes = int(rng.integers(2, 5))
            folds = int(rng.integers(2, 8))
            labels = []
            for c in range(n_classes):
                labels += [f"c{c}"] * int(rng.integers(folds, folds * 4))
            y = np.array(labels, dtype=object)
            perm = rng.permutation(len(y))
            y = y[perm]
            fold_sets = make_folds(y, folds, seed=trial)
            flat = sorted(i for f in fold_sets for i in f)
            if flat != list(range(len(y))):
                folds_ok = False
            for c in set(labels):
                per_fold = [sum(1 for i in f if y[i] == c) for f in fold_sets]
                if max(per_fold) - min(per_fold) > 1:
                    folds_ok = False

        ok = feature_ok and score_ok and folds_ok
        verdict(
            7,
            "oracle suites",
            ok,
            f"window features vs brute force on {feature_checked} windows: {feature_ok}; "
            f"event matching vs independent greedy on 300 instances: {score_ok}; "
            f"fold partition/stratification laws on 200 sets: {folds_ok}",
        )

    def test_8_cli_determinism(self, tmp_path, capsys):
        import yaml

        exp_cfg = tmp_path / "exp.yaml"
        exp_cfg.write_text(
            yaml.safe_dump(
                {
                    "scenario": "default",
                    "analysis": {"s": 10.0, "w": 300.0, "k": 5, "folds": 10},
                    "defenses": [{"name": "conceal_dns"}],
                    "sweep": {"s": [10.0], "w": [300.0], "k": [1, 5]},
                    "seed": 4,
                }
            )
        )
        def_cfg = tmp_path / "defend.yaml"
        def_cfg.write_text(
            yaml.safe_dump({"defenses": [{"name": "conceal_dns"}, {"name": "tunnel"}]})
        )

        mismatches = []
        runs = {}
        for rep in ("r1", "r2"):
            base = tmp_path / rep
            gen = str(base / "gen")
            cli_main(["generate", "--config", "default", "--out", gen, "--seed", "4", "--quiet"])
            cli_main(
                [
                    "defend", "--config", str(def_cfg),
                    "--in", os.path.join(gen, "trace.txt"),
                    "--out", str(base / "def"), "--quiet",
                ]
            )
            cli_main(["evaluate", "--config", str(exp_cfg), "--out", str(base / "eval"), "--quiet"])
            cli_main(["sweep", "--config", str(exp_cfg), "--out", str(base / "sweep"), "--quiet"])
            artifacts = {}
            for sub in ("gen", "def", "eval", "sweep"):
                d = base / sub
                for name in sorted(os.listdir(d)):
                    artifacts[f"{sub}/{name}"] = (d / name).read_bytes()
            runs[rep] = artifacts
        capsys.readouterr()

        assert set(runs["r1"]) == set(runs["r2"])
        for name in sorted(runs["r1"]):
            if runs["r1"][name] != runs["r2"][name]:
                mismatches.append(name)
        verdict(
            8,
            "CLI determinism",
            not mismatches,
            f"{len(runs['r1'])} artifacts from generate/defend/evaluate/sweep "
            f"byte-identical across two runs"
            + (f"; mismatched: {mismatches}" if mismatches else ""),
        )
