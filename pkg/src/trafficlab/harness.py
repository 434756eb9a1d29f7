"""End-to-end experiment orchestration: generate, defend, project, attack,
score, and sweep the analysis parameter grid."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import defenses as defs
from .adversary import (
    DetectedEvent,
    DetectorParams,
    bin_rates,
    identify_by_dns,
    infer_events,
    split_streams,
    stream_device_key,
    windows_to_features,
)
from .config import DefenseSpec, ExperimentConfig, resolve_scenario
from .knn import AnalysisParams, CvResult, stratified_cv
from .synth import (
    BehaviorTimeline,
    Scenario,
    default_dns_dictionary,
    render_traffic,
    sample_timeline,
)
from .trace import AdversaryView, ObservedTrace, Trace, project_view

__all__ = [
    "EvaluationReport",
    "EventScore",
    "PipelineError",
    "run_experiment",
    "score_events",
    "sweep",
    "write_report",
]


class PipelineError(RuntimeError):
    """Stage failure with the stage name attached."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


@dataclass(frozen=True)
class EventScore:
    precision: float
    recall: float
    f1: float
    true_positives: int
    false_positives: int
    false_negatives: int
    decoy_matched: int


@dataclass
class EvaluationReport:
    config: dict
    mean_accuracy: float | None
    fold_accuracies: tuple[float, ...]
    class_labels: tuple[str, ...]
    confusion: list[list[int]]
    per_class_precision: dict[str, float]
    per_class_recall: dict[str, float]
    dns_fraction: float
    dns_identification: dict[str, str | None]
    behavior: EventScore
    costs: dict[str, defs.DefenseCost]
    feature_rows: list[tuple[str, int, float, float, str]]
    sweep_rows: list[tuple[float, float, int, float]] = field(default_factory=list)
    notes: tuple[str, ...] = ()


def score_events(
    detected: list[tuple[str | None, float, float]],
    truth: BehaviorTimeline,
    decoys: BehaviorTimeline | None,
    tolerance_s: float,
) -> EventScore:
    """Greedy one-to-one matching of detections to ground-truth events.

    A detection is (device key or None, start, end); it may match an event
    of the same device (None matches any) whose interval comes within the
    tolerance.  Largest overlap first; detections left matching only decoy
    events count as false positives.
    """
    if tolerance_s < 0:
        raise ValueError("tolerance must be non-negative")

    def match(dets, pool):
        pairs = []
        for di, (dev, start, end) in enumerate(dets):
            for ti, ev in enumerate(pool):
                if dev is not None and ev.device_id != dev:
                    continue
                overlap = min(end, ev.end) - max(start, ev.time)
                if overlap >= -tolerance_s:
                    pairs.append((overlap, di, ti))
        pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
        det_used: set[int] = set()
        truth_used: set[int] = set()
        for _, di, ti in pairs:
            if di not in det_used and ti not in truth_used:
                det_used.add(di)
                truth_used.add(ti)
        return det_used, truth_used

    det_used, _ = match(detected, truth.events)
    tp = len(det_used)
    fp = len(detected) - tp
    fn = len(truth.events) - tp

    decoy_matched = 0
    if decoys is not None and decoys.events:
        leftover = [d for i, d in enumerate(detected) if i not in det_used]
        used, _ = match(leftover, decoys.events)
        decoy_matched = len(used)

    precision = tp / len(detected) if detected else 0.0
    recall = tp / len(truth.events) if truth.events else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return EventScore(precision, recall, f1, tp, fp, fn, decoy_matched)


def _apply_defense(
    trace: Trace,
    spec: DefenseSpec,
    scenario: Scenario,
    timeline: BehaviorTimeline,
    seed: int,
):
    """Returns (defended trace, cost, decoy timeline or None)."""
    p = dict(spec.params)
    if spec.name == "block":
        policy = {dev: set(cats) for dev, cats in p.get("policy", {}).items()}
        out, cost = defs.block_streams(trace, policy, p.get("functionality_table"))
        return out, cost, None
    if spec.name == "conceal_dns":
        out, cost = defs.conceal_dns(trace)
        return out, cost, None
    if spec.name == "tunnel":
        out, cost = defs.tunnel(
            trace,
            endpoint=p.get("endpoint", "vpn-exit"),
            gateway_key=p.get("gateway_key", "gateway"),
            overhead_bytes=int(p.get("overhead_bytes", 40)),
        )
        return out, cost, None
    if spec.name == "shape_constant":
        out, cost = defs.shape_constant_rate(
            trace, float(p["target_rate"]), int(p["cell_size"])
        )
        return out, cost, None
    if spec.name == "delay_randomize":
        devices = set(p["devices"]) if "devices" in p else None
        out, cost = defs.delay_randomize(
            trace, float(p["max_delay_s"]), int(p.get("seed", seed)), devices
        )
        return out, cost, None
    if spec.name == "inject_decoys":
        out, decoy_tl, cost = defs.inject_decoys(
            trace,
            scenario,
            timeline,
            float(p.get("multiplier", 1.0)),
            int(p.get("seed", seed)),
        )
        return out, cost, decoy_tl
    raise defs.DefenseError(f"unknown defense {spec.name!r}")


def _stream_features(
    observed: ObservedTrace, roster: dict[str, str], s: float, w: float
):
    """Split, bin, and window an observed trace.

    Returns (X, y, rows) where rows are (stream, window_index, mean,
    stddev, label) and y entries are None for streams without a roster
    label (e.g. a tunnel gateway).
    """
    streams = split_streams(observed)
    X: list[list[float]] = []
    y: list[str | None] = []
    rows: list[tuple[str, int, float, float, str]] = []
    for key in sorted(streams):
        dev = stream_device_key(key)
        label = roster.get(dev)
        series = bin_rates(streams[key], s, observed.duration_s, device_key=key)
        for fv in windows_to_features(series, w):
            X.append([fv.mean, fv.stddev])
            y.append(label)
            rows.append((key, fv.window_index, fv.mean, fv.stddev, label or "?"))
    return np.array(X, dtype=float).reshape(len(X), 2), y, rows, streams


def _cv_feasible(y, folds: int) -> str | None:
    labels = [lab for lab in y if lab is not None]
    classes = sorted(set(labels))
    if len(classes) < 2:
        return "fewer than two labeled classes"
    for c in classes:
        n = labels.count(c)
        if n < folds:
            return f"class {c!r} has {n} windows, fewer than {folds} folds"
    return None


def _per_class_metrics(cv: CvResult):
    conf = cv.confusion
    precision = {}
    recall = {}
    for i, lab in enumerate(cv.labels):
        col = conf[:, i].sum()
        row = conf[i, :].sum()
        precision[lab] = float(conf[i, i] / col) if col else 0.0
        recall[lab] = float(conf[i, i] / row) if row else 0.0
    return precision, recall


def _config_echo(config: ExperimentConfig) -> dict:
    return {
        "scenario": config.scenario,
        "view": config.view.value,
        "analysis": {
            "s": config.analysis.s,
            "w": config.analysis.w,
            "k": config.analysis.k,
            "folds": config.analysis.folds,
        },
        "detector": {
            "baseline_s": config.detector.baseline_s,
            "threshold_c": config.detector.threshold_c,
            "sustain_s": config.detector.sustain_s,
            "merge_gap_s": config.detector.merge_gap_s,
        },
        "defenses": [
            {"name": d.name, **d.params} for d in config.defenses
        ],
        "tolerance_s": config.tolerance_s,
        "seed": config.seed,
    }


def _prepare(config: ExperimentConfig):
    """Generate + defend + project; shared by run_experiment and sweep."""
    try:
        scenario = resolve_scenario(config.scenario)
    except Exception as exc:
        raise PipelineError("scenario", exc)
    try:
        timeline = sample_timeline(scenario, seed=config.seed)
        trace = render_traffic(timeline, scenario, seed=config.seed)
    except Exception as exc:
        raise PipelineError("generate", exc)

    wire = trace
    radio = trace  # what the WiFi eavesdropper's antenna sees: pre-tunnel
    costs: dict[str, defs.DefenseCost] = {}
    decoy_tl: BehaviorTimeline | None = None
    for i, spec in enumerate(config.defenses):
        try:
            wire, cost, dt = _apply_defense(wire, spec, scenario, timeline, config.seed)
            if dt is not None:
                decoy_tl = dt
            if spec.name != "tunnel":
                radio, _, _ = _apply_defense(radio, spec, scenario, timeline, config.seed)
            costs[f"{i}:{spec.name}"] = cost
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(f"defense:{spec.name}", exc)

    source = radio if config.view is AdversaryView.WIFI_EAVESDROPPER else wire
    observed = project_view(source, config.view)
    return scenario, timeline, trace, wire, observed, costs, decoy_tl


def run_experiment(config: ExperimentConfig, out_dir: str | None = None) -> EvaluationReport:
    """Full pipeline: generate, defend in order, project, split, classify
    with stratified CV, infer behavior events, and score against ground
    truth.  Deterministic for a given config and seed."""
    scenario, timeline, _, _, observed, costs, decoy_tl = _prepare(config)
    notes: list[str] = []

    try:
        X, y, rows, streams = _stream_features(
            observed, scenario.roster(), config.analysis.s, config.analysis.w
        )
    except Exception as exc:
        raise PipelineError("features", exc)

    try:
        dictionary = default_dns_dictionary(scenario)
        dns_ids: dict[str, str | None] = {}
        if dictionary:
            for key in sorted(streams):
                dns_ids[key] = identify_by_dns(streams[key], dictionary)
        else:
            dns_ids = {key: None for key in sorted(streams)}
            notes.append("scenario defines no DNS domains; DNS identification skipped")
        identified = sum(1 for v in dns_ids.values() if v is not None)
        dns_fraction = identified / len(dns_ids) if dns_ids else 0.0
    except Exception as exc:
        raise PipelineError("dns-identification", exc)

    mean_acc: float | None = None
    fold_accs: tuple[float, ...] = ()
    labels: tuple[str, ...] = ()
    confusion: list[list[int]] = []
    prec: dict[str, float] = {}
    rec: dict[str, float] = {}
    reason = _cv_feasible(y, config.analysis.folds)
    if reason is None:
        try:
            keep = [i for i, lab in enumerate(y) if lab is not None]
            cv = stratified_cv(
                X[keep], [y[i] for i in keep], config.analysis, seed=config.seed
            )
        except Exception as exc:
            raise PipelineError("cross-validation", exc)
        mean_acc = cv.mean_accuracy
        fold_accs = cv.fold_accuracies
        labels = cv.labels
        confusion = cv.confusion.tolist()
        prec, rec = _per_class_metrics(cv)
    else:
        notes.append(f"identification CV skipped: {reason}")

    try:
        detections: list[tuple[str | None, float, float]] = []
        for key in sorted(streams):
            dev = stream_device_key(key)
            attributed = dev if dev in scenario.roster() else None
            series = bin_rates(streams[key], config.analysis.s, observed.duration_s, key)
            if len(series.counts) == 0:
                continue
            for ev in infer_events(series, config.detector):
                detections.append((attributed, ev.start_s, ev.end_s))
        behavior = score_events(detections, timeline, decoy_tl, config.tolerance_s)
    except Exception as exc:
        raise PipelineError("behavior-inference", exc)

    report = EvaluationReport(
        config=_config_echo(config),
        mean_accuracy=mean_acc,
        fold_accuracies=fold_accs,
        class_labels=labels,
        confusion=confusion,
        per_class_precision=prec,
        per_class_recall=rec,
        dns_fraction=dns_fraction,
        dns_identification=dns_ids,
        behavior=behavior,
        costs=costs,
        feature_rows=rows,
        notes=tuple(notes),
    )
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def sweep(config: ExperimentConfig, out_dir: str | None = None):
    """One CV accuracy per valid (s, w, k) grid point over a single shared
    generated/defended trace.  Returns (rows, skipped) where rows are
    (s, w, k, mean accuracy) sorted, and skipped explains omitted points."""
    scenario, _, _, _, observed, _, _ = _prepare(config)
    roster = scenario.roster()
    rows: list[tuple[float, float, int, float]] = []
    skipped: list[str] = []
    feature_cache: dict[tuple[float, float], tuple] = {}
    for s in config.s_grid:
        for w in config.w_grid:
            if abs(w / s - round(w / s)) > 1e-9:
                skipped.append(f"s={s:g} w={w:g}: window not a multiple of sample period")
                continue
            if (s, w) not in feature_cache:
                X, y, _, _ = _stream_features(observed, roster, s, w)
                feature_cache[(s, w)] = (X, y)
            X, y = feature_cache[(s, w)]
            reason = _cv_feasible(y, config.analysis.folds)
            if reason is not None:
                skipped.append(f"s={s:g} w={w:g}: {reason}")
                continue
            keep = [i for i, lab in enumerate(y) if lab is not None]
            Xk = X[keep]
            yk = [y[i] for i in keep]
            for k in config.k_grid:
                params = AnalysisParams(s=s, w=w, k=k, folds=config.analysis.folds)
                cv = stratified_cv(Xk, yk, params, seed=config.seed)
                rows.append((s, w, k, cv.mean_accuracy))
    if not rows and skipped:
        raise PipelineError("sweep", ValueError("no valid grid points: " + "; ".join(skipped)))
    rows.sort()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "sweep.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s", "w", "k", "mean_accuracy"])
            for s, w, k, acc in rows:
                writer.writerow([f"{s:g}", f"{w:g}", k, f"{acc:.6f}"])
            for note in skipped:
                fh.write(f"# skipped: {note}\n")
    return rows, skipped


def _cost_dict(cost: defs.DefenseCost) -> dict:
    d = {
        "overhead_bytes": cost.overhead_bytes,
        "overhead_ratio": round(cost.overhead_ratio, 9),
        "mean_added_latency_s": round(cost.mean_added_latency_s, 6),
        "max_added_latency_s": round(cost.max_added_latency_s, 6),
    }
    if cost.functionality is not None:
        d["functionality"] = {
            dev: {"level": lvl, "description": desc}
            for dev, (lvl, desc) in cost.functionality.levels.items()
        }
    if cost.notes:
        d["notes"] = list(cost.notes)
    return d


def write_report(report: EvaluationReport, out_dir: str) -> None:
    """Write report.yaml plus confusion/feature/cost CSV artifacts.

    Output is byte-deterministic for identical inputs (no wall-clock
    metadata)."""
    os.makedirs(out_dir, exist_ok=True)
    doc = {
        "config": report.config,
        "identification": {
            "mean_accuracy": report.mean_accuracy,
            "fold_accuracies": [round(a, 6) for a in report.fold_accuracies],
            "labels": list(report.class_labels),
            "per_class_precision": {
                k: round(v, 6) for k, v in report.per_class_precision.items()
            },
            "per_class_recall": {
                k: round(v, 6) for k, v in report.per_class_recall.items()
            },
        },
        "dns_identification": {
            "fraction": round(report.dns_fraction, 6),
            "streams": dict(report.dns_identification),
        },
        "behavior": {
            "precision": round(report.behavior.precision, 6),
            "recall": round(report.behavior.recall, 6),
            "f1": round(report.behavior.f1, 6),
            "true_positives": report.behavior.true_positives,
            "false_positives": report.behavior.false_positives,
            "false_negatives": report.behavior.false_negatives,
            "decoy_matched": report.behavior.decoy_matched,
        },
        "costs": {name: _cost_dict(c) for name, c in report.costs.items()},
        "notes": list(report.notes),
    }
    with open(os.path.join(out_dir, "report.yaml"), "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)

    with open(os.path.join(out_dir, "confusion.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + list(report.class_labels))
        for lab, row in zip(report.class_labels, report.confusion):
            writer.writerow([lab] + list(row))

    with open(os.path.join(out_dir, "features.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stream", "window_index", "mean", "stddev", "label"])
        for stream, idx, mean, std, label in report.feature_rows:
            writer.writerow([stream, idx, f"{mean:.6f}", f"{std:.6f}", label])

    with open(os.path.join(out_dir, "costs.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["defense", "overhead_bytes", "overhead_ratio",
             "mean_added_latency_s", "max_added_latency_s"]
        )
        for name, cost in report.costs.items():
            writer.writerow(
                [name, cost.overhead_bytes, f"{cost.overhead_ratio:.6f}",
                 f"{cost.mean_added_latency_s:.6f}", f"{cost.max_added_latency_s:.6f}"]
            )


def format_report(report: EvaluationReport) -> str:
    """Human-readable summary for standard output."""
    lines = ["experiment report", "================="]
    if report.mean_accuracy is not None:
        lines.append(f"identification mean CV accuracy: {report.mean_accuracy:.4f}")
        lines.append(
            "per-fold: " + " ".join(f"{a:.3f}" for a in report.fold_accuracies)
        )
    else:
        lines.append("identification: CV skipped (see notes)")
    lines.append(f"dns identification fraction: {report.dns_fraction:.4f}")
    for stream, ident in sorted(report.dns_identification.items()):
        lines.append(f"  {stream}: {ident if ident is not None else 'none'}")
    b = report.behavior
    lines.append(
        f"behavior inference: precision {b.precision:.3f} recall {b.recall:.3f} "
        f"f1 {b.f1:.3f} (tp {b.true_positives} fp {b.false_positives} "
        f"fn {b.false_negatives} decoy-matched {b.decoy_matched})"
    )
    for name, cost in report.costs.items():
        lines.append(
            f"cost {name}: overhead {cost.overhead_bytes} B "
            f"(ratio {cost.overhead_ratio:.3f}), latency mean "
            f"{cost.mean_added_latency_s:.3f}s max {cost.max_added_latency_s:.3f}s"
        )
    for note in report.notes:
        lines.append(f"note: {note}")
    return "\n".join(lines)
