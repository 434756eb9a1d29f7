"""Command-line frontend: generate, defend, attack, evaluate, sweep, report."""

from __future__ import annotations

import argparse
import os
import sys

import yaml

from .adversary import (
    bin_rates,
    identify_by_dns,
    infer_events,
    load_dns_dictionary,
    split_streams,
)
from .config import (
    DefenseSpec,
    ExperimentConfig,
    load_experiment_config,
    parse_view,
    resolve_scenario,
)
from .harness import (
    _apply_defense,
    format_report,
    run_experiment,
    sweep,
    write_report,
)
from .knn import AnalysisParams
from .adversary import DetectorParams
from .synth import load_timeline, render_traffic, sample_timeline, save_timeline
from .trace import AdversaryView, load_trace, project_view, save_trace

OUT_ENV = "TRAFFICLAB_OUT"


def _out_dir(args) -> str:
    out = args.out or os.environ.get(OUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def cmd_generate(args) -> int:
    scenario = resolve_scenario(args.config)
    seed = scenario.seed if args.seed is None else args.seed
    timeline = sample_timeline(scenario, seed=seed)
    trace = render_traffic(timeline, scenario, seed=seed)
    out = _out_dir(args)
    trace_path = os.path.join(out, "trace.txt")
    timeline_path = os.path.join(out, "timeline.txt")
    save_trace(trace, trace_path)
    save_timeline(timeline, timeline_path)
    _say(args, f"scenario: {scenario.name} duration {scenario.duration_s:g}s seed {seed}")
    for dev, nbytes in sorted(trace.bytes_by_device().items()):
        _say(args, f"  {dev} ({trace.roster[dev]}): {nbytes} bytes")
    _say(args, f"total: {trace.total_bytes()} bytes, {len(trace.records)} records")
    _say(args, f"wrote {trace_path} and {timeline_path}")
    return 0


def cmd_defend(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    trace = load_trace(getattr(args, "in"))
    scenario = resolve_scenario(doc["scenario"]) if "scenario" in doc else None
    timeline = load_timeline(doc["timeline"]) if "timeline" in doc else None
    seed = int(doc.get("seed", 0)) if args.seed is None else args.seed
    out = _out_dir(args)

    costs = {}
    decoy_tl = None
    for i, d in enumerate(doc.get("defenses", ())):
        spec = DefenseSpec(name=d["name"], params={k: v for k, v in d.items() if k != "name"})
        if spec.name == "inject_decoys" and (scenario is None or timeline is None):
            raise ValueError("inject_decoys requires 'scenario' and 'timeline' in the config")
        try:
            trace, cost, dt = _apply_defense(trace, spec, scenario, timeline, seed)
        except Exception as exc:
            raise RuntimeError(f"defense {spec.name!r} failed: {exc}") from exc
        if dt is not None:
            decoy_tl = dt
        costs[f"{i}:{spec.name}"] = cost

    defended_path = os.path.join(out, "defended.txt")
    save_trace(trace, defended_path)
    costs_path = os.path.join(out, "costs.csv")
    with open(costs_path, "w", encoding="utf-8") as fh:
        fh.write("defense,overhead_bytes,overhead_ratio,mean_added_latency_s,max_added_latency_s\n")
        for name, cost in costs.items():
            fh.write(
                f"{name},{cost.overhead_bytes},{cost.overhead_ratio:.6f},"
                f"{cost.mean_added_latency_s:.6f},{cost.max_added_latency_s:.6f}\n"
            )
    if decoy_tl is not None:
        save_timeline(decoy_tl, os.path.join(out, "decoy_timeline.txt"))
    _say(args, f"wrote {defended_path} and {costs_path}")
    return 0


def cmd_attack(args) -> int:
    trace = load_trace(getattr(args, "in"))
    view = parse_view(args.view)
    doc = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    analysis = AnalysisParams(**doc.get("analysis", {}))
    detector = DetectorParams(**doc.get("detector", {}))
    dictionary = None
    if "dns_dictionary" in doc:
        dictionary = load_dns_dictionary(doc["dns_dictionary"])

    observed = project_view(trace, view)
    streams = split_streams(observed)
    print(f"view: {view.value}; {len(streams)} stream(s)")
    print("dns identification:")
    for key in sorted(streams):
        ident = identify_by_dns(streams[key], dictionary) if dictionary else None
        print(f"  {key}: {ident if ident is not None else 'none'}")
    print("detected events:")
    for key in sorted(streams):
        series = bin_rates(streams[key], analysis.s, observed.duration_s, key)
        if len(series.counts) == 0:
            continue
        for ev in infer_events(series, detector):
            print(
                f"  {key}: [{ev.start_s:.1f}, {ev.end_s:.1f}]s "
                f"peak {ev.peak_rate:.0f} B/s"
            )
    return 0


def _experiment_config(args) -> ExperimentConfig:
    config = load_experiment_config(args.config, seed_override=args.seed)
    if args.view is not None:
        config = ExperimentConfig(
            scenario=config.scenario,
            view=parse_view(args.view),
            analysis=config.analysis,
            detector=config.detector,
            defenses=config.defenses,
            tolerance_s=config.tolerance_s,
            seed=config.seed,
            s_grid=config.s_grid,
            w_grid=config.w_grid,
            k_grid=config.k_grid,
        )
    return config


def cmd_evaluate(args) -> int:
    config = _experiment_config(args)
    out = _out_dir(args)
    report = run_experiment(config, out_dir=out)
    _say(args, format_report(report))
    _say(args, f"artifacts written to {out}")
    return 0


def cmd_sweep(args) -> int:
    config = _experiment_config(args)
    out = _out_dir(args)
    rows, skipped = sweep(config, out_dir=out)
    _say(args, "s w k accuracy")
    for s, w, k, acc in rows:
        _say(args, f"{s:g} {w:g} {k} {acc:.4f}")
    for note in skipped:
        _say(args, f"skipped: {note}")
    _say(args, f"wrote {os.path.join(out, 'sweep.csv')}")
    return 0


def cmd_report(args) -> int:
    path = getattr(args, "in")
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    ident = doc.get("identification", {})
    print("stored experiment report")
    print("========================")
    acc = ident.get("mean_accuracy")
    print(f"mean CV accuracy: {acc if acc is not None else 'n/a'}")
    dns = doc.get("dns_identification", {})
    print(f"dns identification fraction: {dns.get('fraction', 0)}")
    beh = doc.get("behavior", {})
    print(
        f"behavior: precision {beh.get('precision')} recall {beh.get('recall')} "
        f"f1 {beh.get('f1')}"
    )
    for name, cost in sorted(doc.get("costs", {}).items()):
        print(
            f"cost {name}: overhead {cost.get('overhead_bytes')} B, "
            f"latency mean {cost.get('mean_added_latency_s')}s"
        )
    for note in doc.get("notes", ()):
        print(f"note: {note}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficlab",
        description="Smart-home traffic-rate metadata attack and defense lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, *, config=False, infile=False, view=False):
        if config:
            p.add_argument("--config", required=config == "required", help="config file path")
        if infile:
            p.add_argument("--in", required=True, help="input file path")
        if view:
            p.add_argument("--view", choices=["last-mile", "last_mile", "wifi"], default=None)
        p.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or .)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("generate", help="render a scenario into a trace + timeline")
    common(p, config="required")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("defend", help="apply defenses to a trace")
    common(p, config="required", infile=True)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("attack", help="run the adversary on a trace under a view")
    common(p, config=True, infile=True, view=True)
    p.set_defaults(func=cmd_attack, view_default="last-mile")

    p = sub.add_parser("evaluate", help="run a full experiment")
    common(p, config="required", view=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="accuracy over the (s, w, k) grid")
    common(p, config="required", view=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="pretty-print a stored report")
    common(p, infile=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "view", None) is None and hasattr(args, "view"):
        args.view = "last-mile" if args.command == "attack" else None
    try:
        return args.func(args)
    except Exception as exc:  # surface stage-attributed message, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
