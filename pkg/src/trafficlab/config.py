"""YAML scenario and experiment configuration files."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .adversary import DetectorParams
from .knn import AnalysisParams
from .synth import (
    BurstShape,
    DeviceProfile,
    ForbidDuring,
    Heartbeat,
    Precedence,
    Scenario,
    get_scenario,
)
from .trace import AdversaryView

__all__ = [
    "DefenseSpec",
    "ExperimentConfig",
    "load_experiment_config",
    "load_scenario",
    "resolve_scenario",
    "save_scenario",
]

DEFAULT_S_GRID = (1.0, 5.0, 10.0, 30.0)
DEFAULT_W_GRID = (60.0, 300.0, 900.0)
DEFAULT_K_GRID = (1, 3, 5, 9)


@dataclass(frozen=True)
class DefenseSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "default"
    view: AdversaryView = AdversaryView.LAST_MILE
    analysis: AnalysisParams = AnalysisParams()
    detector: DetectorParams = DetectorParams()
    defenses: tuple[DefenseSpec, ...] = ()
    tolerance_s: float = 30.0
    seed: int = 0
    s_grid: tuple[float, ...] = DEFAULT_S_GRID
    w_grid: tuple[float, ...] = DEFAULT_W_GRID
    k_grid: tuple[int, ...] = DEFAULT_K_GRID

    def __post_init__(self):
        if not (self.s_grid and self.w_grid and self.k_grid):
            raise ValueError("sweep grids must be non-empty")


def load_scenario(path) -> Scenario:
    """Parse a scenario YAML file (see docs/scenario format in README)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    profiles: dict[str, DeviceProfile] = {}
    rates: dict[tuple[str, str], float] = {}
    for dev, spec in doc.get("devices", {}).items():
        hb = None
        if "heartbeat" in spec:
            h = spec["heartbeat"]
            hb = Heartbeat(
                period_s=float(h["period_s"]),
                size_bytes=int(h["size_bytes"]),
                jitter=float(h.get("jitter", 0.0)),
            )
        shapes: dict[str, BurstShape] = {}
        for etype, e in spec.get("events", {}).items():
            size = e.get("size", {})
            shapes[etype] = BurstShape(
                count_min=int(e["count"][0]),
                count_max=int(e["count"][1]),
                size_mean=float(size.get("mean", 500)),
                size_std=float(size.get("std", 0)),
                size_min=int(size.get("min", 1)),
                size_max=int(size.get("max", 10**6)),
                gap_min=float(e["gap"][0]),
                gap_max=float(e["gap"][1]),
                outbound_frac=float(e.get("outbound_frac", 1.0)),
                duration_s=float(e.get("duration_s", 10.0)),
            )
            rates[(dev, etype)] = float(e.get("rate_per_hour", 0.0))
        profiles[dev] = DeviceProfile(
            device_id=dev,
            type_label=str(spec["type"]),
            remote_endpoint=str(spec["endpoint"]),
            heartbeat=hb,
            event_shapes=shapes,
            dns_domains=tuple(spec.get("dns_domains", ())),
        )
    constraints = []
    for c in doc.get("constraints", ()):
        if c["kind"] == "forbid_during":
            constraints.append(
                ForbidDuring(
                    c["subject"]["device"],
                    c["subject"]["event"],
                    c["during"]["device"],
                    c["during"]["event"],
                )
            )
        elif c["kind"] == "precedence":
            constraints.append(
                Precedence(
                    c["first"]["device"],
                    c["first"]["event"],
                    c["then"]["device"],
                    c["then"]["event"],
                    period_s=float(c.get("period_s", 86400.0)),
                )
            )
        else:
            raise ValueError(f"unknown constraint kind {c['kind']!r}")
    return Scenario(
        name=str(doc.get("name", os.path.basename(str(path)))),
        duration_s=float(doc["duration_s"]),
        profiles=profiles,
        event_rates=rates,
        constraints=tuple(constraints),
        seed=int(doc.get("seed", 0)),
        dns_reresolve_s=float(doc.get("dns_reresolve_s", 300.0)),
    )


def save_scenario(scenario: Scenario, path) -> None:
    devices = {}
    for dev, p in scenario.profiles.items():
        spec: dict = {"type": p.type_label, "endpoint": p.remote_endpoint}
        if p.heartbeat is not None:
            spec["heartbeat"] = {
                "period_s": p.heartbeat.period_s,
                "size_bytes": p.heartbeat.size_bytes,
                "jitter": p.heartbeat.jitter,
            }
        if p.dns_domains:
            spec["dns_domains"] = list(p.dns_domains)
        events = {}
        for etype, sh in p.event_shapes.items():
            events[etype] = {
                "rate_per_hour": scenario.event_rates.get((dev, etype), 0.0),
                "count": [sh.count_min, sh.count_max],
                "size": {
                    "mean": sh.size_mean,
                    "std": sh.size_std,
                    "min": sh.size_min,
                    "max": sh.size_max,
                },
                "gap": [sh.gap_min, sh.gap_max],
                "outbound_frac": sh.outbound_frac,
                "duration_s": sh.duration_s,
            }
        if events:
            spec["events"] = events
        devices[dev] = spec
    constraints = []
    for c in scenario.constraints:
        if isinstance(c, ForbidDuring):
            constraints.append(
                {
                    "kind": "forbid_during",
                    "subject": {"device": c.subject_device, "event": c.subject_event},
                    "during": {"device": c.during_device, "event": c.during_event},
                }
            )
        else:
            constraints.append(
                {
                    "kind": "precedence",
                    "first": {"device": c.first_device, "event": c.first_event},
                    "then": {"device": c.then_device, "event": c.then_event},
                    "period_s": c.period_s,
                }
            )
    doc = {
        "name": scenario.name,
        "duration_s": scenario.duration_s,
        "seed": scenario.seed,
        "dns_reresolve_s": scenario.dns_reresolve_s,
        "devices": devices,
    }
    if constraints:
        doc["constraints"] = constraints
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True)


def resolve_scenario(ref: str) -> Scenario:
    """A scenario reference is a builtin name or a YAML file path."""
    if os.path.exists(ref):
        return load_scenario(ref)
    return get_scenario(ref)


_VIEWS = {
    "last_mile": AdversaryView.LAST_MILE,
    "last-mile": AdversaryView.LAST_MILE,
    "wifi": AdversaryView.WIFI_EAVESDROPPER,
    "wifi_eavesdropper": AdversaryView.WIFI_EAVESDROPPER,
}


def parse_view(token: str) -> AdversaryView:
    try:
        return _VIEWS[token]
    except KeyError:
        raise ValueError(f"unknown adversary view {token!r}")


def load_experiment_config(path, *, seed_override: int | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    analysis = AnalysisParams(**doc.get("analysis", {}))
    detector = DetectorParams(**doc.get("detector", {}))
    defenses = tuple(
        DefenseSpec(name=d["name"], params={k: v for k, v in d.items() if k != "name"})
        for d in doc.get("defenses", ())
    )
    sweep = doc.get("sweep", {})
    seed = int(doc.get("seed", 0)) if seed_override is None else seed_override
    return ExperimentConfig(
        scenario=str(doc.get("scenario", "default")),
        view=parse_view(doc.get("view", "last_mile")),
        analysis=analysis,
        detector=detector,
        defenses=defenses,
        tolerance_s=float(doc.get("tolerance_s", 30.0)),
        seed=seed,
        s_grid=tuple(float(v) for v in sweep.get("s", DEFAULT_S_GRID)),
        w_grid=tuple(float(v) for v in sweep.get("w", DEFAULT_W_GRID)),
        k_grid=tuple(int(v) for v in sweep.get("k", DEFAULT_K_GRID)),
    )
