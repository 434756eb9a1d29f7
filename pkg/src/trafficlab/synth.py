"""Synthetic smart-home scenarios: behavior timelines and traffic rendering.

Stands in for lab captures of commercial devices.  Each device has an idle
heartbeat and a set of event burst shapes; consumer events arrive as a
Poisson process and are repaired against logical constraints by rejection
resampling.  Everything is deterministic for a given scenario seed.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .trace import PacketRecord, Trace, quantize_ts

__all__ = [
    "BehaviorEvent",
    "BehaviorTimeline",
    "BurstShape",
    "ConstraintError",
    "DeviceProfile",
    "ForbidDuring",
    "Heartbeat",
    "Precedence",
    "Scenario",
    "builtin_scenarios",
    "default_dns_dictionary",
    "find_violations",
    "get_scenario",
    "load_timeline",
    "render_traffic",
    "sample_timeline",
    "save_timeline",
    "subrng",
]

DNS_QUERY_SIZE = 80


class ConstraintError(ValueError):
    """Constraint set unsatisfiable within the retry budget."""


def subrng(seed: int, *names) -> np.random.Generator:
    """Derive an independent RNG stream from a master seed and a path of
    stage names, so stages are reproducible in isolation."""
    entropy = [int(seed) & 0xFFFFFFFF] + [
        zlib.crc32(str(n).encode("utf-8")) for n in names
    ]
    return np.random.default_rng(entropy)


@dataclass(frozen=True)
class Heartbeat:
    period_s: float
    size_bytes: int
    jitter: float = 0.0  # fraction of period, uniform +/-

    def __post_init__(self):
        if self.period_s <= 0 or self.size_bytes < 1 or not 0 <= self.jitter < 1:
            raise ValueError("invalid heartbeat parameters")


@dataclass(frozen=True)
class BurstShape:
    """Distribution of one event burst: packet count, sizes, gaps, mix."""

    count_min: int
    count_max: int
    size_mean: float
    size_std: float
    size_min: int
    size_max: int
    gap_min: float
    gap_max: float
    outbound_frac: float = 1.0
    duration_s: float = 10.0

    def __post_init__(self):
        ok = (
            1 <= self.count_min <= self.count_max
            and self.size_mean > 0
            and self.size_std >= 0
            and 1 <= self.size_min <= self.size_max
            and 0 <= self.gap_min <= self.gap_max
            and 0 <= self.outbound_frac <= 1
            and self.duration_s >= 0
        )
        if not ok:
            raise ValueError("invalid burst shape parameters")


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    type_label: str
    remote_endpoint: str
    heartbeat: Heartbeat | None = None
    event_shapes: dict[str, BurstShape] = field(default_factory=dict)
    dns_domains: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "event_shapes", dict(self.event_shapes))
        object.__setattr__(self, "dns_domains", tuple(self.dns_domains))
        if self.heartbeat is None and not self.event_shapes:
            raise ValueError(
                f"device {self.device_id!r} needs a heartbeat or an event shape"
            )


@dataclass(frozen=True)
class BehaviorEvent:
    time: float
    device_id: str
    event_type: str
    duration_s: float

    def __post_init__(self):
        object.__setattr__(self, "time", quantize_ts(self.time))
        if self.time < 0 or self.duration_s < 0:
            raise ValueError("invalid event timing")

    @property
    def end(self) -> float:
        return self.time + self.duration_s


@dataclass(frozen=True)
class ForbidDuring:
    """Subject events may not overlap the interval of any matching event."""

    subject_device: str
    subject_event: str
    during_device: str
    during_event: str

    def describe(self) -> str:
        return (
            f"forbid_during({self.subject_device}/{self.subject_event} "
            f"during {self.during_device}/{self.during_event})"
        )


@dataclass(frozen=True)
class Precedence:
    """Within each period, a 'then' event requires an earlier 'first' event."""

    first_device: str
    first_event: str
    then_device: str
    then_event: str
    period_s: float = 86400.0

    def describe(self) -> str:
        return (
            f"precedence({self.first_device}/{self.first_event} before "
            f"{self.then_device}/{self.then_event} per {self.period_s:g}s)"
        )


Constraint = ForbidDuring | Precedence


@dataclass(frozen=True)
class BehaviorTimeline:
    events: tuple[BehaviorEvent, ...]
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "events", tuple(sorted(self.events, key=lambda e: e.time))
        )
        object.__setattr__(self, "constraints", tuple(self.constraints))

    def for_device(self, device_id: str) -> tuple[BehaviorEvent, ...]:
        return tuple(e for e in self.events if e.device_id == device_id)


@dataclass(frozen=True)
class Scenario:
    name: str
    duration_s: float
    profiles: dict[str, DeviceProfile]
    event_rates: dict[tuple[str, str], float]  # (device, event_type) -> per hour
    constraints: tuple[Constraint, ...] = ()
    seed: int = 0
    dns_reresolve_s: float = 300.0

    def __post_init__(self):
        object.__setattr__(self, "profiles", dict(self.profiles))
        object.__setattr__(self, "event_rates", dict(self.event_rates))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.duration_s <= 0:
            raise ValueError("duration must be positive")
        for (dev, etype), rate in self.event_rates.items():
            if rate < 0:
                raise ValueError("event rates must be non-negative")
            if dev not in self.profiles or etype not in self.profiles[dev].event_shapes:
                raise ValueError(f"event rate references unknown {dev}/{etype}")

    def roster(self) -> dict[str, str]:
        return {d: p.type_label for d, p in self.profiles.items()}


def _matches(ev: BehaviorEvent, device: str, etype: str) -> bool:
    return ev.device_id == device and ev.event_type == etype


def find_violations(events, constraints) -> list[tuple[Constraint, BehaviorEvent]]:
    """Scan an event set against every constraint; returns (constraint,
    offending event) pairs.  Direct interval scan, usable as an oracle."""
    events = list(events)
    out = []
    for c in constraints:
        if isinstance(c, ForbidDuring):
            reflexive = (c.subject_device, c.subject_event) == (
                c.during_device,
                c.during_event,
            )
            for e in events:
                if not _matches(e, c.subject_device, c.subject_event):
                    continue
                for d in events:
                    if d is e or not _matches(d, c.during_device, c.during_event):
                        continue
                    if max(e.time, d.time) < min(e.end, d.end):
                        # for self-referential constraints only flag the
                        # later event so repair converges
                        if reflexive and e.time < d.time:
                            continue
                        out.append((c, e))
                        break
        elif isinstance(c, Precedence):
            firsts = [e for e in events if _matches(e, c.first_device, c.first_event)]
            for e in events:
                if not _matches(e, c.then_device, c.then_event):
                    continue
                period_start = (e.time // c.period_s) * c.period_s
                if not any(period_start <= f.time < e.time for f in firsts):
                    out.append((c, e))
        else:  # pragma: no cover
            raise TypeError(f"unknown constraint {c!r}")
    return out


def sample_timeline(
    scenario: Scenario, *, seed: int | None = None, max_rounds: int = 200
) -> BehaviorTimeline:
    """Draw a constraint-respecting behavior timeline.

    Events per (device, event type) arrive as a Poisson process at the
    configured hourly rate; violating events are resampled in place until
    the set is clean or the retry budget runs out.
    """
    seed = scenario.seed if seed is None else seed
    events: list[BehaviorEvent] = []
    for dev in sorted(scenario.profiles):
        profile = scenario.profiles[dev]
        for etype in sorted(profile.event_shapes):
            rate = scenario.event_rates.get((dev, etype), 0.0)
            if rate == 0.0:
                continue
            shape = profile.event_shapes[etype]
            rng = subrng(seed, "timeline", dev, etype)
            n = rng.poisson(rate * scenario.duration_s / 3600.0)
            span = max(0.0, scenario.duration_s - shape.duration_s)
            for t in rng.uniform(0.0, span, n):
                events.append(BehaviorEvent(t, dev, etype, shape.duration_s))
    repair_rng = subrng(seed, "timeline-repair")
    for _ in range(max_rounds):
        violations = find_violations(events, scenario.constraints)
        if not violations:
            break
        bad = sorted(
            {id(e): e for _, e in violations}.values(),
            key=lambda e: (e.time, e.device_id, e.event_type),
        )
        for e in bad:
            span = max(0.0, scenario.duration_s - e.duration_s)
            events[events.index(e)] = BehaviorEvent(
                repair_rng.uniform(0.0, span), e.device_id, e.event_type, e.duration_s
            )
    else:
        c = find_violations(events, scenario.constraints)[0][0]
        raise ConstraintError(f"could not satisfy {c.describe()} within retry budget")
    return BehaviorTimeline(events=tuple(events), constraints=scenario.constraints)


def _render_burst(ev, shape, endpoint, rng, tag):
    n = int(rng.integers(shape.count_min, shape.count_max + 1))
    gaps = rng.uniform(shape.gap_min, shape.gap_max, n)
    gaps[0] = 0.0  # first packet at event start
    offsets = np.cumsum(gaps)
    sizes = np.clip(
        np.rint(rng.normal(shape.size_mean, shape.size_std, n)),
        shape.size_min,
        shape.size_max,
    ).astype(int)
    outbound = rng.random(n) < shape.outbound_frac
    records = []
    for off, size, is_out in zip(offsets, sizes, outbound):
        if off > shape.duration_s:
            break  # burst truncated at its nominal duration
        records.append(
            PacketRecord(
                timestamp=ev.time + off,
                device_id=ev.device_id,
                direction="out" if is_out else "in",
                size_bytes=int(size),
                remote_endpoint=endpoint,
                tag=tag,
            )
        )
    return records


def render_traffic(
    timeline: BehaviorTimeline,
    scenario: Scenario,
    *,
    seed: int | None = None,
    include_background: bool = True,
    tag_prefix: str = "event",
) -> Trace:
    """Render a behavior timeline into a packet trace.

    Each event becomes one burst from its shape; each device emits idle
    heartbeats for the full duration; DNS queries are emitted at first
    activity and every re-resolution period thereafter.  Decoy rendering
    reuses this with ``include_background=False`` and a distinct tag prefix.
    """
    seed = scenario.seed if seed is None else seed
    duration = scenario.duration_s
    all_records: list[PacketRecord] = []
    for dev in sorted(scenario.profiles):
        profile = scenario.profiles[dev]
        dev_events = timeline.for_device(dev)
        for ev in dev_events:
            if ev.event_type not in profile.event_shapes:
                raise ValueError(
                    f"event type {ev.event_type!r} unknown for device {dev!r}"
                )
        dev_records: list[PacketRecord] = []

        # heartbeats
        if include_background and profile.heartbeat is not None:
            hb = profile.heartbeat
            rng = subrng(seed, tag_prefix, dev, "heartbeat")
            if hb.jitter == 0.0:
                times = [i * hb.period_s for i in range(int(duration / hb.period_s) + 1)]
                times = [t for t in times if t < duration]
            else:
                times = []
                t = 0.0
                while t < duration:
                    times.append(t)
                    t += hb.period_s * (1.0 + hb.jitter * rng.uniform(-1.0, 1.0))
            for t in times:
                dev_records.append(
                    PacketRecord(
                        timestamp=t,
                        device_id=dev,
                        direction="out",
                        size_bytes=hb.size_bytes,
                        remote_endpoint=profile.remote_endpoint,
                        tag="heartbeat",
                    )
                )

        # event bursts
        for i, ev in enumerate(dev_events):
            shape = profile.event_shapes[ev.event_type]
            rng = subrng(seed, tag_prefix, dev, "burst", i)
            dev_records.extend(
                _render_burst(
                    ev,
                    shape,
                    profile.remote_endpoint,
                    rng,
                    f"{tag_prefix}:{ev.event_type}:{i}",
                )
            )
        dev_records = [r for r in dev_records if r.timestamp <= duration]

        # DNS queries, placed ahead of same-timestamp activity so the
        # device's first record is its DNS query
        dns_records: list[PacketRecord] = []
        if include_background and profile.dns_domains and dev_records:
            first_activity = min(r.timestamp for r in dev_records)
            t = first_activity
            while t < duration:
                for qname in profile.dns_domains:
                    dns_records.append(
                        PacketRecord(
                            timestamp=t,
                            device_id=dev,
                            direction="out",
                            size_bytes=DNS_QUERY_SIZE,
                            remote_endpoint=profile.remote_endpoint,
                            dns_qname=qname,
                            tag="dns",
                        )
                    )
                t += scenario.dns_reresolve_s
        all_records.extend(dns_records)
        all_records.extend(dev_records)
    return Trace.build(all_records, duration, scenario.roster())


# --- timeline file format ---------------------------------------------------


def save_timeline(timeline: BehaviorTimeline, path) -> None:
    lines = []
    for c in timeline.constraints:
        if isinstance(c, ForbidDuring):
            lines.append(
                f"#constraint forbid_during {c.subject_device} {c.subject_event} "
                f"{c.during_device} {c.during_event}"
            )
        else:
            lines.append(
                f"#constraint precedence {c.first_device} {c.first_event} "
                f"{c.then_device} {c.then_event} {c.period_s:.6f}"
            )
    for e in timeline.events:
        lines.append(f"{e.time:.6f} {e.device_id} {e.event_type} {e.duration_s:.6f}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_timeline(path) -> BehaviorTimeline:
    events = []
    constraints: list[Constraint] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "#constraint":
                if parts[1] == "forbid_during" and len(parts) == 6:
                    constraints.append(ForbidDuring(*parts[2:6]))
                elif parts[1] == "precedence" and len(parts) == 7:
                    constraints.append(
                        Precedence(*parts[2:6], period_s=float(parts[6]))
                    )
                else:
                    raise ValueError(f"malformed constraint at line {lineno}")
                continue
            if line.startswith("#"):
                continue
            if len(parts) != 4:
                raise ValueError(f"malformed timeline entry at line {lineno}")
            events.append(
                BehaviorEvent(float(parts[0]), parts[1], parts[2], float(parts[3]))
            )
    return BehaviorTimeline(events=tuple(events), constraints=tuple(constraints))


# --- built-in scenarios -----------------------------------------------------


def _default_profiles() -> dict[str, DeviceProfile]:
    return {
        "camera": DeviceProfile(
            "camera",
            "security_camera",
            "ep-nestify",
            heartbeat=Heartbeat(1.0, 1500, 0.05),
            event_shapes={
                "motion": BurstShape(200, 300, 1000, 200, 400, 1500, 0.02, 0.08, 0.7, 20.0)
            },
            dns_domains=("cloud.nestify.example",),
        ),
        "assistant": DeviceProfile(
            "assistant",
            "personal_assistant",
            "ep-echohome",
            heartbeat=Heartbeat(5.0, 400, 0.05),
            event_shapes={
                "voice_command": BurstShape(30, 60, 600, 150, 200, 1200, 0.05, 0.2, 0.5, 10.0)
            },
            dns_domains=("api.echohome.example",),
        ),
        "sleep_monitor": DeviceProfile(
            "sleep_monitor",
            "sleep_monitor",
            "ep-sensesleep",
            heartbeat=Heartbeat(10.0, 150, 0.05),
            event_shapes={
                "sleep_report": BurstShape(20, 30, 300, 50, 100, 500, 0.2, 0.5, 0.8, 12.0)
            },
            dns_domains=("sync.sensesleep.example",),
        ),
        "thermostat": DeviceProfile(
            "thermostat",
            "smart_thermostat",
            "ep-thermonest",
            heartbeat=Heartbeat(30.0, 200, 0.05),
            event_shapes={
                "adjust": BurstShape(8, 12, 250, 50, 100, 400, 0.3, 0.8, 0.6, 8.0)
            },
            dns_domains=("iot.thermonest.example",),
        ),
        "outlet": DeviceProfile(
            "outlet",
            "smart_outlet",
            "ep-plugcloud",
            heartbeat=Heartbeat(60.0, 150, 0.05),
            event_shapes={
                "toggle": BurstShape(4, 8, 200, 40, 80, 350, 0.2, 0.6, 0.6, 4.0)
            },
            dns_domains=("wemo.plugcloud.example",),
        ),
        "doorlock": DeviceProfile(
            "doorlock",
            "smart_doorlock",
            "ep-augustine",
            heartbeat=Heartbeat(120.0, 100, 0.05),
            event_shapes={
                "unlock": BurstShape(5, 10, 180, 40, 80, 300, 0.2, 0.5, 0.7, 4.0)
            },
            dns_domains=("lock.augustine.example",),
        ),
    }


def builtin_scenarios() -> list[Scenario]:
    """Named scenarios shipped with the package.

    ``default``: six devices with pairwise-distinct idle-rate and burst
    signatures over a two-hour capture.  ``stress``: overlapping signatures
    (two identical outlets).  ``clean_burst``: one low-noise device with
    well-separated strong bursts, for behavior-inference experiments.
    """
    default = Scenario(
        name="default",
        duration_s=7200.0,
        profiles=_default_profiles(),
        event_rates={
            ("camera", "motion"): 1.0,
            ("assistant", "voice_command"): 2.0,
            ("sleep_monitor", "sleep_report"): 0.5,
            ("thermostat", "adjust"): 1.0,
            ("outlet", "toggle"): 1.0,
            ("doorlock", "unlock"): 0.5,
        },
        constraints=(
            ForbidDuring("assistant", "voice_command", "sleep_monitor", "sleep_report"),
        ),
        seed=7,
    )

    outlet_shape = BurstShape(4, 8, 200, 40, 80, 350, 0.2, 0.6, 0.6, 4.0)
    stress = Scenario(
        name="stress",
        duration_s=7200.0,
        profiles={
            "outlet_a": DeviceProfile(
                "outlet_a",
                "smart_outlet_a",
                "ep-plug-a",
                heartbeat=Heartbeat(60.0, 150, 0.05),
                event_shapes={"toggle": outlet_shape},
                dns_domains=("a.plugcloud.example",),
            ),
            "outlet_b": DeviceProfile(
                "outlet_b",
                "smart_outlet_b",
                "ep-plug-b",
                heartbeat=Heartbeat(60.0, 150, 0.05),
                event_shapes={"toggle": outlet_shape},
                dns_domains=("b.plugcloud.example",),
            ),
            "camera": _default_profiles()["camera"],
        },
        event_rates={
            ("outlet_a", "toggle"): 1.0,
            ("outlet_b", "toggle"): 1.0,
            ("camera", "motion"): 1.0,
        },
        seed=11,
    )

    clean_burst = Scenario(
        name="clean_burst",
        duration_s=7200.0,
        profiles={
            "sensor": DeviceProfile(
                "sensor",
                "burst_sensor",
                "ep-sensor",
                heartbeat=Heartbeat(5.0, 100, 0.0),
                event_shapes={
                    "activity": BurstShape(40, 40, 1000, 0, 1000, 1000, 0.3, 0.3, 1.0, 15.0)
                },
            )
        },
        event_rates={("sensor", "activity"): 4.0},
        constraints=(ForbidDuring("sensor", "activity", "sensor", "activity"),),
        seed=3,
    )
    return [default, stress, clean_burst]


def get_scenario(name: str) -> Scenario:
    for sc in builtin_scenarios():
        if sc.name == name:
            return sc
    raise KeyError(f"no builtin scenario named {name!r}")


def default_dns_dictionary(scenario: Scenario) -> dict[str, str]:
    """Keyword -> device-type dictionary derived from scenario DNS domains
    (the manufacturer token is the second-level label)."""
    out: dict[str, str] = {}
    for dev in sorted(scenario.profiles):
        p = scenario.profiles[dev]
        for domain in p.dns_domains:
            labels = domain.split(".")
            keyword = labels[-2] if len(labels) >= 2 else labels[0]
            out.setdefault(keyword, p.type_label)
    return out
