"""Four privacy defenses as pure trace transforms: blocking, DNS
concealment, tunneling, and shaping/delay/decoy injection.  Each returns a
defended Trace plus a cost report."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .synth import (
    BehaviorEvent,
    BehaviorTimeline,
    ForbidDuring,
    ConstraintError,
    Scenario,
    find_violations,
    render_traffic,
    subrng,
)
from .trace import PacketRecord, Trace, quantize_ts

__all__ = [
    "DefenseCost",
    "DefenseError",
    "FunctionalityImpact",
    "ShapingError",
    "DEFAULT_FUNCTIONALITY",
    "block_streams",
    "conceal_dns",
    "delay_randomize",
    "inject_decoys",
    "shape_constant_rate",
    "tunnel",
]


class DefenseError(ValueError):
    """Invalid defense configuration or application."""


class ShapingError(DefenseError):
    """Target rate too low to drain the byte queue by trace end."""

    def __init__(self, message: str, residual_bytes: int):
        super().__init__(message)
        self.residual_bytes = residual_bytes


@dataclass(frozen=True)
class FunctionalityImpact:
    """Per-device functionality retained when its traffic is blocked."""

    levels: dict[str, tuple[str, str]] = field(default_factory=dict)
    # device_id -> (level in {"full", "limited", "none", "unknown"}, description)


@dataclass(frozen=True)
class DefenseCost:
    overhead_bytes: int = 0
    overhead_ratio: float = 0.0
    mean_added_latency_s: float = 0.0
    max_added_latency_s: float = 0.0
    functionality: FunctionalityImpact | None = None
    notes: tuple[str, ...] = ()


# Functionality retained without Internet connectivity, by device type.
DEFAULT_FUNCTIONALITY: dict[str, tuple[str, str]] = {
    "sleep_monitor": ("none", "Monitor does not record sleep data"),
    "security_camera": (
        "none",
        "Unable to view video feed or receive detected motion notifications",
    ),
    "smart_outlet": ("limited", "Can turn switch on/off with physical button on device"),
    "smart_outlet_a": ("limited", "Can turn switch on/off with physical button on device"),
    "smart_outlet_b": ("limited", "Can turn switch on/off with physical button on device"),
    "personal_assistant": (
        "limited",
        "Can use as a bluetooth speaker with previously paired smartphone",
    ),
    "smart_thermostat": ("limited", "Keeps last schedule; no remote control"),
    "smart_doorlock": ("limited", "Manual key operation only"),
}


def _ratio(overhead: int, original: int) -> float:
    return overhead / original if original > 0 else 0.0


def _category(record: PacketRecord) -> str:
    tag = record.tag
    if tag is None:
        return "other"
    if tag in ("heartbeat", "dns"):
        return tag
    return tag.split(":")[1] if ":" in tag else tag


def block_streams(
    trace: Trace,
    policy: dict[str, set[str]],
    functionality_table: dict[str, tuple[str, str]] | None = None,
) -> tuple[Trace, DefenseCost]:
    """Firewall transform: drop records matching a per-device category
    policy ("all", "heartbeat", "dns", or an event type)."""
    for dev in policy:
        if dev not in trace.roster:
            raise DefenseError(f"block policy references unknown device {dev!r}")
    table = DEFAULT_FUNCTIONALITY if functionality_table is None else functionality_table

    def blocked(r: PacketRecord) -> bool:
        cats = policy.get(r.device_id)
        return cats is not None and ("all" in cats or _category(r) in cats)

    kept = tuple(r for r in trace.records if not blocked(r))
    impact = FunctionalityImpact(
        levels={
            dev: table.get(trace.roster[dev], ("unknown", ""))
            for dev in sorted(policy)
        }
    )
    out = Trace(records=kept, duration_s=trace.duration_s, roster=trace.roster)
    return out, DefenseCost(functionality=impact)


def conceal_dns(trace: Trace) -> tuple[Trace, DefenseCost]:
    """Encrypted-DNS model: query names removed, packets otherwise intact."""
    records = tuple(
        replace(r, dns_qname=None) if r.dns_qname is not None else r
        for r in trace.records
    )
    out = Trace(records=records, duration_s=trace.duration_s, roster=trace.roster)
    return out, DefenseCost()


def tunnel(
    trace: Trace,
    endpoint: str = "vpn-exit",
    gateway_key: str = "gateway",
    overhead_bytes: int = 40,
) -> tuple[Trace, DefenseCost]:
    """VPN model: aggregate everything into a single gateway-to-exit stream.

    Per-device keys and DNS names disappear from the wire; each record
    grows by the fixed encapsulation overhead.  Only affects the last-mile
    view; the WiFi projection must be taken before tunneling.
    """
    if overhead_bytes < 0:
        raise DefenseError("tunnel overhead must be non-negative")
    records = tuple(
        replace(
            r,
            device_id=gateway_key,
            remote_endpoint=endpoint,
            dns_qname=None,
            size_bytes=r.size_bytes + overhead_bytes,
        )
        for r in trace.records
    )
    overhead = overhead_bytes * len(trace.records)
    out = Trace(
        records=records,
        duration_s=trace.duration_s,
        roster={gateway_key: "gateway"},
    )
    return out, DefenseCost(
        overhead_bytes=overhead, overhead_ratio=_ratio(overhead, trace.total_bytes())
    )


def shape_constant_rate(
    trace: Trace, target_rate: float, cell_size: int
) -> tuple[Trace, DefenseCost]:
    """Constant-rate cover traffic: each device stream becomes fixed-size
    cells at exact intervals of cell_size/target_rate for the full duration.

    Real bytes fill cells FIFO; leftover capacity is padding.  Raises
    ShapingError when the queue cannot drain by trace end.
    """
    if target_rate <= 0 or cell_size <= 0:
        raise DefenseError("target rate and cell size must be positive")
    n_cells = int(trace.duration_s * target_rate / cell_size + 1e-9)
    if n_cells < 1:
        raise DefenseError("duration too short for a single cell")

    by_device: dict[str, list[PacketRecord]] = {d: [] for d in trace.roster}
    for r in trace.records:
        by_device[r.device_id].append(r)

    out_records: list[PacketRecord] = []
    latencies: list[float] = []
    for dev in trace.roster:
        recs = by_device[dev]
        endpoint = recs[0].remote_endpoint if recs else "shaped"
        queue: list[list] = []  # [record, remaining_bytes]
        arrival = 0
        for k in range(n_cells):
            t = quantize_ts(k * cell_size / target_rate)
            # the final cell also picks up arrivals from the last partial
            # interval so a boundary packet is not misreported as residual
            while arrival < len(recs) and (
                recs[arrival].timestamp <= t or k == n_cells - 1
            ):
                queue.append([recs[arrival], recs[arrival].size_bytes])
                arrival += 1
            capacity = cell_size
            while capacity > 0 and queue:
                head = queue[0]
                take = min(head[1], capacity)
                head[1] -= take
                capacity -= take
                if head[1] == 0:
                    latencies.append(max(0.0, t - head[0].timestamp))
                    queue.pop(0)
            out_records.append(
                PacketRecord(
                    timestamp=t,
                    device_id=dev,
                    direction="out",
                    size_bytes=cell_size,
                    remote_endpoint=endpoint,
                )
            )
        residual = sum(rem for _, rem in queue) + sum(
            r.size_bytes for r in recs[arrival:]
        )
        if residual > 0:
            raise ShapingError(
                f"target rate {target_rate} B/s too low for device {dev!r}: "
                f"{residual} bytes undrained at trace end",
                residual_bytes=residual,
            )

    original = trace.total_bytes()
    total_out = n_cells * cell_size * len(trace.roster)
    overhead = total_out - original
    out = Trace.build(out_records, trace.duration_s, trace.roster)
    return out, DefenseCost(
        overhead_bytes=overhead,
        overhead_ratio=_ratio(overhead, original),
        mean_added_latency_s=sum(latencies) / len(latencies) if latencies else 0.0,
        max_added_latency_s=max(latencies, default=0.0),
    )


def delay_randomize(
    trace: Trace,
    max_delay_s: float,
    seed: int,
    devices: set[str] | None = None,
) -> tuple[Trace, DefenseCost]:
    """Shift each event burst of the configured devices by an independent
    uniform delay in [0, max_delay_s], preserving intra-burst spacing.
    Heartbeats and DNS traffic are left in place."""
    if max_delay_s < 0:
        raise DefenseError("max delay must be non-negative")
    notes: list[str] = []
    shifts: dict[tuple[str, str], float] = {}
    burst_max_ts: dict[tuple[str, str], float] = {}
    for r in trace.records:
        if r.tag is None or r.tag in ("heartbeat", "dns"):
            continue
        if devices is not None and r.device_id not in devices:
            continue
        key = (r.device_id, r.tag)
        burst_max_ts[key] = max(burst_max_ts.get(key, 0.0), r.timestamp)
    for key in sorted(burst_max_ts):
        rng = subrng(seed, "delay", *key)
        shift = float(rng.uniform(0.0, max_delay_s))
        headroom = trace.duration_s - burst_max_ts[key]
        if shift > headroom:
            shift = headroom
            notes.append(f"burst {key[1]} of {key[0]} clamped to trace end")
        shifts[key] = shift

    records = []
    applied: list[float] = []
    for r in trace.records:
        key = (r.device_id, r.tag) if r.tag else None
        if key in shifts:
            records.append(replace(r, timestamp=r.timestamp + shifts[key]))
            applied.append(shifts[key])
        else:
            records.append(r)
    out = Trace.build(records, trace.duration_s, trace.roster)
    return out, DefenseCost(
        mean_added_latency_s=sum(applied) / len(applied) if applied else 0.0,
        max_added_latency_s=max(applied, default=0.0),
        notes=tuple(notes),
    )


def _sample_decoys(
    scenario: Scenario,
    real: BehaviorTimeline,
    multiplier: float,
    seed: int,
    max_rounds: int = 200,
) -> BehaviorTimeline:
    """Decoy events from the same generative model, rates scaled, with the
    combined real+decoy set repaired against every logical constraint."""
    decoys: list[BehaviorEvent] = []
    for dev in sorted(scenario.profiles):
        profile = scenario.profiles[dev]
        for etype in sorted(profile.event_shapes):
            rate = scenario.event_rates.get((dev, etype), 0.0) * multiplier
            if rate == 0.0:
                continue
            shape = profile.event_shapes[etype]
            rng = subrng(seed, "decoy", dev, etype)
            n = rng.poisson(rate * scenario.duration_s / 3600.0)
            span = max(0.0, scenario.duration_s - shape.duration_s)
            for t in rng.uniform(0.0, span, n):
                decoys.append(BehaviorEvent(t, dev, etype, shape.duration_s))
    repair_rng = subrng(seed, "decoy-repair")
    real_events = list(real.events)
    for _ in range(max_rounds):
        combined = real_events + decoys
        violations = find_violations(combined, scenario.constraints)
        bad: dict[int, BehaviorEvent] = {}
        for c, e in violations:
            if any(e is d for d in decoys):
                bad[id(e)] = e
            elif isinstance(c, ForbidDuring):
                # a decoy interval is pinning a real event; resample it
                for d in decoys:
                    if (
                        d.device_id == c.during_device
                        and d.event_type == c.during_event
                        and max(e.time, d.time) < min(e.end, d.end)
                    ):
                        bad[id(d)] = d
            else:
                raise ConstraintError(
                    f"real timeline violates {c.describe()}; decoys cannot repair it"
                )
        if not bad:
            break
        for e in sorted(bad.values(), key=lambda e: (e.time, e.device_id, e.event_type)):
            span = max(0.0, scenario.duration_s - e.duration_s)
            i = next(i for i, d in enumerate(decoys) if d is e)
            decoys[i] = BehaviorEvent(
                repair_rng.uniform(0.0, span), e.device_id, e.event_type, e.duration_s
            )
    else:
        c = find_violations(real_events + decoys, scenario.constraints)[0][0]
        raise ConstraintError(
            f"could not place decoys under {c.describe()} within retry budget"
        )
    return BehaviorTimeline(events=tuple(decoys), constraints=scenario.constraints)


def inject_decoys(
    trace: Trace,
    scenario: Scenario,
    real_timeline: BehaviorTimeline,
    multiplier: float,
    seed: int,
) -> tuple[Trace, BehaviorTimeline, DefenseCost]:
    """Merge decoy bursts drawn from the scenario's own event model into the
    trace; the combined real+decoy event set satisfies every constraint."""
    if multiplier < 0:
        raise DefenseError("decoy multiplier must be non-negative")
    for dev in scenario.profiles:
        if dev not in trace.roster:
            raise DefenseError(f"scenario device {dev!r} missing from trace roster")
    if multiplier == 0:
        return trace, BehaviorTimeline(events=(), constraints=scenario.constraints), DefenseCost()
    decoy_timeline = _sample_decoys(scenario, real_timeline, multiplier, seed)
    decoy_trace = render_traffic(
        decoy_timeline,
        scenario,
        seed=seed,
        include_background=False,
        tag_prefix="decoy",
    )
    merged = Trace.build(
        list(trace.records) + list(decoy_trace.records),
        trace.duration_s,
        trace.roster,
    )
    overhead = decoy_trace.total_bytes()
    cost = DefenseCost(
        overhead_bytes=overhead, overhead_ratio=_ratio(overhead, trace.total_bytes())
    )
    return merged, decoy_timeline, cost
