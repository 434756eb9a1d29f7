"""Packet-metadata data model, trace file format, and adversary-view projection."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

__all__ = [
    "AdversaryView",
    "ObservedTrace",
    "PacketRecord",
    "Trace",
    "TraceError",
    "TraceFormatError",
    "load_trace",
    "project_view",
    "quantize_ts",
    "save_trace",
]

DIRECTIONS = ("out", "in")


class TraceError(ValueError):
    """Invalid trace content."""


class TraceFormatError(TraceError):
    """Malformed trace file."""


def quantize_ts(t: float) -> float:
    """Round a timestamp to microsecond precision.

    All timestamps are quantized at construction time so that text
    serialization (6 decimal places) is a bit-exact round trip.
    """
    return round(float(t), 6)


@dataclass(frozen=True)
class PacketRecord:
    """One observed packet: timing, sizing, and addressing metadata only."""

    timestamp: float
    device_id: str
    direction: str  # "out" (leaving the home) or "in"
    size_bytes: int
    remote_endpoint: str | None = None
    dns_qname: str | None = None
    # Generator provenance ("heartbeat", "dns", "event:<type>:<n>",
    # "decoy:<type>:<n>").  Internal bookkeeping; stripped by project_view.
    tag: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "timestamp", quantize_ts(self.timestamp))
        if self.timestamp < 0:
            raise TraceError(f"negative timestamp {self.timestamp}")
        if self.direction not in DIRECTIONS:
            raise TraceError(f"unknown direction {self.direction!r}")
        if not isinstance(self.size_bytes, int) or self.size_bytes < 1:
            raise TraceError(f"invalid size {self.size_bytes!r}")
        if self.dns_qname is not None and self.direction != "out":
            raise TraceError("DNS query records must be outbound")


class AdversaryView(enum.Enum):
    """Field visibility of the two passive observers."""

    LAST_MILE = "last_mile"
    WIFI_EAVESDROPPER = "wifi_eavesdropper"


@dataclass(frozen=True)
class Trace:
    """Time-sorted packet records plus ground-truth device roster."""

    records: tuple[PacketRecord, ...]
    duration_s: float
    roster: dict[str, str] = field(default_factory=dict)  # device_id -> type label

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "roster", dict(self.roster))
        if self.duration_s < 0:
            raise TraceError("negative duration")
        prev = 0.0
        for r in self.records:
            if r.timestamp < prev:
                raise TraceError("records not sorted by timestamp")
            prev = r.timestamp
            if r.timestamp > self.duration_s:
                raise TraceError(
                    f"timestamp {r.timestamp} exceeds duration {self.duration_s}"
                )
            if r.device_id not in self.roster:
                raise TraceError(f"device {r.device_id!r} not in roster")

    @classmethod
    def build(cls, records, duration_s, roster) -> "Trace":
        """Construct a Trace, stable-sorting records by timestamp."""
        return cls(
            records=tuple(sorted(records, key=lambda r: r.timestamp)),
            duration_s=float(duration_s),
            roster=roster,
        )

    def total_bytes(self) -> int:
        return sum(r.size_bytes for r in self.records)

    def bytes_by_device(self) -> dict[str, int]:
        out: dict[str, int] = {d: 0 for d in self.roster}
        for r in self.records:
            out[r.device_id] += r.size_bytes
        return out


@dataclass(frozen=True)
class ObservedTrace:
    """What one adversary sees: records with forbidden fields removed,
    roster labels stripped (device keys remain)."""

    records: tuple[PacketRecord, ...]
    duration_s: float
    view: AdversaryView
    device_keys: frozenset[str] = frozenset()


def project_view(trace: Trace, view: AdversaryView) -> ObservedTrace:
    """Project a ground-truth trace down to one adversary's field visibility.

    Record count, order, and timing are preserved.  The WiFi eavesdropper
    loses remote endpoints and DNS query names; both views lose roster type
    labels and generator tags.
    """
    wifi = view is AdversaryView.WIFI_EAVESDROPPER
    projected = tuple(
        replace(
            r,
            tag=None,
            remote_endpoint=None if wifi else r.remote_endpoint,
            dns_qname=None if wifi else r.dns_qname,
        )
        for r in trace.records
    )
    return ObservedTrace(
        records=projected,
        duration_s=trace.duration_s,
        view=view,
        device_keys=frozenset(trace.roster),
    )


def _fmt_opt(value: str | None) -> str:
    return "-" if value is None else value


def save_trace(trace: Trace, path) -> None:
    """Write a trace in the text format read by load_trace."""
    lines = [f"#duration {trace.duration_s:.6f}"]
    for device_id in trace.roster:
        lines.append(f"#device {device_id} {trace.roster[device_id]}")
    for r in trace.records:
        line = (
            f"{r.timestamp:.6f} {r.device_id} {r.direction} {r.size_bytes} "
            f"{_fmt_opt(r.remote_endpoint)} {_fmt_opt(r.dns_qname)}"
        )
        if r.tag is not None:
            line += f" {r.tag}"
        lines.append(line)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_trace(path) -> Trace:
    """Parse a trace file.

    Header lines: ``#duration <seconds>`` and ``#device <id> <type>``.
    Record lines: ``<ts> <device> <out|in> <size> <endpoint|-> <qname|->``
    with an optional trailing provenance tag.  Records are re-sorted stably
    by timestamp.
    """
    duration: float | None = None
    roster: dict[str, str] = {}
    records: list[PacketRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line.split()
                if parts[0] == "#duration" and len(parts) == 2:
                    duration = float(parts[1])
                elif parts[0] == "#device" and len(parts) == 3:
                    roster[parts[1]] = parts[2]
                else:
                    raise TraceFormatError(f"malformed header at line {lineno}")
                continue
            parts = line.split(" ")
            if len(parts) not in (6, 7):
                raise TraceFormatError(f"malformed record at line {lineno}")
            ts_s, device_id, direction, size_s, endpoint, qname = parts[:6]
            tag = parts[6] if len(parts) == 7 else None
            try:
                ts = float(ts_s)
                size = int(size_s)
            except ValueError as exc:
                raise TraceFormatError(f"malformed record at line {lineno}: {exc}")
            if size < 1:
                raise TraceFormatError(f"invalid size at line {lineno}")
            if direction not in DIRECTIONS:
                raise TraceFormatError(f"unknown direction at line {lineno}")
            if device_id not in roster:
                raise TraceFormatError(
                    f"device {device_id!r} not in roster header (line {lineno})"
                )
            try:
                records.append(
                    PacketRecord(
                        timestamp=ts,
                        device_id=device_id,
                        direction=direction,
                        size_bytes=size,
                        remote_endpoint=None if endpoint == "-" else endpoint,
                        dns_qname=None if qname == "-" else qname,
                        tag=tag,
                    )
                )
            except TraceError as exc:
                raise TraceFormatError(f"invalid record at line {lineno}: {exc}")
    if duration is None:
        raise TraceFormatError("missing #duration header")
    return Trace.build(records, duration, roster)
