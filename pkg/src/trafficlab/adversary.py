"""Adversary toolkit: stream splitting, DNS identification, rate binning,
window features, and rate-change event detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .trace import AdversaryView, ObservedTrace, PacketRecord

__all__ = [
    "DetectedEvent",
    "DetectorParams",
    "FeatureVector",
    "RateSeries",
    "bin_rates",
    "identify_by_dns",
    "infer_events",
    "split_streams",
    "windows_to_features",
]


@dataclass(frozen=True)
class RateSeries:
    """Byte totals (both directions) per consecutive sample period."""

    device_key: str
    sample_period_s: float
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if (counts < 0).any():
            raise ValueError("negative byte counts")
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class FeatureVector:
    mean: float
    stddev: float
    label: str | None = None
    window_index: int = 0

    def __post_init__(self):
        if self.stddev < 0:
            raise ValueError("negative stddev")


@dataclass(frozen=True)
class DetectorParams:
    """Rolling-baseline threshold detector parameters."""

    baseline_s: float = 60.0
    threshold_c: float = 4.0
    sustain_s: float = 10.0
    merge_gap_s: float = 5.0

    def __post_init__(self):
        if min(self.baseline_s, self.threshold_c, self.sustain_s, self.merge_gap_s) <= 0:
            raise ValueError("detector parameters must be positive")


@dataclass(frozen=True)
class DetectedEvent:
    start_s: float
    end_s: float
    peak_rate: float  # bytes/s


def split_streams(observed: ObservedTrace) -> dict[str, list[PacketRecord]]:
    """Partition observed records into per-stream lists.

    WiFi eavesdropper keys by device (MAC); last-mile keys by
    (device, remote endpoint), collapsed to the device key when the
    device/endpoint association is one-to-one.
    """
    if observed.view is AdversaryView.WIFI_EAVESDROPPER:
        streams: dict[str, list[PacketRecord]] = {}
        for r in observed.records:
            streams.setdefault(r.device_id, []).append(r)
        return streams

    by_pair: dict[tuple[str, str], list[PacketRecord]] = {}
    dev_endpoints: dict[str, set[str]] = {}
    ep_devices: dict[str, set[str]] = {}
    for r in observed.records:
        ep = r.remote_endpoint or "-"
        by_pair.setdefault((r.device_id, ep), []).append(r)
        dev_endpoints.setdefault(r.device_id, set()).add(ep)
        ep_devices.setdefault(ep, set()).add(r.device_id)
    one_to_one = all(len(v) == 1 for v in dev_endpoints.values()) and all(
        len(v) == 1 for v in ep_devices.values()
    )
    if one_to_one:
        return {dev: recs for (dev, _), recs in by_pair.items()}
    return {f"{dev}|{ep}": recs for (dev, ep), recs in by_pair.items()}


def stream_device_key(stream_key: str) -> str:
    """Device component of a split_streams key."""
    return stream_key.split("|", 1)[0]


def identify_by_dns(
    stream: list[PacketRecord], dictionary: dict[str, str]
) -> str | None:
    """Match DNS query names against a keyword -> device-type dictionary.

    First dictionary entry whose keyword is a substring of any query name
    wins; None when the stream carries no query names or nothing matches.
    """
    if not dictionary:
        raise ValueError("empty DNS keyword dictionary")
    qnames = [r.dns_qname for r in stream if r.dns_qname is not None]
    for keyword, device_type in dictionary.items():
        if any(keyword in q for q in qnames):
            return device_type
    return None


def load_dns_dictionary(path) -> dict[str, str]:
    """Read a keyword dictionary file: one ``<keyword> <device_type>`` pair
    per line, blank lines and ``#`` comments ignored."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"malformed dictionary entry at line {lineno}")
            out[parts[0]] = parts[1]
    return out


def bin_rates(
    stream: list[PacketRecord], s: float, duration: float, device_key: str = ""
) -> RateSeries:
    """Total bytes per consecutive s-second sample, both directions summed.

    Trailing empty samples are retained up to the trace duration.
    """
    if s <= 0:
        raise ValueError("sample period must be positive")
    n = max(1, math.ceil(duration / s)) if duration > 0 else 0
    counts = np.zeros(n, dtype=np.int64)
    for r in stream:
        i = int(r.timestamp // s)
        if i >= n:  # record exactly at duration boundary
            i = n - 1
        counts[i] += r.size_bytes
    return RateSeries(device_key=device_key, sample_period_s=s, counts=counts)


def windows_to_features(series: RateSeries, w: float) -> list[FeatureVector]:
    """Non-overlapping w-second windows reduced to (mean, population stddev).

    A trailing partial window is discarded; all-zero windows are retained
    (idle behavior is a legitimate signature).
    """
    s = series.sample_period_s
    per = w / s
    if abs(per - round(per)) > 1e-9:
        raise ValueError(f"window {w} not a multiple of sample period {s}")
    per = int(round(per))
    if per < 1:
        raise ValueError("window shorter than sample period")
    n_windows = len(series.counts) // per
    if n_windows == 0:
        return []
    data = series.counts[: n_windows * per].reshape(n_windows, per).astype(float)
    means = data.mean(axis=1)
    stds = data.std(axis=1)  # population
    return [
        FeatureVector(mean=float(m), stddev=float(sd), window_index=i)
        for i, (m, sd) in enumerate(zip(means, stds))
    ]


def infer_events(series: RateSeries, params: DetectorParams) -> list[DetectedEvent]:
    """Flag samples exceeding the trailing-baseline mean by c standard
    deviations; sustained runs become events; nearby events are merged."""
    counts = series.counts.astype(float)
    if len(counts) == 0:
        raise ValueError("empty rate series")
    s = series.sample_period_s
    b = max(1, int(round(params.baseline_s / s)))
    flagged = np.zeros(len(counts), dtype=bool)
    # the first baseline window is a warm-up taken as-is; afterwards flagged
    # samples are excluded from the baseline so one burst does not mask the
    # next
    baseline: list[float] = []
    for i in range(len(counts)):
        if i >= b:
            arr = np.asarray(baseline)
            mu = arr.mean()
            sigma = arr.std()
            flagged[i] = counts[i] > mu + params.threshold_c * sigma
        if not flagged[i]:
            baseline.append(counts[i])
            if len(baseline) > b:
                baseline.pop(0)

    # maximal flagged runs
    runs: list[tuple[int, int]] = []  # [start, end) in samples
    i = 0
    while i < len(flagged):
        if flagged[i]:
            j = i
            while j < len(flagged) and flagged[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    # sustain filter, then merge nearby events
    runs = [(a, b_) for a, b_ in runs if (b_ - a) * s >= params.sustain_s]
    merged: list[tuple[int, int]] = []
    for a, b_ in runs:
        if merged and (a - merged[-1][1]) * s <= params.merge_gap_s:
            merged[-1] = (merged[-1][0], b_)
        else:
            merged.append((a, b_))
    return [
        DetectedEvent(
            start_s=a * s,
            end_s=b_ * s,
            peak_rate=float(counts[a:b_].max()) / s,
        )
        for a, b_ in merged
    ]
