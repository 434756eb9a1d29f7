import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trafficlab.trace import (
    AdversaryView,
    PacketRecord,
    Trace,
    TraceError,
    TraceFormatError,
    load_trace,
    project_view,
    save_trace,
)


ROSTER = {"cam": "security_camera", "plug": "smart_outlet"}


def rec(ts, dev="cam", direction="out", size=100, ep="ep-1", qname=None, tag=None):
    return PacketRecord(ts, dev, direction, size, ep, qname, tag)


class TestPacketRecord:
    def test_rejects_zero_size(self):
        with pytest.raises(TraceError):
            rec(0.0, size=0)

    def test_rejects_negative_timestamp(self):
        with pytest.raises(TraceError):
            rec(-1.0)

    def test_dns_must_be_outbound(self):
        with pytest.raises(TraceError):
            rec(0.0, direction="in", qname="x.example")

    def test_unknown_direction(self):
        with pytest.raises(TraceError):
            rec(0.0, direction="sideways")


class TestTraceFile:
    def test_load_sorted_records(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text(
            "#duration 10.000000\n"
            "#device cam security_camera\n"
            "1.000000 cam out 100 ep-1 -\n"
            "2.000000 cam in 200 ep-1 -\n"
            "3.000000 cam out 50 ep-1 x.example\n"
        )
        t = load_trace(p)
        assert len(t.records) == 3
        assert [r.timestamp for r in t.records] == [1.0, 2.0, 3.0]
        assert t.records[2].dns_qname == "x.example"

    def test_empty_records_section(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("#duration 42.500000\n#device cam security_camera\n")
        t = load_trace(p)
        assert t.records == ()
        assert t.duration_s == 42.5

    def test_zero_size_reports_line(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text(
            "#duration 10.000000\n#device cam c\n1.000000 cam out 0 ep -\n"
        )
        with pytest.raises(TraceFormatError, match="invalid size at line 3"):
            load_trace(p)

    def test_unknown_direction_token(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("#duration 10.000000\n#device cam c\n1.0 cam sideways 5 ep -\n")
        with pytest.raises(TraceFormatError, match="line 3"):
            load_trace(p)

    def test_device_missing_from_roster(self, tmp_path):
        p = tmp_path / "t.txt"
        p.write_text("#duration 10.000000\n#device cam c\n1.0 plug out 5 ep -\n")
        with pytest.raises(TraceFormatError, match="roster"):
            load_trace(p)

    def test_round_trip_identity(self, tmp_path):
        t = Trace.build(
            [
                rec(0.5, "cam", "out", 120, "ep-1", "cloud.nestify.example", "dns"),
                rec(0.5, "plug", "in", 60, "ep-2"),
                rec(3.25, "cam", "out", 999, "ep-1", None, "event:motion:0"),
            ],
            10.0,
            ROSTER,
        )
        path = tmp_path / "rt.txt"
        save_trace(t, path)
        assert load_trace(path) == t

    def test_large_round_trip(self, tmp_path):
        # 10^5 generated records survive the round trip structurally intact
        from trafficlab.synth import get_scenario, render_traffic, sample_timeline

        sc = get_scenario("default")
        trace = render_traffic(sample_timeline(sc), sc)
        records = list(trace.records)
        i = 0
        while len(records) < 100_000:
            r = trace.records[i % len(trace.records)]
            records.append(rec(r.timestamp, "cam", r.direction, r.size_bytes + i % 7))
            i += 1
        big = Trace.build(records, trace.duration_s, {**trace.roster, **ROSTER})
        path = tmp_path / "big.txt"
        save_trace(big, path)
        assert load_trace(path) == big


timestamps = st.floats(min_value=0.0, max_value=99.0, allow_nan=False)
records_strategy = st.lists(
    st.builds(
        rec,
        timestamps,
        st.sampled_from(list(ROSTER)),
        st.sampled_from(["out", "in"]),
        st.integers(min_value=1, max_value=10**6),
        st.one_of(st.none(), st.text(alphabet="abc", min_size=1, max_size=4)),
    ),
    max_size=40,
)


class TestTraceProperties:
    @settings(max_examples=60)
    @given(records=records_strategy)
    def test_round_trip_property(self, tmp_path_factory, records):
        t = Trace.build(records, 100.0, ROSTER)
        path = tmp_path_factory.mktemp("rt") / "t.txt"
        save_trace(t, path)
        assert load_trace(path) == t

    @given(records_strategy)
    def test_build_sorts_stably(self, records):
        t = Trace.build(records, 100.0, ROSTER)
        ts = [r.timestamp for r in t.records]
        assert ts == sorted(ts)


class TestProjection:
    def trace(self):
        return Trace.build(
            [
                rec(1.0, "cam", "out", 80, "ep-1", "cloud.nestify.example", "dns"),
                rec(2.0, "plug", "out", 100, "ep-2", None, "heartbeat"),
                rec(3.0, "cam", "in", 500, "ep-1"),
            ],
            10.0,
            ROSTER,
        )

    def test_wifi_strips_endpoint_and_qname(self):
        obs = project_view(self.trace(), AdversaryView.WIFI_EAVESDROPPER)
        assert all(r.remote_endpoint is None for r in obs.records)
        assert all(r.dns_qname is None for r in obs.records)
        assert all(r.tag is None for r in obs.records)

    def test_last_mile_keeps_qname(self):
        obs = project_view(self.trace(), AdversaryView.LAST_MILE)
        assert obs.records[0].dns_qname == "cloud.nestify.example"
        assert obs.records[0].remote_endpoint == "ep-1"
        assert obs.records[0].tag is None

    def test_projection_preserves_count_and_order(self):
        t = self.trace()
        for view in AdversaryView:
            obs = project_view(t, view)
            assert len(obs.records) == len(t.records)
            assert [r.timestamp for r in obs.records] == [r.timestamp for r in t.records]
            assert [r.size_bytes for r in obs.records] == [r.size_bytes for r in t.records]

    def test_tunneled_trace_single_endpoint(self):
        from trafficlab.defenses import tunnel

        defended, _ = tunnel(self.trace())
        obs = project_view(defended, AdversaryView.LAST_MILE)
        assert {r.remote_endpoint for r in obs.records} == {"vpn-exit"}
        assert {r.device_id for r in obs.records} == {"gateway"}
