import pytest

from groundseg.clock import SimClock
from groundseg.errors import PathClassificationMismatch, UnknownParameter
from groundseg.telemetry import ArchiveQuery, TelemetryStore, in_scope, under


@pytest.fixture()
def store(mib):
    return TelemetryStore(mib, SimClock(0))


def test_path_helpers():
    assert under("data.open.unprocessed.sat.x", "data.open")
    assert not under("data.opened.x", "data.open")
    assert in_scope("users.gereleo.persistent.sat.x", ["users.gereleo"])
    assert not in_scope("users.tdp1.t.sat.x", ["users.gereleo"])


def test_ingest_routes_by_classification(store):
    s_open = store.ingest("sat.obc.temp", 1000, 30.0)
    s_restr = store.ingest("sat.mil.txpwr", 1000, 700.0)
    assert s_open.path == "data.open.unprocessed.sat.obc.temp"
    assert s_restr.path == "data.restricted.unprocessed.sat.mil.txpwr"
    assert store.counters["ingested"] == 2
    assert store.counters["ingested_restricted"] == 1


def test_unknown_parameter_quarantined(store):
    with pytest.raises(UnknownParameter):
        store.ingest("sat.bogus", 1000, 1.0)
    assert store.counters["quarantined"] == 1
    assert store.latest_engineering("data.open.unprocessed.sat.bogus") is None


def test_out_of_order_sample_archived_as_stale(store):
    store.ingest("sat.obc.temp", 2000, 30.0)
    late = store.ingest("sat.obc.temp", 1000, 25.0)
    assert late.validity == "stale"
    # live value untouched, archive keeps both
    assert store.latest_engineering("data.open.unprocessed.sat.obc.temp") == 30.0
    samples = store.query_archive(
        ArchiveQuery(prefix="data.open.unprocessed.sat.obc.temp", t0=0, t1=3000))
    assert [s.timestamp for s in samples] == [1000, 2000]


def test_archive_query_half_open(store):
    for ts in (1000, 2000, 3000):
        store.ingest("sat.obc.temp", ts, float(ts))
    q = ArchiveQuery(prefix="data.open.unprocessed.sat.obc.temp", t0=1000, t1=3000)
    assert [s.timestamp for s in store.query_archive(q)] == [1000, 2000]


def test_archive_query_prefix_merges_ordered(store):
    store.ingest("sat.obc.temp", 2000, 1.0)
    store.ingest("sat.obc.load", 1000, 2.0)
    q = ArchiveQuery(prefix="data.open.unprocessed.sat.obc", t0=0, t1=9000)
    assert [s.timestamp for s in store.query_archive(q)] == [1000, 2000]


def test_archive_scope_filter(store):
    store.ingest("sat.obc.temp", 1000, 1.0)
    store.ingest("sat.mil.txpwr", 1000, 1.0)
    q = ArchiveQuery(prefix="data", t0=0, t1=9000)
    all_samples = store.query_archive(q)
    scoped = store.query_archive(q, acl_scope=["data.open"])
    assert len(all_samples) == 2 and len(scoped) == 1
    assert scoped[0].param_id == "sat.obc.temp"


def test_downsample_last_value_per_interval(store):
    for i, ts in enumerate(range(0, 10_000, 500)):
        store.ingest("sat.obc.temp", ts, float(i))
    q = ArchiveQuery(prefix="data.open.unprocessed.sat.obc.temp",
                     t0=0, t1=10_000, downsample_ms=2000)
    got = store.query_archive(q)
    # last sample of each 2 s bucket
    assert [s.timestamp for s in got] == [1500, 3500, 5500, 7500, 9500]


def test_subscription_bounded_drop_oldest(store):
    sub = store.subscribe("s1", "data.open", ["data.open"], maxlen=3)
    for ts in range(1000, 6000, 1000):
        store.ingest("sat.obc.temp", ts, 1.0)
    drained = sub.drain()
    assert [s.timestamp for s in drained] == [3000, 4000, 5000]
    assert sub.dropped == 2


def test_subscription_respects_scope(store):
    sub = store.subscribe("s1", "data", ["data.open"])
    store.ingest("sat.mil.txpwr", 1000, 1.0)
    store.ingest("sat.obc.temp", 1000, 1.0)
    assert [s.param_id for s in sub.drain()] == ["sat.obc.temp"]


def test_publish_derived_checks_classification(store):
    from groundseg.mib import Classification
    store.publish_derived("data.open.derived.sat.x", 1.0, 1000,
                          Classification.OPEN)
    with pytest.raises(PathClassificationMismatch):
        store.publish_derived("data.open.derived.sat.y", 1.0, 1000,
                              Classification.RESTRICTED)


def test_persisted_archive_roundtrip(mib, tmp_path):
    from groundseg.telemetry import Archive
    store = TelemetryStore(mib, SimClock(0), archive=Archive(str(tmp_path)))
    store.ingest("sat.obc.temp", 1000, 30.0)
    files = list(tmp_path.glob("*.seg"))
    assert files, "archive should persist segments on disk"
