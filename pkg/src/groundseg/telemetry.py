"""Central hierarchical telemetry store.

Every live value in the segment lives in one tree, rooted at ``data.open``
and ``data.restricted`` (plus ``users.*`` subtrees on the user-segment
side).  Ingest routes each sample by its MIB classification, archives it,
and hands it to registered taps (limit monitors, pipelines, the TM
splitter, data processors) and matching subscriptions.
"""

from __future__ import annotations

import heapq
import json
import os
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional

from .errors import PathClassificationMismatch, UnknownParameter, ValidationError
from .mib import Classification, Mib

VALIDITIES = ("valid", "stale", "invalid")


def join_path(*segments: str) -> str:
    return ".".join(segments)


def under(path: str, prefix: str) -> bool:
    return path == prefix or path.startswith(prefix + ".")


def in_scope(path: str, acl_scope: Iterable[str]) -> bool:
    return any(under(path, prefix) for prefix in acl_scope)


@dataclass(frozen=True)
class Sample:
    param_id: str
    path: str
    timestamp: int  # UTC ms
    raw: float
    engineering: float
    validity: str
    classification: Classification
    copied_at: Optional[int] = None  # set on data-processor copies


@dataclass(frozen=True)
class ArchiveQuery:
    prefix: str
    t0: int
    t1: int
    downsample_ms: Optional[int] = None

    def check(self) -> None:
        if not self.t0 < self.t1:
            raise ValidationError(f"archive query needs t0 < t1, got [{self.t0}, {self.t1})")


class Archive:
    """Append-only per-path sample history.

    Samples arrive in arrival order per path; queries merge paths under a
    prefix in timestamp order.  With ``persist_dir`` set, every append also
    lands in a per-path segment file (one JSON record per line).
    """

    def __init__(self, persist_dir: Optional[str] = None):
        self._by_path: dict[str, list[Sample]] = {}
        self._persist_dir = persist_dir
        if persist_dir:
            os.makedirs(persist_dir, exist_ok=True)

    def append(self, sample: Sample) -> None:
        self._by_path.setdefault(sample.path, []).append(sample)
        if self._persist_dir:
            fname = os.path.join(self._persist_dir, sample.path.replace("/", "_") + ".seg")
            with open(fname, "a", encoding="utf-8") as fh:
                fh.write(json.dumps([sample.param_id, sample.timestamp, sample.raw,
                                     sample.engineering, sample.validity,
                                     sample.classification.value]) + "\n")

    def paths(self) -> list[str]:
        return sorted(self._by_path)

    def query(self, q: ArchiveQuery, acl_scope: Optional[Iterable[str]] = None) -> list[Sample]:
        q.check()
        lanes = []
        for path, samples in self._by_path.items():
            if acl_scope is not None and not in_scope(path, acl_scope):
                continue
            if under(path, q.prefix):
                lanes.append(s for s in sorted(samples, key=lambda s: s.timestamp)
                             if q.t0 <= s.timestamp < q.t1)
        merged = list(heapq.merge(*lanes, key=lambda s: s.timestamp))
        if q.downsample_ms:
            merged = _downsample_last(merged, q.t0, q.downsample_ms)
        return merged


def _downsample_last(samples: list[Sample], t0: int, interval_ms: int) -> list[Sample]:
    """Keep the last sample of each interval (per path)."""
    buckets: dict[tuple, Sample] = {}
    for s in samples:
        buckets[(s.path, (s.timestamp - t0) // interval_ms)] = s
    return sorted(buckets.values(), key=lambda s: (s.timestamp, s.path))


class Subscription:
    """Bounded live delivery lane; a slow consumer drops oldest, never blocks ingest."""

    def __init__(self, subscriber_id: str, root_path: str, acl_scope: tuple,
                 maxlen: int = 10000, callback: Optional[Callable] = None):
        self.subscriber_id = subscriber_id
        self.root_path = root_path
        self.acl_scope = acl_scope
        self.queue: deque[Sample] = deque(maxlen=maxlen)
        self.dropped = 0
        self.callback = callback

    def matches(self, path: str) -> bool:
        return under(path, self.root_path) and in_scope(path, self.acl_scope)

    def deliver(self, sample: Sample) -> None:
        if len(self.queue) == self.queue.maxlen:
            self.dropped += 1
        self.queue.append(sample)
        if self.callback is not None:
            self.callback(sample)

    def drain(self) -> list[Sample]:
        out = list(self.queue)
        self.queue.clear()
        return out


class TelemetryStore:
    """One telemetry tree (master or user-segment copy) plus its archive."""

    def __init__(self, mib: Mib, clock, archive: Optional[Archive] = None):
        self.mib = mib
        self.clock = clock
        self.archive = archive or Archive()
        self.latest: dict[str, Sample] = {}
        self.counters = {"ingested": 0, "ingested_restricted": 0, "quarantined": 0}
        self.quarantine: list[tuple] = []
        self._last_ts: dict[str, int] = {}
        self._taps: list[Callable[[Sample], None]] = []
        self._subscriptions: list[Subscription] = []

    def set_mib(self, mib: Mib) -> None:
        """Atomically install a new dictionary version (limit overrides etc.)."""
        self.mib = mib

    def add_tap(self, fn: Callable[[Sample], None]) -> None:
        self._taps.append(fn)

    def subscribe(self, subscriber_id: str, root_path: str, acl_scope,
                  callback=None, maxlen: int = 10000) -> Subscription:
        sub = Subscription(subscriber_id, root_path, tuple(acl_scope),
                           maxlen=maxlen, callback=callback)
        self._subscriptions.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        if sub in self._subscriptions:
            self._subscriptions.remove(sub)

    def ingest(self, param_id: str, timestamp: int, raw: float,
               validity: str = "valid") -> Optional[Sample]:
        """Route one unprocessed sample by its MIB classification."""
        pdef = self.mib.parameters.get(param_id)
        if pdef is None:
            self.counters["quarantined"] += 1
            self.quarantine.append((param_id, timestamp, raw))
            raise UnknownParameter(param_id)
        path = join_path("data", pdef.classification.value, "unprocessed", param_id)
        sample = Sample(
            param_id=param_id, path=path, timestamp=timestamp, raw=raw,
            engineering=pdef.engineering(raw), validity=validity,
            classification=pdef.classification,
        )
        return self._store(sample)

    def publish_derived(self, path: str, value: float, timestamp: int,
                        classification: Classification,
                        validity: str = "valid") -> Sample:
        segs = path.split(".")
        if len(segs) < 4 or segs[0] != "data" or segs[2] != "derived":
            raise PathClassificationMismatch(f"derived path must be data.<cls>.derived.*: {path}")
        if segs[1] != classification.value:
            raise PathClassificationMismatch(
                f"{classification.value} value may not be published under {path}")
        sample = Sample(
            param_id=".".join(segs[3:]), path=path, timestamp=timestamp,
            raw=value, engineering=value, validity=validity,
            classification=classification,
        )
        return self._store(sample)

    def place_copy(self, sample: Sample, path: str) -> Sample:
        """Store a data-processor copy under a users.* subtree."""
        copy = replace(sample, path=path, copied_at=self.clock.now_ms())
        return self._store(copy, tap=False)

    def _store(self, sample: Sample, tap: bool = True) -> Sample:
        live = True
        last = self._last_ts.get(sample.path)
        if last is not None and sample.timestamp < last:
            # time travel: archive for the record, never deliver live
            sample = replace(sample, validity="stale")
            live = False
        else:
            self._last_ts[sample.path] = sample.timestamp
        self.counters["ingested"] += 1
        if sample.classification is Classification.RESTRICTED:
            self.counters["ingested_restricted"] += 1
        self.archive.append(sample)
        if live:
            self.latest[sample.path] = sample
            for sub in self._subscriptions:
                if sub.matches(sample.path):
                    sub.deliver(sample)
            if tap:
                for fn in self._taps:
                    fn(sample)
        return sample

    def latest_engineering(self, path: str) -> Optional[float]:
        s = self.latest.get(path)
        return None if s is None else s.engineering

    def query_archive(self, q: ArchiveQuery, acl_scope=None) -> list[Sample]:
        return self.archive.query(q, acl_scope)
