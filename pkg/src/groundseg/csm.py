"""Centralized signal monitoring: power limits and intruder detection.

Driven by spectrum measurements from the simulated anchor-station source.
Task-boundary GOPs start/stop a power-monitor session per activity-request
instance; stopping enters a grace period during which a lingering user
signal raises an alarm at grace expiry.  Outside registered bands, any
carrier is an intruder while default mode is on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import DuplicateSession, UnknownSession
from .events import EventBus


@dataclass(frozen=True)
class Carrier:
    frequency_hz: float
    bandwidth_hz: float
    power_dbm: float


@dataclass(frozen=True)
class SpectrumMeasurement:
    timestamp: int
    carriers: tuple = ()


def bands_overlap(f_a: float, bw_a: float, f_b: float, bw_b: float) -> bool:
    return abs(f_a - f_b) <= (bw_a + bw_b) / 2.0


@dataclass
class PowerMonitorSession:
    ar_instance_id: str
    frequency_hz: float
    bandwidth_hz: float
    footprint_loss_db: float
    limit_dbm: float                    # regulatory limit minus footprint loss
    state: str = "active"               # active | grace | closed
    grace_ms: int = 600_000
    grace_end_ms: Optional[int] = None
    violation_latched: bool = False     # edge trigger re-arms after one in-limit hit

    def in_band(self, carrier: Carrier) -> bool:
        return bands_overlap(carrier.frequency_hz, carrier.bandwidth_hz,
                             self.frequency_hz, self.bandwidth_hz)


class CsmMonitor:
    def __init__(self, clock, bus: EventBus, regulatory_limit_dbm: float = 50.0,
                 grace_ms: int = 600_000, audit=None):
        self.clock = clock
        self.bus = bus
        self.regulatory_limit_dbm = regulatory_limit_dbm
        self.grace_ms = grace_ms
        self.audit = audit
        self.sessions: dict[str, PowerMonitorSession] = {}
        self.default_mode = True
        self._intruder_latched: dict[int, bool] = {}   # freq bucket -> active

    # -- commanding (GOP-facing) ---------------------------------------------

    def start_monitoring(self, ar_instance_id: str, frequency_hz: float,
                         bandwidth_hz: float, footprint_loss_db: float,
                         limit_dbm: Optional[float] = None) -> PowerMonitorSession:
        existing = self.sessions.get(ar_instance_id)
        if existing is not None and existing.state != "closed":
            raise DuplicateSession(ar_instance_id)
        session = PowerMonitorSession(
            ar_instance_id=ar_instance_id, frequency_hz=frequency_hz,
            bandwidth_hz=bandwidth_hz, footprint_loss_db=footprint_loss_db,
            limit_dbm=(self.regulatory_limit_dbm if limit_dbm is None else limit_dbm)
            - footprint_loss_db,
            grace_ms=self.grace_ms)
        self.sessions[ar_instance_id] = session
        return session

    def stop_monitoring(self, ar_instance_id: str) -> PowerMonitorSession:
        session = self.sessions.get(ar_instance_id)
        if session is None or session.state != "active":
            raise UnknownSession(ar_instance_id)
        session.state = "grace"
        session.grace_end_ms = self.clock.now_ms() + session.grace_ms
        return session

    def set_default_mode(self, enabled: bool, actor: str = "operator") -> bool:
        self.default_mode = bool(enabled)
        if self.audit is not None:
            self.audit.record(actor, "csm-default-mode", {"enabled": self.default_mode})
        return self.default_mode

    # -- measurement lane ------------------------------------------------------

    def _registered(self, carrier: Carrier) -> bool:
        return any(s.state in ("active", "grace") and s.in_band(carrier)
                   for s in self.sessions.values())

    def process_measurement(self, m: SpectrumMeasurement) -> list:
        events = []
        # grace expiry first: a session past its deadline closes on this sweep;
        # its band still shields carriers from intruder flagging this once,
        # the lingering alarm already covers them
        expired = []
        for session in self.sessions.values():
            if session.state == "grace" and m.timestamp >= session.grace_end_ms:
                lingering = any(session.in_band(c) for c in m.carriers)
                session.state = "closed"
                expired.append(session)
                if lingering:
                    events.append(self.bus.make(
                        f"csm.lingering.{session.ar_instance_id}", source="ground",
                        severity="alarm",
                        payload={"ar_instance_id": session.ar_instance_id,
                                 "frequency_hz": session.frequency_hz}))
        for carrier in m.carriers:
            matched = False
            for session in self.sessions.values():
                if session.state not in ("active", "grace") or not session.in_band(carrier):
                    continue
                matched = True
                if carrier.power_dbm > session.limit_dbm:
                    if not session.violation_latched:
                        session.violation_latched = True
                        events.append(self.bus.make(
                            f"csm.power.{session.ar_instance_id}", source="ground",
                            severity="alarm",
                            payload={"ar_instance_id": session.ar_instance_id,
                                     "power_dbm": carrier.power_dbm,
                                     "limit_dbm": session.limit_dbm,
                                     "frequency_hz": carrier.frequency_hz}))
                else:
                    session.violation_latched = False
            if not matched and any(s.in_band(carrier) for s in expired):
                matched = True
            if not matched and self.default_mode:
                bucket = int(round(carrier.frequency_hz / 1e6))
                if not self._intruder_latched.get(bucket):
                    self._intruder_latched[bucket] = True
                    events.append(self.bus.make(
                        f"csm.intruder.{bucket}", source="ground", severity="alarm",
                        payload={"frequency_hz": carrier.frequency_hz,
                                 "bandwidth_hz": carrier.bandwidth_hz,
                                 "power_dbm": carrier.power_dbm}))
        # re-arm intruder buckets with no carrier this sweep
        seen = {int(round(c.frequency_hz / 1e6)) for c in m.carriers
                if not self._registered(c)}
        for bucket in list(self._intruder_latched):
            if bucket not in seen:
                self._intruder_latched[bucket] = False
        return events

    def status(self) -> dict:
        return {
            "default_mode": self.default_mode,
            "sessions": {a: s.state for a, s in self.sessions.items()},
        }
