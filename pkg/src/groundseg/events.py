"""Event generation and the three lights-out responses.

Telemetry processing pipelines (window statistics, rule expressions, trend
slopes) and MIB-driven limit monitoring turn samples into EventMessages.
A ResponseDispatcher maps events to HMI alerts, redundant SMS-gateway
notifications and procedure executions routed through planning.
"""

from __future__ import annotations

import fnmatch
import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .clock import OfficeHours
from .errors import ValidationError
from .exprs import ExprError, eval_expr
from .mib import Classification, LimitDef
from .telemetry import Sample, TelemetryStore, under

SEVERITIES = ("info", "warning", "alarm")


@dataclass(frozen=True)
class EventMessage:
    event_id: str                 # type id, e.g. "limit.sat.mpm1.temp"
    source: str                   # space | ground | pipeline | engine
    severity: str                 # info | warning | alarm
    classification: Classification
    timestamp: int
    payload: dict = field(default_factory=dict)
    uid: int = 0
    caused_by_rule: Optional[str] = None


class EventBus:
    """Ordered fan-out of events; delivery never re-enters itself."""

    def __init__(self, clock):
        self.clock = clock
        self.history: list[EventMessage] = []
        self._subscribers: list[Callable[[EventMessage], None]] = []
        self._uid = itertools.count(1)
        self._pending: list[EventMessage] = []
        self._dispatching = False

    def subscribe(self, fn: Callable[[EventMessage], None]) -> None:
        self._subscribers.append(fn)

    def emit(self, event: EventMessage) -> EventMessage:
        event = replace(event, uid=next(self._uid))
        self._pending.append(event)
        if not self._dispatching:
            self._dispatching = True
            try:
                while self._pending:
                    evt = self._pending.pop(0)
                    self.history.append(evt)
                    for fn in list(self._subscribers):
                        fn(evt)
            finally:
                self._dispatching = False
        return event

    def make(self, event_id: str, source: str, severity: str,
             classification: Classification = Classification.OPEN,
             payload: Optional[dict] = None,
             caused_by_rule: Optional[str] = None) -> EventMessage:
        return self.emit(EventMessage(
            event_id=event_id, source=source, severity=severity,
            classification=classification, timestamp=self.clock.now_ms(),
            payload=payload or {}, caused_by_rule=caused_by_rule))

    def open_history(self) -> list[EventMessage]:
        return [e for e in self.history if e.classification is Classification.OPEN]


_LEVEL_ORDER = {"nominal": 0, "warning": 1, "alarm": 2}


class LimitMonitor:
    """MIB-driven out-of-limit checking with edge triggering and hysteresis.

    A warning/alarm fires once on entering the band; it re-arms only after
    the value returns inside the soft range (return-to-nominal also emits
    an info event).
    """

    def __init__(self, bus: EventBus, limits: list[LimitDef], mib):
        self.bus = bus
        self.mib = mib
        self._limits = {l.param_id: l for l in limits}
        self._state: dict[str, str] = {}

    def set_limits(self, limits: list[LimitDef]) -> None:
        self._limits = {l.param_id: l for l in limits}

    @staticmethod
    def classify(limit: LimitDef, value: float) -> str:
        if value < limit.hard_low or value > limit.hard_high:
            return "alarm"
        if value < limit.soft_low or value > limit.soft_high:
            return "warning"
        return "nominal"

    def on_sample(self, sample: Sample) -> Optional[EventMessage]:
        limit = self._limits.get(sample.param_id)
        if limit is None or not limit.enabled or not under(sample.path, "data"):
            return None
        if sample.validity != "valid":
            return None
        level = self.classify(limit, sample.engineering)
        armed = self._state.get(sample.param_id, "nominal")
        event = None
        if _LEVEL_ORDER[level] > _LEVEL_ORDER[armed]:
            pdef = self.mib.parameters.get(sample.param_id)
            event = self.bus.make(
                f"limit.{sample.param_id}",
                source=pdef.source if pdef else "space",
                severity=level,
                classification=sample.classification,
                payload={"param_id": sample.param_id, "value": sample.engineering,
                         "level": level, "sample_ts": sample.timestamp})
            self._state[sample.param_id] = level
        elif level == "nominal" and armed != "nominal":
            pdef = self.mib.parameters.get(sample.param_id)
            event = self.bus.make(
                f"limit.{sample.param_id}.nominal",
                source=pdef.source if pdef else "space",
                severity="info",
                classification=sample.classification,
                payload={"param_id": sample.param_id, "value": sample.engineering,
                         "sample_ts": sample.timestamp})
            self._state[sample.param_id] = "nominal"
        return event


def _slope(points: list[tuple]) -> float:
    """Least-squares slope in units per second."""
    n = len(points)
    if n < 2:
        return 0.0
    xs = [p[0] / 1000.0 for p in points]
    ys = [p[1] for p in points]
    mx = sum(xs) / n
    my = sum(ys) / n
    den = sum((x - mx) ** 2 for x in xs)
    if den == 0:
        return 0.0
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / den


_STAT_FNS = {
    "min": min,
    "max": max,
    "mean": lambda vs: sum(vs) / len(vs),
    "stddev": lambda vs: (sum((v - sum(vs) / len(vs)) ** 2 for v in vs) / len(vs)) ** 0.5,
}


@dataclass
class Stage:
    name: str
    kind: str              # window_stat | rule | trend
    fn: str = "mean"       # for window_stat
    source: str = ""       # input alias for window_stat / trend
    expr: str = ""         # for rule
    window_s: float = 10.0


class Pipeline:
    """Linear chain of processing stages over one or more input paths."""

    def __init__(self, pipeline_id: str, inputs: dict, stages: list[Stage],
                 output: dict, bus: EventBus, store: TelemetryStore):
        self.pipeline_id = pipeline_id
        self.inputs = dict(inputs)          # alias -> tree path
        self.stages = list(stages)
        self.output = output                # {"derived": path} | {"event": {...}}
        self.bus = bus
        self.store = store
        self.faulted = False
        self._windows: dict[str, list[tuple]] = {a: [] for a in inputs}
        self._latest: dict[str, float] = {}
        self._edge = False
        self.classification = (
            Classification.RESTRICTED
            if any(under(p, "data.restricted") for p in self.inputs.values())
            else Classification.OPEN)
        self._check_no_downgrade()

    def _check_no_downgrade(self) -> None:
        if self.classification is Classification.RESTRICTED and "derived" in self.output:
            if under(self.output["derived"], "data.open"):
                raise ValidationError(
                    f"pipeline {self.pipeline_id}: restricted inputs may not "
                    f"publish under {self.output['derived']}")

    def _max_window_ms(self) -> int:
        return int(max((s.window_s for s in self.stages
                        if s.kind in ("window_stat", "trend")), default=0) * 1000)

    def on_sample(self, sample: Sample) -> None:
        hit = [a for a, p in self.inputs.items() if sample.path == p]
        if not hit or self.faulted:
            return
        for alias in hit:
            self._latest[alias] = sample.engineering
            win = self._windows[alias]
            win.append((sample.timestamp, sample.engineering))
            horizon = sample.timestamp - self._max_window_ms()
            while win and win[0][0] < horizon:
                win.pop(0)
        self._evaluate(sample.timestamp)

    def _evaluate(self, now_ms: int) -> None:
        if len(self._latest) < len(self.inputs):
            return  # not all inputs seen yet
        try:
            env = dict(self._latest)
            value = None
            for stage in self.stages:
                if stage.kind == "window_stat":
                    pts = [v for t, v in self._windows[stage.source]
                           if t >= now_ms - stage.window_s * 1000]
                    if not pts:
                        return
                    value = _STAT_FNS[stage.fn](pts)
                elif stage.kind == "trend":
                    pts = [(t, v) for t, v in self._windows[stage.source]
                           if t >= now_ms - stage.window_s * 1000]
                    value = _slope(pts)
                elif stage.kind == "rule":
                    value = eval_expr(stage.expr, env)
                else:
                    raise ValidationError(f"unknown stage kind {stage.kind}")
                env[stage.name] = value
        except (ExprError, KeyError, ZeroDivisionError) as exc:
            self.faulted = True
            self.bus.make(f"pipeline.{self.pipeline_id}.fault", source="ground",
                          severity="alarm", payload={"error": str(exc)})
            return
        self._publish(value, now_ms)

    def _publish(self, value, now_ms: int) -> None:
        if "derived" in self.output:
            self.store.publish_derived(self.output["derived"], float(value),
                                       now_ms, self.classification)
            return
        spec = self.output["event"]
        active = bool(value)
        if active and not self._edge:
            self.bus.make(spec.get("id", f"pipeline.{self.pipeline_id}"),
                          source="pipeline", severity=spec.get("severity", "warning"),
                          classification=self.classification,
                          payload={"pipeline": self.pipeline_id, "value": value,
                                   "text": spec.get("template", "")})
        self._edge = active


@dataclass
class SmsGateway:
    """Simulated SMS gateway: an in-memory sent log behind a health flag."""

    gateway_id: str
    site: str            # primary-cc | backup-cc
    carrier: str
    health: str = "up"
    sent: list = field(default_factory=list)

    def send(self, timestamp: int, recipient: str, severity: str, text: str) -> bool:
        if self.health != "up":
            return False
        self.sent.append((timestamp, recipient, severity, text))
        return True


@dataclass
class DeliveryReport:
    group: str
    attempts: list          # (recipient, gateway_id, carrier, ok)
    reached: set
    missed: set

    @property
    def success(self) -> bool:
        return not self.missed


class Notifier:
    """Redundant notification fan-out over four distinct-carrier gateways."""

    def __init__(self, clock, gateways: list[SmsGateway], groups: dict,
                 bus: Optional[EventBus] = None,
                 on_all_down: Optional[Callable[[], None]] = None):
        self.clock = clock
        self.gateways = list(gateways)
        self.groups = {g: list(rs) for g, rs in groups.items()}
        self.bus = bus
        self.on_all_down = on_all_down
        carriers = [g.carrier for g in self.gateways]
        if len(self.gateways) >= 4 and len(set(carriers)) != len(carriers):
            raise ValidationError("gateways must use distinct carriers")

    def _pick_gateways(self) -> list[SmsGateway]:
        """At least two healthy gateways on distinct carriers, one per site first."""
        healthy = [g for g in self.gateways if g.health == "up"]
        picked: list[SmsGateway] = []
        for site in ("primary-cc", "backup-cc"):
            for g in healthy:
                if g.site == site and all(p.carrier != g.carrier for p in picked):
                    picked.append(g)
                    break
        for g in healthy:
            if len(picked) >= 2:
                break
            if g not in picked and all(p.carrier != g.carrier for p in picked):
                picked.append(g)
        return picked

    def notify(self, group: str, message: str, severity: str = "alarm") -> DeliveryReport:
        recipients = self.groups.get(group, [])
        picked = self._pick_gateways()
        attempts = []
        reached = set()
        now = self.clock.now_ms()
        for recipient in recipients:
            for gw in picked:
                ok = gw.send(now, recipient, severity, message)
                attempts.append((recipient, gw.gateway_id, gw.carrier, ok))
                if ok:
                    reached.add(recipient)
        report = DeliveryReport(group=group, attempts=attempts, reached=reached,
                                missed=set(recipients) - reached)
        if not picked:
            if self.on_all_down:
                self.on_all_down()
            if self.bus:
                self.bus.make("notify.all-gateways-down", source="ground",
                              severity="alarm", payload={"group": group})
        elif not report.success and self.bus:
            self.bus.make("notify.delivery-failed", source="ground", severity="alarm",
                          payload={"group": group, "missed": sorted(report.missed)})
        return report


@dataclass
class ResponseRule:
    rule_id: str
    responses: list                       # [("hmi",), ("notify", group), ("execute", proc, args)]
    match_severity: tuple = ("alarm",)
    match_source: Optional[str] = None
    match_id: str = "*"                   # fnmatch pattern over event_id
    enabled: bool = True
    cooldown_ms: int = 60_000

    def matches(self, event: EventMessage) -> bool:
        if not self.enabled:
            return False
        if self.match_severity and event.severity not in self.match_severity:
            return False
        if self.match_source and event.source != self.match_source:
            return False
        return fnmatch.fnmatch(event.event_id, self.match_id)


class ResponseDispatcher:
    """Routes events to configured responses with loop-guarded cool-downs."""

    def __init__(self, clock, notifier: Notifier, bus: EventBus,
                 plan_execute: Callable, office_hours: Optional[OfficeHours] = None,
                 notify_when_staffed: bool = False):
        self.clock = clock
        self.notifier = notifier
        self.bus = bus
        self.plan_execute = plan_execute   # (procedure_id, args, rule_id) -> decision
        self.office_hours = office_hours or OfficeHours()
        self.notify_when_staffed = notify_when_staffed
        self.hmi_alerts: list[tuple] = []
        self._rules: tuple = ()
        self._last_fired: dict[str, int] = {}
        self.outcomes: list[dict] = []

    @property
    def rules(self) -> tuple:
        return self._rules

    def set_rules(self, rules: list[ResponseRule]) -> None:
        self._rules = tuple(rules)   # atomic swap, editable at runtime

    def add_rule(self, rule: ResponseRule) -> None:
        self.set_rules([r for r in self._rules if r.rule_id != rule.rule_id] + [rule])

    def remove_rule(self, rule_id: str) -> None:
        self.set_rules([r for r in self._rules if r.rule_id != rule_id])

    def set_enabled(self, rule_id: str, enabled: bool) -> bool:
        hit = None
        for r in self._rules:
            if r.rule_id == rule_id:
                hit = replace(r, enabled=enabled)
        if hit is None:
            return False
        self.add_rule(hit)
        return True

    def dispatch(self, event: EventMessage) -> list[dict]:
        outcomes = []
        now = self.clock.now_ms()
        for rule in self._rules:
            if event.caused_by_rule == rule.rule_id:
                continue  # loop guard: never react to our own fallout
            if not rule.matches(event):
                continue
            last = self._last_fired.get(rule.rule_id)
            if last is not None and now - last < rule.cooldown_ms:
                continue
            self._last_fired[rule.rule_id] = now
            for response in rule.responses:
                outcomes.append(self._fire(rule, response, event))
        self.outcomes.extend(outcomes)
        return outcomes

    def _fire(self, rule: ResponseRule, response: tuple, event: EventMessage) -> dict:
        kind = response[0]
        outcome = {"rule": rule.rule_id, "kind": kind, "event": event.event_id}
        try:
            if kind == "hmi":
                self.hmi_alerts.append((self.clock.now_ms(), event))
                outcome["ok"] = True
            elif kind == "notify":
                staffed = self.office_hours.is_staffed(self.clock.now_ms())
                if staffed and not self.notify_when_staffed:
                    outcome.update(ok=True, skipped="office-hours")
                else:
                    report = self.notifier.notify(
                        response[1],
                        f"[{event.severity}] {event.event_id}: {event.payload}")
                    outcome.update(ok=report.success,
                                   reached=sorted(report.reached))
                    if not report.success:
                        outcome["error"] = "delivery incomplete"
            elif kind == "execute":
                args = dict(response[2]) if len(response) > 2 and response[2] else {}
                decision = self.plan_execute(response[1], args, rule.rule_id)
                outcome.update(ok=decision.get("accepted", False), decision=decision)
                if not decision.get("accepted", False):
                    self.bus.make("response.rejected", source="ground", severity="alarm",
                                  payload={"rule": rule.rule_id,
                                           "procedure": response[1],
                                           "reason": decision.get("reason", "")},
                                  caused_by_rule=rule.rule_id)
            else:
                outcome.update(ok=False, error=f"unknown response kind {kind}")
        except Exception as exc:  # a failing response must never go silent
            outcome.update(ok=False, error=str(exc))
            self.bus.make("response.failed", source="ground", severity="alarm",
                          payload={"rule": rule.rule_id, "error": str(exc)},
                          caused_by_rule=rule.rule_id)
        return outcome
