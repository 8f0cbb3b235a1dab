"""Mission planning: activity requests, constraints, conflict-free schedules.

Requests are placed at the earliest feasible start inside their window
(grid-discretized).  Conflicts resolve by: higher priority wins (the
incumbent may be bumped if strictly lower priority and not yet executing),
equal priority goes first-come-first-serve (the incumbent stays).  Every
published schedule version satisfies every registered constraint.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .errors import (AlreadyExecuting, ArgumentError, BeyondHorizon, NotOwner,
                     ImmediateConstraintViolated, NotAllowedUER,
                     TargetNotExecuting, UnauthorizedTask, ValidationError)

# ---------------------------------------------------------------------------
# catalog types


@dataclass(frozen=True)
class ActivityDef:
    activity_id: str
    procedure_id: str
    param_map: dict = field(default_factory=dict)  # proc arg -> task param or literal
    duration_s: float = 60.0


@dataclass(frozen=True)
class TaskDef:
    task_id: str
    activities: tuple = ()          # ((activity_id, offset_s), ...)
    formal_params: tuple = ()       # parameter names forwarded to activities
    owner_group: str = "operators"
    priority: int = 5
    resources: dict = field(default_factory=dict)
    start_gop: Optional[str] = None
    end_gop: Optional[str] = None
    gop_args: dict = field(default_factory=dict)   # frequency, bandwidth, footprint_loss...
    allowed_uers: tuple = ()        # uer task ids permitted against a running AR
    failure_policy: str = "continue"  # continue | abort-remaining
    experiment_id: Optional[str] = None


def task_span_s(task: TaskDef, catalog: dict) -> float:
    span = 0.0
    for activity_id, offset_s in task.activities:
        act = catalog[activity_id]
        span = max(span, offset_s + act.duration_s)
    return span


# ---------------------------------------------------------------------------
# constraints


@dataclass(frozen=True)
class MutualExclusion:
    tasks: frozenset

    def evaluate(self, instances) -> Optional[str]:
        hits = [i for i in instances if i.task_id in self.tasks]
        for a, b in itertools.combinations(hits, 2):
            if a.start_ms < b.end_ms and b.start_ms < a.end_ms:
                return (f"mutual exclusion {sorted(self.tasks)}: "
                        f"{a.ar_id} overlaps {b.ar_id}")
        return None


@dataclass(frozen=True)
class ResourceCapacity:
    resource: str
    capacity: float

    def evaluate(self, instances) -> Optional[str]:
        users = [i for i in instances if i.resources.get(self.resource)]
        edges = sorted({i.start_ms for i in users} | {i.end_ms for i in users})
        for t in edges[:-1]:
            load = sum(i.resources[self.resource] for i in users
                       if i.start_ms <= t < i.end_ms)
            if load > self.capacity:
                return (f"resource {self.resource}: load {load} exceeds "
                        f"capacity {self.capacity} at t={t}")
        return None

    def load_at(self, instances, t_ms: int) -> float:
        return sum(i.resources.get(self.resource, 0) for i in instances
                   if i.start_ms <= t_ms < i.end_ms)


@dataclass(frozen=True)
class MaintenanceWindow:
    intervals: tuple                 # ((t0_ms, t1_ms), ...)
    blocked_tasks: frozenset = frozenset()  # empty set blocks every task

    def evaluate(self, instances) -> Optional[str]:
        for i in instances:
            if self.blocked_tasks and i.task_id not in self.blocked_tasks:
                continue
            for t0, t1 in self.intervals:
                if i.start_ms < t1 and t0 < i.end_ms:
                    return (f"maintenance window [{t0},{t1}) blocks "
                            f"{i.task_id} ({i.ar_id})")
        return None


@dataclass(frozen=True)
class Dependency:
    before_task: str
    after_task: str
    min_gap_s: float = 0.0
    max_gap_s: float = float("inf")

    def evaluate(self, instances) -> Optional[str]:
        befores = [i for i in instances if i.task_id == self.before_task]
        afters = [i for i in instances if i.task_id == self.after_task]
        for b in afters:
            ok = any(b.start_ms - a.end_ms >= self.min_gap_s * 1000 and
                     b.start_ms - a.end_ms <= self.max_gap_s * 1000
                     for a in befores)
            if not ok:
                return (f"dependency {self.before_task}->{self.after_task}: "
                        f"{b.ar_id} has no predecessor within gap bounds")
        return None


IMMEDIATE_CHECKABLE = (MutualExclusion, ResourceCapacity)


# ---------------------------------------------------------------------------
# requests and schedule


@dataclass
class ActivityRequest:
    ar_id: str
    task_id: str
    requester: str                  # user group
    window_start_ms: int
    window_end_ms: int
    args: dict = field(default_factory=dict)
    submitted_ms: int = 0
    priority: int = 5
    state: str = "submitted"        # submitted|scheduled|rejected|executing|completed|cancelled|bumped
    decision: Optional[dict] = None


@dataclass(frozen=True)
class UserExecutionRequest:
    uer_id: str
    target_ar_id: str
    uer_task_id: str
    requester: str
    args: dict = field(default_factory=dict)
    submitted_ms: int = 0


@dataclass(frozen=True)
class ScheduledInstance:
    ar_id: str
    task_id: str
    start_ms: int
    end_ms: int
    priority: int
    requester: str
    args: dict = field(default_factory=dict)
    resources: dict = field(default_factory=dict)

    def overlaps(self, other) -> bool:
        return self.start_ms < other.end_ms and other.start_ms < self.end_ms


@dataclass(frozen=True)
class ScheduleVersion:
    version: int
    instances: tuple
    horizon_end_ms: int


# ---------------------------------------------------------------------------


class Planner:
    def __init__(self, loop, tasks: dict, activities: dict,
                 constraints: list, horizon_ms: int = 7 * 86400_000,
                 slot_ms: int = 1000, session_interval_ms: int = 30_000,
                 authorized: Optional[Callable[[str, TaskDef], bool]] = None,
                 immediate_sessions: bool = True):
        self.loop = loop
        self.tasks = dict(tasks)
        self.activities = dict(activities)
        self.constraints = list(constraints)
        self.horizon_ms = horizon_ms
        self.slot_ms = slot_ms
        self.authorized = authorized or (lambda requester, task: True)
        self.immediate_sessions = immediate_sessions
        self.ars: dict[str, ActivityRequest] = {}
        self._queue: list[str] = []
        self._executing: set[str] = set()
        self.schedule = ScheduleVersion(0, (), self._horizon_end())
        self.notices: list[dict] = []
        self._publish_hooks: list[Callable[[ScheduleVersion], None]] = []
        self.uer_dispatch: Optional[Callable] = None   # set by schedule executor
        self.direct_execute: Optional[Callable] = None  # set by system wiring
        self._ar_seq = itertools.count(1)
        if session_interval_ms:
            loop.every(session_interval_ms, self.run_planning_session)

    # -- helpers ----------------------------------------------------------

    def _horizon_end(self) -> int:
        return self.loop.clock.now_ms() + self.horizon_ms

    def on_publish(self, fn: Callable[[ScheduleVersion], None]) -> None:
        self._publish_hooks.append(fn)

    def _notify(self, requester: str, kind: str, detail: dict) -> None:
        self.notices.append({"ts": self.loop.clock.now_ms(), "requester": requester,
                             "kind": kind, **detail})

    def task_span_ms(self, task: TaskDef) -> int:
        return int(task_span_s(task, self.activities) * 1000)

    def _instance(self, ar: ActivityRequest, start_ms: int) -> ScheduledInstance:
        task = self.tasks[ar.task_id]
        return ScheduledInstance(
            ar_id=ar.ar_id, task_id=ar.task_id, start_ms=start_ms,
            end_ms=start_ms + self.task_span_ms(task),
            priority=ar.priority, requester=ar.requester,
            args=dict(ar.args), resources=dict(task.resources))

    def _violations(self, instances) -> list[str]:
        out = []
        for c in self.constraints:
            msg = c.evaluate(instances)
            if msg:
                out.append(msg)
        return out

    def _earliest_start(self, ar: ActivityRequest, incumbents: list) -> Optional[int]:
        task = self.tasks[ar.task_id]
        span = self.task_span_ms(task)
        start = ar.window_start_ms
        earliest_now = self.loop.clock.now_ms()
        while start + span <= ar.window_end_ms:
            if start >= earliest_now:
                candidate = self._instance(ar, start)
                if not self._violations(incumbents + [candidate]):
                    return start
            start += self.slot_ms
        return None

    # -- submission -------------------------------------------------------

    def new_ar_id(self) -> str:
        return f"ar-{next(self._ar_seq)}"

    def submit_ar(self, task_id: str, requester: str, window_start_ms: int,
                  window_end_ms: int, args: Optional[dict] = None,
                  ar_id: Optional[str] = None,
                  priority: Optional[int] = None) -> dict:
        task = self.tasks.get(task_id)
        if task is None:
            raise UnauthorizedTask(f"unknown task {task_id}")
        if not self.authorized(requester, task):
            raise UnauthorizedTask(f"{requester} may not request {task_id}")
        if window_end_ms > self._horizon_end():
            raise BeyondHorizon(
                f"window end {window_end_ms} beyond horizon {self._horizon_end()}")
        if window_end_ms <= window_start_ms:
            raise ValidationError("window end must be after start")
        span = self.task_span_ms(task)
        if window_end_ms - window_start_ms < span:
            raise ValidationError(
                f"window shorter than task span ({span} ms)")
        args = dict(args or {})
        unknown = set(args) - set(task.formal_params)
        if unknown:
            raise ArgumentError(f"unknown task arguments {sorted(unknown)}")
        ar = ActivityRequest(
            ar_id=ar_id or self.new_ar_id(), task_id=task_id, requester=requester,
            window_start_ms=window_start_ms, window_end_ms=window_end_ms,
            args=args, submitted_ms=self.loop.clock.now_ms(),
            priority=task.priority if priority is None else priority)
        self.ars[ar.ar_id] = ar
        self._queue.append(ar.ar_id)
        if self.immediate_sessions:
            self.run_planning_session()
        else:
            ar.decision = {"ar_id": ar.ar_id, "state": "queued-for-session"}
        return ar.decision or {"ar_id": ar.ar_id, "state": "queued-for-session"}

    # -- the planning session ---------------------------------------------

    def _scheduled_instances(self) -> list:
        return [i for i in self.schedule.instances
                if self.ars[i.ar_id].state in ("scheduled", "executing")]

    def run_planning_session(self) -> ScheduleVersion:
        instances = {i.ar_id: i for i in self._scheduled_instances()}
        queue, self._queue = self._queue, []
        for ar_id in sorted(queue, key=lambda a: (self.ars[a].submitted_ms, a)):
            ar = self.ars[ar_id]
            if ar.state != "submitted":
                continue
            self._place(ar, instances)
        self._publish(instances)
        return self.schedule

    def _place(self, ar: ActivityRequest, instances: dict) -> None:
        incumbents = list(instances.values())
        start = self._earliest_start(ar, incumbents)
        if start is None:
            start = self._place_with_bumping(ar, instances)
        if start is None:
            span = self.task_span_ms(self.tasks[ar.task_id])
            probe = self._instance(ar, ar.window_start_ms) if \
                ar.window_start_ms + span <= ar.window_end_ms else None
            conflicts = (self._violations(incumbents + [probe])
                         if probe else ["window shorter than task span"])
            ar.state = "rejected"
            ar.decision = {"ar_id": ar.ar_id, "state": "rejected",
                           "conflicts": conflicts}
        else:
            ar.state = "scheduled"
            ar.decision = {"ar_id": ar.ar_id, "state": "scheduled", "start_ms": start}
            instances[ar.ar_id] = self._instance(ar, start)
        self._notify(ar.requester, "ar-decision", ar.decision)

    def _place_with_bumping(self, ar: ActivityRequest,
                            instances: dict) -> Optional[int]:
        """Try displacing strictly-lower-priority, not-yet-executing incumbents."""
        keep_always = [i for i in instances.values()
                       if i.priority >= ar.priority or i.ar_id in self._executing]
        lowers = [i for i in instances.values() if i not in keep_always]
        if not lowers:
            return None
        start = self._earliest_start(ar, keep_always)
        if start is None:
            return None
        candidate = self._instance(ar, start)
        kept = list(keep_always)
        bumped = []
        # retain as many lower-priority incumbents as still fit, most
        # deserving (higher priority, earlier submission) first
        for low in sorted(lowers, key=lambda i: (-i.priority,
                                                 self.ars[i.ar_id].submitted_ms,
                                                 i.ar_id)):
            if not self._violations(kept + [candidate, low]):
                kept.append(low)
            else:
                bumped.append(low)
        for low in bumped:
            victim = self.ars[low.ar_id]
            victim.state = "bumped"
            victim.decision = {"ar_id": victim.ar_id, "state": "bumped",
                               "bumped_by": ar.ar_id}
            del instances[low.ar_id]
            self._notify(victim.requester, "ar-bumped", victim.decision)
        return start

    def _publish(self, instances: dict) -> None:
        ordered = tuple(sorted(instances.values(),
                               key=lambda i: (i.start_ms, i.ar_id)))
        leftover = self._violations(list(ordered))
        if leftover:  # must never happen: published schedules are conflict-free
            raise ValidationError(f"internal planner fault: {leftover}")
        self.schedule = ScheduleVersion(
            version=self.schedule.version + 1, instances=ordered,
            horizon_end_ms=self._horizon_end())
        for fn in self._publish_hooks:
            fn(self.schedule)

    # -- execution feedback (from the schedule executor) --------------------

    def mark_executing(self, ar_id: str) -> None:
        self._executing.add(ar_id)
        self.ars[ar_id].state = "executing"

    def mark_finished(self, ar_id: str, outcome: str = "completed") -> None:
        self._executing.discard(ar_id)
        self.ars[ar_id].state = "completed"
        self._notify(self.ars[ar_id].requester, "ar-finished",
                     {"ar_id": ar_id, "outcome": outcome})

    # -- UERs ---------------------------------------------------------------

    def submit_uer(self, uer: UserExecutionRequest) -> dict:
        target = self.ars.get(uer.target_ar_id)
        if target is None or target.state != "executing":
            raise TargetNotExecuting(uer.target_ar_id)
        if target.requester != uer.requester:
            raise NotOwner(f"{uer.requester} does not own {uer.target_ar_id}")
        task = self.tasks[target.task_id]
        if uer.uer_task_id not in task.allowed_uers:
            raise NotAllowedUER(uer.uer_task_id)
        uer_task = self.tasks.get(uer.uer_task_id)
        if uer_task is None:
            raise NotAllowedUER(f"unknown UER task {uer.uer_task_id}")
        now = self.loop.clock.now_ms()
        span = max(self.task_span_ms(uer_task), self.slot_ms)
        probe = ScheduledInstance(
            ar_id=f"{uer.uer_id}", task_id=uer.uer_task_id, start_ms=now,
            end_ms=now + span, priority=uer_task.priority,
            requester=uer.requester, args=dict(uer.args),
            resources=dict(uer_task.resources))
        current = [i for i in self.schedule.instances if i.ar_id in self._executing]
        for c in self.constraints:
            if not isinstance(c, IMMEDIATE_CHECKABLE):
                continue
            msg = c.evaluate(current + [probe])
            if msg:
                raise ImmediateConstraintViolated(msg)
        if self.uer_dispatch is None:
            raise ValidationError("no schedule executor attached")
        return self.uer_dispatch(uer, target, uer_task)

    # -- automated response requests ----------------------------------------

    def submit_response_request(self, procedure_id: str, args: dict,
                                rule_id: str) -> dict:
        """Constraint-checked execution request from a response rule."""
        task = self.tasks.get(f"rsp.{procedure_id}")
        if task is not None:
            now = self.loop.clock.now_ms()
            span = max(self.task_span_ms(task), self.slot_ms)
            probe = ScheduledInstance(
                ar_id=f"rsp-{rule_id}", task_id=task.task_id, start_ms=now,
                end_ms=now + span, priority=task.priority, requester="response-rule",
                resources=dict(task.resources))
            current = [i for i in self.schedule.instances
                       if i.ar_id in self._executing]
            for c in self.constraints:
                if isinstance(c, IMMEDIATE_CHECKABLE):
                    msg = c.evaluate(current + [probe])
                    if msg:
                        return {"accepted": False, "reason": msg}
        if self.direct_execute is None:
            return {"accepted": False, "reason": "no procedure engine attached"}
        run_id = self.direct_execute(procedure_id, args, "response-rule")
        return {"accepted": True, "run_id": run_id}

    # -- views / cancellation -------------------------------------------------

    def cancel_ar(self, ar_id: str, requester: str, operator: bool = False) -> str:
        ar = self.ars.get(ar_id)
        if ar is None:
            raise NotOwner(f"unknown AR {ar_id}")
        if not operator and ar.requester != requester:
            raise NotOwner(f"{requester} does not own {ar_id}")
        if ar.state == "executing":
            raise AlreadyExecuting(ar_id)
        if ar.state in ("submitted", "scheduled"):
            ar.state = "cancelled"
            if ar_id in self._queue:
                self._queue.remove(ar_id)
            self.schedule = replace(
                self.schedule,
                instances=tuple(i for i in self.schedule.instances
                                if i.ar_id != ar_id))
        return ar.state

    def view_schedule(self, group: str, visibility: str = "anonymized") -> list[dict]:
        """visibility: full (operators) | anonymized | own-only."""
        out = []
        for inst in self.schedule.instances:
            own = inst.requester == group
            if visibility == "full" or own:
                out.append({"ar_id": inst.ar_id, "task_id": inst.task_id,
                            "start_ms": inst.start_ms, "end_ms": inst.end_ms,
                            "requester": inst.requester, "args": dict(inst.args),
                            "own": own})
            elif visibility == "anonymized":
                out.append({"start_ms": inst.start_ms, "end_ms": inst.end_ms,
                            "label": "occupied", "own": False})
        return out
