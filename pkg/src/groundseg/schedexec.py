"""Schedule execution: walk published schedule versions in (simulated)
real time and hand each task's activities to the procedure engine.

Per scheduled instance: the start GOP runs first, activities dispatch at
their offsets (overlaps allowed, the engine runs them concurrently), and
the end GOP always runs -- on success, failure and abort alike, since data
separation and CSM shutdown depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import TargetNotExecuting
from .planning import Planner, ScheduledInstance, ScheduleVersion, TaskDef


@dataclass
class ActivityOutcome:
    activity_id: str
    run_id: Optional[str]
    planned_start_ms: int
    actual_start_ms: Optional[int] = None
    outcome: str = "pending"   # pending|skipped|succeeded|failed|aborted


@dataclass
class ExecutionRecord:
    ar_id: str
    task_id: str
    activities: list = field(default_factory=list)
    uer_activities: list = field(default_factory=list)
    outcome: str = "pending"   # completed | partially-failed | failed
    start_gop_run: Optional[str] = None
    end_gop_run: Optional[str] = None


class _Instance:
    def __init__(self, executor: "ScheduleExecutor", inst: ScheduledInstance,
                 task: TaskDef, version: int):
        self.executor = executor
        self.inst = inst
        self.task = task
        self.version = version
        self.record = ExecutionRecord(ar_id=inst.ar_id, task_id=inst.task_id)
        self.timers: list = []
        self.open_runs: set[str] = set()
        self.started = False
        self.finalizing = False
        self.done = False
        self.aborted = False


class ScheduleExecutor:
    def __init__(self, loop, engine, planner: Planner,
                 dispatch_tolerance_ms: int = 500):
        self.loop = loop
        self.engine = engine
        self.planner = planner
        self.dispatch_tolerance_ms = dispatch_tolerance_ms
        self.records: dict[str, ExecutionRecord] = {}
        self._instances: dict[str, _Instance] = {}
        planner.on_publish(self.on_schedule)
        planner.uer_dispatch = self.apply_uer_dispatch

    # -- schedule intake ----------------------------------------------------

    def on_schedule(self, schedule: ScheduleVersion) -> None:
        """A new version: not-yet-started instances follow it; in-flight finish."""
        live = {i.ar_id for i in schedule.instances}
        for ar_id, holder in list(self._instances.items()):
            if not holder.started and ar_id not in live:
                for t in holder.timers:
                    t.cancel()
                del self._instances[ar_id]
        for inst in schedule.instances:
            holder = self._instances.get(inst.ar_id)
            if holder is not None and holder.started:
                continue  # in-flight instances finish under their old version
            if holder is not None:
                for t in holder.timers:
                    t.cancel()
            holder = _Instance(self, inst, self.planner.tasks[inst.task_id],
                               schedule.version)
            self._instances[inst.ar_id] = holder
            holder.timers.append(
                self.loop.call_at(inst.start_ms, lambda h=holder: self._start(h)))

    # -- instance lifecycle ---------------------------------------------------

    def _activity_args(self, holder: _Instance, activity) -> dict:
        args = {}
        for proc_arg, source in activity.param_map.items():
            if isinstance(source, str) and source in holder.inst.args:
                args[proc_arg] = holder.inst.args[source]
            else:
                args[proc_arg] = source
        return args

    def _gop_args(self, holder: _Instance, gop_id: str) -> dict:
        proc = self.engine.procedures.get(gop_id)
        formal = {n for n, _, _ in proc.formal_params} if proc else set()
        supplied = {"ar_instance_id": holder.inst.ar_id, **holder.task.gop_args,
                    **holder.inst.args}
        return {k: v for k, v in supplied.items() if k in formal}

    def _start(self, holder: _Instance) -> None:
        if holder.started or holder.done:
            return
        holder.started = True
        self.records[holder.inst.ar_id] = holder.record
        self.planner.mark_executing(holder.inst.ar_id)
        if holder.task.start_gop:
            holder.record.start_gop_run = self.engine.execute(
                holder.task.start_gop, self._gop_args(holder, holder.task.start_gop),
                originator="schedule")
        for activity_id, offset_s in holder.task.activities:
            planned = holder.inst.start_ms + int(offset_s * 1000)
            outcome = ActivityOutcome(activity_id=activity_id, run_id=None,
                                      planned_start_ms=planned)
            holder.record.activities.append(outcome)
            holder.timers.append(self.loop.call_at(
                planned, lambda h=holder, o=outcome: self._dispatch_activity(h, o)))
        holder.timers.append(self.loop.call_at(
            holder.inst.end_ms, lambda h=holder: self._finalize(h)))

    def _dispatch_activity(self, holder: _Instance, outcome: ActivityOutcome) -> None:
        if holder.finalizing or holder.aborted:
            outcome.outcome = "skipped"
            return
        activity = self.planner.activities[outcome.activity_id]
        now = self.loop.clock.now_ms()
        outcome.actual_start_ms = now
        run_id = self.engine.execute(
            activity.procedure_id, self._activity_args(holder, activity),
            originator="schedule",
            on_complete=lambda run, h=holder, o=outcome: self._run_done(h, o, run))
        outcome.run_id = run_id
        run = self.engine.runs[run_id]
        if run.is_terminal():
            # synchronous completion: callback already fired
            return
        holder.open_runs.add(run_id)

    def _run_done(self, holder: _Instance, outcome: ActivityOutcome, run) -> None:
        outcome.outcome = run.state
        holder.open_runs.discard(run.run_id)
        if run.state in ("failed", "aborted") and \
                holder.task.failure_policy == "abort-remaining" and not holder.finalizing:
            self._finalize(holder, early=True)
        elif holder.finalizing:
            self._maybe_complete(holder)

    def _finalize(self, holder: _Instance, early: bool = False) -> None:
        """Idempotent end-of-task barrier; the end GOP always runs here."""
        if holder.finalizing or holder.done:
            return
        holder.finalizing = True
        if early:
            for t in holder.timers:
                t.cancel()
            for outcome in holder.record.activities:
                if outcome.outcome == "pending" and outcome.run_id is None:
                    outcome.outcome = "skipped"
        if holder.task.end_gop:
            holder.record.end_gop_run = self.engine.execute(
                holder.task.end_gop, self._gop_args(holder, holder.task.end_gop),
                originator="schedule")
        self._maybe_complete(holder)

    def _maybe_complete(self, holder: _Instance) -> None:
        if holder.done or holder.open_runs:
            return
        holder.done = True
        results = [o.outcome for o in holder.record.activities]
        ran = [r for r in results if r not in ("skipped",)]
        if holder.aborted:
            holder.record.outcome = "failed"
        elif all(r == "succeeded" for r in results):
            holder.record.outcome = "completed"
        elif ran and all(r != "succeeded" for r in ran):
            holder.record.outcome = "failed"
        else:
            holder.record.outcome = "partially-failed"
        if holder.record.outcome != "completed":
            self.engine.bus.make(
                "task.degraded", source="engine", severity="alarm",
                payload={"ar_id": holder.inst.ar_id, "task": holder.inst.task_id,
                         "outcome": holder.record.outcome})
        self.planner.mark_finished(holder.inst.ar_id, holder.record.outcome)

    def abort_instance(self, ar_id: str) -> ExecutionRecord:
        """Operator abort; in-flight runs are aborted, the end GOP still runs."""
        holder = self._instances.get(ar_id)
        if holder is None or not holder.started or holder.done:
            raise TargetNotExecuting(ar_id)
        holder.aborted = True
        for run_id in list(holder.open_runs):
            self.engine.abort(run_id)
        self._finalize(holder, early=True)
        return holder.record

    # -- UERs ---------------------------------------------------------------

    def apply_uer_dispatch(self, uer, target_ar, uer_task: TaskDef) -> dict:
        holder = self._instances.get(uer.target_ar_id)
        if holder is None or not holder.started or holder.done:
            raise TargetNotExecuting(uer.target_ar_id)
        run_ids = []
        for activity_id, offset_s in uer_task.activities:
            activity = self.planner.activities[activity_id]
            args = {}
            for proc_arg, source in activity.param_map.items():
                args[proc_arg] = uer.args.get(source, source) \
                    if isinstance(source, str) else source
            outcome = ActivityOutcome(
                activity_id=activity_id, run_id=None,
                planned_start_ms=self.loop.clock.now_ms() + int(offset_s * 1000))
            holder.record.uer_activities.append((uer.uer_id, outcome))
            if offset_s <= 0:
                self._dispatch_uer_activity(holder, activity, args, outcome)
            else:
                holder.timers.append(self.loop.call_later(
                    int(offset_s * 1000),
                    lambda h=holder, a=activity, ag=args, o=outcome:
                        self._dispatch_uer_activity(h, a, ag, o)))
            run_ids.append(outcome)
        return {"accepted": True, "uer_id": uer.uer_id,
                "runs": [o.run_id for o in run_ids]}

    def _dispatch_uer_activity(self, holder, activity, args, outcome) -> None:
        if holder.finalizing or holder.done:
            outcome.outcome = "skipped"
            return
        outcome.actual_start_ms = self.loop.clock.now_ms()
        run_id = self.engine.execute(
            activity.procedure_id, args, originator="UER",
            on_complete=lambda run, h=holder, o=outcome: self._run_done(h, o, run))
        outcome.run_id = run_id
        if not self.engine.runs[run_id].is_terminal():
            holder.open_runs.add(run_id)

    def status(self) -> dict:
        return {
            "active": sorted(a for a, h in self._instances.items()
                             if h.started and not h.done),
            "pending": sorted(a for a, h in self._instances.items() if not h.started),
            "records": len(self.records),
        }
