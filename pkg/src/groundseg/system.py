"""Full ground segment assembly: one call wires every service together
around the shared event loop and the simulated spacecraft."""

from __future__ import annotations

import glob
import os
from typing import Optional

from .audit import AuditLog
from .clock import EventLoop, SimClock
from .config import MissionConfig, load_mission_config
from .csm import CsmMonitor
from .errors import ValidationError
from .events import (EventBus, LimitMonitor, Notifier, Pipeline,
                     ResponseDispatcher)
from .mib import derive_limit_monitors, load_mib, override_limit
from .planning import Planner
from .procedures import ProcedureEngine, load_procedure
from .satsim import Simulator, load_scenario
from .schedexec import ScheduleExecutor
from .separation import SeparationRegistry
from .telemetry import TelemetryStore
from .usersegment import UserSegmentStore
from .wire import PacketFilter, TmSplitter, encode_frame, decode_frame


class GroundSegment:
    def __init__(self, cfg: MissionConfig,
                 start_time_ms: Optional[int] = None,
                 persist_dir: Optional[str] = None):
        self.cfg = cfg
        self.loop = EventLoop(SimClock(
            cfg.start_time_ms if start_time_ms is None else start_time_ms))
        self.clock = self.loop.clock
        self.audit = AuditLog(self.clock)
        self.mib = load_mib(cfg.mib_path)

        # telemetry trees on both sides of the classification boundary
        self.master = TelemetryStore(self.mib, self.clock)
        self.user_segment = UserSegmentStore(self.mib, self.clock)
        self.bus = EventBus(self.clock)
        self.packet_filter = PacketFilter(
            on_alarm=lambda msg: self.bus.make(
                "boundary.packet-filter", source="ground", severity="alarm",
                payload={"reason": msg}))
        self.splitter = TmSplitter(forward=self._cross_boundary)
        self.master.add_tap(self.splitter.feed)

        # automatic monitoring on the master tree
        self.limit_monitor = LimitMonitor(self.bus, derive_limit_monitors(self.mib),
                                          self.mib)
        self.master.add_tap(self.limit_monitor.on_sample)
        self.pipelines: list[Pipeline] = []
        for p in cfg.pipelines:
            pipe = Pipeline(p["id"], p["inputs"], p["stages"], p["output"],
                            self.bus, self.master)
            self.pipelines.append(pipe)
            self.master.add_tap(pipe.on_sample)

        # need-to-see separation lives on the user-segment side
        self.separation = SeparationRegistry(
            self.mib, self.user_segment, self.clock, self.audit,
            on_internal_fault=lambda msg: self.bus.make(
                "separation.fault", source="ground", severity="alarm",
                payload={"reason": msg}))
        self.user_segment.add_tap(self.separation.route)
        for proc_cfg in cfg.experiments:
            self.separation.create_processor(proc_cfg)

        # notification and responses
        self.notifier = Notifier(self.clock, cfg.gateways, cfg.notify_groups,
                                 bus=self.bus)
        self.dispatcher = ResponseDispatcher(
            self.clock, self.notifier, self.bus,
            plan_execute=self._plan_execute, office_hours=cfg.office_hours)
        self.dispatcher.set_rules(cfg.response_rules)
        self.bus.subscribe(self.dispatcher.dispatch)

        # CSM
        self.csm = CsmMonitor(self.clock, self.bus,
                              regulatory_limit_dbm=float(
                                  cfg.csm.get("regulatory_limit_dbm", 50.0)),
                              grace_ms=int(cfg.csm.get("grace_s", 600)) * 1000,
                              audit=self.audit)

        # simulated vehicle + spectrum source
        self.sim = Simulator(self.mib, load_scenario(cfg.scenario_path),
                             self.clock, ingest=self._sim_ingest,
                             spectrum_cb=self.csm.process_measurement)

        # commanding
        self.engine = ProcedureEngine(
            self.loop, self.mib, command_sink=self.command_sink, bus=self.bus,
            telemetry_read=self.master.latest_engineering)
        for path in sorted(glob.glob(os.path.join(cfg.procedures_dir, "*.yaml"))):
            report = self.engine.register(load_procedure(path))
            if not report.ok:
                raise ValidationError(
                    f"procedure {path} failed validation: {report.violations}")

        planning = cfg.planning
        self.planner = Planner(
            self.loop, cfg.tasks, cfg.activities, list(cfg.constraints),
            horizon_ms=int(planning.get("horizon_s", 7 * 86400)) * 1000,
            slot_ms=int(planning.get("slot_ms", 1000)),
            session_interval_ms=int(planning.get("session_interval_s", 30)) * 1000,
            authorized=self._authorized)
        self.planner.direct_execute = lambda proc, args, orig: \
            self.engine.execute(proc, args, originator=orig)
        self.executor = ScheduleExecutor(self.loop, self.engine, self.planner)
        self.sim.attach(self.loop)

    # -- wiring callbacks -----------------------------------------------------

    def _sim_ingest(self, param_id, ts, raw, validity):
        self.master.ingest(param_id, ts, raw, validity)

    def _cross_boundary(self, sample) -> None:
        """Splitter output: encode, network-filter, land in the user segment."""
        frame = self.packet_filter.filter(encode_frame(sample))
        if frame is not None:
            self.user_segment.receive(decode_frame(frame))

    def _plan_execute(self, procedure_id, args, rule_id) -> dict:
        return self.planner.submit_response_request(procedure_id, args, rule_id)

    def _authorized(self, requester, task) -> bool:
        if requester in ("operators", "response-rule"):
            return True
        for p in self.cfg.principals:
            if p.group == requester and task.task_id in p.tasks:
                return True
        return task.owner_group == requester

    # -- command routing --------------------------------------------------------

    def command_sink(self, command_id: str, args: dict) -> tuple:
        cmd = self.mib.commands.get(command_id)
        if cmd is None:
            return False, f"unknown command {command_id}"
        if cmd.target == "ground-equipment":
            handler = getattr(self, f"_ground_{command_id.lower()}", None)
            if handler is not None:
                return handler(args)
        return self.sim.apply_command(command_id, args)

    def _commanded_by(self) -> str:
        return getattr(self.engine, "_current_run", "manual") or "manual"

    def _ground_dp_enable(self, args) -> tuple:
        try:
            self.separation.enable(args["experiment_id"], self._commanded_by())
            return True, ""
        except Exception as exc:
            return False, str(exc)

    def _ground_dp_disable(self, args) -> tuple:
        try:
            self.separation.disable(args["experiment_id"], self._commanded_by())
            return True, ""
        except Exception as exc:
            return False, str(exc)

    def _ground_csm_start(self, args) -> tuple:
        try:
            self.csm.start_monitoring(
                args["ar_instance_id"], float(args["frequency_hz"]),
                float(args["bandwidth_hz"]), float(args.get("footprint_loss_db", 0)))
            return True, ""
        except Exception as exc:
            return False, str(exc)

    def _ground_csm_stop(self, args) -> tuple:
        try:
            self.csm.stop_monitoring(args["ar_instance_id"])
            return True, ""
        except Exception as exc:
            return False, str(exc)

    def _ground_csm_default_mode(self, args) -> tuple:
        self.csm.set_default_mode(bool(args.get("enabled", 1)),
                                  actor=self._commanded_by())
        return True, ""

    # -- operator maintenance ---------------------------------------------------

    def apply_limit_override(self, param_id: str, new, actor: str = "operator"):
        """Install a new MIB version; takes effect on the next monitor cycle."""
        self.mib = override_limit(self.mib, param_id, new, actor, self.audit)
        self.master.set_mib(self.mib)
        self.user_segment.set_mib(self.mib)
        self.limit_monitor.mib = self.mib
        self.limit_monitor.set_limits(derive_limit_monitors(self.mib))
        return self.mib

    def run_for(self, dt_ms: int) -> None:
        self.loop.run_for(dt_ms)


def build(config_path, **kwargs) -> GroundSegment:
    return GroundSegment(load_mission_config(config_path), **kwargs)
