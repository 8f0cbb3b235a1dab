"""Mission configuration file (YAML; schema in docs/config.md)."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .clock import OfficeHours
from .errors import ParseError, ValidationError
from .events import ResponseRule, SmsGateway, Stage
from .planning import (ActivityDef, Dependency, MaintenanceWindow,
                       MutualExclusion, ResourceCapacity, TaskDef)
from .separation import DataProcessorConfig, ParamSelector


@dataclass
class PrincipalDef:
    user: str
    group: str
    role: str                    # experimenter | operator-remote | operator-local | admin
    password_hash: str = ""
    salt: str = ""
    password: str = ""           # fixture convenience; hashed at load time
    scope: tuple = ()
    tasks: tuple = ()
    uers: tuple = ()
    visibility: str = "anonymized"   # full | anonymized | own-only


@dataclass
class MissionConfig:
    mib_path: str
    scenario_path: str
    procedures_dir: str
    experiments: list = field(default_factory=list)
    activities: dict = field(default_factory=dict)
    tasks: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)
    pipelines: list = field(default_factory=list)   # raw dicts, built per store
    response_rules: list = field(default_factory=list)
    gateways: list = field(default_factory=list)
    notify_groups: dict = field(default_factory=dict)
    office_hours: OfficeHours = field(default_factory=OfficeHours)
    principals: list = field(default_factory=list)
    planning: dict = field(default_factory=dict)
    csm: dict = field(default_factory=dict)
    start_time_ms: int = 0


def _parse_constraint(raw: dict):
    kind = raw.get("kind")
    if kind == "mutex":
        return MutualExclusion(frozenset(raw["tasks"]))
    if kind == "capacity":
        return ResourceCapacity(raw["resource"], float(raw["capacity"]))
    if kind == "maintenance":
        return MaintenanceWindow(
            intervals=tuple((int(a), int(b)) for a, b in raw["intervals"]),
            blocked_tasks=frozenset(raw.get("tasks", ())))
    if kind == "dependency":
        return Dependency(raw["before"], raw["after"],
                          float(raw.get("min_gap_s", 0)),
                          float(raw.get("max_gap_s", float("inf"))))
    raise ValidationError(f"unknown constraint kind {kind!r}")


def _parse_rule(raw: dict) -> ResponseRule:
    responses = []
    for r in raw.get("responses", ()):
        if "hmi" in r:
            responses.append(("hmi",))
        elif "notify" in r:
            responses.append(("notify", r["notify"]))
        elif "execute" in r:
            responses.append(("execute", r["execute"], r.get("args", {})))
        else:
            raise ValidationError(f"rule {raw.get('id')}: bad response {r}")
    match = raw.get("match", {})
    return ResponseRule(
        rule_id=raw["id"],
        responses=responses,
        match_severity=tuple(match.get("severity", ("alarm",))),
        match_source=match.get("source"),
        match_id=match.get("id", "*"),
        enabled=bool(raw.get("enabled", True)),
        cooldown_ms=int(raw.get("cooldown_ms", 60_000)),
    )


def load_mission_config(path) -> MissionConfig:
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: empty mission config")

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    cfg = MissionConfig(
        mib_path=resolve(doc["mib"]),
        scenario_path=resolve(doc["scenario"]),
        procedures_dir=resolve(doc.get("procedures_dir", "procedures")),
        start_time_ms=int(doc.get("start_time_ms", 0)),
        planning=dict(doc.get("planning", {})),
        csm=dict(doc.get("csm", {})),
    )
    for e in doc.get("experiments", ()):
        cfg.experiments.append(DataProcessorConfig(
            experiment_id=e["id"],
            temporary=ParamSelector(tuple(e.get("temporary", ()))),
            persistent=ParamSelector(tuple(e.get("persistent", ()))),
            mode=e.get("mode", "simple")))
    for a in doc.get("activities", ()):
        cfg.activities[a["id"]] = ActivityDef(
            activity_id=a["id"], procedure_id=a["procedure"],
            param_map=dict(a.get("map", {})),
            duration_s=float(a.get("duration_s", 60)))
    for t in doc.get("tasks", ()):
        cfg.tasks[t["id"]] = TaskDef(
            task_id=t["id"],
            activities=tuple((x["activity"], float(x.get("offset_s", 0)))
                             for x in t.get("activities", ())),
            formal_params=tuple(t.get("params", ())),
            owner_group=t.get("owner_group", "operators"),
            priority=int(t.get("priority", 5)),
            resources=dict(t.get("resources", {})),
            start_gop=t.get("start_gop"),
            end_gop=t.get("end_gop"),
            gop_args=dict(t.get("gop_args", {})),
            allowed_uers=tuple(t.get("allowed_uers", ())),
            failure_policy=t.get("failure_policy", "continue"),
            experiment_id=t.get("experiment"))
    for c in doc.get("constraints", ()):
        cfg.constraints.append(_parse_constraint(c))
    for p in doc.get("pipelines", ()):
        stages = [Stage(name=s["name"], kind=s["kind"], fn=s.get("fn", "mean"),
                        source=s.get("source", ""), expr=s.get("expr", ""),
                        window_s=float(s.get("window_s", 10)))
                  for s in p.get("stages", ())]
        cfg.pipelines.append({"id": p["id"], "inputs": dict(p.get("inputs", {})),
                              "stages": stages, "output": p["output"]})
    for r in doc.get("response_rules", ()):
        cfg.response_rules.append(_parse_rule(r))
    notify = doc.get("notify", {})
    cfg.notify_groups = {g: list(rs) for g, rs in notify.get("groups", {}).items()}
    for g in notify.get("gateways", ()):
        cfg.gateways.append(SmsGateway(gateway_id=g["id"], site=g["site"],
                                       carrier=g["carrier"]))
    oh = doc.get("office_hours", {})
    cfg.office_hours = OfficeHours(
        weekdays=tuple(oh.get("weekdays", (0, 1, 2, 3, 4))),
        start_hour=int(oh.get("start", 8)), end_hour=int(oh.get("end", 17)))
    for p in doc.get("principals", ()):
        cfg.principals.append(PrincipalDef(
            user=p["user"], group=p["group"], role=p.get("role", "experimenter"),
            password=p.get("password", ""),
            password_hash=p.get("password_hash", ""), salt=p.get("salt", ""),
            scope=tuple(p.get("scope", ())),
            tasks=tuple(p.get("tasks", ())),
            uers=tuple(p.get("uers", ())),
            visibility=p.get("visibility", "anonymized")))
    if cfg.notify_groups.get("on-call") is not None \
            and len(cfg.notify_groups["on-call"]) < 2:
        raise ValidationError("on-call group needs at least two recipients")
    return cfg
