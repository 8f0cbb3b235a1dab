"""Mission Information Base: parameter/command dictionary with limits.

The MIB is a single YAML document (schema in docs/mib-format.md) with
top-level sections ``version``, ``parameters`` and ``commands``.  A loaded
Mib is immutable; limit overrides produce a new Mib installed atomically
by the caller.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import yaml

from .errors import ParseError, UnknownParameter, ValidationError


class Classification(str, enum.Enum):
    OPEN = "open"
    RESTRICTED = "restricted"


VALUE_KINDS = ("integer", "real", "enum", "string")


@dataclass(frozen=True)
class LimitDef:
    param_id: str
    soft_low: float
    soft_high: float
    hard_low: float
    hard_high: float
    enabled: bool = True

    def check(self) -> None:
        if not (self.hard_low <= self.soft_low <= self.soft_high <= self.hard_high):
            raise ValidationError(
                f"limit for {self.param_id}: require hard_low <= soft_low "
                f"<= soft_high <= hard_high, got "
                f"[{self.hard_low}, {self.soft_low}, {self.soft_high}, {self.hard_high}]")


@dataclass(frozen=True)
class ParameterDef:
    param_id: str
    name: str
    classification: Classification
    unit: str
    gain: float
    offset: float
    source: str  # "space" | "ground"
    limit: Optional[LimitDef] = None

    def engineering(self, raw: float) -> float:
        return self.gain * raw + self.offset


@dataclass(frozen=True)
class FormalParam:
    name: str
    kind: str  # one of VALUE_KINDS
    low: Optional[float] = None
    high: Optional[float] = None
    values: tuple = ()  # allowed values for enum kind
    default: object = None

    def accepts(self, value) -> bool:
        if self.kind == "integer":
            if not isinstance(value, int) or isinstance(value, bool):
                return False
        elif self.kind == "real":
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                return False
        elif self.kind == "enum":
            return value in self.values
        elif self.kind == "string":
            return isinstance(value, str)
        if self.kind in ("integer", "real"):
            if self.low is not None and value < self.low:
                return False
            if self.high is not None and value > self.high:
                return False
        return True


@dataclass(frozen=True)
class CommandDef:
    command_id: str
    name: str
    classification: Classification
    target: str  # "spacecraft" | "ground-equipment"
    formal_params: tuple = ()


@dataclass(frozen=True)
class Mib:
    parameters: dict
    commands: dict
    version: str

    def parameter(self, param_id: str) -> ParameterDef:
        try:
            return self.parameters[param_id]
        except KeyError:
            raise UnknownParameter(param_id) from None

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "parameters": [_param_to_dict(p) for p in self.parameters.values()],
            "commands": [_command_to_dict(c) for c in self.commands.values()],
        }


def _param_to_dict(p: ParameterDef) -> dict:
    d = {
        "id": p.param_id,
        "name": p.name,
        "classification": p.classification.value,
        "unit": p.unit,
        "calibration": {"gain": p.gain, "offset": p.offset},
        "source": p.source,
    }
    if p.limit is not None:
        d["limit"] = {
            "soft_low": p.limit.soft_low, "soft_high": p.limit.soft_high,
            "hard_low": p.limit.hard_low, "hard_high": p.limit.hard_high,
            "enabled": p.limit.enabled,
        }
    return d


def _command_to_dict(c: CommandDef) -> dict:
    params = []
    for fp in c.formal_params:
        pd = {"name": fp.name, "kind": fp.kind}
        if fp.low is not None:
            pd["min"] = fp.low
        if fp.high is not None:
            pd["max"] = fp.high
        if fp.values:
            pd["values"] = list(fp.values)
        if fp.default is not None:
            pd["default"] = fp.default
        params.append(pd)
    return {
        "id": c.command_id,
        "name": c.name,
        "classification": c.classification.value,
        "target": c.target,
        "params": params,
    }


def _classification(raw, where: str) -> Classification:
    try:
        return Classification(raw)
    except ValueError:
        raise ValidationError(f"{where}: classification must be open|restricted, got {raw!r}")


def _parse_limit(param_id: str, raw: dict) -> LimitDef:
    try:
        limit = LimitDef(
            param_id=param_id,
            soft_low=float(raw["soft_low"]), soft_high=float(raw["soft_high"]),
            hard_low=float(raw["hard_low"]), hard_high=float(raw["hard_high"]),
            enabled=bool(raw.get("enabled", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"limit of {param_id}: {exc}") from exc
    limit.check()
    return limit


def _parse_parameter(raw: dict) -> ParameterDef:
    try:
        param_id = raw["id"]
        cal = raw.get("calibration", {"gain": 1.0, "offset": 0.0})
        p = ParameterDef(
            param_id=param_id,
            name=raw.get("name", param_id),
            classification=_classification(raw["classification"], f"parameter {param_id}"),
            unit=raw.get("unit", ""),
            gain=float(cal.get("gain", 1.0)),
            offset=float(cal.get("offset", 0.0)),
            source=raw.get("source", "space"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"parameter entry {raw!r}: {exc}") from exc
    if p.gain == 0:
        raise ValidationError(f"parameter {param_id}: calibration gain must be nonzero")
    if p.source not in ("space", "ground"):
        raise ValidationError(f"parameter {param_id}: source must be space|ground")
    if "limit" in raw and raw["limit"] is not None:
        p = replace(p, limit=_parse_limit(param_id, raw["limit"]))
    return p


def _parse_formal_param(command_id: str, raw: dict) -> FormalParam:
    try:
        kind = raw["kind"]
        if kind not in VALUE_KINDS:
            raise ValidationError(f"command {command_id}: bad value kind {kind!r}")
        return FormalParam(
            name=raw["name"], kind=kind,
            low=raw.get("min"), high=raw.get("max"),
            values=tuple(raw.get("values", ())),
            default=raw.get("default"),
        )
    except KeyError as exc:
        raise ParseError(f"command {command_id} param {raw!r}: missing {exc}") from exc


def _parse_command(raw: dict) -> CommandDef:
    try:
        command_id = raw["id"]
        target = raw.get("target", "spacecraft")
        cmd = CommandDef(
            command_id=command_id,
            name=raw.get("name", command_id),
            classification=_classification(raw["classification"], f"command {command_id}"),
            target=target,
            formal_params=tuple(_parse_formal_param(command_id, p)
                                for p in raw.get("params", ())),
        )
    except KeyError as exc:
        raise ParseError(f"command entry {raw!r}: missing {exc}") from exc
    if target not in ("spacecraft", "ground-equipment"):
        raise ValidationError(f"command {command_id}: target must be "
                              "spacecraft|ground-equipment")
    names = [fp.name for fp in cmd.formal_params]
    if len(names) != len(set(names)):
        raise ValidationError(f"command {command_id}: duplicate formal param names")
    return cmd


def parse_mib(doc: dict) -> Mib:
    if not isinstance(doc, dict):
        raise ParseError("MIB document must be a mapping with "
                         "version/parameters/commands sections")
    parameters: dict[str, ParameterDef] = {}
    for raw in doc.get("parameters", ()) or ():
        p = _parse_parameter(raw)
        if p.param_id in parameters:
            raise ValidationError(f"duplicate parameter id {p.param_id}")
        parameters[p.param_id] = p
    commands: dict[str, CommandDef] = {}
    for raw in doc.get("commands", ()) or ():
        c = _parse_command(raw)
        if c.command_id in commands:
            raise ValidationError(f"duplicate command id {c.command_id}")
        commands[c.command_id] = c
    return Mib(parameters=parameters, commands=commands,
               version=str(doc.get("version", "0")))


def load_mib(path) -> Mib:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if doc is None:
        raise ParseError(f"{path}: empty MIB file")
    return parse_mib(doc)


def dump_mib(mib: Mib, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(mib.to_dict(), fh, sort_keys=False)


def derive_limit_monitors(mib: Mib) -> list[LimitDef]:
    """All enabled out-of-limit definitions, ordered by param_id."""
    return [p.limit for _, p in sorted(mib.parameters.items())
            if p.limit is not None and p.limit.enabled]


def override_limit(mib: Mib, param_id: str, new, actor: str = "operator",
                   audit=None) -> Mib:
    """Replace (or disable) one parameter's limit; returns a new Mib.

    ``new`` is either a LimitDef or the string "disable".
    """
    old = mib.parameter(param_id)
    if new == "disable":
        limit = None if old.limit is None else replace(old.limit, enabled=False)
    else:
        if new.param_id != param_id:
            new = replace(new, param_id=param_id)
        new.check()
        limit = new
    parameters = dict(mib.parameters)
    parameters[param_id] = replace(old, limit=limit)
    if audit is not None:
        audit.record(actor, "limit-override",
                     {"param_id": param_id,
                      "new": "disable" if new == "disable" else _param_to_dict(
                          parameters[param_id]).get("limit")})
    return replace(mib, parameters=parameters)
