"""Deterministic simulated spacecraft, payload and RF environment.

Telemetry-level fidelity only: each parameter is a seeded baseline +
noise + optional first-order coupling to a command-settable payload state
variable + scripted anomaly effects.  Active transmissions (payload routes
in their "on" state) produce carriers in the spectrum measurements.

(seed, scenario, command log) fully determine every output.
"""

from __future__ import annotations

import math
import random
import zlib
from dataclasses import dataclass, field
from typing import Callable, Optional

import yaml

from .csm import Carrier, SpectrumMeasurement
from .errors import ParseError, UnknownParameter
from .mib import Mib


@dataclass
class SimParam:
    param_id: str
    baseline_raw: float
    noise_sigma: float = 0.0
    period_ms: int = 1000
    coupled_to: Optional[str] = None   # payload state variable
    coupling_gain: float = 0.0
    tau_s: float = 0.0                 # first-order response; 0 = immediate
    mirror_state: Optional[str] = None  # telemetry directly reports a state var


@dataclass
class AnomalyEntry:
    at_ms: int
    param_id: str
    profile: str                    # step | ramp | dropout
    value: float = 0.0              # step target / ramp rate per second
    duration_ms: int = 0            # dropout length
    gated_by: Optional[str] = None  # ramp integrates only while this state is on


@dataclass
class CarrierDef:
    state: str                      # transmitting while this state variable is on
    on_value: float = 1.0
    frequency_hz: float = 20e9
    bandwidth_hz: float = 36e6
    power_dbm: float = 40.0
    power_state: Optional[str] = None  # optional state variable giving power dBm


class Simulator:
    def __init__(self, mib: Mib, scenario: dict, clock,
                 ingest: Callable, spectrum_cb: Optional[Callable] = None):
        self.mib = mib
        self.clock = clock
        self.ingest = ingest
        self.spectrum_cb = spectrum_cb
        self.seed = int(scenario.get("seed", 0))
        self.measurement_period_ms = int(scenario.get("measurement_period_ms", 1000))
        self.state: dict[str, float] = {}
        self._state_mirror: dict[str, str] = {}
        for name, spec in (scenario.get("state") or {}).items():
            self.state[name] = float(spec.get("initial", 0))
            if spec.get("telemetry"):
                self._state_mirror[name] = spec["telemetry"]
        self.params: dict[str, SimParam] = {}
        for pid, spec in (scenario.get("params") or {}).items():
            if pid not in mib.parameters:
                raise ParseError(f"scenario parameter {pid} not in MIB")
            self.params[pid] = SimParam(
                param_id=pid,
                baseline_raw=float(spec.get("baseline_raw", 0.0)),
                noise_sigma=float(spec.get("noise", 0.0)),
                period_ms=int(spec.get("period_ms",
                                       scenario.get("emission_period_ms", 1000))),
                coupled_to=spec.get("coupled_to"),
                coupling_gain=float(spec.get("coupling_gain", 0.0)),
                tau_s=float(spec.get("tau_s", 0.0)),
                mirror_state=spec.get("mirror_state"),
            )
        self.command_map = dict(scenario.get("commands") or {})
        self.carriers = [CarrierDef(
            state=c["state"], on_value=float(c.get("on", 1)),
            frequency_hz=float(c["frequency_hz"]),
            bandwidth_hz=float(c["bandwidth_hz"]),
            power_dbm=float(c.get("power_dbm", 40.0)),
            power_state=c.get("power_state"),
        ) for c in scenario.get("carriers") or ()]
        self.anomalies: list[AnomalyEntry] = []
        for a in scenario.get("anomalies") or ():
            self.anomalies.append(AnomalyEntry(
                at_ms=int(a["at_ms"]), param_id=a["param"], profile=a["profile"],
                value=float(a.get("value", 0.0)),
                duration_ms=int(a.get("duration_ms", 0)),
                gated_by=a.get("gated_by")))
        self._rng: dict[str, random.Random] = {
            pid: random.Random(self.seed ^ zlib.crc32(pid.encode()))
            for pid in self.params}
        self._value: dict[str, float] = {
            pid: self._target(p) for pid, p in self.params.items()}
        self._last_emit: dict[str, int] = {}
        self._ramp_offset: dict[int, float] = {}
        self.command_log: list[tuple] = []
        self.emitted: list[tuple] = []
        self._record = False

    # -- wiring ---------------------------------------------------------------

    def attach(self, loop, record_emissions: bool = False) -> None:
        """Register periodic emission/measurement tasks on the shared loop."""
        self._record = record_emissions
        now = loop.clock.now_ms()
        for pid, p in self.params.items():
            loop.every(p.period_ms, lambda pid=pid: self.emit_param(pid),
                       start_at=now + p.period_ms)
        if self.spectrum_cb is not None:
            loop.every(self.measurement_period_ms, self.emit_measurement,
                       start_at=now + self.measurement_period_ms)

    # -- dynamics ---------------------------------------------------------------

    def _target(self, p: SimParam) -> float:
        if p.mirror_state:
            return self.state.get(p.mirror_state, 0.0)
        target = p.baseline_raw
        if p.coupled_to:
            target += p.coupling_gain * self.state.get(p.coupled_to, 0.0)
        return target

    def _anomaly_effect(self, pid: str, now: int, dt_ms: int):
        """Returns (override, offset, validity) from the anomaly script."""
        override = None
        offset = 0.0
        validity = "valid"
        for idx, a in enumerate(self.anomalies):
            if a.param_id != pid or now < a.at_ms:
                continue
            if a.profile == "step":
                override = a.value
            elif a.profile == "dropout":
                if now < a.at_ms + a.duration_ms:
                    validity = "invalid"
            elif a.profile == "ramp":
                acc = self._ramp_offset.get(idx, 0.0)
                gate_on = (a.gated_by is None or
                           self.state.get(a.gated_by, 0.0) != 0.0)
                delta = a.value * dt_ms / 1000.0
                if gate_on:
                    acc += delta
                else:
                    acc = max(0.0, acc - delta) if acc > 0 else min(0.0, acc + delta)
                self._ramp_offset[idx] = acc
                offset += acc
        return override, offset, validity

    def emit_param(self, pid: str) -> Optional[tuple]:
        p = self.params[pid]
        now = self.clock.now_ms()
        dt_ms = now - self._last_emit.get(pid, now - p.period_ms)
        self._last_emit[pid] = now
        target = self._target(p)
        if p.tau_s > 0:
            alpha = 1.0 - math.exp(-(dt_ms / 1000.0) / p.tau_s)
            self._value[pid] += (target - self._value[pid]) * alpha
        else:
            self._value[pid] = target
        override, offset, validity = self._anomaly_effect(pid, now, dt_ms)
        raw = override if override is not None else self._value[pid] + offset
        if p.noise_sigma:
            raw += self._rng[pid].gauss(0.0, p.noise_sigma)
        if self._record:
            self.emitted.append((pid, now, raw, validity))
        try:
            self.ingest(pid, now, raw, validity)
        except UnknownParameter:
            pass
        return (pid, now, raw, validity)

    def emit_measurement(self) -> SpectrumMeasurement:
        carriers = []
        for c in self.carriers:
            if self.state.get(c.state, 0.0) == c.on_value:
                power = (self.state.get(c.power_state, c.power_dbm)
                         if c.power_state else c.power_dbm)
                carriers.append(Carrier(c.frequency_hz, c.bandwidth_hz, power))
        m = SpectrumMeasurement(timestamp=self.clock.now_ms(),
                                carriers=tuple(carriers))
        if self.spectrum_cb is not None:
            self.spectrum_cb(m)
        return m

    # -- commanding ---------------------------------------------------------------

    def apply_command(self, command_id: str, args: dict) -> tuple:
        """Returns (accepted, reason)."""
        cmd = self.mib.commands.get(command_id)
        if cmd is None:
            return False, f"unknown command {command_id}"
        for fp in cmd.formal_params:
            if fp.name not in args:
                if fp.default is not None:
                    args = {**args, fp.name: fp.default}
                else:
                    return False, f"missing argument {fp.name}"
            if not fp.accepts(args[fp.name]):
                return False, f"argument {fp.name}={args[fp.name]!r} out of range"
        spec = self.command_map.get(command_id)
        if spec is None:
            return False, f"command {command_id} not supported by vehicle"
        self.command_log.append((self.clock.now_ms(), command_id, dict(args)))
        for state_var, value in (spec.get("sets") or {}).items():
            if isinstance(value, str) and value.startswith("$"):
                value = args[value[1:]]
            self.state[state_var] = float(value)
        return True, ""

    def inject(self, entry: AnomalyEntry) -> tuple:
        if entry.at_ms < self.clock.now_ms():
            return False, "activation time in the past"
        self.anomalies.append(entry)
        return True, ""


def load_scenario(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: empty scenario file")
    return doc
