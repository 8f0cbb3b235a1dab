"""Procedure definition, validation and execution.

Procedures (FOPs for the spacecraft, GOPs for ground equipment) are the
smallest operationally used commanding building block: ordered steps of
commands, telemetry checks, waits, locals, branches and bounded loops.
They are plain YAML documents (docs/procedure-format.md); only validated
procedures run in automated contexts.

Runs are cooperative: the interpreter is a generator that yields command
dispatches and wait/check requests, driven over the shared event loop so
many runs interleave deterministically.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import yaml

from .clock import EventLoop
from .errors import (AlreadyTerminal, ArgumentError, NotValidated, ParseError,
                     UnknownProcedure, UnknownRun, ValidationError)
from .exprs import ExprError, compile_expr, eval_expr
from .mib import Classification, Mib

MAX_LOOP_ITERATIONS = 1000
CHECK_OPS = ("<", "<=", "==", ">=", ">", "within")


@dataclass(frozen=True)
class SendCommand:
    command_id: str
    args: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CheckTelemetry:
    path: str
    op: str
    value: Optional[float] = None
    low: Optional[float] = None
    high: Optional[float] = None
    timeout_ms: int = 5000

    def holds(self, current: Optional[float]) -> bool:
        if current is None:
            return False
        if self.op == "within":
            return self.low <= current <= self.high
        return {"<": current < self.value, "<=": current <= self.value,
                "==": current == self.value, ">=": current >= self.value,
                ">": current > self.value}[self.op]


@dataclass(frozen=True)
class WaitDuration:
    ms: Union[int, str]


@dataclass(frozen=True)
class WaitUntil:
    expr: str


@dataclass(frozen=True)
class SetLocal:
    name: str
    expr: str


@dataclass(frozen=True)
class If:
    cond: str
    then: tuple = ()
    orelse: tuple = ()


@dataclass(frozen=True)
class Loop:
    count: Union[int, str]
    body: tuple = ()


@dataclass(frozen=True)
class RaiseEvent:
    severity: str
    template: str


Step = Union[SendCommand, CheckTelemetry, WaitDuration, WaitUntil,
             SetLocal, If, Loop, RaiseEvent]


@dataclass
class Procedure:
    procedure_id: str
    kind: str                    # FOP | GOP
    formal_params: tuple = ()    # (name, kind, default|None)
    body: tuple = ()
    validation_status: str = "draft"


def _parse_steps(raw_steps, where: str) -> tuple:
    steps = []
    for i, raw in enumerate(raw_steps or ()):
        loc = f"{where}[{i}]"
        if not isinstance(raw, dict) or len(raw) != 1:
            raise ParseError(f"{loc}: each step is a one-key mapping, got {raw!r}")
        key, body = next(iter(raw.items()))
        if key == "send":
            steps.append(SendCommand(body["command"], dict(body.get("args", {}))))
        elif key == "check":
            steps.append(CheckTelemetry(
                path=body["path"], op=body["op"],
                value=body.get("value"), low=body.get("low"), high=body.get("high"),
                timeout_ms=int(body.get("timeout_ms", 5000))))
        elif key == "wait_ms":
            steps.append(WaitDuration(body))
        elif key == "wait_until":
            steps.append(WaitUntil(str(body)))
        elif key == "set":
            steps.append(SetLocal(body["name"], str(body["expr"])))
        elif key == "if":
            steps.append(If(cond=str(body["cond"]),
                            then=_parse_steps(body.get("then", ()), loc + ".then"),
                            orelse=_parse_steps(body.get("else", ()), loc + ".else")))
        elif key == "loop":
            steps.append(Loop(count=body["count"],
                              body=_parse_steps(body.get("body", ()), loc + ".body")))
        elif key == "raise_event":
            steps.append(RaiseEvent(body.get("severity", "info"),
                                    body.get("template", "")))
        else:
            raise ParseError(f"{loc}: unknown step kind {key!r}")
    return tuple(steps)


def parse_procedure(doc: dict) -> Procedure:
    try:
        params = tuple((p["name"], p.get("kind", "real"), p.get("default"))
                       for p in doc.get("params", ()) or ())
        return Procedure(
            procedure_id=doc["id"],
            kind=doc.get("kind", "GOP"),
            formal_params=params,
            body=_parse_steps(doc.get("steps", ()), doc["id"]),
        )
    except KeyError as exc:
        raise ParseError(f"procedure document missing {exc}") from exc


def load_procedure(path) -> Procedure:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: empty or malformed procedure file")
    return parse_procedure(doc)


@dataclass
class ValidationReport:
    procedure_id: str
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(procedure: Procedure, mib: Mib,
             max_loop: int = MAX_LOOP_ITERATIONS) -> ValidationReport:
    """Static checks; on pass the procedure becomes executable."""
    report = ValidationReport(procedure.procedure_id)
    if procedure.kind not in ("FOP", "GOP"):
        report.violations.append(f"unknown procedure kind {procedure.kind}")
    names = {n for n, _, _ in procedure.formal_params}

    def check_expr(text, scope, loc):
        try:
            tree = compile_expr(str(text))
        except ExprError as exc:
            report.violations.append(f"{loc}: {exc}")
            return
        import ast
        for node in ast.walk(tree):
            if isinstance(node, ast.Name) and node.id not in scope \
                    and node.id not in ("True", "False", "abs", "min", "max",
                                        "round", "sqrt", "floor", "ceil", "tm"):
                report.violations.append(f"{loc}: unresolved name {node.id!r}")

    def walk(steps, scope, loc):
        scope = set(scope)
        for i, step in enumerate(steps):
            where = f"{loc}[{i}]"
            if isinstance(step, SendCommand):
                cmd = mib.commands.get(step.command_id)
                if cmd is None:
                    report.violations.append(f"{where}: unknown command {step.command_id}")
                    continue
                if procedure.kind == "GOP" and cmd.target == "spacecraft":
                    report.violations.append(
                        f"{where}: spacecraft command {step.command_id} in GOP")
                formal = {fp.name: fp for fp in cmd.formal_params}
                for arg in step.args:
                    if arg not in formal:
                        report.violations.append(
                            f"{where}: {step.command_id} has no parameter {arg!r}")
                for fp in cmd.formal_params:
                    if fp.name not in step.args and fp.default is None:
                        report.violations.append(
                            f"{where}: missing argument {fp.name!r} for {step.command_id}")
                for arg, value in step.args.items():
                    fp = formal.get(arg)
                    if fp is None:
                        continue
                    if isinstance(value, str):
                        # string args are expressions; literals carry inner quotes
                        check_expr(value, scope, where)
                    elif not fp.accepts(value):
                        report.violations.append(
                            f"{where}: argument {arg}={value!r} outside declared "
                            f"range of {step.command_id}")
            elif isinstance(step, CheckTelemetry):
                if step.op not in CHECK_OPS:
                    report.violations.append(f"{where}: bad predicate {step.op!r}")
                elif step.op == "within" and (step.low is None or step.high is None):
                    report.violations.append(f"{where}: within needs low and high")
                elif step.op != "within" and step.value is None:
                    report.violations.append(f"{where}: predicate needs a value")
                for bound in (step.value, step.low, step.high):
                    if isinstance(bound, str):
                        # string bounds are expressions, like command args
                        check_expr(bound, scope, where)
                segs = step.path.split(".")
                if len(segs) >= 4 and segs[0] == "data" and segs[2] == "unprocessed":
                    pid = ".".join(segs[3:])
                    pdef = mib.parameters.get(pid)
                    if pdef is None:
                        report.violations.append(f"{where}: unknown parameter {pid}")
                    elif pdef.classification.value != segs[1]:
                        report.violations.append(
                            f"{where}: path classification does not match MIB for {pid}")
                elif segs[0] not in ("data", "users"):
                    report.violations.append(f"{where}: malformed telemetry path {step.path}")
            elif isinstance(step, WaitDuration):
                if isinstance(step.ms, str):
                    check_expr(step.ms, scope, where)
                elif step.ms < 0:
                    report.violations.append(f"{where}: negative wait")
            elif isinstance(step, WaitUntil):
                check_expr(step.expr, scope, where)
            elif isinstance(step, SetLocal):
                check_expr(step.expr, scope, where)
                scope.add(step.name)
            elif isinstance(step, If):
                check_expr(step.cond, scope, where)
                walk(step.then, scope, where + ".then")
                walk(step.orelse, scope, where + ".else")
            elif isinstance(step, Loop):
                if isinstance(step.count, str):
                    check_expr(step.count, scope, where)
                elif step.count > max_loop:
                    report.violations.append(
                        f"{where}: loop count {step.count} exceeds bound {max_loop}")
                walk(step.body, scope, where + ".body")
            elif isinstance(step, RaiseEvent):
                if step.severity not in ("info", "warning", "alarm"):
                    report.violations.append(f"{where}: bad severity {step.severity}")

    walk(procedure.body, names, procedure.procedure_id)
    if report.ok:
        procedure.validation_status = "validated"
    return report


class StepFailure(Exception):
    pass


class _Aborted(Exception):
    pass


@dataclass
class ProcedureRun:
    run_id: str
    procedure_id: str
    args: dict
    originator: str
    state: str = "pending"   # pending -> running -> succeeded|failed|aborted
    step_cursor: str = ""
    start_ms: Optional[int] = None
    end_ms: Optional[int] = None
    dispatched: list = field(default_factory=list)   # (ts, command_id, args)
    failure: Optional[str] = None
    transitions: list = field(default_factory=list)

    def is_terminal(self) -> bool:
        return self.state in ("succeeded", "failed", "aborted")


class ProcedureEngine:
    """Executes validated procedures over the shared event loop."""

    def __init__(self, loop: EventLoop, mib: Mib, command_sink: Callable,
                 bus, telemetry_read: Callable[[str], Optional[float]],
                 poll_ms: int = 100, max_loop: int = MAX_LOOP_ITERATIONS):
        self.loop = loop
        self.mib = mib
        self.command_sink = command_sink          # (command_id, args) -> (ok, reason)
        self.bus = bus
        self.telemetry_read = telemetry_read
        self.poll_ms = poll_ms
        self.max_loop = max_loop
        self.procedures: dict[str, Procedure] = {}
        self.runs: dict[str, ProcedureRun] = {}
        self._run_seq = itertools.count(1)
        self._drivers: dict[str, "_RunDriver"] = {}
        self._on_complete: dict[str, Callable] = {}

    def register(self, procedure: Procedure, validate_now: bool = True) -> ValidationReport:
        report = ValidationReport(procedure.procedure_id)
        if validate_now:
            report = validate(procedure, self.mib, self.max_loop)
        self.procedures[procedure.procedure_id] = procedure
        return report

    def execute(self, procedure_id: str, args: Optional[dict] = None,
                originator: str = "operator",
                on_complete: Optional[Callable] = None) -> str:
        proc = self.procedures.get(procedure_id)
        if proc is None:
            raise UnknownProcedure(procedure_id)
        if proc.validation_status != "validated":
            raise NotValidated(procedure_id)
        env = {}
        supplied = dict(args or {})
        for name, _kind, default in proc.formal_params:
            if name in supplied:
                env[name] = supplied.pop(name)
            elif default is not None:
                env[name] = default
            else:
                raise ArgumentError(f"{procedure_id}: missing argument {name!r}")
        if supplied:
            raise ArgumentError(f"{procedure_id}: unexpected arguments {sorted(supplied)}")
        run = ProcedureRun(
            run_id=f"run-{next(self._run_seq)}",
            procedure_id=procedure_id, args=dict(env), originator=originator)
        self.runs[run.run_id] = run
        run.transitions.append((self.loop.clock.now_ms(), "pending"))
        if on_complete:
            self._on_complete[run.run_id] = on_complete
        driver = _RunDriver(self, run, proc, env)
        self._drivers[run.run_id] = driver
        driver.start()
        return run.run_id

    def abort(self, run_id: str) -> ProcedureRun:
        run = self.runs.get(run_id)
        if run is None:
            raise UnknownRun(run_id)
        if run.is_terminal():
            raise AlreadyTerminal(f"{run_id} already {run.state}")
        self._drivers[run_id].abort()
        return run

    def run_history(self, originator: Optional[str] = None,
                    since_ms: Optional[int] = None) -> list[ProcedureRun]:
        out = [r for r in self.runs.values() if r.is_terminal()]
        if originator is not None:
            out = [r for r in out if r.originator == originator]
        if since_ms is not None:
            out = [r for r in out if (r.end_ms or 0) >= since_ms]
        out.sort(key=lambda r: (r.end_ms or 0, r.run_id), reverse=True)
        return out

    def _finish(self, run: ProcedureRun, state: str, reason: Optional[str] = None) -> None:
        run.state = state
        run.end_ms = self.loop.clock.now_ms()
        run.failure = reason
        run.transitions.append((run.end_ms, state))
        if state == "failed":
            self.bus.make("procedure.failed", source="engine", severity="alarm",
                          payload={"run_id": run.run_id, "procedure": run.procedure_id,
                                   "originator": run.originator, "reason": reason or ""})
        elif state == "aborted":
            self.bus.make("procedure.aborted", source="engine", severity="info",
                          payload={"run_id": run.run_id, "procedure": run.procedure_id})
        self._drivers.pop(run.run_id, None)
        cb = self._on_complete.pop(run.run_id, None)
        if cb:
            cb(run)


class _RunDriver:
    def __init__(self, engine: ProcedureEngine, run: ProcedureRun,
                 proc: Procedure, env: dict):
        self.engine = engine
        self.run = run
        self.env = env
        self._gen = self._interpret(proc.body)
        self._timer = None
        self._aborted = False

    # -- interpreter ------------------------------------------------------

    def _eval(self, text):
        return eval_expr(str(text), self.env, tm=self.engine.telemetry_read)

    def _interpret(self, steps):
        for step in steps:
            if self._aborted:
                raise _Aborted()
            if isinstance(step, SendCommand):
                args = {}
                cmd = self.engine.mib.commands.get(step.command_id)
                for name, value in step.args.items():
                    if isinstance(value, str):
                        value = self._eval(value)
                    args[name] = value
                for fp in (cmd.formal_params if cmd else ()):
                    if fp.name not in args and fp.default is not None:
                        args[fp.name] = fp.default
                yield ("cmd", step.command_id, args)
            elif isinstance(step, CheckTelemetry):
                if any(isinstance(v, str) for v in (step.value, step.low, step.high)):
                    step = replace(
                        step,
                        value=self._eval(step.value) if isinstance(step.value, str) else step.value,
                        low=self._eval(step.low) if isinstance(step.low, str) else step.low,
                        high=self._eval(step.high) if isinstance(step.high, str) else step.high)
                yield ("check", step)
            elif isinstance(step, WaitDuration):
                ms = self._eval(step.ms) if isinstance(step.ms, str) else step.ms
                yield ("wait", int(ms))
            elif isinstance(step, WaitUntil):
                yield ("wait_until", int(self._eval(step.expr)))
            elif isinstance(step, SetLocal):
                self.env[step.name] = self._eval(step.expr)
            elif isinstance(step, If):
                branch = step.then if self._eval(step.cond) else step.orelse
                yield from self._interpret(branch)
            elif isinstance(step, Loop):
                count = self._eval(step.count) if isinstance(step.count, str) else step.count
                count = int(count)
                if count > self.engine.max_loop:
                    raise StepFailure(f"loop count {count} exceeds bound "
                                      f"{self.engine.max_loop}")
                for _ in range(count):
                    if self._aborted:
                        raise _Aborted()
                    yield from self._interpret(step.body)
            elif isinstance(step, RaiseEvent):
                self.engine.bus.make(
                    f"procedure.{self.run.procedure_id}.event", source="engine",
                    severity=step.severity,
                    payload={"run_id": self.run.run_id,
                             "text": step.template.format(**self.env)
                             if self.env else step.template})

    # -- driving ----------------------------------------------------------

    def start(self) -> None:
        self.run.state = "running"
        self.run.start_ms = self.engine.loop.clock.now_ms()
        self.run.transitions.append((self.run.start_ms, "running"))
        self._advance()

    def abort(self) -> None:
        self._aborted = True
        if self._timer:
            self._timer.cancel()
        self.engine._finish(self.run, "aborted")

    def _advance(self) -> None:
        if self.run.is_terminal():
            return
        loop = self.engine.loop
        try:
            while True:
                item = next(self._gen)
                kind = item[0]
                if kind == "cmd":
                    _, command_id, args = item
                    self.engine._current_run = self.run.run_id
                    ok, reason = self.engine.command_sink(command_id, args)
                    self.run.dispatched.append((loop.clock.now_ms(), command_id, args))
                    if not ok:
                        raise StepFailure(f"command {command_id} rejected: {reason}")
                elif kind == "wait":
                    self._timer = loop.call_later(item[1], self._advance)
                    return
                elif kind == "wait_until":
                    self._timer = loop.call_at(item[1], self._advance)
                    return
                elif kind == "check":
                    step = item[1]
                    deadline = loop.clock.now_ms() + step.timeout_ms
                    if not self._poll(step, deadline):
                        return
        except StopIteration:
            self.engine._finish(self.run, "succeeded")
        except _Aborted:
            pass  # abort() already finalized the run
        except (StepFailure, ExprError, ArgumentError, KeyError, ValueError,
                ZeroDivisionError) as exc:
            self.engine._finish(self.run, "failed", str(exc))

    def _poll(self, step: CheckTelemetry, deadline: int) -> bool:
        """True when the predicate already holds (caller keeps advancing)."""
        if self.run.is_terminal():
            return False
        loop = self.engine.loop
        current = self.engine.telemetry_read(step.path)
        if step.holds(current):
            return True
        if loop.clock.now_ms() >= deadline:
            self.engine._finish(
                self.run, "failed",
                f"telemetry check timed out: {step.path} {step.op} "
                f"{step.value if step.value is not None else (step.low, step.high)} "
                f"(last={current})")
            return False
        self._timer = loop.call_later(
            self.engine.poll_ms, lambda: self._resume_check(step, deadline))
        return False

    def _resume_check(self, step: CheckTelemetry, deadline: int) -> None:
        if self._poll(step, deadline):
            self._advance()
