"""Command line frontend: validate configuration, run procedures and
simulations, inspect schedules and serve the web gateway."""

from __future__ import annotations

import json
import time

import click

from . import build
from .errors import GroundSegmentError
from .mib import derive_limit_monitors, load_mib
from .procedures import load_procedure, validate


@click.group()
def main():
    """Ground segment tooling."""


@main.group()
def mib():
    """Mission dictionary inspection."""


@mib.command("validate")
@click.argument("path", type=click.Path(exists=True))
def mib_validate(path):
    try:
        m = load_mib(path)
    except GroundSegmentError as exc:
        raise click.ClickException(str(exc))
    n_open = sum(1 for p in m.parameters.values()
                 if p.classification.value == "open")
    click.echo(f"OK: {len(m.parameters)} parameters ({n_open} open, "
               f"{len(m.parameters) - n_open} restricted), "
               f"{len(m.commands)} commands, version {m.version}")


@mib.command("list-limits")
@click.argument("path", type=click.Path(exists=True))
def mib_list_limits(path):
    m = load_mib(path)
    for limit in derive_limit_monitors(m):
        click.echo(f"{limit.param_id}: soft [{limit.soft_low}, {limit.soft_high}] "
                   f"hard [{limit.hard_low}, {limit.hard_high}]")


@main.group()
def proc():
    """Procedure validation and execution."""


@proc.command("validate")
@click.argument("path", type=click.Path(exists=True))
@click.option("--mib", "mib_path", required=True, type=click.Path(exists=True))
def proc_validate(path, mib_path):
    m = load_mib(mib_path)
    p = load_procedure(path)
    report = validate(p, m)
    if report.ok:
        click.echo(f"OK: {p.procedure_id} ({p.kind}) validated")
    else:
        for v in report.violations:
            click.echo(f"FAIL: {v}")
        raise SystemExit(1)


@proc.command("run")
@click.argument("procedure_id")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--arg", "args", multiple=True, help="name=value, repeatable")
@click.option("--timeout-s", default=120.0, show_default=True)
def proc_run(procedure_id, config_path, args, timeout_s):
    system = build(config_path)
    parsed = {}
    for a in args:
        name, _, value = a.partition("=")
        try:
            parsed[name] = json.loads(value)
        except json.JSONDecodeError:
            parsed[name] = value
    try:
        run_id = system.engine.execute(procedure_id, parsed, originator="cli")
    except GroundSegmentError as exc:
        raise click.ClickException(str(exc))
    run = system.engine.runs[run_id]
    deadline = system.clock.now_ms() + int(timeout_s * 1000)
    while not run.is_terminal() and system.clock.now_ms() < deadline:
        system.run_for(1000)
    click.echo(f"{run_id}: {run.state}"
               + (f" ({run.failure})" if run.failure else ""))
    for ts, command_id, cargs in run.dispatched:
        click.echo(f"  {ts} {command_id} {cargs}")
    if run.state != "succeeded":
        raise SystemExit(1)


@main.group()
def plan():
    """Planning inspection."""


@plan.command("show")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-s", default=60, show_default=True,
              help="simulated seconds to run before showing the schedule")
def plan_show(config_path, run_s):
    system = build(config_path)
    system.run_for(run_s * 1000)
    sched = system.planner.schedule
    click.echo(f"schedule version {sched.version}")
    for inst in sched.instances:
        click.echo(f"  {inst.ar_id} {inst.task_id} "
                   f"[{inst.start_ms}, {inst.end_ms}) prio {inst.priority}")


@main.command("sim")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--duration-s", default=3600, show_default=True)
@click.option("--speed", default=100.0, show_default=True,
              help="simulated seconds per wall second (0 = as fast as possible)")
def sim(config_path, duration_s, speed):
    """Run the closed-loop simulation and print events as they happen."""
    system = build(config_path)
    system.bus.subscribe(lambda e: click.echo(
        f"{e.timestamp} [{e.severity}] {e.event_id} {e.payload}"))
    step_ms = 1000
    for _ in range(duration_s):
        system.run_for(step_ms)
        if speed > 0:
            time.sleep(step_ms / 1000.0 / speed)
    click.echo(f"done: {system.master.counters}")


@main.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--advance-ms", default=1000, show_default=True,
              help="simulation step applied per wall second")
def serve(config_path, host, port, advance_ms):
    """Serve the web gateway over a live simulation."""
    import threading

    import uvicorn

    from .gateway import create_app

    system = build(config_path)
    app = create_app(system)

    def pump():
        while True:
            system.run_for(advance_ms)
            time.sleep(1.0)

    threading.Thread(target=pump, daemon=True).start()
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
