"""End-to-end acceptance suite.

Each test prints one PASS line with its measured figures; every expectation
is checked against an oracle computed independently of the code under test.
"""

import random
import time

import pytest

import groundseg
from groundseg.clock import EventLoop, SimClock
from groundseg.csm import Carrier, CsmMonitor, SpectrumMeasurement
from groundseg.events import EventBus
from groundseg.mib import Classification, load_mib
from groundseg.planning import (ActivityDef, Dependency, MaintenanceWindow,
                                MutualExclusion, Planner, ResourceCapacity,
                                TaskDef, UserExecutionRequest)
from groundseg.procedures import ProcedureEngine, parse_procedure
from groundseg.satsim import AnomalyEntry
from groundseg.separation import (DataProcessorConfig, ParamSelector,
                                  SeparationRegistry)
from groundseg.telemetry import ArchiveQuery, Sample, TelemetryStore
from groundseg.usersegment import UserSegmentStore
from groundseg.wire import PacketFilter, TmSplitter, decode_frame, encode_frame
from tests.conftest import MIB_PATH, MISSION_PATH

MIN = 60_000
HOUR = 3_600_000


def _restricted_ids(mib):
    return {p for p, d in mib.parameters.items()
            if d.classification is Classification.RESTRICTED}


# ---------------------------------------------------------------------------
# 1. leak-freedom fuzz


def test_acceptance_1_leak_freedom_fuzz(mib):
    t_wall = time.monotonic()
    rng = random.Random(0xFACADE)
    restricted = _restricted_ids(mib)
    params = sorted(mib.parameters)

    past_splitter = []
    filtered = PacketFilter(on_alarm=lambda msg: None)
    user_store = UserSegmentStore(mib, SimClock(0))

    def boundary(sample):
        past_splitter.append(sample)
        frame = filtered.filter(encode_frame(sample))
        if frame is not None:
            user_store.receive(decode_frame(frame))

    splitter = TmSplitter(forward=boundary)
    n = 100_000
    fed_restricted = 0
    for i in range(n):
        pid = rng.choice(params)
        pdef = mib.parameters[pid]
        if pdef.classification is Classification.RESTRICTED:
            fed_restricted += 1
        splitter.feed(Sample(
            param_id=pid,
            path=f"data.{pdef.classification.value}.unprocessed.{pid}",
            timestamp=i, raw=rng.uniform(-1e4, 1e4),
            engineering=rng.uniform(-1e4, 1e4),
            validity=rng.choice(("valid", "invalid", "stale")),
            classification=pdef.classification))
    assert fed_restricted > n // 10   # the fuzz genuinely mixes classifications

    leaks_splitter = sum(
        1 for s in past_splitter
        if s.classification is Classification.RESTRICTED
        or s.path.startswith("data.restricted"))
    assert leaks_splitter == 0
    assert splitter.restricted_blocked == fed_restricted

    # restricted and mangled frames thrown straight at the network filter,
    # as if the first choke point had failed
    frame_leaks = 0
    for i in range(5000):
        pid = rng.choice(sorted(restricted))
        frame = encode_frame(Sample(
            param_id=pid, path=f"data.restricted.unprocessed.{pid}",
            timestamp=i, raw=1.0, engineering=1.0, validity="valid",
            classification=Classification.RESTRICTED))
        if rng.random() < 0.3:
            frame = bytearray(frame)
            frame[rng.randrange(len(frame))] ^= 0xFF
            frame = bytes(frame[:rng.randrange(1, len(frame) + 1)])
        out = filtered.filter(bytes(frame))
        if out is not None and decode_frame(out)["param_id"] in restricted:
            frame_leaks += 1
    assert frame_leaks == 0

    leaks_store = [p for p in user_store.archive.paths()
                   if p.startswith("data.restricted")]
    assert leaks_store == []

    # gateway responses over a live system
    from fastapi.testclient import TestClient
    from groundseg.gateway import create_app
    system = groundseg.build(MISSION_PATH)
    system.loop.run_for(30_000)
    with TestClient(create_app(system)) as client:
        def hdr(user, pw):
            r = client.post("/api/v1/login", json={"user": user, "password": pw})
            return {"Authorization": f"Bearer {r.json()['token']}"}

        gateway_leaks = 0
        ops = hdr("duty-operator", "ops-pass-1")
        ora = hdr("resource-auditor", "ora-pass-1")
        t1 = system.clock.now_ms() + 1
        for headers, prefix in ((ops, "data"), (ops, "data.open"),
                                (ora, "users"), (ops, "users")):
            r = client.get("/api/v1/telemetry/archive",
                           params={"prefix": prefix, "t0": 0, "t1": t1},
                           headers=headers)
            if r.status_code == 200:
                for s in r.json()["samples"]:
                    if s["param_id"] in restricted or \
                            s["path"].startswith("data.restricted"):
                        gateway_leaks += 1
        r = client.get("/api/v1/events", headers=ops)
        body = str(r.json())
        for pid in restricted:
            assert pid not in body
    assert gateway_leaks == 0

    elapsed = time.monotonic() - t_wall
    assert elapsed < 60.0
    print(f"\nPASS criterion 1: {n} fuzz samples + 5000 hostile frames, "
          f"0 leaks past splitter/filter/gateway in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. temporal/content separation oracle


def _run_separation_scenario(mib, processors, timeline):
    """timeline: (t, kind, payload) sorted by t; returns (actual, intervals)."""
    clock = SimClock(0)
    store = TelemetryStore(mib, clock)
    from groundseg.audit import AuditLog
    reg = SeparationRegistry(mib, store, clock, AuditLog(clock))
    for cfg in processors:
        reg.create_processor(cfg)
    actual = set()
    windows = {cfg.experiment_id: [] for cfg in processors}
    for t, kind, payload in timeline:
        if t > clock.now_ms():
            clock._advance_to(t)
        if kind == "enable":
            reg.enable(payload)
            windows[payload].append([t, None])
        elif kind == "disable":
            reg.disable(payload)
            windows[payload][-1][1] = t
        else:
            pid, ts = payload
            sample = store.ingest(pid, ts, 1.0)
            for exp, path in reg.route(sample):
                actual.add((exp, path.split(".")[2], pid, ts))
    return actual, windows


def _separation_oracle(processors, timeline, windows):
    expected = set()
    for t, kind, payload in timeline:
        if kind != "sample":
            continue
        pid, ts = payload
        for cfg in processors:
            if cfg.mode == "mixed" and cfg.persistent.matches(pid):
                expected.add((cfg.experiment_id, "persistent", pid, ts))
            elif cfg.temporary.matches(pid):
                for start, end in windows[cfg.experiment_id]:
                    if start <= ts and (end is None or ts < end):
                        expected.add((cfg.experiment_id, "temporary", pid, ts))
                        break
    return expected


def test_acceptance_2_separation_oracle(mib):
    sel = lambda *p: ParamSelector(tuple(p))
    scenarios = {}

    # scenario A: simple mode, one experiment
    cfg_a = [DataProcessorConfig("expa", temporary=sel("sat.obc.temp", "sat.tdp1.*"))]
    tl_a = [(5_000, "enable", "expa"), (30_000, "disable", "expa"),
            (50_000, "enable", "expa"), (70_000, "disable", "expa")]
    for ts in range(0, 80_001, 2_500):
        for pid in ("sat.obc.temp", "sat.tdp1.temp", "sat.gere.lock"):
            tl_a.append((ts, "sample", (pid, ts)))
    # boundary exactness: samples precisely at the half-open edges
    for ts in (4_999, 5_000, 29_999, 30_000, 50_000, 69_999, 70_000):
        tl_a.append((max(ts, 0), "sample", ("sat.obc.temp", ts)))
    # a late-arriving sample whose timestamp is inside a closed window
    tl_a.append((75_000, "sample", ("sat.obc.temp", 15_000)))
    scenarios["simple"] = (cfg_a, tl_a)

    # scenario B: mixed mode, persistent set flows outside intervals
    cfg_b = [DataProcessorConfig("expb", mode="mixed",
                                 persistent=sel("sat.gere.*"),
                                 temporary=sel("sat.txp.power", "sat.ant.*"))]
    tl_b = [(20_000, "enable", "expb"), (40_000, "disable", "expb")]
    for ts in range(0, 60_001, 2_000):
        for pid in ("sat.gere.lock", "sat.gere.rx_level", "sat.txp.power",
                    "sat.ant.az", "sat.obc.temp"):
            tl_b.append((ts, "sample", (pid, ts)))
    scenarios["mixed"] = (cfg_b, tl_b)

    # scenario C: two experimenters sharing one selector, disjoint windows
    cfg_c = [DataProcessorConfig("left", temporary=sel("sat.obc.temp")),
             DataProcessorConfig("right", temporary=sel("sat.obc.temp"))]
    tl_c = [(10_000, "enable", "left"), (30_000, "disable", "left"),
            (25_000, "enable", "right"), (55_000, "disable", "right")]
    for ts in range(0, 60_001, 1_000):
        tl_c.append((ts, "sample", ("sat.obc.temp", ts)))
    scenarios["shared-selector"] = (cfg_c, tl_c)

    total = 0
    for name, (cfgs, timeline) in scenarios.items():
        timeline = sorted(timeline, key=lambda e: (e[0], e[1] != "enable"))
        actual, windows = _run_separation_scenario(mib, cfgs, timeline)
        expected = _separation_oracle(cfgs, timeline, windows)
        assert actual == expected, f"scenario {name}"
        total += len(expected)

    # mixed-mode spot checks: persistent present outside, temporary absent
    cfgs, timeline = scenarios["mixed"]
    timeline = sorted(timeline, key=lambda e: (e[0], e[1] != "enable"))
    actual, _ = _run_separation_scenario(mib, cfgs, timeline)
    assert ("expb", "persistent", "sat.gere.lock", 0) in actual
    assert ("expb", "persistent", "sat.gere.lock", 60_000) in actual
    assert not any(b == "temporary" and ts < 20_000 or
                   b == "temporary" and ts >= 40_000
                   for e, b, p, ts in actual)
    print(f"\nPASS criterion 2: 3 scenarios, {total} oracle copies, "
          f"exact set equality with half-open boundaries")


# ---------------------------------------------------------------------------
# 3. scheduler oracle equivalence


def _oracle_violates(placed, constraints):
    """Independent constraint arithmetic over (ar, task, start, end, prio, res)."""
    for kind, *spec in constraints:
        if kind == "mutex":
            members = [p for p in placed if p[1] in spec[0]]
            for i in range(len(members)):
                for j in range(i + 1, len(members)):
                    a, b = members[i], members[j]
                    if a[2] < b[3] and b[2] < a[3]:
                        return True
        elif kind == "cap":
            res, cap = spec
            users = [p for p in placed if p[5].get(res)]
            for t in {u[2] for u in users} | {u[3] for u in users}:
                load = sum(u[5][res] for u in users if u[2] <= t < u[3])
                if load > cap:
                    return True
        elif kind == "maint":
            intervals, blocked = spec
            for p in placed:
                if blocked and p[1] not in blocked:
                    continue
                if any(p[2] < b and a < p[3] for a, b in intervals):
                    return True
        elif kind == "dep":
            before, after, min_gap, max_gap = spec
            befores = [p for p in placed if p[1] == before]
            for p in placed:
                if p[1] != after:
                    continue
                if not any(min_gap <= p[2] - b[3] <= max_gap for b in befores):
                    return True
    return False


def _oracle_plan(tasks, constraints, ars, slot, horizon_end):
    """tasks: id -> (span_ms, priority, resources); ars: submission order."""
    placed = {}     # ar_id -> tuple
    state = {}

    def earliest(ar_id, task_id, ws, we, incumbents):
        span, prio, res = tasks[task_id]
        start = ws
        while start + span <= we:
            cand = (ar_id, task_id, start, start + span, prio, res)
            if not _oracle_violates(incumbents + [cand], constraints):
                return start
            start += slot
        return None

    for idx, (ar_id, task_id, ws, we) in enumerate(ars):
        span, prio, res = tasks[task_id]
        start = earliest(ar_id, task_id, ws, we, list(placed.values()))
        if start is None:
            keep = [p for p in placed.values() if p[4] >= prio]
            lowers = [p for p in placed.values() if p[4] < prio]
            if lowers:
                start = earliest(ar_id, task_id, ws, we, keep)
            if start is not None:
                cand = (ar_id, task_id, start, start + span, prio, res)
                kept, bumped = list(keep), []
                for low in sorted(lowers, key=lambda p: (-p[4], p[0])):
                    if not _oracle_violates(kept + [cand, low], constraints):
                        kept.append(low)
                    else:
                        bumped.append(low)
                for low in bumped:
                    state[low[0]] = "bumped"
                    del placed[low[0]]
        if start is None:
            state[ar_id] = "rejected"
        else:
            state[ar_id] = "scheduled"
            placed[ar_id] = (ar_id, task_id, start, start + span, prio, res)
    return state, {a: p[2] for a, p in placed.items()}


def test_acceptance_3_scheduler_oracle():
    t_wall = time.monotonic()
    slot = 1000
    cases = 220
    state_mix = {"scheduled": 0, "rejected": 0, "bumped": 0}
    for case in range(cases):
        rng = random.Random(7_000 + case)
        n_tasks = rng.randint(1, 5)
        oracle_tasks = {}
        activities = {}
        planner_tasks = {}
        for i in range(n_tasks):
            tid = f"t{i}"
            span_slots = rng.randint(1, 20)
            prio = rng.randint(1, 9)
            res = {"r": 1} if rng.random() < 0.7 else {}
            oracle_tasks[tid] = (span_slots * slot, prio, res)
            activities[f"a{i}"] = ActivityDef(f"a{i}", "P", duration_s=span_slots)
            planner_tasks[tid] = TaskDef(tid, ((f"a{i}", 0.0),), priority=prio,
                                         resources=res)
        task_ids = sorted(planner_tasks)
        constraints, oracle_constraints = [], []
        for _ in range(rng.randint(0, 4)):
            kind = rng.choice(("cap", "mutex", "maint", "dep"))
            if kind == "cap":
                cap = rng.randint(1, 2)
                constraints.append(ResourceCapacity("r", cap))
                oracle_constraints.append(("cap", "r", cap))
            elif kind == "mutex" and len(task_ids) >= 2:
                pair = frozenset(rng.sample(task_ids, 2))
                constraints.append(MutualExclusion(pair))
                oracle_constraints.append(("mutex", pair))
            elif kind == "maint":
                a = rng.randrange(0, 150) * slot
                b = a + rng.randrange(5, 60) * slot
                blocked = frozenset(rng.sample(task_ids,
                                               rng.randint(0, len(task_ids))))
                constraints.append(MaintenanceWindow(((a, b),), blocked))
                oracle_constraints.append(("maint", ((a, b),), blocked))
            elif kind == "dep" and len(task_ids) >= 2:
                before, after = rng.sample(task_ids, 2)
                gap = rng.randrange(0, 5)
                constraints.append(Dependency(before, after, min_gap_s=gap,
                                              max_gap_s=gap + 60))
                oracle_constraints.append(
                    ("dep", before, after, gap * 1000, (gap + 60) * 1000))

        loop = EventLoop(SimClock(0))
        planner = Planner(loop, planner_tasks, activities, constraints,
                          horizon_ms=500 * slot, slot_ms=slot,
                          session_interval_ms=0)
        ars = []
        for i in range(rng.randint(1, 6)):
            tid = rng.choice(task_ids)
            span = oracle_tasks[tid][0]
            ws = rng.randrange(0, 40) * slot
            # half the windows are exact-fit so conflicts force bumping
            slack = 0 if rng.random() < 0.5 else rng.randrange(0, 30)
            we = ws + span + slack * slot
            ar_id = f"ar-{i + 1}"
            ars.append((ar_id, tid, ws, we))
            planner.submit_ar(tid, "grp", ws, we)

        want_state, want_start = _oracle_plan(
            oracle_tasks, oracle_constraints, ars, slot, 500 * slot)
        got_state = {a: planner.ars[a].state for a, *_ in ars}
        got_start = {i.ar_id: i.start_ms for i in planner.schedule.instances}
        assert got_state == want_state, f"case {case}: {got_state} != {want_state}"
        assert got_start == want_start, f"case {case}"
        for s in got_state.values():
            state_mix[s] += 1
    assert all(state_mix.values()), state_mix   # every outcome kind exercised
    elapsed = time.monotonic() - t_wall
    assert elapsed < 300.0
    print(f"\nPASS criterion 3: {cases} randomized instances identical to "
          f"brute-force oracle ({state_mix}) in {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. planning latency


def test_acceptance_4_planning_latency():
    system = groundseg.build(MISSION_PATH)
    planner, loop = system.planner, system.loop

    worst_ar = 0.0
    violations = 0
    for i in range(100):
        ws = (i + 1) * HOUR
        t0 = time.perf_counter()
        decision = planner.submit_ar("tech.obc-bench", "operators",
                                     ws, ws + HOUR)
        dt = time.perf_counter() - t0
        worst_ar = max(worst_ar, dt)
        if dt > 2.0 or decision.get("state") not in ("scheduled", "rejected"):
            violations += 1
    assert violations == 0

    worst_uer = 0
    uer_violations = 0
    for i in range(100):
        now = system.clock.now_ms()
        d = planner.submit_ar("tech.gere-relay", "gereleo", now, now + HOUR,
                              args={"filter": 3})
        assert d["state"] == "scheduled", d
        ar_id = d["ar_id"]
        loop.run_until(d["start_ms"] + 1000)
        before = set(system.engine.runs)
        t_submit = system.clock.now_ms()
        out = planner.submit_uer(UserExecutionRequest(
            f"u{i}", ar_id, "uer.gere-reconf", "gereleo",
            args={"filter": 4}, submitted_ms=t_submit))
        assert out["accepted"]
        new_runs = [system.engine.runs[r] for r in set(system.engine.runs) - before]
        first_dispatch = min(r.dispatched[0][0] for r in new_runs if r.dispatched)
        latency = first_dispatch - t_submit
        worst_uer = max(worst_uer, latency)
        if latency > 1000:
            uer_violations += 1
        system.executor.abort_instance(ar_id)
        loop.run_for(2000)
    assert uer_violations == 0
    print(f"\nPASS criterion 4: 100 AR decisions (worst {worst_ar * 1000:.1f}ms "
          f"wall) and 100 UER dispatches (worst {worst_uer}ms sim), 0 violations")


# ---------------------------------------------------------------------------
# 5. lights-out closed loop


def _closed_loop(down_gateways=(), comm_links=("comm.link-01",)):
    system = groundseg.build(MISSION_PATH)
    for gw in system.cfg.gateways:
        if gw.gateway_id in down_gateways:
            gw.health = "down"
    for task in comm_links:
        system.planner.submit_ar(task, "commercial", MIN, HOUR)
    system.sim.inject(AnomalyEntry(
        at_ms=100_000, param_id="sat.txp.power", profile="ramp",
        value=20.0, gated_by="txp_state"))
    t_wall = time.monotonic()
    system.loop.run_for(10 * MIN)
    wall = time.monotonic() - t_wall
    return system, wall


def _recipient_carriers(system):
    carriers = {}
    for gw in system.cfg.gateways:
        for ts, recipient, severity, text in gw.sent:
            carriers.setdefault(recipient, set()).add(gw.carrier)
    return carriers


def test_acceptance_5_lights_out_closed_loop():
    # main path, run twice to prove determinism
    traces = []
    for _ in range(2):
        system, wall = _closed_loop()
        traces.append([(e.event_id, e.timestamp) for e in system.bus.history])
    assert traces[0] == traces[1]
    assert (10 * MIN / 1000) / wall >= 100   # at least 100x faster than real time

    events = {e.event_id: e for e in system.bus.history}
    alarm = events["limit.sat.txp.power"]
    assert alarm.severity == "alarm"
    assert not system.cfg.office_hours.is_staffed(alarm.timestamp)
    safe_runs = [r for r in system.engine.runs.values()
                 if r.procedure_id == "SAFE_MUTE" and r.originator == "response-rule"]
    assert len(safe_runs) == 1 and safe_runs[0].state == "succeeded"
    nominal = events["limit.sat.txp.power.nominal"]
    assert nominal.timestamp > alarm.timestamp          # telemetry recovered
    assert system.sim.state["txp_state"] == 0.0
    carriers = _recipient_carriers(system)
    assert set(carriers) == {"oncall-alpha", "oncall-bravo"}
    assert all(len(c) >= 2 for c in carriers.values())
    assert system.dispatcher.hmi_alerts                 # zero human input needed

    # one notification gateway down: both recipients still reached twice
    system, wall = _closed_loop(down_gateways=("gw-p1",))
    assert (10 * MIN / 1000) / wall >= 100
    assert any(e.event_id == "limit.sat.txp.power.nominal"
               for e in system.bus.history)
    carriers = _recipient_carriers(system)
    assert set(carriers) == {"oncall-alpha", "oncall-bravo"}
    assert all(len(c) >= 2 for c in carriers.values())

    # response rejected by constraint: escalates to notification instead
    system, wall = _closed_loop(comm_links=("comm.link-01", "comm.link-02"))
    assert (10 * MIN / 1000) / wall >= 100
    rejected = [e for e in system.bus.history if e.event_id == "response.rejected"]
    assert rejected and rejected[0].severity == "alarm"
    assert "txp_bw" in rejected[0].payload["reason"]
    assert not any(r.procedure_id == "SAFE_MUTE" for r in system.engine.runs.values())
    escalations = [o for o in system.dispatcher.outcomes
                   if o["rule"] == "response-escalation" and o["kind"] == "notify"]
    assert escalations and escalations[0]["reached"] == ["oncall-alpha",
                                                         "oncall-bravo"]
    print("\nPASS criterion 5: anomaly->alarm->SAFE_MUTE->nominal loop, "
          "1-gateway-down and constraint-rejection variants, deterministic "
          ">=100x real time")


# ---------------------------------------------------------------------------
# 6. CSM oracle


def _csm_reference(ops, sweeps, regulatory, grace_ms):
    """Offline replay of the monitoring contract; emits (event_id, t)."""
    sessions = {}
    intruders = {}
    out = []
    op_i = 0
    ops = sorted(ops, key=lambda o: o[1])

    def overlap(f1, b1, f2, b2):
        return abs(f1 - f2) <= (b1 + b2) / 2

    for t, carriers in sweeps:
        while op_i < len(ops) and ops[op_i][1] <= t:
            kind, when, ar, *rest = ops[op_i]
            if kind == "start":
                f, bw, loss = rest
                sessions[ar] = {"state": "active", "f": f, "bw": bw,
                                "limit": regulatory - loss, "latched": False,
                                "grace_end": None}
            else:
                sessions[ar]["state"] = "grace"
                sessions[ar]["grace_end"] = when + grace_ms
            op_i += 1
        expired = []
        for ar, s in sessions.items():
            if s["state"] == "grace" and t >= s["grace_end"]:
                s["state"] = "closed"
                expired.append(s)
                if any(overlap(f, bw, s["f"], s["bw"]) for f, bw, p in carriers):
                    out.append((f"csm.lingering.{ar}", t))
        for f, bw, p in carriers:
            matched = False
            for ar, s in sessions.items():
                if s["state"] not in ("active", "grace") or \
                        not overlap(f, bw, s["f"], s["bw"]):
                    continue
                matched = True
                if p > s["limit"]:
                    if not s["latched"]:
                        s["latched"] = True
                        out.append((f"csm.power.{ar}", t))
                else:
                    s["latched"] = False
            if not matched and any(overlap(f, bw, s["f"], s["bw"])
                                   for s in expired):
                matched = True
            if not matched:
                bucket = int(round(f / 1e6))
                if not intruders.get(bucket):
                    intruders[bucket] = True
                    out.append((f"csm.intruder.{bucket}", t))
        live = {int(round(f / 1e6)) for f, bw, p in carriers
                if not any(s["state"] in ("active", "grace") and
                           overlap(f, bw, s["f"], s["bw"])
                           for s in sessions.values())}
        for bucket in list(intruders):
            if bucket not in live:
                intruders[bucket] = False
    return out


def test_acceptance_6_csm_oracle():
    rng = random.Random(0xC5A)
    regulatory, grace = 50.0, 600_000
    slots = [20.0e9 + i * 50e6 for i in range(10)]
    bands = rng.sample(slots, 6)
    ops = []
    transmit = []
    for i in range(3):
        f = bands[i]
        start = rng.randrange(10, 400) * 1000
        stop = start + rng.randrange(120, 400) * 1000
        loss = rng.choice((0.0, 3.0, 6.0))
        ops.append(("start", start, f"ar-{i}", f, 30e6, loss))
        ops.append(("stop", stop, f"ar-{i}"))
        tx_end = stop + rng.choice((-60_000, 300_000, 700_000))
        transmit.append((f, start + 5000, tx_end, regulatory - loss))
    rogues = [(bands[3 + i], rng.randrange(0, 2000) * 1000,
               rng.randrange(100, 600) * 1000) for i in range(3)]

    sweeps = []
    for t in range(0, 2_500_001, 1000):
        carriers = []
        for f, t0, t1, limit in transmit:
            if t0 <= t < t1:
                over = rng.random() < 0.02
                carriers.append((f, 30e6, limit + 5 if over else limit - 5))
        for f, t0, dur in rogues:
            if t0 <= t < t0 + dur:
                carriers.append((f, 20e6, 35.0))
        sweeps.append((t, carriers))

    clock = SimClock(0)
    bus = EventBus(clock)
    mon = CsmMonitor(clock, bus, regulatory_limit_dbm=regulatory, grace_ms=grace)
    op_i, ops_sorted = 0, sorted(ops, key=lambda o: o[1])
    for t, carriers in sweeps:
        while op_i < len(ops_sorted) and ops_sorted[op_i][1] <= t:
            kind, when, ar, *rest = ops_sorted[op_i]
            clock._advance_to(when)
            if kind == "start":
                mon.start_monitoring(ar, rest[0], rest[1], rest[2])
            else:
                mon.stop_monitoring(ar)
            op_i += 1
        clock._advance_to(t)
        mon.process_measurement(SpectrumMeasurement(
            t, tuple(Carrier(f, bw, p) for f, bw, p in carriers)))

    got = [(e.event_id, e.timestamp) for e in bus.history]
    want = _csm_reference(ops, sweeps, regulatory, grace)
    assert got == want

    # corollaries stated explicitly by the contract
    active_spans = {ar: None for _, _, ar, *_ in ops}
    starts = {o[2]: o for o in ops if o[0] == "start"}
    stops = {o[2]: o[1] for o in ops if o[0] == "stop"}
    for eid, t in got:
        if eid.startswith("csm.intruder."):
            for ar, (_, s_t, _, f, bw, loss) in starts.items():
                if s_t <= t < stops[ar] + grace:
                    bucket = int(round(f / 1e6))
                    assert eid != f"csm.intruder.{bucket}", \
                        "false intruder inside a registered band"
    over_latched = {}
    missed = 0
    for t, carriers in sweeps:
        for ar, (_, s_t, _, f, bw, loss) in starts.items():
            if not (s_t <= t < stops[ar]):
                continue
            hit = [p for cf, cbw, p in carriers
                   if abs(cf - f) <= (cbw + bw) / 2 and p > regulatory - loss]
            if hit and not over_latched.get(ar):
                over_latched[ar] = True
                if (f"csm.power.{ar}", t) not in got:
                    missed += 1
            elif not hit:
                over_latched[ar] = False
    assert missed == 0
    lingering = [e for e in got if e[0].startswith("csm.lingering.")]

    # auto-mute variant on the full system
    system = groundseg.build(MISSION_PATH)
    system.planner.submit_ar("comm.link-01", "commercial", MIN, HOUR)
    system.loop.run_for(2 * MIN)
    assert system.sim.state["txp_state"] == 1.0
    system.sim.state["txp_eirp"] = 60.0        # over the regulatory limit
    system.loop.run_for(3 * MIN)
    assert any(e.event_id.startswith("csm.power.") for e in system.bus.history)
    assert system.sim.state["txp_state"] == 0.0
    assert system.sim.state["wt_tx"] == 0.0
    print(f"\nPASS criterion 6: {len(got)} CSM events equal offline oracle, "
          f"{len(lingering)} lingering alarms at grace expiry, auto-mute left "
          f"all W/T transponders muted")


# ---------------------------------------------------------------------------
# 7. procedure interpreter oracle


def _gen_steps(rng, depth, n_vars, budget):
    steps = []
    while budget[0] > 0 and len(steps) < 6 and rng.random() < 0.8:
        budget[0] -= 1
        kind = rng.choice(("send", "send", "set", "wait", "if", "loop"))
        if kind == "send":
            steps.append(rng.choice((
                {"send": {"command": "MUTE_TXP"}},
                {"send": {"command": "UNMUTE_TXP"}},
                {"send": {"command": "GERE_CONFIG",
                          "args": {"filter": rng.randrange(0, 8)}}},
                {"send": {"command": "SET_TXP_DRIVE",
                          "args": {"level": round(rng.uniform(0, 10), 2)}}},
            )))
        elif kind == "set":
            # re-assign one of the pre-declared locals
            steps.append({"set": {"name": f"v{rng.randrange(n_vars)}",
                                  "expr": str(rng.randrange(0, 10))}})
        elif kind == "wait":
            steps.append({"wait_ms": rng.randrange(0, 500)})
        elif kind == "if" and depth < 2:
            var = f"v{rng.randrange(n_vars)}"
            steps.append({"if": {
                "cond": f"{var} > {rng.randrange(0, 10)}",
                "then": _gen_steps(rng, depth + 1, n_vars, budget),
                "else": _gen_steps(rng, depth + 1, n_vars, budget)}})
        elif kind == "loop" and depth < 2:
            steps.append({"loop": {"count": rng.randrange(0, 4),
                                   "body": _gen_steps(rng, depth + 1,
                                                      n_vars, budget)}})
    return steps


def _expand_reference(mib, steps, env, telemetry):
    """Independent expansion; raises _RefFailure at the first failing check."""
    out = []
    for step in steps:
        key, body = next(iter(step.items()))
        if key == "send":
            args = dict(body.get("args", {}))
            for name, value in list(args.items()):
                if isinstance(value, str):
                    args[name] = eval(value, {"__builtins__": {}}, dict(env))
            for fp in mib.commands[body["command"]].formal_params:
                if fp.name not in args and fp.default is not None:
                    args[fp.name] = fp.default
            out.append((body["command"], args))
        elif key == "set":
            env[body["name"]] = eval(body["expr"], {"__builtins__": {}}, dict(env))
        elif key == "if":
            branch = body["then"] if eval(body["cond"], {"__builtins__": {}},
                                          dict(env)) else body.get("else", [])
            sub, failed = _expand_reference(mib, branch, env, telemetry)
            out.extend(sub)
            if failed:
                return out, True
        elif key == "loop":
            for _ in range(int(body["count"])):
                sub, failed = _expand_reference(mib, body["body"], env, telemetry)
                out.extend(sub)
                if failed:
                    return out, True
        elif key == "check":
            current = telemetry.get(body["path"])
            ok = current is not None and {
                ">": current > body["value"],
                "<": current < body["value"],
                "==": current == body["value"]}[body["op"]]
            if not ok:
                return out, True
        # wait_ms and raise_event do not affect the command sequence
    return out, False


def test_acceptance_7_procedure_interpreter_oracle(mib):
    telemetry = {"data.open.unprocessed.sat.obc.temp": 30.0}
    loop = EventLoop(SimClock(0))
    bus = EventBus(loop.clock)
    log = {}

    def sink(cmd, args):
        log.setdefault(engine._current_run, []).append((cmd, dict(args)))
        return True, ""

    engine = ProcedureEngine(loop, mib, sink, bus, telemetry.get, poll_ms=50)

    n_failures = 0
    for i in range(50):
        rng = random.Random(40_000 + i)
        n_vars = rng.randint(1, 3)
        budget = [rng.randint(5, 17)]
        steps = [{"set": {"name": f"v{k}", "expr": str(rng.randrange(0, 10))}}
                 for k in range(n_vars)]
        steps += _gen_steps(rng, 0, n_vars, budget)
        induce = rng.random() < 0.5
        if induce:
            pos = rng.randrange(0, len(steps) + 1)
            steps.insert(pos, {"check": {
                "path": "data.open.unprocessed.sat.obc.temp",
                "op": ">", "value": 1e9, "timeout_ms": 150}})
        else:
            steps.append({"check": {
                "path": "data.open.unprocessed.sat.obc.temp",
                "op": ">", "value": -1e9, "timeout_ms": 150}})
        doc = {"id": f"RAND_{i}", "kind": "FOP", "steps": steps}
        report = engine.register(parse_procedure(doc))
        assert report.ok, report.violations

        want, want_failed = _expand_reference(mib, steps, {}, telemetry)
        rid = engine.execute(f"RAND_{i}")
        loop.run_for(120_000)
        run = engine.runs[rid]
        assert run.is_terminal()
        got = [(c, a) for _, c, a in run.dispatched]
        assert got == want, f"procedure {i}"
        alarms = [e for e in bus.history
                  if e.severity == "alarm" and e.payload.get("run_id") == rid]
        if want_failed:
            n_failures += 1
            assert run.state == "failed"
            assert len(alarms) == 1, f"procedure {i}: {alarms}"
        else:
            assert run.state == "succeeded" and alarms == []
    assert n_failures >= 10

    # the end GOP runs on every abort path of a scheduled task
    from tests.test_schedexec import _task, _teardowns, make_exec
    for scenario in ("fail-continue", "fail-abort-remaining", "operator-abort"):
        if scenario == "fail-continue":
            tasks = [_task("t", [("a-fail", 0.0), ("a-ok", 2.0)])]
        elif scenario == "fail-abort-remaining":
            tasks = [_task("t", [("a-fail", 0.0), ("a-ok", 3.0)],
                           policy="abort-remaining")]
        else:
            tasks = [_task("t", [("a-wait", 0.0)])]
        eloop, ebus, eng, planner, executor, elog = make_exec(mib, tasks)
        planner.submit_ar("t", "g", 1000, MIN)
        eloop.run_for(2000)
        if scenario == "operator-abort":
            executor.abort_instance("ar-1")
        eloop.run_for(2 * MIN)
        assert len(_teardowns(ebus)) == 1, scenario
    print(f"\nPASS criterion 7: 50 randomized procedures match the reference "
          f"expansion, {n_failures} induced failures each raised exactly one "
          f"alarm, end GOP ran on all 3 abort paths")


# ---------------------------------------------------------------------------
# 8. 48h autonomy


def test_acceptance_8_48h_autonomy():
    system = groundseg.build(MISSION_PATH)
    t_wall = time.monotonic()
    system.loop.run_for(48 * HOUR)
    wall = time.monotonic() - t_wall
    alarms = [e for e in system.bus.history if e.severity == "alarm"]
    assert alarms == [], [(e.event_id, e.timestamp) for e in alarms[:5]]
    assert system.sim.command_log == []
    speed = (48 * 3600) / wall
    assert speed >= 100
    print(f"\nPASS criterion 8: 48 simulated hours, 0 commands, "
          f"0 alarm-severity events ({speed:.0f}x real time, {wall:.0f}s wall)")
