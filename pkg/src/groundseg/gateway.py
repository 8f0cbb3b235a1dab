"""HTTP gateway for experimenters, remote operators and auditors.

Every byte served here comes from the user-segment store and the open
event history, both of which sit downstream of the telemetry splitter and
the packet filter; restricted data physically never reaches this process
boundary.  Access is additionally narrowed per principal by ACL scope.

Endpoints live under /api/v1; authentication is a login-issued bearer
token with a limited lifetime (simulation clock).
"""

from __future__ import annotations

import csv
import hashlib
import hmac
import io
import json
import secrets
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.responses import PlainTextResponse, StreamingResponse

from .config import PrincipalDef
from .errors import GroundSegmentError, NotOwner, UnauthorizedTask, ValidationError
from .mib import LimitDef
from .telemetry import ArchiveQuery, Sample, in_scope, under

TOKEN_TTL_MS = 3_600_000
PBKDF2_ITERATIONS = 100_000

OPERATOR_ROLES = ("operator-local", "operator-remote", "admin")


def hash_password(password: str, salt: str) -> str:
    return hashlib.pbkdf2_hmac("sha256", password.encode(), salt.encode(),
                               PBKDF2_ITERATIONS).hex()


@dataclass
class Account:
    user: str
    group: str
    role: str
    password_hash: str
    salt: str
    scope: tuple
    tasks: tuple
    uers: tuple
    visibility: str


@dataclass
class Token:
    value: str
    user: str
    issued_ms: int
    expires_ms: int


class AuthStore:
    """Local credential and session-token store."""

    def __init__(self, principals: list[PrincipalDef], clock, audit,
                 ttl_ms: int = TOKEN_TTL_MS):
        self.clock = clock
        self.audit = audit
        self.ttl_ms = ttl_ms
        self.accounts: dict[str, Account] = {}
        self.tokens: dict[str, Token] = {}
        for p in principals:
            salt = p.salt or secrets.token_hex(8)
            pw_hash = p.password_hash or hash_password(p.password, salt)
            self.accounts[p.user] = Account(
                user=p.user, group=p.group, role=p.role, password_hash=pw_hash,
                salt=salt, scope=p.scope, tasks=p.tasks, uers=p.uers,
                visibility=p.visibility)

    def login(self, user: str, password: str) -> Token:
        account = self.accounts.get(user)
        if account is None or not hmac.compare_digest(
                account.password_hash, hash_password(password, account.salt)):
            self.audit.record(user, "login-failed", {})
            raise HTTPException(401, "invalid credentials")
        now = self.clock.now_ms()
        token = Token(value=secrets.token_urlsafe(24), user=user,
                      issued_ms=now, expires_ms=now + self.ttl_ms)
        self.tokens[token.value] = token
        self.audit.record(user, "login", {"expires_ms": token.expires_ms})
        return token

    def resolve(self, bearer: Optional[str]) -> Account:
        if not bearer or not bearer.startswith("Bearer "):
            raise HTTPException(401, "missing bearer token")
        token = self.tokens.get(bearer[len("Bearer "):])
        if token is None:
            raise HTTPException(401, "unknown token")
        if self.clock.now_ms() >= token.expires_ms:
            del self.tokens[token.value]
            raise HTTPException(401, "token expired")
        return self.accounts[token.user]


def _sample_json(s: Sample) -> dict:
    return {"param_id": s.param_id, "path": s.path, "timestamp": s.timestamp,
            "raw": s.raw, "engineering": s.engineering, "validity": s.validity}


def _event_json(e) -> dict:
    return {"uid": e.uid, "id": e.event_id, "source": e.source,
            "severity": e.severity, "timestamp": e.timestamp,
            "payload": dict(e.payload)}


def _iso(ts_ms: int) -> str:
    return datetime.fromtimestamp(ts_ms / 1000.0, tz=timezone.utc) \
        .strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"


def create_app(system) -> FastAPI:
    app = FastAPI(title="ground segment gateway", version="1")
    auth = AuthStore(system.cfg.principals, system.clock, system.audit)
    app.state.system = system
    app.state.auth = auth
    store = system.user_segment

    def account(authorization: Optional[str] = Header(default=None)) -> Account:
        return auth.resolve(authorization)

    def check_scope(acct: Account, path: str) -> None:
        if under(path, "data.restricted"):
            raise HTTPException(403, "restricted subtree is never served")
        if acct.role in OPERATOR_ROLES:
            return
        if not in_scope(path, acct.scope):
            raise HTTPException(403, f"{path} outside granted scope")

    def require_operator(acct: Account) -> None:
        if acct.role not in OPERATOR_ROLES:
            raise HTTPException(403, "operator role required")

    # -- session ---------------------------------------------------------------

    @app.post("/api/v1/login")
    async def login(body: dict):
        token = auth.login(body.get("user", ""), body.get("password", ""))
        acct = auth.accounts[token.user]
        return {"token": token.value, "expires_ms": token.expires_ms,
                "role": acct.role, "group": acct.group,
                "visibility": acct.visibility}

    # -- telemetry ---------------------------------------------------------------

    @app.get("/api/v1/telemetry/latest")
    async def latest(path: str, acct: Account = Depends(account)):
        check_scope(acct, path)
        value = store.latest_engineering(path)
        if value is None:
            raise HTTPException(404, f"no samples under {path}")
        return {"path": path, "engineering": value}

    @app.get("/api/v1/telemetry/archive")
    async def archive(prefix: str, t0: int, t1: int,
                      downsample_ms: Optional[int] = None,
                      acct: Account = Depends(account)):
        check_scope(acct, prefix)
        q = ArchiveQuery(prefix=prefix, t0=t0, t1=t1, downsample_ms=downsample_ms)
        try:
            q.check()
        except ValidationError as exc:
            raise HTTPException(400, str(exc))
        scope = None if acct.role in OPERATOR_ROLES else acct.scope
        return {"samples": [_sample_json(s) for s in store.query_archive(q, scope)]}

    @app.get("/api/v1/telemetry/export")
    async def export(prefix: str, t0: int, t1: int,
                     acct: Account = Depends(account)):
        """CSV download of one archive slice."""
        check_scope(acct, prefix)
        q = ArchiveQuery(prefix=prefix, t0=t0, t1=t1)
        try:
            q.check()
        except ValidationError as exc:
            raise HTTPException(400, str(exc))
        scope = None if acct.role in OPERATOR_ROLES else acct.scope
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["param_id", "timestamp_iso", "raw", "engineering",
                         "validity"])
        for s in store.query_archive(q, scope):
            writer.writerow([s.param_id, _iso(s.timestamp), repr(s.raw),
                             repr(s.engineering), s.validity])
        system.audit.record(acct.user, "archive-export",
                            {"prefix": prefix, "t0": t0, "t1": t1})
        return PlainTextResponse(buf.getvalue(), media_type="text/csv")

    @app.get("/api/v1/telemetry/stream")
    async def stream(request: Request, prefix: str,
                     since: int = Query(default=0),
                     limit: int = Query(default=1000),
                     acct: Account = Depends(account)):
        """Server-sent events: archived samples after ``since``, oldest first.

        The stream closes after ``limit`` samples; clients resume with the
        last received timestamp so reconnects are lossless.
        """
        check_scope(acct, prefix)
        scope = None if acct.role in OPERATOR_ROLES else acct.scope
        q = ArchiveQuery(prefix=prefix, t0=since + 1,
                         t1=system.clock.now_ms() + 1)
        samples = store.query_archive(q, scope)[:limit]

        async def gen():
            for s in samples:
                yield (f"id: {s.timestamp}\n"
                       f"data: {json.dumps(_sample_json(s))}\n\n")

        return StreamingResponse(gen(), media_type="text/event-stream")

    # -- events -------------------------------------------------------------------

    @app.get("/api/v1/events")
    async def events(since_uid: int = 0, limit: int = 500,
                     acct: Account = Depends(account)):
        out = [e for e in system.bus.open_history() if e.uid > since_uid]
        return {"events": [_event_json(e) for e in out[:limit]]}

    # -- planning ---------------------------------------------------------------

    @app.post("/api/v1/ars")
    async def submit_ar(body: dict, acct: Account = Depends(account)):
        task_id = body.get("task_id", "")
        if acct.role not in OPERATOR_ROLES and task_id not in acct.tasks:
            raise HTTPException(403, f"{acct.user} may not request {task_id}")
        try:
            return system.planner.submit_ar(
                task_id=task_id, requester=acct.group,
                window_start_ms=int(body["window_start_ms"]),
                window_end_ms=int(body["window_end_ms"]),
                args=body.get("args") or {},
                priority=body.get("priority"))
        except (UnauthorizedTask, NotOwner) as exc:
            raise HTTPException(403, str(exc))
        except GroundSegmentError as exc:
            raise HTTPException(400, str(exc))
        except KeyError as exc:
            raise HTTPException(400, f"missing field {exc}")

    @app.delete("/api/v1/ars/{ar_id}")
    async def cancel_ar(ar_id: str, acct: Account = Depends(account)):
        try:
            state = system.planner.cancel_ar(
                ar_id, acct.group, operator=acct.role in OPERATOR_ROLES)
        except NotOwner as exc:
            raise HTTPException(403, str(exc))
        except GroundSegmentError as exc:
            raise HTTPException(409, str(exc))
        return {"ar_id": ar_id, "state": state}

    @app.post("/api/v1/uers")
    async def submit_uer(body: dict, acct: Account = Depends(account)):
        uer_task = body.get("uer_task_id", "")
        if acct.role not in OPERATOR_ROLES and uer_task not in acct.uers:
            raise HTTPException(403, f"{acct.user} may not request {uer_task}")
        from .planning import UserExecutionRequest
        uer = UserExecutionRequest(
            uer_id=f"uer-{secrets.token_hex(4)}",
            target_ar_id=body.get("target_ar_id", ""),
            uer_task_id=uer_task, requester=acct.group,
            args=body.get("args") or {},
            submitted_ms=system.clock.now_ms())
        try:
            return system.planner.submit_uer(uer)
        except (NotOwner,) as exc:
            raise HTTPException(403, str(exc))
        except GroundSegmentError as exc:
            raise HTTPException(409, str(exc))

    @app.get("/api/v1/schedule")
    async def schedule(acct: Account = Depends(account)):
        visibility = "full" if acct.role in OPERATOR_ROLES else acct.visibility
        return {"version": system.planner.schedule.version,
                "entries": system.planner.view_schedule(acct.group, visibility)}

    @app.get("/api/v1/notices")
    async def notices(acct: Account = Depends(account)):
        own = [n for n in system.planner.notices
               if acct.role in OPERATOR_ROLES or n.get("requester") == acct.group]
        return {"notices": own}

    # -- status and displays -----------------------------------------------------

    @app.get("/api/v1/status")
    async def status(acct: Account = Depends(account)):
        return {
            "time_ms": system.clock.now_ms(),
            "schedule_version": system.planner.schedule.version,
            "executor": system.executor.status(),
            "counters": dict(store.counters),
        }

    @app.get("/api/v1/overview")
    async def overview(acct: Account = Depends(account)):
        """Auditors and operators: open cross-experiment resource overview."""
        if acct.role not in OPERATOR_ROLES and acct.role != "ora":
            raise HTTPException(403, "auditor or operator role required")
        experiments = {}
        for exp_id, dp in system.separation.processors.items():
            experiments[exp_id] = {
                "enabled": dp.enabled,
                "mode": dp.cfg.mode,
                "intervals": list(dp.intervals),
            }
        open_events = system.bus.open_history()[-50:]
        return {
            "time_ms": system.clock.now_ms(),
            "experiments": experiments,
            "csm": system.csm.status(),
            "executor": system.executor.status(),
            "schedule": system.planner.view_schedule("", "full"),
            "recent_events": [_event_json(e) for e in open_events],
        }

    # -- operator maintenance ------------------------------------------------------

    @app.post("/api/v1/limits/{param_id}")
    async def override_limit(param_id: str, body: dict,
                             acct: Account = Depends(account)):
        require_operator(acct)
        if body.get("disable"):
            new = "disable"
        else:
            try:
                new = LimitDef(param_id=param_id,
                               soft_low=float(body["soft_low"]),
                               soft_high=float(body["soft_high"]),
                               hard_low=float(body["hard_low"]),
                               hard_high=float(body["hard_high"]))
                new.check()
            except KeyError as exc:
                raise HTTPException(400, f"missing field {exc}")
            except ValidationError as exc:
                raise HTTPException(400, str(exc))
        try:
            system.apply_limit_override(param_id, new, actor=acct.user)
        except GroundSegmentError as exc:
            raise HTTPException(400, str(exc))
        return {"param_id": param_id, "applied": True}

    @app.post("/api/v1/rules/{rule_id}")
    async def toggle_rule(rule_id: str, body: dict,
                          acct: Account = Depends(account)):
        require_operator(acct)
        enabled = bool(body.get("enabled", True))
        changed = system.dispatcher.set_enabled(rule_id, enabled)
        if not changed:
            raise HTTPException(404, f"unknown rule {rule_id}")
        system.audit.record(acct.user, "rule-toggle",
                            {"rule_id": rule_id, "enabled": enabled})
        return {"rule_id": rule_id, "enabled": enabled}

    return app
