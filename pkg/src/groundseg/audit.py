"""Append-only audit trail for every state-changing action."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class AuditEntry:
    timestamp: int
    actor: str
    action: str
    detail: dict
    digest: str


class AuditLog:
    def __init__(self, clock, path: Optional[str] = None):
        self._clock = clock
        self._entries: list[AuditEntry] = []
        self._path = path

    def record(self, actor: str, action: str, detail: dict) -> AuditEntry:
        payload = json.dumps(detail, sort_keys=True, default=str)
        entry = AuditEntry(
            timestamp=self._clock.now_ms(),
            actor=actor,
            action=action,
            detail=detail,
            digest=hashlib.sha256(payload.encode()).hexdigest()[:16],
        )
        self._entries.append(entry)
        if self._path:
            with open(self._path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "ts": entry.timestamp, "actor": actor,
                    "action": action, "detail": detail, "digest": entry.digest,
                }, default=str) + "\n")
        return entry

    def entries(self, action: Optional[str] = None) -> list[AuditEntry]:
        if action is None:
            return list(self._entries)
        return [e for e in self._entries if e.action == action]
