"""Boundary between the control segment and the user segment.

Every sample leaving the control segment crosses two independent choke
points: the TM splitter (drops anything not under ``data.open``) and the
network-level packet filter (drops any frame whose classification flag is
not open, or that is malformed, and raises an alarm — it only ever sees
restricted traffic if the splitter failed).

Frame layout (big-endian, documented in docs/wire.md):
  magic 0x47 0x53 | version u8=1 | classification u8 (0 open / 1 restricted)
  | param_id: u16 length + UTF-8 | timestamp_ms i64 | raw f64 | engineering f64
  | validity u8 (0 valid / 1 stale / 2 invalid)
"""

from __future__ import annotations

import struct
from typing import Callable, Optional

from .errors import ParseError
from .mib import Classification
from .telemetry import Sample, under

MAGIC = b"\x47\x53"
VERSION = 1
_VALIDITY_CODE = {"valid": 0, "stale": 1, "invalid": 2}
_VALIDITY_NAME = {v: k for k, v in _VALIDITY_CODE.items()}


def encode_frame(sample: Sample) -> bytes:
    pid = sample.param_id.encode("utf-8")
    return b"".join([
        MAGIC,
        struct.pack(">BB", VERSION,
                    0 if sample.classification is Classification.OPEN else 1),
        struct.pack(">H", len(pid)), pid,
        struct.pack(">qdd", sample.timestamp, sample.raw, sample.engineering),
        struct.pack(">B", _VALIDITY_CODE[sample.validity]),
    ])


def decode_frame(frame: bytes) -> dict:
    if len(frame) < 6 or frame[:2] != MAGIC:
        raise ParseError("bad magic")
    version, cls_flag = struct.unpack_from(">BB", frame, 2)
    if version != VERSION:
        raise ParseError(f"unsupported frame version {version}")
    if cls_flag not in (0, 1):
        raise ParseError(f"bad classification flag {cls_flag}")
    (pid_len,) = struct.unpack_from(">H", frame, 4)
    end = 6 + pid_len
    if len(frame) != end + 25:
        raise ParseError("truncated frame")
    try:
        param_id = frame[6:end].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"undecodable param id: {exc}") from None
    timestamp, raw, engineering = struct.unpack_from(">qdd", frame, end)
    (validity_code,) = struct.unpack_from(">B", frame, end + 24)
    if validity_code not in _VALIDITY_NAME:
        raise ParseError(f"bad validity code {validity_code}")
    return {
        "param_id": param_id,
        "classification": Classification.OPEN if cls_flag == 0 else Classification.RESTRICTED,
        "timestamp": timestamp,
        "raw": raw,
        "engineering": engineering,
        "validity": _VALIDITY_NAME[validity_code],
    }


class TmSplitter:
    """First choke point: forwards only samples rooted at data.open."""

    def __init__(self, forward: Callable[[Sample], None]):
        self.forward = forward
        self.restricted_blocked = 0
        self.forwarded = 0

    def feed(self, sample: Sample) -> Optional[Sample]:
        if under(sample.path, "data.open"):
            self.forwarded += 1
            self.forward(sample)
            return sample
        self.restricted_blocked += 1
        return None


class PacketFilter:
    """Second, network-level choke point over encoded frames."""

    def __init__(self, on_alarm: Callable[[str], None]):
        self.on_alarm = on_alarm
        self.dropped = 0
        self.forwarded = 0

    def filter(self, frame: bytes) -> Optional[bytes]:
        """Forward open frames bit-identically; drop + alarm everything else."""
        try:
            decoded = decode_frame(frame)
        except ParseError as exc:
            self.dropped += 1
            self.on_alarm(f"malformed frame at segment boundary: {exc}")
            return None
        if decoded["classification"] is not Classification.OPEN:
            self.dropped += 1
            self.on_alarm(f"restricted frame reached packet filter: {decoded['param_id']}")
            return None
        self.forwarded += 1
        return frame
