"""User-segment telemetry copy, fed exclusively through the boundary.

Everything the gateway serves comes from this store.  It receives decoded
wire frames (splitter -> packet filter -> here), rebuilds the tree path and
feeds its own taps (data-processor routing lives on this side, since all
need-to-see subtrees are open data by construction).
"""

from __future__ import annotations

from .mib import Classification, Mib
from .telemetry import Sample, TelemetryStore, join_path


class UserSegmentStore(TelemetryStore):

    def receive(self, decoded: dict) -> Sample:
        """Store one decoded open frame from the boundary link."""
        param_id = decoded["param_id"]
        cls = decoded["classification"]
        kind = "unprocessed" if param_id in self.mib.parameters else "derived"
        sample = Sample(
            param_id=param_id,
            path=join_path("data", cls.value, kind, param_id),
            timestamp=decoded["timestamp"],
            raw=decoded["raw"],
            engineering=decoded["engineering"],
            validity=decoded["validity"],
            classification=cls,
        )
        return self._store(sample)
