"""Need-to-see separation: per-experiment DataProcessors.

Each experiment gets a DataProcessor that copies selected open telemetry
into its own ``users.<experiment>`` subtree.  Content separation comes from
the selectors; temporal separation from enable/disable transitions driven
by the task-boundary GOPs.  Mixed-mode processors additionally copy a
``persistent`` selector set at all times.

A sample is copied into the temporary subtree iff its timestamp falls in a
half-open [enable, disable) interval of the processor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import (DuplicateExperiment, SelectorTouchesRestricted,
                     UnknownProcessor, ValidationError)
from .mib import Classification, Mib
from .telemetry import Sample, TelemetryStore, join_path


@dataclass(frozen=True)
class ParamSelector:
    """Set of exact param ids and prefix wildcards like ``sat.mpm1.*``."""

    patterns: tuple = ()

    def matches(self, param_id: str) -> bool:
        for pat in self.patterns:
            if pat.endswith(".*"):
                if param_id.startswith(pat[:-1]):
                    return True
            elif param_id == pat:
                return True
        return False

    def validate_open_only(self, mib: Mib, where: str) -> None:
        for pid, pdef in mib.parameters.items():
            if pdef.classification is Classification.RESTRICTED and self.matches(pid):
                raise SelectorTouchesRestricted(
                    f"{where}: selector matches restricted parameter {pid}")


@dataclass(frozen=True)
class DataProcessorConfig:
    experiment_id: str
    temporary: ParamSelector
    persistent: ParamSelector = ParamSelector()
    mode: str = "simple"  # "simple" | "mixed"

    @property
    def target_root(self) -> str:
        return f"users.{self.experiment_id}"

    def check(self, mib: Mib) -> None:
        if self.mode not in ("simple", "mixed"):
            raise ValidationError(f"{self.experiment_id}: bad processor mode {self.mode}")
        if self.mode == "simple" and self.persistent.patterns:
            raise ValidationError(
                f"{self.experiment_id}: simple-mode processor must have no persistent set")
        if self.mode == "mixed":
            overlap = set(self.persistent.patterns) & set(self.temporary.patterns)
            if overlap:
                raise ValidationError(
                    f"{self.experiment_id}: persistent/temporary selectors overlap: {overlap}")
        self.temporary.validate_open_only(mib, self.experiment_id)
        self.persistent.validate_open_only(mib, self.experiment_id)


@dataclass
class DataProcessor:
    cfg: DataProcessorConfig
    # closed half-open copy windows [(start_ms, end_ms|None), ...]
    intervals: list = field(default_factory=list)

    @property
    def enabled(self) -> bool:
        return bool(self.intervals) and self.intervals[-1][1] is None

    @property
    def last_transition(self) -> Optional[int]:
        if not self.intervals:
            return None
        start, end = self.intervals[-1]
        return start if end is None else end

    def copies_temporary_at(self, t_ms: int) -> bool:
        return any(start <= t_ms and (end is None or t_ms < end)
                   for start, end in self.intervals)


class SeparationRegistry:
    """Registry of all DataProcessors; sits on the user-segment ingest path."""

    def __init__(self, mib: Mib, store: TelemetryStore, clock, audit,
                 on_internal_fault: Optional[Callable[[str], None]] = None):
        self.mib = mib
        self.store = store
        self.clock = clock
        self.audit = audit
        self.on_internal_fault = on_internal_fault or (lambda msg: None)
        self.processors: dict[str, DataProcessor] = {}
        self.acl_grants: dict[str, str] = {}  # experiment_id -> granted subtree

    def create_processor(self, cfg: DataProcessorConfig) -> DataProcessor:
        if cfg.experiment_id in self.processors:
            raise DuplicateExperiment(cfg.experiment_id)
        cfg.check(self.mib)
        proc = DataProcessor(cfg=cfg)
        self.processors[cfg.experiment_id] = proc
        self.acl_grants[cfg.experiment_id] = cfg.target_root
        self.audit.record("system", "processor-created", {"experiment": cfg.experiment_id})
        return proc

    def _get(self, experiment_id: str) -> DataProcessor:
        try:
            return self.processors[experiment_id]
        except KeyError:
            raise UnknownProcessor(experiment_id) from None

    def enable(self, experiment_id: str, commanded_by: str = "manual") -> DataProcessor:
        proc = self._get(experiment_id)
        if not proc.enabled:
            proc.intervals.append((self.clock.now_ms(), None))
        self.audit.record(commanded_by, "processor-enable",
                          {"experiment": experiment_id, "ts": self.clock.now_ms()})
        return proc

    def disable(self, experiment_id: str, commanded_by: str = "manual") -> DataProcessor:
        proc = self._get(experiment_id)
        if proc.enabled:
            start, _ = proc.intervals[-1]
            proc.intervals[-1] = (start, self.clock.now_ms())
        self.audit.record(commanded_by, "processor-disable",
                          {"experiment": experiment_id, "ts": self.clock.now_ms()})
        return proc

    def route(self, sample: Sample) -> list[tuple]:
        """Copy one open sample into every matching experiment subtree."""
        if sample.classification is not Classification.OPEN:
            # defense in depth: restricted data must never get this far
            self.on_internal_fault(
                f"restricted sample reached data separation: {sample.param_id}")
            return []
        placed = []
        for experiment_id, proc in self.processors.items():
            cfg = proc.cfg
            if cfg.mode == "mixed" and cfg.persistent.matches(sample.param_id):
                bucket = "persistent"
            elif cfg.temporary.matches(sample.param_id) and \
                    proc.copies_temporary_at(sample.timestamp):
                bucket = "temporary"
            else:
                continue
            path = join_path(cfg.target_root, bucket, sample.param_id)
            self.store.place_copy(sample, path)
            placed.append((experiment_id, path))
        return placed
