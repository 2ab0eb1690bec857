"""Append-only run tracing and replay.

A trace is a JSONL file whose first line is a format-version header and
whose remaining lines are events, one per line, in the order they were
recorded. Events carry full message payloads and backend request/response
bodies so that a run can be re-executed from its trace alone.
"""
from __future__ import annotations

import copy
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path

from ._util import canonical_json, utc_now_iso
from .errors import NestflowError

logger = logging.getLogger(__name__)

TRACE_FORMAT_VERSION = 1

EVENT_KINDS = frozenset({
    "flow_start",
    "flow_end",
    "message_in",
    "message_out",
    "backend_call",
    "backend_response",
    "state_update",
    "warning",
})

# Body keys holding identifiers that get renumbered during normalization.
_ID_KEYS = ("id", "created_by", "instance_id")
_TIME_KEYS = ("timestamp", "created_at", "stored_at")


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    timestamp: str
    instance_id: str
    kind: str
    body: dict = field(default_factory=dict)

    def to_line(self) -> str:
        return canonical_json({
            "seq": self.seq,
            "timestamp": self.timestamp,
            "instance_id": self.instance_id,
            "kind": self.kind,
            "body": self.body,
        })


class TraceSink:
    """File-backed event sink. Assigns seq numbers and flushes on flow_end."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("w", encoding="utf-8")
        self._fh.write(canonical_json({"trace_format": TRACE_FORMAT_VERSION}) + "\n")
        self._seq = 0
        self._lock = threading.Lock()

    def emit(self, kind: str, instance_id: str, body: dict | None = None) -> TraceEvent:
        if kind not in EVENT_KINDS:
            raise NestflowError(f"unknown trace event kind {kind!r}")
        with self._lock:
            self._seq += 1
            event = TraceEvent(self._seq, utc_now_iso(), instance_id, kind, body or {})
            self._write(event)
        return event

    def record(self, event: TraceEvent) -> None:
        if event.kind not in EVENT_KINDS:
            raise NestflowError(f"unknown trace event kind {event.kind!r}")
        with self._lock:
            if event.seq <= self._seq:
                raise NestflowError(f"event seq {event.seq} is not monotone (last was {self._seq})")
            self._seq = event.seq
            self._write(event)

    def _write(self, event: TraceEvent) -> None:
        self._fh.write(event.to_line() + "\n")
        if event.kind == "flow_end":
            self._fh.flush()

    def close(self) -> None:
        self._fh.flush()
        self._fh.close()

    def __enter__(self) -> "TraceSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class MemoryTraceSink:
    """In-process sink used by tests and library callers."""

    def __init__(self):
        self.events: list[TraceEvent] = []
        self._seq = 0
        self._lock = threading.Lock()

    def emit(self, kind: str, instance_id: str, body: dict | None = None) -> TraceEvent:
        if kind not in EVENT_KINDS:
            raise NestflowError(f"unknown trace event kind {kind!r}")
        with self._lock:
            self._seq += 1
            event = TraceEvent(self._seq, utc_now_iso(), instance_id, kind, body or {})
            self.events.append(event)
        return event

    def record(self, event: TraceEvent) -> None:
        with self._lock:
            if event.seq <= self._seq:
                raise NestflowError(f"event seq {event.seq} is not monotone (last was {self._seq})")
            self._seq = event.seq
            self.events.append(event)

    def close(self) -> None:
        pass


class NullTraceSink:
    """Discards events. Used when a run is not being traced."""

    def emit(self, kind: str, instance_id: str, body: dict | None = None) -> None:
        if kind not in EVENT_KINDS:
            raise NestflowError(f"unknown trace event kind {kind!r}")

    def record(self, event: TraceEvent) -> None:
        pass

    def close(self) -> None:
        pass


def record(sink, event: TraceEvent) -> None:
    """Append one event to a sink."""
    sink.record(event)


def read_trace(path: str | Path) -> list[TraceEvent]:
    """Load a trace file, checking the version header."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise NestflowError(f"trace file {path} is empty")
    header = json.loads(lines[0])
    version = header.get("trace_format")
    if version != TRACE_FORMAT_VERSION:
        raise NestflowError(f"trace file {path} has unsupported format version {version!r}")
    events = []
    for line in lines[1:]:
        raw = json.loads(line)
        events.append(TraceEvent(raw["seq"], raw["timestamp"], raw["instance_id"], raw["kind"], raw["body"]))
    return events


def normalize_trace(events: list[TraceEvent]) -> list[dict]:
    """Rewrite ids to first-occurrence ordinals and drop timestamps.

    Two runs of the same flow on the same input are equivalent iff their
    normalized traces are equal, regardless of process-level id counters
    or wall-clock times.
    """
    mapping: dict[str, str] = {}

    def norm_id(value: str) -> str:
        if value not in mapping:
            mapping[value] = f"#{len(mapping) + 1}"
        return mapping[value]

    def walk(node):
        if isinstance(node, dict):
            # Visit keys in sorted order so ordinal assignment does not
            # depend on dict insertion order (in-memory events vs events
            # re-read from disk, where json.dumps sorted the keys).
            out = {}
            for key in sorted(node):
                value = node[key]
                if key in _TIME_KEYS:
                    continue
                if key in _ID_KEYS and isinstance(value, str):
                    out[key] = norm_id(value)
                elif key == "parents" and isinstance(value, list):
                    out[key] = [norm_id(v) for v in value]
                else:
                    out[key] = walk(value)
            return out
        if isinstance(node, list):
            return [walk(v) for v in node]
        return node

    normalized = []
    for position, event in enumerate(events, start=1):
        normalized.append({
            "seq": position,
            "kind": event.kind,
            "instance_id": norm_id(event.instance_id),
            "body": walk(copy.deepcopy(event.body)),
        })
    return normalized


def replay_backend(trace_path: str | Path):
    """Build a backend that answers requests from a recorded trace.

    Responses are keyed by the canonical request fingerprint, so replay
    does not depend on call order; an unseen request raises a divergence
    error at the first mismatching call.
    """
    from .backends import ScriptedBackend

    keyed: dict[str, str] = {}
    for event in read_trace(trace_path):
        if event.kind == "backend_response":
            keyed[event.body["fingerprint"]] = event.body["response"]
    logger.debug("replay backend loaded %d responses from %s", len(keyed), trace_path)
    return ScriptedBackend(keyed=keyed)
