"""Trace events shared by the runtime components and the harness."""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, TextIO

from .envelope import ZERO_ID, Envelope


class EventKind(enum.Enum):
    PUBLISHED = "Published"
    RELAYED = "Relayed"
    SUPPRESSED_DUPLICATE = "SuppressedDuplicate"
    DELIVERED = "Delivered"
    HANDLED = "Handled"
    IGNORED = "Ignored"
    EXPORTED = "Exported"
    IMPORTED = "Imported"
    DROPPED_TTL = "DroppedTtl"
    DROPPED_SELF_ORIGIN = "DroppedSelfOrigin"
    DECODE_ERROR = "DecodeError"


@dataclass(frozen=True)
class TraceEvent:
    ordinal: int
    kind: EventKind
    me_id: str
    actor: str
    id: bytes
    ttl: int
    payload_size: int

    def to_line(self) -> str:
        return "\t".join(
            (str(self.ordinal), self.kind.value, self.me_id, self.actor,
             self.id.hex(), str(self.ttl), str(self.payload_size))
        )

    @classmethod
    def from_line(cls, line: str) -> "TraceEvent":
        ordinal, kind, me_id, actor, hex_id, ttl, size = line.rstrip("\n").split("\t")
        return cls(int(ordinal), EventKind(kind), me_id, actor, bytes.fromhex(hex_id), int(ttl), int(size))


@dataclass(frozen=True)
class Derivation:
    """One translation step: `child` was sent out by `translator` in reaction to `parent`."""

    translator: str
    parent: Envelope
    child: Envelope


class NullTracer:
    def record(self, kind, me_id, actor, envelope=None, size=0):
        pass

    def record_derivation(self, translator, parent, child):
        pass


NULL_TRACER = NullTracer()


@dataclass
class Trace:
    """Append-only, thread-safe event recorder.

    Besides the flat events it keeps the first published copy of every
    envelope and the translator derivations, which property checks use to
    inspect payloads and lineages. Neither survives a round trip through
    the tab-separated file format.
    """

    events: List[TraceEvent] = field(default_factory=list)
    envelopes: Dict[bytes, Envelope] = field(default_factory=dict)
    derivations: List[Derivation] = field(default_factory=list)
    default_ttl: Optional[int] = None

    def __post_init__(self):
        self._lock = threading.Lock()

    def record(self, kind: EventKind, me_id: str, actor: str, envelope: Optional[Envelope] = None, size: int = 0):
        with self._lock:
            if envelope is None:
                event = TraceEvent(len(self.events), kind, me_id, actor, ZERO_ID, 0, size)
            else:
                event = TraceEvent(len(self.events), kind, me_id, actor, envelope.id, envelope.ttl, len(envelope.payload))
                if kind is EventKind.PUBLISHED:
                    self.envelopes.setdefault(envelope.id, envelope)
            self.events.append(event)

    def record_derivation(self, translator: str, parent: Envelope, child: Envelope):
        with self._lock:
            self.derivations.append(Derivation(translator, parent, child))

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(list(self.events))

    def of_kind(self, *kinds: EventKind) -> List[TraceEvent]:
        return [e for e in self.events if e.kind in kinds]

    def to_text(self) -> str:
        return "".join(e.to_line() + "\n" for e in self.events)

    def write(self, fp: TextIO):
        fp.write(self.to_text())

    @classmethod
    def read(cls, fp: Iterable[str]) -> "Trace":
        return cls(events=[TraceEvent.from_line(line) for line in fp if line.strip()])
