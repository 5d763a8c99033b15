"""Counters derived from a trace."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Optional

from ..trace import EventKind, Trace

ENDPOINT_PREFIX = "reflector:"


@dataclass
class MeMetrics:
    relayed: int = 0
    suppressed: int = 0
    delivered: int = 0


@dataclass
class Metrics:
    per_me: Dict[str, MeMetrics] = field(default_factory=dict)
    link_frames: int = 0
    frames_by_edge: Dict[str, int] = field(default_factory=dict)
    max_ttl_depth: int = 0
    events: int = 0
    kinds: Dict[str, int] = field(default_factory=dict)

    @property
    def relayed(self) -> int:
        return sum(m.relayed for m in self.per_me.values())

    @property
    def suppressed(self) -> int:
        return sum(m.suppressed for m in self.per_me.values())

    @property
    def delivered(self) -> int:
        return sum(m.delivered for m in self.per_me.values())

    def rows(self):
        """Flat (scope, name, value) rows for delimited reports."""
        yield ("run", "events_to_quiescence", self.events)
        yield ("run", "link_frames", self.link_frames)
        yield ("run", "max_ttl_depth", self.max_ttl_depth)
        for me_id, m in self.per_me.items():
            yield ("me:" + me_id, "relayed", m.relayed)
            yield ("me:" + me_id, "suppressed", m.suppressed)
            yield ("me:" + me_id, "delivered", m.delivered)
        for edge, n in self.frames_by_edge.items():
            yield ("edge:" + edge, "frames", n)
        for kind, n in self.kinds.items():
            yield ("kind", kind, n)


def edge_of(actor: str) -> Optional[str]:
    """'reflector:A->B' -> 'A->B'."""
    if actor.startswith(ENDPOINT_PREFIX):
        return actor[len(ENDPOINT_PREFIX):]
    return None


def report_metrics(trace: Trace, default_ttl: Optional[int] = None) -> Metrics:
    m = Metrics()
    kinds: Counter = Counter()
    published_ttls = []
    min_ttl = None
    for ev in trace.events:
        kinds[ev.kind.value] += 1
        if ev.kind is EventKind.DECODE_ERROR:
            continue
        min_ttl = ev.ttl if min_ttl is None else min(min_ttl, ev.ttl)
        if ev.kind is EventKind.PUBLISHED:
            published_ttls.append(ev.ttl)
        # broker events carry the ME id as actor
        if ev.actor == ev.me_id:
            me = m.per_me.setdefault(ev.me_id, MeMetrics())
            if ev.kind is EventKind.RELAYED:
                me.relayed += 1
            elif ev.kind is EventKind.SUPPRESSED_DUPLICATE:
                me.suppressed += 1
        elif ev.kind is EventKind.DELIVERED:
            m.per_me.setdefault(ev.me_id, MeMetrics()).delivered += 1
        elif ev.kind is EventKind.EXPORTED:
            m.link_frames += 1
            edge = edge_of(ev.actor) or ev.me_id
            m.frames_by_edge[edge] = m.frames_by_edge.get(edge, 0) + 1
    start = default_ttl if default_ttl is not None else trace.default_ttl
    if start is None and published_ttls:
        start = max(published_ttls)
    if start is not None and min_ttl is not None:
        m.max_ttl_depth = max(0, start - min_ttl)
    m.events = len(trace.events)
    m.kinds = dict(sorted(kinds.items()))
    m.per_me = dict(sorted(m.per_me.items()))
    m.frames_by_edge = dict(sorted(m.frames_by_edge.items()))
    return m
