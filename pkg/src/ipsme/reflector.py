"""Reflector pairs: proxies in two messaging environments joined by a framed link.

An endpoint listens in its local environment, exports envelopes accepted by
its filter to the counterpart (spending one hop of ttl), and republishes
envelopes arriving from the counterpart locally. Ids and reply_to never
change across a reflection, which is what lets broker dedup terminate
propagation over cyclic graphs.
"""

from __future__ import annotations

import enum
import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

from . import envelope as env
from .broker import MessagingEnvironment, SubscriberHandle
from .dedup import DEFAULT_CAPACITY, DedupCache, Freshness
from .envelope import Envelope
from .scheduler import InlineScheduler
from .trace import NULL_TRACER, EventKind
from .transport import Link, LinkError, LinkFailed, memory_link_pair

logger = logging.getLogger(__name__)

MAX_CONSECUTIVE_DECODE_ERRORS = 3


class FilterMode(enum.Enum):
    MATCH_ALL = "MatchAll"
    PREFIX_ANY = "PrefixAny"


@dataclass(frozen=True)
class Filter:
    mode: FilterMode = FilterMode.MATCH_ALL
    prefixes: Tuple[bytes, ...] = ()

    @classmethod
    def match_all(cls) -> "Filter":
        return cls(FilterMode.MATCH_ALL)

    @classmethod
    def prefix_any(cls, prefixes: Sequence) -> "Filter":
        return cls(FilterMode.PREFIX_ANY, tuple(p.encode() if isinstance(p, str) else bytes(p) for p in prefixes))

    def matches(self, payload: bytes) -> bool:
        if self.mode is FilterMode.MATCH_ALL:
            return True
        return any(payload.startswith(p) for p in self.prefixes)


MATCH_ALL = Filter.match_all()


class ExportOutcome(enum.Enum):
    EXPORTED = "Exported"
    FILTERED_OUT = "FilteredOut"
    TTL_EXHAUSTED = "TtlExhausted"
    SELF_ORIGIN_DROPPED = "SelfOriginDropped"
    LINK_BROKEN = "LinkBroken"


class ImportOutcome(enum.Enum):
    REPUBLISHED = "Republished"
    DUPLICATE_DROPPED = "DuplicateDropped"
    DECODE_ERROR = "DecodeError"
    LINK_BROKEN = "LinkBroken"


class PairState(enum.Enum):
    LIVE = "live"
    BROKEN = "broken"


class ReflectorEndpoint:
    """The proxy participant on one side of a reflector pair."""

    def __init__(
        self,
        name: str,
        me: MessagingEnvironment,
        export_filter: Filter,
        link: Link,
        *,
        dedup_capacity: int = DEFAULT_CAPACITY,
        scheduler=None,
        tracer=NULL_TRACER,
        unsafe_disable_dedup: bool = False,
    ):
        self.name = name
        self.me = me
        self.export_filter = export_filter
        self.link = link
        self.ingress_dedup = DedupCache(dedup_capacity)
        self.imported = DedupCache(dedup_capacity)
        self.dedup_enabled = not unsafe_disable_dedup
        self.scheduler = scheduler or InlineScheduler()
        self.tracer = tracer
        self.pair: Optional[ReflectorPair] = None
        self.consecutive_decode_errors = 0
        self.exported_count = 0
        self.imported_count = 0
        self._link_lane = name + "#link"
        self.handle: Optional[SubscriberHandle] = None

    def __repr__(self):
        return "ReflectorEndpoint(%r)" % self.name

    def attach(self):
        self.link.on_frame(self._on_frame)
        self.handle = self.me.subscribe(self._on_envelope, name=self.name)

    @property
    def broken(self) -> bool:
        return self.pair is not None and self.pair.state is PairState.BROKEN

    def _on_envelope(self, e: Envelope):
        self.scheduler.post(self.name, self.on_local_envelope, e)

    def _on_frame(self, data: bytes):
        # MemoryLink already pumps on our link lane; SocketLink posts there too
        self.on_link_frame(data)

    def on_local_envelope(self, e: Envelope) -> ExportOutcome:
        me_id = self.me.me_id
        if self.broken:
            return ExportOutcome.LINK_BROKEN
        if not self.export_filter.matches(e.payload):
            self.tracer.record(EventKind.IGNORED, me_id, self.name, e)
            return ExportOutcome.FILTERED_OUT
        if self.dedup_enabled and e.id in self.imported:
            self.tracer.record(EventKind.DROPPED_SELF_ORIGIN, me_id, self.name, e)
            return ExportOutcome.SELF_ORIGIN_DROPPED
        if e.ttl < 1:
            self.tracer.record(EventKind.DROPPED_TTL, me_id, self.name, e)
            return ExportOutcome.TTL_EXHAUSTED
        hop = e.with_ttl(e.ttl - 1)
        try:
            self.link.send(env.encode(hop))
        except LinkError as exc:
            logger.warning("%s: link write failed (%s), pair broken", self.name, exc)
            self._break()
            return ExportOutcome.LINK_BROKEN
        self.exported_count += 1
        self.tracer.record(EventKind.EXPORTED, me_id, self.name, hop)
        return ExportOutcome.EXPORTED

    def on_link_frame(self, data: bytes) -> ImportOutcome:
        me_id = self.me.me_id
        if self.broken:
            return ImportOutcome.LINK_BROKEN
        try:
            e = env.decode(data)
        except env.FrameError as exc:
            self.consecutive_decode_errors += 1
            logger.warning("%s: bad frame (%s), %d in a row", self.name, exc, self.consecutive_decode_errors)
            self.tracer.record(EventKind.DECODE_ERROR, me_id, self.name, None, size=len(data))
            if self.consecutive_decode_errors >= MAX_CONSECUTIVE_DECODE_ERRORS:
                self._break()
            return ImportOutcome.DECODE_ERROR
        self.consecutive_decode_errors = 0
        if self.dedup_enabled and self.ingress_dedup.check_and_insert(e.id) is Freshness.DUPLICATE:
            self.tracer.record(EventKind.SUPPRESSED_DUPLICATE, me_id, self.name, e)
            return ImportOutcome.DUPLICATE_DROPPED
        self.imported.add(e.id)
        self.imported_count += 1
        self.tracer.record(EventKind.IMPORTED, me_id, self.name, e)
        self.me.publish(e)
        return ImportOutcome.REPUBLISHED

    def _break(self):
        if self.pair is not None:
            self.pair.mark_broken()

    def detach(self):
        if self.handle is not None:
            try:
                self.me.unsubscribe(self.handle)
            except KeyError:
                pass
            self.handle = None


@dataclass
class ReflectorPair:
    a: ReflectorEndpoint
    b: ReflectorEndpoint
    state: PairState = PairState.LIVE
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def live(self) -> bool:
        return self.state is PairState.LIVE

    @property
    def mes(self) -> Tuple[str, str]:
        return self.a.me.me_id, self.b.me.me_id

    @property
    def endpoints(self) -> List[ReflectorEndpoint]:
        return [self.a, self.b]

    def mark_broken(self):
        with self._lock:
            if self.state is PairState.BROKEN:
                return
            self.state = PairState.BROKEN
        logger.warning("reflector pair %s<->%s broken", *self.mes)
        # local environments are unaffected; the endpoints just stop listening
        for ep in self.endpoints:
            ep.detach()
        self.a.link.close()
        self.b.link.close()


LinkFactory = Callable[..., Tuple[Link, Link]]


def endpoint_name(local: str, remote: str) -> str:
    return "reflector:%s->%s" % (local, remote)


def connect_pair(
    me_a: MessagingEnvironment,
    me_b: MessagingEnvironment,
    filter_ab: Filter = MATCH_ALL,
    filter_ba: Filter = MATCH_ALL,
    transport: LinkFactory = memory_link_pair,
    *,
    dedup_capacity: int = DEFAULT_CAPACITY,
    scheduler=None,
    tracer=NULL_TRACER,
    unsafe_disable_dedup: bool = False,
) -> ReflectorPair:
    """Bridge two environments. `filter_ab` selects what crosses from A to B."""
    if me_a is me_b or me_a.me_id == me_b.me_id:
        raise ValueError("a reflector pair must bridge two distinct environments")
    scheduler = scheduler or InlineScheduler()
    name_a = endpoint_name(me_a.me_id, me_b.me_id)
    name_b = endpoint_name(me_b.me_id, me_a.me_id)
    try:
        link_a, link_b = transport(scheduler, name_a + "#link", name_b + "#link")
    except LinkFailed:
        raise
    except OSError as exc:
        raise LinkFailed(str(exc)) from exc
    common = dict(dedup_capacity=dedup_capacity, scheduler=scheduler, tracer=tracer,
                  unsafe_disable_dedup=unsafe_disable_dedup)
    a = ReflectorEndpoint(name_a, me_a, filter_ab, link_a, **common)
    b = ReflectorEndpoint(name_b, me_b, filter_ba, link_b, **common)
    pair = ReflectorPair(a, b)
    a.pair = b.pair = pair
    a.attach()
    b.attach()
    return pair
