"""The messaging environment: a content-agnostic broadcast relay with ingress dedup."""

from __future__ import annotations

import enum
import itertools
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Optional

from .dedup import DEFAULT_CAPACITY, DedupCache, Freshness
from .envelope import Envelope, EnvelopeError
from .trace import NULL_TRACER, EventKind

logger = logging.getLogger(__name__)

Sink = Callable[[Envelope], None]


class PublishOutcome(enum.Enum):
    RELAYED = "Relayed"
    SUPPRESSED_DUPLICATE = "SuppressedDuplicate"


class UnknownHandle(KeyError):
    pass


class SinkClosed(Exception):
    """Raised by a sink whose receiving end is gone; the broker drops the subscription."""


_handle_ids = itertools.count(1)


class SubscriberHandle:
    __slots__ = ("token", "name")

    def __init__(self, name: str):
        self.token = next(_handle_ids)
        self.name = name

    def __repr__(self):
        return "SubscriberHandle(%d, %s)" % (self.token, self.name)


@dataclass
class Counters:
    relayed: int = 0
    suppressed: int = 0
    delivered: int = 0


class MessagingEnvironment:
    """Relays every fresh envelope to every subscriber registered at publish time.

    The payload is never looked at. Publishers that are also subscribers
    receive their own envelopes.

    `unsafe_disable_dedup` exists for fault-injection tests only: with it the
    broker relays every publish, and cyclic topologies stop terminating.
    """

    def __init__(
        self,
        me_id: str,
        dedup_capacity: int = DEFAULT_CAPACITY,
        tracer=NULL_TRACER,
        unsafe_disable_dedup: bool = False,
    ):
        self.me_id = me_id
        self.ingress_dedup = DedupCache(dedup_capacity)
        self.counters = Counters()
        self.tracer = tracer
        self.dedup_enabled = not unsafe_disable_dedup
        self._subscribers: Dict[SubscriberHandle, Sink] = {}
        self._lock = threading.RLock()

    def __repr__(self):
        return "MessagingEnvironment(%r, subscribers=%d)" % (self.me_id, len(self._subscribers))

    def subscribe(self, sink: Sink, name: Optional[str] = None) -> SubscriberHandle:
        handle = SubscriberHandle(name or getattr(sink, "__name__", "sink"))
        with self._lock:
            self._subscribers[handle] = sink
        return handle

    def unsubscribe(self, handle: SubscriberHandle) -> None:
        with self._lock:
            try:
                del self._subscribers[handle]
            except KeyError:
                raise UnknownHandle(handle) from None

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subscribers)

    def publish(self, e: Envelope) -> PublishOutcome:
        if not isinstance(e, Envelope):
            raise EnvelopeError("not an Envelope: %r" % (e,))
        with self._lock:
            if self.dedup_enabled and self.ingress_dedup.check_and_insert(e.id) is Freshness.DUPLICATE:
                self.counters.suppressed += 1
                self.tracer.record(EventKind.SUPPRESSED_DUPLICATE, self.me_id, self.me_id, e)
                return PublishOutcome.SUPPRESSED_DUPLICATE
            snapshot = list(self._subscribers.items())
            self.counters.relayed += 1
            self.counters.delivered += len(snapshot)
            self.tracer.record(EventKind.RELAYED, self.me_id, self.me_id, e)
            for handle, _ in snapshot:
                self.tracer.record(EventKind.DELIVERED, self.me_id, handle.name, e)
        for handle, sink in snapshot:
            try:
                sink(e)
            except SinkClosed:
                logger.info("%s: sink %s closed, dropping subscription", self.me_id, handle.name)
                with self._lock:
                    self._subscribers.pop(handle, None)
            except Exception:
                logger.exception("%s: delivery to %s failed", self.me_id, handle.name)
        return PublishOutcome.RELAYED
