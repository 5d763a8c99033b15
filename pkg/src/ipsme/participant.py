"""Participants: protocol handlers that drop what they do not understand, and translators."""

from __future__ import annotations

import enum
import logging
import random
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

from .broker import MessagingEnvironment, PublishOutcome
from .dedup import DEFAULT_CAPACITY, DedupCache, Freshness
from .envelope import Envelope, TtlExhausted, derive_transformed
from .scheduler import InlineScheduler
from .trace import NULL_TRACER, EventKind

logger = logging.getLogger(__name__)


class DeliveryReport(enum.Enum):
    HANDLED = "Handled"
    IGNORED = "Ignored"
    DUPLICATE_DROPPED = "DuplicateDropped"
    SELF_ORIGIN_DROPPED = "SelfOriginDropped"


@dataclass
class ProtocolHandler:
    """`recognizes` looks at the payload; `react` returns the envelopes to send in response.

    `react` must be idempotent in effect. The participant already drops
    duplicates by id, but ids can age out of a bounded cache.
    """

    recognizes: Callable[[bytes], bool]
    react: Callable[[Envelope], Sequence[Envelope]]
    name: str = ""


def prefix_handler(prefix: bytes, react: Callable[[Envelope], Sequence[Envelope]], name: str = "") -> ProtocolHandler:
    prefix = bytes(prefix)
    return ProtocolHandler(lambda payload: payload.startswith(prefix), react, name or prefix.decode("ascii", "replace"))


class Participant:
    """A publisher and/or subscriber attached to exactly one messaging environment.

    Handlers are tried in order and the first one that recognizes the
    payload gets it.
    """

    def __init__(
        self,
        name: str,
        me: MessagingEnvironment,
        handlers: Optional[List[ProtocolHandler]] = None,
        *,
        id_source: Optional[random.Random] = None,
        dedup_capacity: int = DEFAULT_CAPACITY,
        scheduler=None,
        tracer=NULL_TRACER,
    ):
        self.name = name
        self.me = me
        self.handlers: List[ProtocolHandler] = list(handlers or [])
        self.id_source = id_source if id_source is not None else random.Random(name)
        self.seen = DedupCache(dedup_capacity)
        self.emitted = DedupCache(dedup_capacity)
        self.scheduler = scheduler or InlineScheduler()
        self.tracer = tracer
        self.faults = 0
        self.handle = me.subscribe(self._on_envelope, name=name)

    def __repr__(self):
        return "%s(%r @ %s)" % (type(self).__name__, self.name, self.me.me_id)

    def _on_envelope(self, e: Envelope):
        self.scheduler.post(self.name, self.deliver, e)

    def add_handler(self, handler: ProtocolHandler):
        self.handlers.append(handler)

    def detach(self):
        self.me.unsubscribe(self.handle)

    def deliver(self, e: Envelope) -> DeliveryReport:
        me_id = self.me.me_id
        if self.seen.check_and_insert(e.id) is Freshness.DUPLICATE:
            self.tracer.record(EventKind.SUPPRESSED_DUPLICATE, me_id, self.name, e)
            return DeliveryReport.DUPLICATE_DROPPED
        if e.id in self.emitted:
            self.tracer.record(EventKind.DROPPED_SELF_ORIGIN, me_id, self.name, e)
            return DeliveryReport.SELF_ORIGIN_DROPPED
        for handler in self.handlers:
            try:
                if not handler.recognizes(e.payload):
                    continue
            except Exception as exc:
                self.faults += 1
                logger.warning("%s: recognizer %s failed: %r", self.name, handler.name, exc)
                logger.debug("recognizer traceback", exc_info=True)
                continue
            self.tracer.record(EventKind.HANDLED, me_id, self.name, e)
            try:
                outputs = list(handler.react(e) or ())
            except Exception as exc:
                # one participant must not poison the environment
                self.faults += 1
                logger.warning("%s: handler %s faulted on %s: %r", self.name, handler.name, e.id.hex()[:8], exc)
                logger.debug("handler traceback", exc_info=True)
                outputs = []
            for out in outputs:
                self.send(out)
            return DeliveryReport.HANDLED
        self.tracer.record(EventKind.IGNORED, me_id, self.name, e)
        return DeliveryReport.IGNORED

    def send(self, e: Envelope) -> PublishOutcome:
        self.emitted.add(e.id)
        self.tracer.record(EventKind.PUBLISHED, self.me.me_id, self.name, e)
        return self.me.publish(e)


class Translator(Participant):
    """Listens for one protocol and sends out a transformed envelope per recognized input."""

    def __init__(
        self,
        name: str,
        me: MessagingEnvironment,
        from_tag: bytes,
        mapping: Callable[[bytes], bytes],
        **kwargs,
    ):
        if not from_tag:
            raise ValueError("from_tag must be non-empty")
        self.from_tag = bytes(from_tag)
        self.mapping = mapping
        self.ttl_drops = 0
        # a mapping may narrow what it accepts beyond the tag, e.g. only known items
        accepts = getattr(mapping, "recognizes", None)
        tag = self.from_tag

        def recognizes(payload: bytes) -> bool:
            return payload.startswith(tag) and (accepts is None or accepts(payload))

        super().__init__(name, me, [ProtocolHandler(recognizes, self._translate, name="translate")], **kwargs)

    def _translate(self, e: Envelope) -> List[Envelope]:
        try:
            out = derive_transformed(e, self.mapping(e.payload), self.id_source)
        except TtlExhausted:
            self.ttl_drops += 1
            logger.info("%s: ttl exhausted on %s, not translating", self.name, e.id.hex())
            self.tracer.record(EventKind.DROPPED_TTL, self.me.me_id, self.name, e)
            return []
        self.tracer.record_derivation(self.name, e, out)
        return [out]


def make_translator(
    name: str,
    from_tag: bytes,
    mapping: Callable[[bytes], bytes],
    me: MessagingEnvironment,
    **kwargs,
) -> Translator:
    return Translator(name, me, from_tag, mapping, **kwargs)
