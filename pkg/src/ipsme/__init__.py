"""Idempotent publish/subscribe messaging environments.

Messaging environments relay opaque envelopes to every subscriber,
participants drop what they do not understand, translators republish
transformed messages, and reflector pairs federate environments into
arbitrary graphs.
"""

from .broker import MessagingEnvironment, PublishOutcome, SinkClosed, SubscriberHandle, UnknownHandle
from .dedup import DedupCache, Freshness
from .envelope import (
    DEFAULT_TTL,
    ZERO_ID,
    BadMagic,
    BadVersion,
    Envelope,
    EnvelopeError,
    FrameError,
    MalformedFrame,
    Truncated,
    TtlExhausted,
    ZeroId,
    decode,
    derive_reply,
    derive_transformed,
    encode,
    new_envelope,
    new_id,
)
from .participant import DeliveryReport, Participant, ProtocolHandler, Translator, make_translator, prefix_handler
from .reflector import (
    MATCH_ALL,
    ExportOutcome,
    Filter,
    FilterMode,
    ImportOutcome,
    PairState,
    ReflectorEndpoint,
    ReflectorPair,
    connect_pair,
)
from .scheduler import ConcurrentScheduler, DeterministicScheduler, InlineScheduler, Timeout
from .trace import EventKind, Trace, TraceEvent
from .transport import FrameDecoder, LinkError, LinkFailed, MemoryLink, SocketLink, memory_link_pair, socket_link_pair

__version__ = "0.1.0"
