"""Message envelope: identity, hop budget, reply linkage and the binary codec.

Layout (big-endian)::

    0-3    magic b"IPSM"
    4      version 0x01
    5      flags (bit 0: reply_to present)
    6      ttl
    7      reserved 0x00
    8-23   id
    24-39  reply_to (zero when flag bit 0 is unset)
    40-43  payload length
    44-    payload
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, replace

MAGIC = b"IPSM"
VERSION = 0x01
FLAG_REPLY_TO = 0x01
HEADER = struct.Struct(">4sBBBB16s16sI")
HEADER_SIZE = HEADER.size  # 44
ID_SIZE = 16
ZERO_ID = bytes(ID_SIZE)
DEFAULT_TTL = 16
MAX_TTL = 255
MAX_PAYLOAD = 2**32 - 1

MessageId = bytes


class EnvelopeError(ValueError):
    """Base class for envelope construction and decoding errors."""


class FrameError(EnvelopeError):
    """A byte sequence is not a valid encoded envelope."""


class BadMagic(FrameError):
    pass


class BadVersion(FrameError):
    pass


class Truncated(FrameError):
    pass


class ZeroId(FrameError):
    """The all-zero id is reserved and never names a published envelope."""


class MalformedFrame(FrameError):
    """Header fields are inconsistent (unknown flags, reserved byte, trailing bytes)."""


class TtlExhausted(EnvelopeError):
    """A derivation was attempted on an envelope whose hop budget is spent."""


def new_id(id_source: random.Random) -> MessageId:
    """Draw a fresh non-zero 128-bit id from a seeded random source."""
    while True:
        value = id_source.getrandbits(128)
        if value:
            return value.to_bytes(ID_SIZE, "big")


@dataclass(frozen=True)
class Envelope:
    id: MessageId
    payload: bytes = b""
    ttl: int = DEFAULT_TTL
    reply_to: MessageId = ZERO_ID

    def __post_init__(self):
        if not isinstance(self.id, bytes) or len(self.id) != ID_SIZE:
            raise EnvelopeError("id must be %d bytes" % ID_SIZE)
        if self.id == ZERO_ID:
            raise ZeroId("envelope id is all-zero")
        if not isinstance(self.reply_to, bytes) or len(self.reply_to) != ID_SIZE:
            raise EnvelopeError("reply_to must be %d bytes" % ID_SIZE)
        if not 0 <= self.ttl <= MAX_TTL:
            raise EnvelopeError("ttl %r outside 0..255" % (self.ttl,))
        if not isinstance(self.payload, bytes):
            raise EnvelopeError("payload must be bytes")
        if len(self.payload) > MAX_PAYLOAD:
            raise EnvelopeError("payload exceeds 2**32-1 bytes")

    @property
    def has_reply_to(self) -> bool:
        return self.reply_to != ZERO_ID

    def with_ttl(self, ttl: int) -> "Envelope":
        return replace(self, ttl=ttl)

    def __repr__(self):
        return "Envelope(id=%s, ttl=%d, reply_to=%s, payload=%r)" % (
            self.id.hex()[:8],
            self.ttl,
            self.reply_to.hex()[:8] if self.has_reply_to else "-",
            self.payload[:32],
        )


def new_envelope(payload: bytes, id_source: random.Random, ttl: int = DEFAULT_TTL) -> Envelope:
    return Envelope(id=new_id(id_source), payload=bytes(payload), ttl=ttl)


def derive_reply(
    original: Envelope, payload: bytes, id_source: random.Random, ttl: int = DEFAULT_TTL
) -> Envelope:
    """Build a reply to `original`. The reply starts a new lineage with a fresh ttl."""
    if original.id == ZERO_ID:
        raise ZeroId("cannot reply to an envelope without id")
    return Envelope(id=new_id(id_source), payload=bytes(payload), ttl=ttl, reply_to=original.id)


def derive_transformed(original: Envelope, new_payload: bytes, id_source: random.Random) -> Envelope:
    """Build the transformed version of `original` a translator sends out.

    The result has a fresh id, keeps reply_to so that translated replies still
    correlate, and spends one unit of the hop budget.
    """
    if original.ttl < 1:
        raise TtlExhausted("ttl exhausted on %s" % original.id.hex())
    return Envelope(
        id=new_id(id_source),
        payload=bytes(new_payload),
        ttl=original.ttl - 1,
        reply_to=original.reply_to,
    )


def encode(e: Envelope) -> bytes:
    flags = FLAG_REPLY_TO if e.has_reply_to else 0
    header = HEADER.pack(MAGIC, VERSION, flags, e.ttl, 0, e.id, e.reply_to, len(e.payload))
    return header + e.payload


def decode(data: bytes) -> Envelope:
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise Truncated("%d bytes, header needs %d" % (len(data), HEADER_SIZE))
    magic, version, flags, ttl, reserved, id_, reply_to, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic("magic %r" % magic)
    if version != VERSION:
        raise BadVersion("version %#04x" % version)
    if len(data) < HEADER_SIZE + length:
        raise Truncated("declared payload %d bytes, %d present" % (length, len(data) - HEADER_SIZE))
    if len(data) > HEADER_SIZE + length:
        raise MalformedFrame("%d trailing bytes" % (len(data) - HEADER_SIZE - length))
    if id_ == ZERO_ID:
        raise ZeroId("decoded id is all-zero")
    if flags & ~FLAG_REPLY_TO:
        raise MalformedFrame("unknown flag bits %#04x" % flags)
    if reserved:
        raise MalformedFrame("reserved byte is %#04x" % reserved)
    if bool(flags & FLAG_REPLY_TO) != (reply_to != ZERO_ID):
        raise MalformedFrame("reply_to flag disagrees with reply_to field")
    return Envelope(id=id_, payload=data[HEADER_SIZE:], ttl=ttl, reply_to=reply_to)
