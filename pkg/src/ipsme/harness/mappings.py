"""Payload mappings available to translators, addressed by name from the config."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from typing import Callable, Dict

Mapping = Callable[[bytes], bytes]


@lru_cache(maxsize=None)
def item_table() -> Dict[str, str]:
    """The 10-entry item table used by the teleport scenario (source item -> target item)."""
    return json.loads(resources.files("ipsme.data").joinpath("items.json").read_text())


def split(payload: bytes):
    tag, sep, body = payload.partition(b"|")
    if not sep:
        raise ValueError("payload %r has no tag separator" % payload[:16])
    return tag, body


def retag(from_tag: str, to_tag: str) -> Mapping:
    src, dst = from_tag.encode(), to_tag.encode()

    def mapping(payload: bytes) -> bytes:
        tag, body = split(payload)
        if tag != src:
            raise ValueError("expected tag %r, got %r" % (src, tag))
        return dst + b"|" + body

    mapping.__name__ = "retag_%s_%s" % (from_tag, to_tag)
    return mapping


def items(from_tag: str, to_tag: str, table: Dict[str, str] = None) -> Mapping:
    """Retag and translate the body through the item table.

    Calling the mapping on an unknown item raises KeyError; translators use
    `mapping.recognizes` so unknown items are ignored instead.
    """
    table = dict(item_table() if table is None else table)
    src, dst = from_tag.encode(), to_tag.encode()

    def mapping(payload: bytes) -> bytes:
        tag, body = split(payload)
        if tag != src:
            raise ValueError("expected tag %r, got %r" % (src, tag))
        return dst + b"|" + table[body.decode("utf-8")].encode("utf-8")

    def recognizes(payload: bytes) -> bool:
        tag, sep, body = payload.partition(b"|")
        try:
            return bool(sep) and tag == src and body.decode("utf-8") in table
        except UnicodeDecodeError:
            return False

    mapping.recognizes = recognizes
    mapping.__name__ = "items_%s_%s" % (from_tag, to_tag)
    return mapping


MAPPINGS = {"retag": retag, "items": items}


def resolve(name: str, from_tag: str, to_tag: str) -> Mapping:
    return MAPPINGS[name](from_tag, to_tag)
