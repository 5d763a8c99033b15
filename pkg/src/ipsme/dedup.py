"""Bounded duplicate-identification cache keyed by message id."""

from __future__ import annotations

import enum
import threading
from collections import OrderedDict

from .envelope import ZERO_ID, ZeroId

DEFAULT_CAPACITY = 65536


class Freshness(enum.Enum):
    FRESH = "fresh"
    DUPLICATE = "duplicate"


class DedupCache:
    """Set of recently seen ids, evicting the least recently inserted.

    A duplicate hit does not refresh the entry's position: eviction order is
    insertion order, so the cache behaves the same whatever the hit pattern.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be positive, got %r" % (capacity,))
        self.capacity = capacity
        self._entries: OrderedDict[bytes, None] = OrderedDict()
        self._lock = threading.Lock()

    def check_and_insert(self, message_id: bytes) -> Freshness:
        if message_id == ZERO_ID:
            raise ZeroId("all-zero id cannot be deduplicated")
        with self._lock:
            if message_id in self._entries:
                return Freshness.DUPLICATE
            if len(self._entries) >= self.capacity:
                self._entries.popitem(last=False)
            self._entries[message_id] = None
            return Freshness.FRESH

    def add(self, message_id: bytes) -> None:
        self.check_and_insert(message_id)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def __contains__(self, message_id) -> bool:
        with self._lock:
            return message_id in self._entries

    def __len__(self):
        return len(self._entries)

    def __repr__(self):
        return "DedupCache(%d/%d)" % (len(self._entries), self.capacity)
