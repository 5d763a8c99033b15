"""Execution strategies for deliveries and link frames.

Work is posted to a *lane* (a participant, a reflector endpoint, a link).
Work posted to one lane runs sequentially in posting order; the concurrent
scheduler runs different lanes on different threads.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from collections import deque
from typing import Callable, Dict, Optional

logger = logging.getLogger(__name__)


class Timeout(RuntimeError):
    """Quiescence was not reached within the event budget (or wall-clock limit)."""


class InlineScheduler:
    """Runs work immediately on the caller's stack. Used for direct API use and unit tests."""

    def post(self, lane: str, fn: Callable, *args):
        fn(*args)

    def begin(self):
        pass

    def end(self):
        pass


class DeterministicScheduler:
    """Single-activity FIFO scheduler; identical inputs give identical interleavings."""

    def __init__(self):
        self._queue: deque = deque()
        self.executed = 0

    def post(self, lane: str, fn: Callable, *args):
        self._queue.append((fn, args))

    def begin(self):
        pass

    def end(self):
        pass

    @property
    def pending(self) -> int:
        return len(self._queue)

    def run_until_quiet(self, event_count: Callable[[], int], budget: int):
        while self._queue:
            fn, args = self._queue.popleft()
            fn(*args)
            self.executed += 1
            if event_count() > budget:
                dropped = len(self._queue)
                self._queue.clear()
                raise Timeout("event budget %d exceeded, %d tasks still queued" % (budget, dropped))


class _Lane(threading.Thread):
    def __init__(self, name: str, owner: "ConcurrentScheduler"):
        super().__init__(name="lane-%s" % name, daemon=True)
        self.inbox: queue.SimpleQueue = queue.SimpleQueue()
        self.owner = owner

    def run(self):
        while True:
            item = self.inbox.get()
            if item is None:
                return
            fn, args = item
            try:
                if not self.owner.stopped:
                    fn(*args)
            except Exception:
                logger.exception("unhandled error on lane %s", self.name)
            finally:
                self.owner.end()


class ConcurrentScheduler:
    """One thread per lane; quiescence when no work is pending and the event count is stable."""

    def __init__(self, poll_interval: float = 0.02):
        self.poll_interval = poll_interval
        self.stopped = False
        self._lanes: Dict[str, _Lane] = {}
        self._pending = 0
        self._lock = threading.Lock()

    def _lane(self, name: str) -> _Lane:
        with self._lock:
            lane = self._lanes.get(name)
            if lane is None:
                lane = self._lanes[name] = _Lane(name, self)
                lane.start()
            return lane

    def post(self, lane: str, fn: Callable, *args):
        if self.stopped:
            return
        self.begin()
        self._lane(lane).inbox.put((fn, args))

    def begin(self):
        with self._lock:
            self._pending += 1

    def end(self):
        with self._lock:
            self._pending -= 1

    @property
    def pending(self) -> int:
        with self._lock:
            return self._pending

    def run_until_quiet(self, event_count: Callable[[], int], budget: int, wall_limit: Optional[float] = 120.0):
        started = time.monotonic()
        last = -1
        while True:
            time.sleep(self.poll_interval)
            count = event_count()
            if count > budget:
                self.stop()
                raise Timeout("event budget %d exceeded" % budget)
            if wall_limit is not None and time.monotonic() - started > wall_limit:
                self.stop()
                raise Timeout("no quiescence after %.1f s" % wall_limit)
            if self.pending == 0 and count == last:
                return
            last = count

    def stop(self):
        self.stopped = True

    def close(self):
        self.stopped = True
        with self._lock:
            lanes = list(self._lanes.values())
            self._lanes.clear()
        for lane in lanes:
            lane.inbox.put(None)
        for lane in lanes:
            lane.join(timeout=5)
