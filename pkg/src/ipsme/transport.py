"""Reflector link transports over a reliable ordered byte stream.

Wire format: each frame is a 4-byte big-endian length N followed by N bytes.
"""

from __future__ import annotations

import logging
import socket
import struct
import threading
from collections import deque
from typing import Callable, List, Optional, Tuple

from .scheduler import InlineScheduler

logger = logging.getLogger(__name__)

LENGTH = struct.Struct(">I")
MAX_FRAME = 2**32 - 1


class LinkError(OSError):
    pass


class LinkFailed(LinkError):
    """The transport could not be established."""


def frame(data: bytes) -> bytes:
    if len(data) > MAX_FRAME:
        raise ValueError("frame too large")
    return LENGTH.pack(len(data)) + data


class FrameDecoder:
    """Incremental splitter of a byte stream into length-prefixed frames."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> List[bytes]:
        self._buf += data
        frames = []
        while len(self._buf) >= LENGTH.size:
            (n,) = LENGTH.unpack_from(self._buf)
            if len(self._buf) < LENGTH.size + n:
                break
            frames.append(bytes(self._buf[LENGTH.size:LENGTH.size + n]))
            del self._buf[:LENGTH.size + n]
        return frames

    @property
    def buffered(self) -> int:
        return len(self._buf)


class Link:
    """One end of a bidirectional frame link.

    `send` writes one frame; frames from the peer are handed to the receiver
    set with `on_frame`. Subclasses provide the byte stream.
    """

    def __init__(self, name: str = "link"):
        self.name = name
        self.closed = False
        self.frames_sent = 0
        self.bytes_sent = 0
        self._receiver: Optional[Callable[[bytes], None]] = None

    def on_frame(self, receiver: Callable[[bytes], None]):
        self._receiver = receiver

    def send(self, data: bytes):
        raise NotImplementedError

    def send_raw(self, data: bytes):
        """Write bytes to the stream without framing (fault injection)."""
        raise NotImplementedError

    def close(self):
        self.closed = True

    def _dispatch(self, data: bytes):
        if self._receiver is None:
            logger.warning("%s: frame dropped, no receiver", self.name)
            return
        self._receiver(data)


class MemoryLink(Link):
    """In-process byte pipe; frames are pumped on the receiving end's scheduler lane."""

    def __init__(self, name: str = "memlink", scheduler=None, lane: Optional[str] = None):
        super().__init__(name)
        self.peer: Optional[MemoryLink] = None
        self.scheduler = scheduler or InlineScheduler()
        self.lane = lane or name
        self._decoder = FrameDecoder()
        self._ready: deque = deque()
        self._lock = threading.Lock()

    def send(self, data: bytes):
        self.send_raw(frame(data))
        self.frames_sent += 1

    def send_raw(self, data: bytes):
        if self.closed or self.peer is None or self.peer.closed:
            raise LinkError("%s: link is closed" % self.name)
        self.bytes_sent += len(data)
        self.peer._feed(data)

    def _feed(self, data: bytes):
        with self._lock:
            frames = self._decoder.feed(data)
            self._ready.extend(frames)
        for _ in frames:
            self.scheduler.post(self.lane, self._pump)

    def _pump(self):
        with self._lock:
            if not self._ready:
                return
            data = self._ready.popleft()
        if not self.closed:
            self._dispatch(data)

    def close(self):
        self.closed = True
        if self.peer is not None:
            self.peer.closed = True


def memory_link_pair(scheduler=None, lane_a: str = "link-a", lane_b: str = "link-b") -> Tuple[MemoryLink, MemoryLink]:
    a = MemoryLink(lane_a, scheduler, lane_a)
    b = MemoryLink(lane_b, scheduler, lane_b)
    a.peer, b.peer = b, a
    return a, b


class SocketLink(Link):
    """A connected stream socket with a reader thread.

    Received frames are posted to `lane` on the scheduler. When both ends live
    in this process (see `socket_link_pair`) a frame counts as pending work
    from the moment it is written, so quiescence detection sees frames that
    are still in the kernel.
    """

    def __init__(self, sock: socket.socket, name: str = "socklink", scheduler=None, lane: Optional[str] = None):
        super().__init__(name)
        self.sock = sock
        self.scheduler = scheduler or InlineScheduler()
        self.lane = lane or name
        self.peer: Optional[SocketLink] = None
        self._decoder = FrameDecoder()
        self._send_lock = threading.Lock()
        self._expected = 0
        self._expected_lock = threading.Lock()
        self._reader: Optional[threading.Thread] = None

    def start(self):
        if self._reader is None:
            self._reader = threading.Thread(target=self._read_loop, name="reader-%s" % self.name, daemon=True)
            self._reader.start()

    def on_frame(self, receiver):
        super().on_frame(receiver)
        self.start()

    def send(self, data: bytes):
        peer = self.peer
        if peer is not None:
            with peer._expected_lock:
                peer._expected += 1
            peer.scheduler.begin()
        try:
            self.send_raw(frame(data))
        except LinkError:
            if peer is not None:
                peer._settle()
            raise
        self.frames_sent += 1

    def send_raw(self, data: bytes):
        if self.closed:
            raise LinkError("%s: link is closed" % self.name)
        try:
            with self._send_lock:
                self.sock.sendall(data)
        except OSError as exc:
            self.closed = True
            raise LinkError("%s: %s" % (self.name, exc)) from exc
        self.bytes_sent += len(data)

    def _settle(self):
        with self._expected_lock:
            if self._expected <= 0:
                return
            self._expected -= 1
        self.scheduler.end()

    def _read_loop(self):
        while not self.closed:
            try:
                chunk = self.sock.recv(65536)
            except OSError:
                break
            if not chunk:
                break
            for data in self._decoder.feed(chunk):
                self.scheduler.post(self.lane, self._dispatch, data)
                self._settle()
        self.closed = True
        while self._expected > 0:
            self._settle()

    def close(self):
        self.closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def socket_link_pair(scheduler=None, lane_a: str = "sock-a", lane_b: str = "sock-b", host: str = "127.0.0.1") -> Tuple[SocketLink, SocketLink]:
    """Two ends of a TCP loopback connection."""
    try:
        with socket.create_server((host, 0)) as server:
            port = server.getsockname()[1]
            client = socket.create_connection((host, port), timeout=5)
            accepted, _ = server.accept()
    except OSError as exc:
        raise LinkFailed(str(exc)) from exc
    for s in (client, accepted):
        s.settimeout(None)
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    a = SocketLink(client, lane_a, scheduler, lane_a)
    b = SocketLink(accepted, lane_b, scheduler, lane_b)
    a.peer, b.peer = b, a
    return a, b
