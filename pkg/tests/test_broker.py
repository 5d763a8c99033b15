import random
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipsme.broker import MessagingEnvironment, PublishOutcome, SinkClosed, UnknownHandle
from ipsme.envelope import Envelope, EnvelopeError, new_envelope
from ipsme.trace import EventKind, Trace

RELAYED = PublishOutcome.RELAYED
SUPPRESSED = PublishOutcome.SUPPRESSED_DUPLICATE


@pytest.fixture
def rng():
    return random.Random(11)


def test_subscriber_receives_published(rng):
    me = MessagingEnvironment("A")
    got = []
    me.subscribe(got.append)
    e = new_envelope(b"hi", rng)
    assert me.publish(e) is RELAYED
    assert got == [e]


def test_no_replay_for_late_subscriber(rng):
    me = MessagingEnvironment("A")
    me.publish(new_envelope(b"early", rng))
    got = []
    me.subscribe(got.append)
    assert got == []


def test_fan_out_counts_deliveries(rng):
    me = MessagingEnvironment("A")
    sinks = [[] for _ in range(3)]
    for s in sinks:
        me.subscribe(s.append)
    me.publish(new_envelope(b"x", rng))
    assert me.counters.delivered == 3
    assert all(len(s) == 1 for s in sinks)


def test_unsubscribe(rng):
    me = MessagingEnvironment("A")
    a, b = [], []
    ha = me.subscribe(a.append)
    me.subscribe(b.append)
    me.unsubscribe(ha)
    me.publish(new_envelope(b"x", rng))
    assert a == [] and len(b) == 1
    with pytest.raises(UnknownHandle):
        me.unsubscribe(ha)


def test_unsubscribe_only_sink_means_no_deliveries(rng):
    me = MessagingEnvironment("A")
    got = []
    me.unsubscribe(me.subscribe(got.append))
    me.publish(new_envelope(b"x", rng))
    assert got == [] and me.counters.delivered == 0


def test_duplicate_publish_is_suppressed(rng):
    me = MessagingEnvironment("A")
    got = []
    me.subscribe(got.append)
    e = new_envelope(b"x", rng)
    assert me.publish(e) is RELAYED
    assert me.publish(e) is SUPPRESSED
    assert got == [e]
    assert (me.counters.relayed, me.counters.suppressed) == (1, 1)


def test_publish_without_subscribers(rng):
    me = MessagingEnvironment("A")
    assert me.publish(new_envelope(b"x", rng)) is RELAYED
    assert me.counters.delivered == 0


def test_rejects_non_envelope():
    with pytest.raises(EnvelopeError):
        MessagingEnvironment("A").publish(b"raw bytes")


def test_self_delivery(rng):
    me = MessagingEnvironment("A")
    got = []
    me.subscribe(got.append)
    e = new_envelope(b"mine", rng)
    me.publish(e)
    assert got == [e]


def test_closed_sink_is_dropped(rng):
    me = MessagingEnvironment("A")

    def gone(e):
        raise SinkClosed()

    h = me.subscribe(gone)
    me.publish(new_envelope(b"x", rng))
    assert me.subscriber_count == 0
    with pytest.raises(UnknownHandle):
        me.unsubscribe(h)


def test_failing_sink_does_not_block_others(rng):
    me = MessagingEnvironment("A")
    got = []

    def broken(e):
        raise RuntimeError("boom")

    me.subscribe(broken)
    me.subscribe(got.append)
    me.publish(new_envelope(b"x", rng))
    assert len(got) == 1


def test_delivered_counter_matches_subscribers_at_publish(rng):
    me = MessagingEnvironment("A")
    expected = 0
    handles = []
    for i in range(6):
        handles.append(me.subscribe(lambda e: None))
        if i % 2:
            me.unsubscribe(handles.pop(0))
        me.publish(new_envelope(b"x", rng))
        expected += me.subscriber_count
    assert me.counters.delivered == expected


def test_per_publisher_fifo(rng):
    me = MessagingEnvironment("A")
    got = []
    me.subscribe(got.append)
    sent = [new_envelope(b"%d" % i, rng) for i in range(50)]
    for e in sent:
        me.publish(e)
    assert got == sent


def test_trace_events(rng):
    trace = Trace()
    me = MessagingEnvironment("A", tracer=trace)
    me.subscribe(lambda e: None, name="s1")
    e = new_envelope(b"x", rng)
    me.publish(e)
    me.publish(e)
    kinds = [(ev.kind, ev.actor) for ev in trace.events]
    assert kinds == [(EventKind.RELAYED, "A"), (EventKind.DELIVERED, "s1"), (EventKind.SUPPRESSED_DUPLICATE, "A")]


def test_concurrent_publish_exactly_once_per_id(rng):
    me = MessagingEnvironment("A")
    got = []
    lock = threading.Lock()

    def sink(e):
        with lock:
            got.append(e.id)

    me.subscribe(sink)
    envs = [new_envelope(b"x", rng) for _ in range(200)]
    barrier = threading.Barrier(8)

    def worker():
        barrier.wait()
        for e in envs:
            me.publish(e)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(got) == sorted(e.id for e in envs)
    assert me.counters.relayed == 200 and me.counters.suppressed == 7 * 200


@given(st.lists(st.tuples(st.integers(1, 20), st.binary(max_size=16)), max_size=60), st.binary(min_size=1, max_size=8))
def test_content_agnostic(publishes, key):
    """Verdicts and fan-out depend only on ids: xor-ing every payload changes nothing."""

    def run(transform):
        me = MessagingEnvironment("A")
        got = []
        me.subscribe(lambda e: got.append(e.id))
        me.subscribe(lambda e: got.append(e.id))
        outcomes = [me.publish(Envelope(id=n.to_bytes(16, "big"), payload=transform(p))) for n, p in publishes]
        return outcomes, got, (me.counters.relayed, me.counters.suppressed, me.counters.delivered)

    def xor(p):
        return bytes(b ^ key[i % len(key)] for i, b in enumerate(p))

    assert run(lambda p: p) == run(xor)
