import random
import time

import pytest

from ipsme.broker import MessagingEnvironment
from ipsme.envelope import derive_reply, encode, new_envelope
from ipsme.participant import Participant, prefix_handler
from ipsme.reflector import (
    MATCH_ALL,
    ExportOutcome,
    Filter,
    ImportOutcome,
    PairState,
    connect_pair,
)
from ipsme.scheduler import ConcurrentScheduler, DeterministicScheduler
from ipsme.trace import EventKind, Trace
from ipsme.transport import LinkFailed, frame, memory_link_pair, socket_link_pair


@pytest.fixture
def rng():
    return random.Random(23)


def collect(me):
    got = []
    me.subscribe(got.append)
    return got


def test_filter_semantics():
    assert MATCH_ALL.matches(b"") and MATCH_ALL.matches(b"anything")
    f = Filter.prefix_any(["TPRT", b"INVA"])
    assert f.matches(b"TPRT|x") and f.matches(b"INVA|y")
    assert not f.matches(b"xTPRT") and not f.matches(b"RPLY|z")
    assert not Filter.prefix_any([]).matches(b"TPRT|x")


def test_pass_through_hop(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    pair = connect_pair(a, b)
    got = collect(b)
    e = new_envelope(b"hello", rng)
    a.publish(e)
    assert len(got) == 1
    assert got[0].id == e.id and got[0].reply_to == e.reply_to
    assert got[0].ttl == e.ttl - 1 and got[0].payload == e.payload
    assert pair.live


def test_filter_selects_what_crosses(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    connect_pair(a, b, Filter.prefix_any(["TPRT"]), MATCH_ALL)
    got = collect(b)
    a.publish(new_envelope(b"TPRT|x", rng))
    a.publish(new_envelope(b"INVA|y", rng))
    assert [e.payload for e in got] == [b"TPRT|x"]


def test_reply_routes_back(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    connect_pair(a, b, Filter.prefix_any(["REQ"]), Filter.prefix_any(["RPLY"]))
    replies = []
    requester = Participant("req", a, [prefix_handler(b"RPLY|", lambda e: replies.append(e) or [])])
    responder = Participant("resp", b)
    responder.add_handler(prefix_handler(b"REQ|", lambda e: [derive_reply(e, b"RPLY|" + e.payload[4:], responder.id_source)]))
    sent = [new_envelope(b"REQ|%d" % i, rng) for i in range(10)]
    for e in sent:
        requester.send(e)
    assert sorted(r.reply_to for r in replies) == sorted(e.id for e in sent)
    assert {r.reply_to: r.payload for r in replies} == {e.id: b"RPLY|" + e.payload[4:] for e in sent}


def test_reply_delivered_exactly_once_in_origin(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    connect_pair(a, b)
    got = collect(a)
    req = new_envelope(b"q", rng)
    a.publish(req)
    reply = derive_reply(req, b"r", rng)
    b.publish(reply)
    assert [e.id for e in got].count(reply.id) == 1


def test_export_ttl_exhausted(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    pair = connect_pair(a, b)
    assert pair.a.on_local_envelope(new_envelope(b"x", rng, ttl=0)) is ExportOutcome.TTL_EXHAUSTED


def test_export_writes_decremented_frame(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    pair = connect_pair(a, b)
    frames = []
    pair.a.link.send = frames.append
    e = new_envelope(b"x", rng, ttl=16)
    assert pair.a.on_local_envelope(e) is ExportOutcome.EXPORTED
    assert frames[0][6] == 15
    assert frames[0] == encode(e.with_ttl(15))


def test_filtered_out(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    pair = connect_pair(a, b, Filter.prefix_any([]), MATCH_ALL)
    assert pair.a.on_local_envelope(new_envelope(b"x", rng)) is ExportOutcome.FILTERED_OUT


def test_import_suppresses_bounce(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    pair = connect_pair(a, b)
    e = new_envelope(b"x", rng)
    a.publish(e)
    assert pair.b.on_local_envelope(e.with_ttl(15)) is ExportOutcome.SELF_ORIGIN_DROPPED
    assert pair.b.exported_count == 0
    assert pair.a.exported_count == 1


def test_link_frame_import_and_duplicate(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    pair = connect_pair(a, b)
    got = collect(b)
    data = encode(new_envelope(b"x", rng))
    assert pair.b.on_link_frame(data) is ImportOutcome.REPUBLISHED
    assert pair.b.on_link_frame(data) is ImportOutcome.DUPLICATE_DROPPED
    assert len(got) == 1


def test_decode_error_then_recovery(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    trace = Trace()
    pair = connect_pair(a, b, tracer=trace)
    got = collect(b)
    good = encode(new_envelope(b"x", rng))
    assert pair.b.on_link_frame(good[:20]) is ImportOutcome.DECODE_ERROR
    assert pair.b.on_link_frame(b"JUNK" + good[4:]) is ImportOutcome.DECODE_ERROR
    assert pair.b.on_link_frame(good) is ImportOutcome.REPUBLISHED
    assert len(got) == 1 and pair.live
    assert len(trace.of_kind(EventKind.DECODE_ERROR)) == 2


def test_truncated_frame_over_link_recovers(rng):
    """Fault injection through the byte stream: a framed but truncated envelope, then valid traffic."""
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    trace = Trace()
    pair = connect_pair(a, b, tracer=trace)
    got = collect(b)
    pair.a.link.send_raw(frame(encode(new_envelope(b"bad", rng))[:30]))
    a.publish(new_envelope(b"good", rng))
    assert [e.payload for e in got] == [b"good"]
    assert [ev.kind for ev in trace.events if ev.actor == pair.b.name] == [
        EventKind.DECODE_ERROR, EventKind.IMPORTED, EventKind.DROPPED_SELF_ORIGIN]
    assert pair.live


def test_three_consecutive_decode_errors_break_pair(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    pair = connect_pair(a, b)
    local = collect(a)
    for _ in range(3):
        pair.b.on_link_frame(b"garbage")
    assert pair.state is PairState.BROKEN
    assert pair.b.on_link_frame(encode(new_envelope(b"x", rng))) is ImportOutcome.LINK_BROKEN
    e = new_envelope(b"still local", rng)
    a.publish(e)
    assert local == [e]
    assert a.subscriber_count == 1


def test_link_write_failure_breaks_pair(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    pair = connect_pair(a, b)
    pair.b.link.close()
    local = collect(a)
    e = new_envelope(b"x", rng)
    a.publish(e)
    assert pair.state is PairState.BROKEN
    assert local == [e]
    assert pair.a.on_local_envelope(new_envelope(b"y", rng)) is ExportOutcome.LINK_BROKEN


def test_pair_needs_distinct_mes():
    a = MessagingEnvironment("A")
    with pytest.raises(ValueError):
        connect_pair(a, a)


def test_link_failure_on_connect():
    def refuse(*args):
        raise ConnectionRefusedError("nobody home")

    with pytest.raises(LinkFailed):
        connect_pair(MessagingEnvironment("A"), MessagingEnvironment("B"), transport=refuse)


def test_ring_terminates_and_relays_once_per_me(rng):
    trace = Trace()
    sched = DeterministicScheduler()
    mes = [MessagingEnvironment(n, tracer=trace) for n in "ABC"]
    for i in range(3):
        connect_pair(mes[i], mes[(i + 1) % 3], scheduler=sched, tracer=trace)
    e = new_envelope(b"loop?", rng)
    sched.post("x", mes[0].publish, e)
    sched.run_until_quiet(lambda: len(trace), budget=1000)
    relayed = [ev.me_id for ev in trace.of_kind(EventKind.RELAYED)]
    assert sorted(relayed) == ["A", "B", "C"]
    # bounded amplification: at most 2E frames
    assert len(trace.of_kind(EventKind.EXPORTED)) <= 6
    suppressed = [ev for ev in trace.of_kind(EventKind.SUPPRESSED_DUPLICATE) if ev.actor == ev.me_id]
    assert len(suppressed) >= 1


def test_transparency(rng):
    a, b = MessagingEnvironment("A"), MessagingEnvironment("B")
    connect_pair(a, b)
    got = collect(b)
    e = new_envelope(b"payload", rng)
    a.publish(e)
    imported = got[0]
    assert imported.with_ttl(e.ttl) == e


def test_socket_transport_pair(rng):
    sched = ConcurrentScheduler()
    trace = Trace()
    try:
        a = MessagingEnvironment("A", tracer=trace)
        b = MessagingEnvironment("B", tracer=trace)
        connect_pair(a, b, transport=socket_link_pair, scheduler=sched, tracer=trace)
        got = []
        Participant("sink", b, [prefix_handler(b"", lambda e: got.append(e.payload) or [])],
                    scheduler=sched, tracer=trace)
        pub = Participant("pub", a, scheduler=sched, tracer=trace)
        sent = [b"m%d" % i for i in range(50)]
        for p in sent:
            sched.post("pub", pub.send, new_envelope(p, rng))
        sched.run_until_quiet(lambda: len(trace), budget=100_000, wall_limit=20)
        assert got == sent
    finally:
        sched.close()


def test_socket_link_frames_roundtrip():
    a, b = socket_link_pair()
    got = []
    b.on_frame(got.append)
    try:
        payloads = [b"", b"x" * 70000, b"abc"]
        for p in payloads:
            a.send(p)
        deadline = time.monotonic() + 5
        while len(got) < 3 and time.monotonic() < deadline:
            time.sleep(0.01)
        assert got == payloads
    finally:
        a.close()
        b.close()


def test_memory_link_partial_bytes():
    a, b = memory_link_pair()
    got = []
    b.on_frame(got.append)
    data = frame(b"hello") + frame(b"world")
    for i in range(len(data)):
        a.send_raw(data[i:i + 1])
    assert got == [b"hello", b"world"]
