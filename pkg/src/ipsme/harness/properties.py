"""Post-hoc property checks over a completed run."""

from __future__ import annotations

from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Set

from ..envelope import ZERO_ID
from ..trace import EventKind, Trace
from . import mappings
from .config import Scenario, TopologyConfig
from .topology import EffectLog, make_filter

MAX_COUNTEREXAMPLES = 10


@dataclass
class PropertyResult:
    name: str
    passed: bool
    counterexamples: List[int] = field(default_factory=list)
    detail: str = ""

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"


@dataclass
class PropertyReport:
    results: List[PropertyResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def __getitem__(self, name: str) -> PropertyResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def __contains__(self, name):
        return any(r.name == name for r in self.results)

    def failures(self) -> List[PropertyResult]:
        return [r for r in self.results if not r.passed]

    def rows(self):
        for r in self.results:
            yield ("property", r.name, r.status, ",".join(map(str, r.counterexamples)), r.detail)


def _result(name: str, bad: Iterable[int], detail_ok: str, detail_bad: str) -> PropertyResult:
    bad = sorted(set(bad))
    if bad:
        return PropertyResult(name, False, bad[:MAX_COUNTEREXAMPLES], detail_bad % len(bad))
    return PropertyResult(name, True, [], detail_ok)


def check_trace_integrity(trace: Trace) -> PropertyResult:
    bad = []
    published: Set[bytes] = set()
    for i, ev in enumerate(trace.events):
        if ev.ordinal != i:
            bad.append(ev.ordinal)
        if ev.kind is EventKind.PUBLISHED:
            published.add(ev.id)
        elif ev.kind is not EventKind.DECODE_ERROR and ev.id not in published:
            bad.append(ev.ordinal)
    return _result("trace_integrity", bad, "ordinals dense, every id published before use",
                   "%d events out of order or referencing unpublished ids")


def check_loop_freedom(trace: Trace) -> PropertyResult:
    seen = set()
    bad = []
    for ev in trace.events:
        if ev.kind is EventKind.RELAYED:
            key = (ev.me_id, ev.id)
            if key in seen:
                bad.append(ev.ordinal)
            seen.add(key)
    return _result("loop_freedom", bad, "no id relayed twice in one ME", "%d repeated relays")


def check_effect_idempotency(logs: EffectLog) -> PropertyResult:
    bad = []
    for name, entries in logs.items():
        counts = Counter(i for i, _ in entries)
        bad.extend("%s:%s" % (name, i.hex()[:8]) for i, n in counts.items() if n > 1)
    if bad:
        return PropertyResult("effect_idempotency", False, [], "ids logged twice: " + ", ".join(bad[:MAX_COUNTEREXAMPLES]))
    return PropertyResult("effect_idempotency", True, [], "no participant logged an id twice")


def check_self_origin_silence(trace: Trace, logs: EffectLog) -> PropertyResult:
    published_by: Dict[str, Set[bytes]] = defaultdict(set)
    first_pub: Dict[bytes, int] = {}
    for ev in trace.of_kind(EventKind.PUBLISHED):
        published_by[ev.actor].add(ev.id)
        first_pub.setdefault(ev.id, ev.ordinal)
    bad = []
    for name, entries in logs.items():
        bad.extend(first_pub[i] for i, _ in entries if i in published_by.get(name, ()))
    return _result("self_origin_silence", bad, "no participant reacted to its own output",
                   "%d effects caused by the participant's own envelopes")


def check_ttl_monotonicity(trace: Trace) -> PropertyResult:
    start: Dict[bytes, int] = {}
    bad = []
    for ev in trace.events:
        if ev.kind is EventKind.DECODE_ERROR:
            continue
        if ev.kind is EventKind.PUBLISHED:
            start.setdefault(ev.id, ev.ttl)
        elif ev.id in start and ev.ttl > start[ev.id]:
            bad.append(ev.ordinal)
    pub_ordinal = {ev.id: ev.ordinal for ev in reversed(trace.of_kind(EventKind.PUBLISHED))}
    for d in trace.derivations:
        if not d.child.ttl < d.parent.ttl:
            bad.append(pub_ordinal.get(d.child.id, -1))
    return _result("ttl_monotonicity", bad, "ttl never grows along reflections or translations",
                   "%d events with ttl above their lineage")


def check_content_opacity(trace: Trace, logs: EffectLog, config: TopologyConfig) -> PropertyResult:
    sizes = {ev.id: ev.payload_size for ev in reversed(trace.of_kind(EventKind.PUBLISHED))}
    bad = [ev.ordinal for ev in trace.events
           if ev.kind in (EventKind.DELIVERED, EventKind.HANDLED, EventKind.IMPORTED, EventKind.EXPORTED)
           and ev.id in sizes and ev.payload_size != sizes[ev.id]]
    sinks = [p.name for p in config.participants if p.role == "sink"]
    if trace.envelopes:
        first_pub = {ev.id: ev.ordinal for ev in reversed(trace.of_kind(EventKind.PUBLISHED))}
        for name in sinks:
            for i, payload in logs[name]:
                if i in trace.envelopes and trace.envelopes[i].payload != payload:
                    bad.append(first_pub[i])
    return _result("content_opacity", bad, "payloads arrive byte-identical", "%d payload mismatches")


def reachable_mes(config: TopologyConfig, origin: str, payload: bytes, ttl: int) -> Set[str]:
    """BFS over reflector edges whose direction filter accepts `payload`, at most `ttl` crossings."""
    adj = defaultdict(list)
    for r in config.reflectors:
        if make_filter(r.filter_ab).matches(payload):
            adj[r.me_a].append(r.me_b)
        if make_filter(r.filter_ba).matches(payload):
            adj[r.me_b].append(r.me_a)
    dist = {origin: 0}
    queue = deque([origin])
    while queue:
        me = queue.popleft()
        if dist[me] >= ttl:
            continue
        for nxt in adj[me]:
            if nxt not in dist:
                dist[nxt] = dist[me] + 1
                queue.append(nxt)
    return set(dist)


def check_reachability(trace: Trace, logs: EffectLog, config: TopologyConfig) -> Optional[PropertyResult]:
    sinks = [p for p in config.participants if p.role == "sink"]
    if not sinks or not trace.envelopes:
        return None
    origin = {}
    for ev in trace.of_kind(EventKind.PUBLISHED):
        origin.setdefault(ev.id, (ev.me_id, ev.ordinal))
    logged = {p.name: set(logs.ids(p.name)) for p in sinks}
    bad = []
    for message_id, e in trace.envelopes.items():
        me, ordinal = origin[message_id]
        reach = reachable_mes(config, me, e.payload, e.ttl)
        expected = {p.name for p in sinks if p.me in reach}
        actual = {name for name, ids in logged.items() if message_id in ids}
        if expected != actual:
            bad.append(ordinal)
    return _result("reachability", bad, "sinks logging each message match filtered-edge BFS",
                   "%d messages reached the wrong set of sinks")


def check_translation_fidelity(trace: Trace, config: TopologyConfig) -> Optional[PropertyResult]:
    if not config.translators:
        return None
    specs = {t.name: t for t in config.translators}
    pub_ordinal = {ev.id: ev.ordinal for ev in reversed(trace.of_kind(EventKind.PUBLISHED))}
    bad = []
    for d in trace.derivations:
        spec = specs[d.translator]
        mapping = mappings.resolve(spec.mapping, spec.from_tag, spec.to_tag)
        ok = (d.child.payload == mapping(d.parent.payload)
              and d.child.ttl == d.parent.ttl - 1
              and d.child.reply_to == d.parent.reply_to)
        if not ok:
            bad.append(pub_ordinal.get(d.child.id, -1))
    return _result("translation_fidelity", bad,
                   "%d translations match their mapping and spend one hop" % len(trace.derivations),
                   "%d translations deviate from their mapping")


def check_expectations(logs: EffectLog, scenario: Scenario) -> Optional[PropertyResult]:
    if not scenario.expect:
        return None
    problems = []
    for exp in scenario.expect:
        got = Counter(logs.payloads(exp.consumer))
        want = Counter(p.encode("utf-8") for p in exp.expand())
        for payload, n in want.items():
            if got[payload] != n:
                problems.append("%s: %r logged %d times, expected %d" % (exp.consumer, payload, got[payload], n))
        if exp.exact:
            extra = got - want
            problems.extend("%s: unexpected %r" % (exp.consumer, p) for p in sorted(extra)[:MAX_COUNTEREXAMPLES])
    if problems:
        return PropertyResult("expectations", False, [], "; ".join(problems[:MAX_COUNTEREXAMPLES]))
    return PropertyResult("expectations", True, [], "%d consumer expectations met" % len(scenario.expect))


def lineage_root(trace: Trace, message_id: bytes) -> bytes:
    parent = {d.child.id: d.parent.id for d in trace.derivations}
    while message_id in parent:
        message_id = parent[message_id]
    return message_id


def correlate_replies(trace: Trace, logs: EffectLog, requester: str, request_tag: str):
    """Map each reply logged by `requester` to the request at the root of its reply_to lineage.

    Returns (requests, pairs) where pairs is a list of (reply id, request id or None).
    """
    prefix = request_tag.encode() + b"|"
    requests = {ev.id for ev in trace.of_kind(EventKind.PUBLISHED)
                if ev.actor == requester and trace.envelopes[ev.id].payload.startswith(prefix)}
    parent = {d.child.id: d.parent.id for d in trace.derivations}
    pairs = []
    for reply_id, _ in logs[requester]:
        reply = trace.envelopes.get(reply_id)
        if reply is None or reply.reply_to == ZERO_ID:
            continue
        root = reply.reply_to
        while root in parent:
            root = parent[root]
        pairs.append((reply_id, root if root in requests else None))
    return requests, pairs


def check_correlation(trace: Trace, logs: EffectLog, scenario: Scenario) -> Optional[PropertyResult]:
    if not scenario.correlate or not trace.envelopes:
        return None
    problems = []
    for c in scenario.correlate:
        requests, pairs = correlate_replies(trace, logs, c.requester, c.request_tag)
        matched = [req for _, req in pairs]
        if None in matched:
            problems.append("%s: %d replies do not correlate to a request" % (c.requester, matched.count(None)))
        counts = Counter(m for m in matched if m is not None)
        if any(n != 1 for n in counts.values()) or set(counts) != requests:
            problems.append("%s: %d requests, %d distinct correlated replies, %d replies"
                            % (c.requester, len(requests), len(counts), len(pairs)))
    if problems:
        return PropertyResult("reply_correlation", False, [], "; ".join(problems))
    return PropertyResult("reply_correlation", True, [], "request/reply correlation is a bijection")


def check_duplicate_invariance(logs: EffectLog, baseline: EffectLog) -> PropertyResult:
    if logs.to_bytes() == baseline.to_bytes():
        return PropertyResult("duplicate_invariance", True, [], "effect logs identical to the k=1 run")
    return PropertyResult("duplicate_invariance", False, [], "effect logs differ from the k=1 run")


def check_properties(
    trace: Trace,
    logs: EffectLog,
    config: TopologyConfig,
    scenario: Optional[Scenario] = None,
    baseline_logs: Optional[EffectLog] = None,
    timed_out: bool = False,
) -> PropertyReport:
    """Run every applicable check. Checks needing payloads are skipped for traces read from disk."""
    report = PropertyReport()
    report.results.append(PropertyResult(
        "quiescence", not timed_out, [], "event budget exhausted" if timed_out else "run reached quiescence"))
    report.results.append(check_trace_integrity(trace))
    report.results.append(check_loop_freedom(trace))
    report.results.append(check_effect_idempotency(logs))
    report.results.append(check_self_origin_silence(trace, logs))
    report.results.append(check_ttl_monotonicity(trace))
    report.results.append(check_content_opacity(trace, logs, config))
    optional = [check_reachability(trace, logs, config), check_translation_fidelity(trace, config)]
    if scenario is not None:
        optional += [check_expectations(logs, scenario), check_correlation(trace, logs, scenario)]
    report.results.extend(r for r in optional if r is not None)
    if baseline_logs is not None:
        report.results.append(check_duplicate_invariance(logs, baseline_logs))
    return report
