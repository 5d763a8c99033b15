"""Build ME graphs from a TopologyConfig and drive scenarios to quiescence."""

from __future__ import annotations

import logging
import random
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from ..broker import MessagingEnvironment
from ..envelope import Envelope, derive_reply, new_envelope
from ..participant import Participant, ProtocolHandler, Translator, prefix_handler
from ..reflector import MATCH_ALL, Filter, ReflectorPair, connect_pair
from ..scheduler import ConcurrentScheduler, DeterministicScheduler, Timeout
from ..trace import Trace
from ..transport import memory_link_pair, socket_link_pair
from . import mappings
from .config import ConfigError, ParticipantSpec, Scenario, TopologyConfig
from .metrics import Metrics, report_metrics

logger = logging.getLogger(__name__)

MODES = ("det", "conc")


class EffectLog:
    """Per-participant ordered record of (envelope id, effect summary)."""

    def __init__(self):
        self._entries: Dict[str, List[Tuple[bytes, bytes]]] = defaultdict(list)
        self._lock = threading.Lock()

    def record(self, participant: str, message_id: bytes, summary: bytes):
        with self._lock:
            self._entries[participant].append((message_id, bytes(summary)))

    def ensure(self, participant: str):
        with self._lock:
            self._entries.setdefault(participant, [])

    def __getitem__(self, participant: str) -> List[Tuple[bytes, bytes]]:
        return list(self._entries.get(participant, ()))

    def __contains__(self, participant):
        return participant in self._entries

    def participants(self) -> List[str]:
        return sorted(self._entries)

    def payloads(self, participant: str) -> List[bytes]:
        return [summary for _, summary in self[participant]]

    def ids(self, participant: str) -> List[bytes]:
        return [i for i, _ in self[participant]]

    def items(self):
        return [(name, self[name]) for name in self.participants()]

    def to_bytes(self) -> bytes:
        lines = []
        for name in self.participants():
            for message_id, summary in self._entries[name]:
                lines.append(b"%s\t%s\t%s\n" % (name.encode(), message_id.hex().encode(), summary.hex().encode()))
        return b"".join(lines)

    def __eq__(self, other):
        return isinstance(other, EffectLog) and self.to_bytes() == other.to_bytes()

    def __repr__(self):
        return "EffectLog(%s)" % ", ".join("%s=%d" % (n, len(self._entries[n])) for n in self.participants())


def make_filter(spec) -> Filter:
    if spec == "all":
        return MATCH_ALL
    return Filter.prefix_any(spec)


def id_source(seed: int, name: str) -> random.Random:
    # string seeds hash with sha512, stable across processes
    return random.Random("%d/%s" % (seed, name))


@dataclass
class Topology:
    config: TopologyConfig
    mode: str
    scheduler: Union[DeterministicScheduler, ConcurrentScheduler]
    trace: Trace
    effects: EffectLog
    mes: Dict[str, MessagingEnvironment] = field(default_factory=dict)
    participants: Dict[str, Participant] = field(default_factory=dict)
    translators: Dict[str, Translator] = field(default_factory=dict)
    pairs: List[ReflectorPair] = field(default_factory=list)
    used: bool = False

    def participant(self, name: str) -> Participant:
        return self.participants.get(name) or self.translators[name]

    @property
    def live_pairs(self) -> List[ReflectorPair]:
        return [p for p in self.pairs if p.live]

    def close(self):
        for pair in self.pairs:
            for ep in pair.endpoints:
                ep.link.close()
        if isinstance(self.scheduler, ConcurrentScheduler):
            self.scheduler.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _consumer_handlers(p: Participant, spec: ParticipantSpec, effects: EffectLog, default_ttl: int) -> List[ProtocolHandler]:
    if spec.role == "publisher":
        return []

    def log_only(e: Envelope):
        effects.record(spec.name, e.id, e.payload)
        return []

    if spec.role == "sink":
        return [ProtocolHandler(lambda payload: True, log_only, name="sink")]

    handlers = []
    for tag in spec.accepts:
        reply_tag = spec.replies.get(tag)
        if reply_tag is None:
            handlers.append(prefix_handler(tag.encode() + b"|", log_only, name=tag))
            continue

        def log_and_reply(e: Envelope, reply_tag=reply_tag):
            effects.record(spec.name, e.id, e.payload)
            _, body = mappings.split(e.payload)
            return [derive_reply(e, reply_tag.encode() + b"|" + body, p.id_source, ttl=default_ttl)]

        handlers.append(prefix_handler(tag.encode() + b"|", log_and_reply, name=tag))
    return handlers


def build(config: TopologyConfig, mode: str = "det") -> Topology:
    """Instantiate brokers, participants, translators and reflector pairs."""
    config.validate()
    if mode not in MODES:
        raise ConfigError("mode", "unknown mode %r (expected one of %s)" % (mode, ", ".join(MODES)))
    if mode == "det" and config.transport == "socket":
        raise ConfigError("transport", "socket links need the concurrent mode")
    scheduler = DeterministicScheduler() if mode == "det" else ConcurrentScheduler()
    trace = Trace(default_ttl=config.default_ttl)
    effects = EffectLog()
    topo = Topology(config, mode, scheduler, trace, effects)
    unsafe = config.disable_dedup
    for me_id in config.mes:
        topo.mes[me_id] = MessagingEnvironment(me_id, config.dedup_capacity, tracer=trace, unsafe_disable_dedup=unsafe)
    common = dict(dedup_capacity=config.dedup_capacity, scheduler=scheduler, tracer=trace)
    for spec in config.participants:
        p = Participant(spec.name, topo.mes[spec.me], id_source=id_source(config.seed, spec.name), **common)
        for h in _consumer_handlers(p, spec, effects, config.default_ttl):
            p.add_handler(h)
        if spec.role != "publisher":
            effects.ensure(spec.name)
        topo.participants[spec.name] = p
    for spec in config.translators:
        mapping = mappings.resolve(spec.mapping, spec.from_tag, spec.to_tag)
        topo.translators[spec.name] = Translator(
            spec.name, topo.mes[spec.me], spec.from_tag.encode() + b"|", mapping,
            id_source=id_source(config.seed, spec.name), **common,
        )
    transport = socket_link_pair if config.transport == "socket" else memory_link_pair
    for spec in config.reflectors:
        topo.pairs.append(connect_pair(
            topo.mes[spec.me_a], topo.mes[spec.me_b],
            make_filter(spec.filter_ab), make_filter(spec.filter_ba),
            transport, unsafe_disable_dedup=unsafe, **common,
        ))
    return topo


@dataclass
class RunResult:
    trace: Trace
    logs: EffectLog
    metrics: Metrics
    duplicate_factor: int = 1
    timed_out: bool = False


class ScenarioTimeout(Timeout):
    """Timeout carrying the partial run, for reporting."""

    def __init__(self, message: str, result: RunResult):
        super().__init__(message)
        self.result = result


def fuzz_payloads(rng: random.Random, count: int, max_len: int) -> List[bytes]:
    """Random byte payloads; every tenth one carries an INVA tag with an unknown item."""
    out = []
    for i in range(count):
        if i % 10 == 9:
            out.append(b"INVA|" + bytes(rng.getrandbits(8) for _ in range(rng.randint(0, 12))))
        else:
            out.append(bytes(rng.getrandbits(8) for _ in range(rng.randint(0, max_len))))
    return out


def scenario_envelopes(topo: Topology, scenario: Scenario) -> List[Tuple[Participant, Envelope]]:
    cfg = topo.config
    plan = []
    for step_no, step in enumerate(scenario.steps):
        publisher = topo.participant(step.publisher)
        payloads = [p.encode("utf-8") for p in step.expand()]
        if step.random:
            rng = random.Random("%d/fuzz/%s/%d" % (cfg.seed, step.publisher, step_no))
            payloads.extend(fuzz_payloads(rng, step.random, step.max_len))
        for payload in payloads:
            plan.append((publisher, new_envelope(payload, publisher.id_source, ttl=cfg.default_ttl)))
    return plan


def run_scenario(
    topo: Topology,
    scenario: Union[str, Scenario],
    duplicate_factor: int = 1,
    wall_limit: Optional[float] = 120.0,
) -> RunResult:
    """Publish the scenario's envelopes (each `duplicate_factor` times) and run to quiescence.

    Raises ScenarioTimeout when the event budget is exhausted first.
    """
    if duplicate_factor < 1:
        raise ValueError("duplicate_factor must be >= 1")
    if topo.used:
        raise RuntimeError("topology already ran a scenario; build a fresh one")
    topo.used = True
    if isinstance(scenario, str):
        scenario = topo.config.scenario(scenario)
    for publisher, e in scenario_envelopes(topo, scenario):
        # repeats go in at the publisher so they face the whole topology
        for _ in range(duplicate_factor):
            topo.scheduler.post(publisher.name, publisher.send, e)
    budget = topo.config.event_budget
    try:
        if isinstance(topo.scheduler, ConcurrentScheduler):
            topo.scheduler.run_until_quiet(lambda: len(topo.trace), budget, wall_limit)
        else:
            topo.scheduler.run_until_quiet(lambda: len(topo.trace), budget)
    except Timeout as exc:
        result = RunResult(topo.trace, topo.effects, report_metrics(topo.trace), duplicate_factor, timed_out=True)
        raise ScenarioTimeout(str(exc), result) from exc
    return RunResult(topo.trace, topo.effects, report_metrics(topo.trace), duplicate_factor)


def run(config: TopologyConfig, scenario: Union[str, Scenario], duplicate_factor: int = 1, mode: str = "det") -> RunResult:
    """Build, run and tear down in one call."""
    with build(config, mode) as topo:
        return run_scenario(topo, scenario, duplicate_factor)
