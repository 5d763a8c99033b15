"""Factories for the built-in topologies and their scenarios.

The JSON files under ``ipsme/data/configs`` are generated from these
(`python -m ipsme.harness.topologies`), and a test keeps them in sync.
"""

from __future__ import annotations

import random
from pathlib import Path
from typing import List

from .config import (
    Correlation,
    Expectation,
    ParticipantSpec,
    PublishStep,
    ReflectorSpec,
    Scenario,
    TopologyConfig,
    TranslatorSpec,
)
from .mappings import item_table

TELEPORT_LOCATIONS = ["mars_city", "delta_labs", "alpha_labs", "hell", "monorail"]


def me_names(n: int) -> List[str]:
    width = len(str(n - 1))
    return ["me%0*d" % (width, i) for i in range(n)]


def chain_config(n: int = 4, messages: int = 100, seed: int = 1, default_ttl: int = 16) -> TopologyConfig:
    """MEs in a line, publisher at one end, consumer at the other."""
    mes = me_names(n)
    scenario = Scenario(
        "chain",
        description="%d MEs in a line; %d messages from %s reach %s" % (n, messages, mes[0], mes[-1]),
        steps=[PublishStep("pub", template="MSG|{i}", count=messages)],
        expect=[Expectation("sink_end", template="MSG|{i}", count=messages, exact=True)],
    )
    return TopologyConfig(
        mes=mes,
        participants=[ParticipantSpec("pub", mes[0], "publisher"), ParticipantSpec("sink_end", mes[-1], "sink")],
        reflectors=[ReflectorSpec(a, b) for a, b in zip(mes, mes[1:])],
        seed=seed,
        default_ttl=default_ttl,
        scenarios={"chain": scenario},
    )


def ring_config(n: int = 3, messages: int = 100, seed: int = 2, event_budget: int = 2_000_000) -> TopologyConfig:
    """MEs in a cycle with MatchAll pairs, one publisher and a consumer in every ME."""
    mes = me_names(n)
    sinks = [ParticipantSpec("sink_%s" % me, me, "sink") for me in mes]
    scenario = Scenario(
        "ring",
        description="%d-ME cycle; every consumer logs each of %d messages once" % (n, messages),
        steps=[PublishStep("pub", template="MSG|{i}", count=messages)],
        expect=[Expectation(s.name, template="MSG|{i}", count=messages, exact=True) for s in sinks],
    )
    return TopologyConfig(
        mes=mes,
        participants=[ParticipantSpec("pub", mes[0], "publisher")] + sinks,
        reflectors=[ReflectorSpec(mes[i], mes[(i + 1) % n]) for i in range(n)],
        seed=seed,
        event_budget=event_budget,
        scenarios={"ring": scenario},
    )


def teleport_config(seed: int = 3, fuzz: int = 1000) -> TopologyConfig:
    """Toy two-protocol integration: teleports and inventory items cross from 'doom' to 'mine'.

    'doom' speaks TPRT/INVA, 'mine' speaks PORTAL/INVB; translators in 'mine'
    map between them and the 'mine' consumer answers every portal with a
    reply that is reflected back to the requester.
    """
    table = item_table()
    teleports = ["TPRT|%s" % loc for loc in TELEPORT_LOCATIONS]
    items = ["INVA|%s" % item for item in table]
    scenario = Scenario(
        "teleport",
        description="teleport requests and inventory items translated across two MEs, with replies",
        steps=[PublishStep("doomguy", payloads=teleports + items)],
        expect=[
            Expectation("steve", payloads=["PORTAL|%s" % loc for loc in TELEPORT_LOCATIONS]
                        + ["INVB|%s" % table[item] for item in table], exact=True),
            Expectation("doomguy", payloads=["RPLY|%s" % loc for loc in TELEPORT_LOCATIONS], exact=True),
        ],
        correlate=[Correlation("doomguy", "TPRT")],
    )
    fuzzed = Scenario(
        "teleport-fuzz",
        description="the teleport scenario with %d random payloads injected alongside" % fuzz,
        steps=[PublishStep("fuzzer", random=fuzz)] + scenario.steps,
        expect=scenario.expect,
        correlate=scenario.correlate,
    )
    return TopologyConfig(
        mes=["doom", "mine"],
        participants=[
            ParticipantSpec("doomguy", "doom", "consumer", accepts=["RPLY"]),
            ParticipantSpec("fuzzer", "doom", "publisher"),
            ParticipantSpec("steve", "mine", "consumer", accepts=["PORTAL", "INVB"], replies={"PORTAL": "RPLY"}),
        ],
        translators=[
            TranslatorSpec("tprt2portal", "mine", "TPRT", "PORTAL", "retag"),
            TranslatorSpec("inva2invb", "mine", "INVA", "INVB", "items"),
        ],
        reflectors=[ReflectorSpec("doom", "mine", ["TPRT", "INVA"], ["RPLY"])],
        seed=seed,
        scenarios={"teleport": scenario, "teleport-fuzz": fuzzed},
    )


def random_config(rng: random.Random, max_mes: int = 8, messages: int = 30,
                  tags=("TA", "TB", "TC", "TD")) -> TopologyConfig:
    """A random connected-or-not ME graph with random per-direction prefix filters and a sink per ME."""
    n = rng.randint(2, max_mes)
    mes = me_names(n)
    possible = [(a, b) for i, a in enumerate(mes) for b in mes[i + 1:]]
    edges = rng.sample(possible, rng.randint(1, min(len(possible), 2 * n)))

    def random_filter():
        if rng.random() < 0.25:
            return "all"
        return sorted(rng.sample(tags, rng.randint(0, len(tags))))

    reflectors = [ReflectorSpec(a, b, random_filter(), random_filter()) for a, b in edges]
    publishers = [ParticipantSpec("pub_%s" % me, me, "publisher") for me in rng.sample(mes, rng.randint(1, n))]
    sinks = [ParticipantSpec("sink_%s" % me, me, "sink") for me in mes]
    steps = [PublishStep(p.name, payloads=["%s|%d" % (rng.choice(tags), i) for i in range(messages)])
             for p in publishers]
    return TopologyConfig(
        mes=mes,
        participants=publishers + sinks,
        reflectors=reflectors,
        seed=rng.getrandbits(32),
        scenarios={"random": Scenario("random", steps=steps)},
    )


def bundled() -> dict:
    return {
        "chain": chain_config(),
        "ring": ring_config(),
        "teleport": teleport_config(),
        "chain32": chain_config(32, messages=20, seed=32, default_ttl=32),
    }


def write_bundled(folder: Path):
    folder.mkdir(parents=True, exist_ok=True)
    for name, config in bundled().items():
        (folder / ("%s.json" % name)).write_text(config.to_json())


if __name__ == "__main__":
    write_bundled(Path(__file__).resolve().parent.parent / "data" / "configs")
