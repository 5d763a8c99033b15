"""Topology configuration: dataclasses, JSON loading and validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Union

import jsonschema

from ..dedup import DEFAULT_CAPACITY
from ..envelope import DEFAULT_TTL

ROLES = ("publisher", "sink", "consumer")
MAPPINGS = ("retag", "items")
DEFAULT_EVENT_BUDGET = 2_000_000


class ConfigError(ValueError):
    """Invalid topology configuration; `location` points at the offending entry."""

    def __init__(self, location: str, message: str):
        super().__init__("%s: %s" % (location, message))
        self.location = location


@dataclass
class ParticipantSpec:
    name: str
    me: str
    role: str = "consumer"
    accepts: List[str] = field(default_factory=list)
    replies: Dict[str, str] = field(default_factory=dict)


@dataclass
class TranslatorSpec:
    name: str
    me: str
    from_tag: str
    to_tag: str
    mapping: str = "retag"


@dataclass
class ReflectorSpec:
    me_a: str
    me_b: str
    # "all" or a list of prefixes
    filter_ab: Union[str, List[str]] = "all"
    filter_ba: Union[str, List[str]] = "all"


@dataclass
class PublishStep:
    publisher: str
    payloads: List[str] = field(default_factory=list)
    template: Optional[str] = None
    count: int = 0
    random: int = 0
    max_len: int = 48

    def expand(self) -> List[str]:
        out = list(self.payloads)
        if self.template is not None:
            out.extend(self.template.format(i=i) for i in range(self.count))
        return out


@dataclass
class Expectation:
    consumer: str
    payloads: List[str] = field(default_factory=list)
    template: Optional[str] = None
    count: int = 0
    exact: bool = False

    def expand(self) -> List[str]:
        out = list(self.payloads)
        if self.template is not None:
            out.extend(self.template.format(i=i) for i in range(self.count))
        return out


@dataclass
class Correlation:
    requester: str
    request_tag: str


@dataclass
class Scenario:
    name: str
    steps: List[PublishStep] = field(default_factory=list)
    expect: List[Expectation] = field(default_factory=list)
    correlate: List[Correlation] = field(default_factory=list)
    description: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("name")
        return _prune(d)


@dataclass
class TopologyConfig:
    mes: List[str]
    participants: List[ParticipantSpec] = field(default_factory=list)
    translators: List[TranslatorSpec] = field(default_factory=list)
    reflectors: List[ReflectorSpec] = field(default_factory=list)
    dedup_capacity: int = DEFAULT_CAPACITY
    default_ttl: int = DEFAULT_TTL
    seed: int = 0
    event_budget: int = DEFAULT_EVENT_BUDGET
    transport: str = "memory"
    disable_dedup: bool = False  # test-only fault injection
    scenarios: Dict[str, Scenario] = field(default_factory=dict)

    def validate(self) -> "TopologyConfig":
        validate(self)
        return self

    def participant(self, name: str) -> ParticipantSpec:
        for p in self.participants:
            if p.name == name:
                return p
        raise KeyError(name)

    def translator(self, name: str) -> TranslatorSpec:
        for t in self.translators:
            if t.name == name:
                return t
        raise KeyError(name)

    def scenario(self, name: str) -> Scenario:
        try:
            return self.scenarios[name]
        except KeyError:
            raise ConfigError("scenarios", "no scenario named %r (have %s)" % (name, sorted(self.scenarios))) from None

    def to_dict(self) -> dict:
        d = {
            "mes": list(self.mes),
            "participants": [_prune(asdict(p)) for p in self.participants],
            "translators": [asdict(t) for t in self.translators],
            "reflectors": [asdict(r) for r in self.reflectors],
            "dedup_capacity": self.dedup_capacity,
            "default_ttl": self.default_ttl,
            "seed": self.seed,
            "event_budget": self.event_budget,
            "transport": self.transport,
        }
        if self.disable_dedup:
            d["fault_injection"] = {"disable_dedup": True}
        if self.scenarios:
            d["scenarios"] = {name: s.to_dict() for name, s in self.scenarios.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "TopologyConfig":
        try:
            jsonschema.validate(data, schema())
        except jsonschema.ValidationError as exc:
            location = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(location, exc.message) from None
        scenarios = {}
        for name, s in data.get("scenarios", {}).items():
            scenarios[name] = Scenario(
                name=name,
                steps=[PublishStep(**step) for step in s.get("steps", [])],
                expect=[Expectation(**e) for e in s.get("expect", [])],
                correlate=[Correlation(**c) for c in s.get("correlate", [])],
                description=s.get("description", ""),
            )
        config = cls(
            mes=list(data["mes"]),
            participants=[ParticipantSpec(**p) for p in data.get("participants", [])],
            translators=[TranslatorSpec(**t) for t in data.get("translators", [])],
            reflectors=[ReflectorSpec(**r) for r in data.get("reflectors", [])],
            dedup_capacity=data.get("dedup_capacity", DEFAULT_CAPACITY),
            default_ttl=data.get("default_ttl", DEFAULT_TTL),
            seed=data.get("seed", 0),
            event_budget=data.get("event_budget", DEFAULT_EVENT_BUDGET),
            transport=data.get("transport", "memory"),
            disable_dedup=data.get("fault_injection", {}).get("disable_dedup", False),
            scenarios=scenarios,
        )
        return config.validate()


def _prune(d: dict) -> dict:
    """Drop empty/default-valued keys so serialized configs stay readable."""
    out = {}
    for k, v in d.items():
        if v in (None, [], {}, "") or (k in ("count", "random") and v == 0):
            continue
        if k == "max_len" and v == 48:
            continue
        if k == "exact" and v is False:
            continue
        if isinstance(v, list):
            v = [_prune(x) if isinstance(x, dict) else x for x in v]
        out[k] = v
    return out


_schema_cache: Optional[dict] = None


def schema() -> dict:
    global _schema_cache
    if _schema_cache is None:
        text = resources.files("ipsme.data").joinpath("topology.schema.json").read_text()
        _schema_cache = json.loads(text)
    return _schema_cache


def validate(config: TopologyConfig):
    """Semantic checks the JSON schema cannot express."""
    mes = set()
    for i, me in enumerate(config.mes):
        if me in mes:
            raise ConfigError("mes[%d]" % i, "duplicate ME id %r" % me)
        mes.add(me)
    names = set()
    for kind, items in (("participants", config.participants), ("translators", config.translators)):
        for i, item in enumerate(items):
            loc = "%s[%d]" % (kind, i)
            if item.me not in mes:
                raise ConfigError(loc, "unknown ME %r" % item.me)
            if item.name in names:
                raise ConfigError(loc, "duplicate participant name %r" % item.name)
            if item.name in mes:
                raise ConfigError(loc, "participant name %r collides with an ME id" % item.name)
            names.add(item.name)
    for i, p in enumerate(config.participants):
        if p.role not in ROLES:
            raise ConfigError("participants[%d]" % i, "unknown role %r" % p.role)
        for tag in p.replies:
            if tag not in p.accepts:
                raise ConfigError("participants[%d].replies" % i, "replies to %r which it does not accept" % tag)
    for i, t in enumerate(config.translators):
        if t.mapping not in MAPPINGS:
            raise ConfigError("translators[%d]" % i, "unknown mapping %r" % t.mapping)
    for i, r in enumerate(config.reflectors):
        loc = "reflectors[%d]" % i
        for end in ("me_a", "me_b"):
            if getattr(r, end) not in mes:
                raise ConfigError("%s.%s" % (loc, end), "unknown ME %r" % getattr(r, end))
        if r.me_a == r.me_b:
            raise ConfigError(loc, "reflector must connect distinct MEs")
        for which in ("filter_ab", "filter_ba"):
            f = getattr(r, which)
            if f != "all" and not isinstance(f, list):
                raise ConfigError("%s.%s" % (loc, which), "filter must be \"all\" or a prefix list")
    if config.dedup_capacity < 1:
        raise ConfigError("dedup_capacity", "must be positive")
    if not 0 <= config.default_ttl <= 255:
        raise ConfigError("default_ttl", "must be within 0..255")
    if config.transport not in ("memory", "socket"):
        raise ConfigError("transport", "unknown transport %r" % config.transport)
    publishers = names
    for sname, s in config.scenarios.items():
        for i, step in enumerate(s.steps):
            if step.publisher not in publishers:
                raise ConfigError("scenarios.%s.steps[%d]" % (sname, i), "unknown publisher %r" % step.publisher)
        for i, e in enumerate(s.expect):
            if e.consumer not in publishers:
                raise ConfigError("scenarios.%s.expect[%d]" % (sname, i), "unknown consumer %r" % e.consumer)
        for i, c in enumerate(s.correlate):
            if c.requester not in publishers:
                raise ConfigError("scenarios.%s.correlate[%d]" % (sname, i), "unknown requester %r" % c.requester)


def load_config(source: Union[str, Path]) -> TopologyConfig:
    """Load a config from a JSON file path or the name of a bundled config."""
    path = Path(source)
    if path.exists():
        text = path.read_text()
    else:
        bundled = resources.files("ipsme.data").joinpath("configs", "%s.json" % source)
        if not bundled.is_file():
            raise ConfigError(str(source), "no such config file or bundled config")
        text = bundled.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("%s:%d" % (source, exc.lineno), exc.msg) from None
    return TopologyConfig.from_dict(data)


def bundled_configs() -> List[str]:
    folder = resources.files("ipsme.data").joinpath("configs")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))
