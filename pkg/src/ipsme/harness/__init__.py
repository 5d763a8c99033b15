"""Topology builder, scenario runner and property checks."""

from .config import (
    ConfigError,
    Correlation,
    Expectation,
    ParticipantSpec,
    PublishStep,
    ReflectorSpec,
    Scenario,
    TopologyConfig,
    TranslatorSpec,
    load_config,
)
from .metrics import Metrics, report_metrics
from .properties import PropertyReport, PropertyResult, check_properties
from .topology import EffectLog, RunResult, ScenarioTimeout, Topology, build, run, run_scenario
