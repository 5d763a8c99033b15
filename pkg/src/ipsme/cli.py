"""Command line entry point: ``ipsme run``, ``ipsme check``, ``ipsme configs``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .harness.config import ConfigError, bundled_configs, load_config
from .harness.metrics import Metrics, report_metrics
from .harness.properties import PropertyReport, check_properties
from .harness.topology import MODES, RunResult, ScenarioTimeout, build, run_scenario
from .trace import Trace

logger = logging.getLogger("ipsme")


def write_report(path: Path, report: PropertyReport, metrics: Metrics, header: dict, figures: bool = True) -> List[Path]:
    """Write the tab-separated report and, next to it, a PNG of the metrics."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fp:
        w = csv.writer(fp, delimiter="\t", lineterminator="\n")
        w.writerow(("section", "name", "value", "counterexamples", "detail"))
        for key, value in header.items():
            w.writerow(("run", key, value, "", ""))
        w.writerow(("run", "status", "PASS" if report.passed else "FAIL", "", ""))
        for row in report.rows():
            w.writerow(row)
        for scope, name, value in metrics.rows():
            w.writerow(("metric", "%s.%s" % (scope, name), value, "", ""))
    written = [path]
    if figures:
        from .harness.plotting import plot_metrics

        written.append(plot_metrics(metrics, path.with_suffix(".png"),
                                    title="%s: per-ME broker counters" % header.get("scenario", "")))
    return written


def _run_once(config, scenario, k: int, mode: str) -> RunResult:
    with build(config, mode) as topo:
        try:
            return run_scenario(topo, scenario, k)
        except ScenarioTimeout as exc:
            logger.error("scenario %s: %s", scenario.name, exc)
            return exc.result


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    scenario = config.scenario(args.scenario)
    result = _run_once(config, scenario, args.duplicates, args.mode)
    baseline = None
    if args.duplicates > 1 and not result.timed_out:
        baseline = _run_once(config, scenario, 1, args.mode).logs
    report = check_properties(result.trace, result.logs, config, scenario,
                              baseline_logs=baseline, timed_out=result.timed_out)
    if args.trace_out:
        Path(args.trace_out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.trace_out, "w") as fp:
            result.trace.write(fp)
    header = {"config": args.config, "scenario": scenario.name, "seed": config.seed,
              "duplicates": args.duplicates, "mode": args.mode}
    if args.report:
        for p in write_report(Path(args.report), report, result.metrics, header, figures=not args.no_figures):
            logger.info("wrote %s", p)
    for r in report.results:
        print("%s\t%s\t%s" % (r.status, r.name, r.detail))
    m = result.metrics
    print("events=%d relayed=%d suppressed=%d delivered=%d link_frames=%d"
          % (m.events, m.relayed, m.suppressed, m.delivered, m.link_frames))
    return 0 if report.passed else 1


def cmd_check(args) -> int:
    """Trace-only checks on a trace file written by `run --trace-out`."""
    with open(args.trace) as fp:
        trace = Trace.read(fp)
    from .harness.properties import check_loop_freedom, check_trace_integrity, check_ttl_monotonicity

    results = [check_trace_integrity(trace), check_loop_freedom(trace), check_ttl_monotonicity(trace)]
    report = PropertyReport(results)
    for r in results:
        print("%s\t%s\t%s" % (r.status, r.name, r.detail))
    if args.report:
        write_report(Path(args.report), report, report_metrics(trace), {"trace": args.trace},
                     figures=not args.no_figures)
    return 0 if report.passed else 1


def cmd_configs(args) -> int:
    for name in bundled_configs():
        config = load_config(name)
        print("%s\tMEs=%d\tscenarios=%s" % (name, len(config.mes), ",".join(sorted(config.scenarios))))
    return 0


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipsme", description="Idempotent pub/sub messaging environment harness")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="build a topology, run a scenario, check properties")
    run.add_argument("--config", required=True, help="config JSON path or bundled config name")
    run.add_argument("--scenario", required=True)
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--duplicates", type=int, default=1, metavar="K", help="publish every envelope K times")
    run.add_argument("--mode", choices=MODES, default="det")
    run.add_argument("--trace-out", default=None, help="tab-separated trace file")
    run.add_argument("--report", default=None, help="tab-separated report; a PNG is written next to it")
    run.add_argument("--no-figures", action="store_true")
    run.set_defaults(func=cmd_run)

    check = sub.add_parser("check", help="trace-only property checks on a saved trace")
    check.add_argument("trace")
    check.add_argument("--report", default=None)
    check.add_argument("--no-figures", action="store_true")
    check.set_defaults(func=cmd_check)

    configs = sub.add_parser("configs", help="list bundled configs")
    configs.set_defaults(func=cmd_configs)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "duplicates", 1) < 1:
        print("ipsme: --duplicates must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print("ipsme: config error at %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
