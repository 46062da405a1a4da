"""Command-line front end.

Exit codes: 0 success, 1 invariant breach during the run, 2 usage error,
3 scenario parse/validation error.  The RFID_FABRIC_LOG environment
variable sets diagnostic verbosity only; it never affects results.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .elements import Mode
from .errors import FabricError, ScenarioError
from .metrics import MetricsReport
from .runner import RunResult, compare_report_dict, run
from .scenario import Scenario, bundled_scenario_names, load_bundled_scenario, load_scenario

log = logging.getLogger("rfid_fabric")

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_USAGE = 2
EXIT_SCENARIO = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rfid-fabric",
        description="Run declarative scenarios on the virtualized RFID "
                    "network simulator.")
    parser.add_argument("--scenario", required=True,
                        help="scenario file path, or the bare name of a "
                             f"bundled scenario ({', '.join(bundled_scenario_names())})")
    parser.add_argument("--mode", choices=["two-step", "direct", "compare"],
                        help="override every system's dispatch mode; "
                             "'compare' runs both and pairs the reports")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for schedule generators (default 0)")
    parser.add_argument("--report", choices=["json", "csv", "text"],
                        default="text", help="report format (default text)")
    parser.add_argument("--out", help="write the report here instead of stdout")
    parser.add_argument("--dump-inventory", action="store_true",
                        help="append the inventory snapshots (JSON) to the report")
    parser.add_argument("--validate-only", action="store_true",
                        help="load and validate the scenario, then exit")
    return parser


def _configure_logging() -> None:
    level_name = os.environ.get("RFID_FABRIC_LOG")
    if level_name:
        logging.basicConfig(level=getattr(logging, level_name.upper(), logging.INFO))


def _load(arg: str) -> Scenario:
    path = Path(arg)
    if not path.exists() and "/" not in arg and arg in bundled_scenario_names():
        return load_bundled_scenario(arg)
    return load_scenario(path)


def _inventory_block(result: RunResult) -> dict:
    return {
        "baseline": json.loads(result.inventory_baseline),
        "active": json.loads(result.inventory_active),
        "final": json.loads(result.inventory_final),
    }


def _single_report(result: RunResult, fmt: str, dump_inventory: bool) -> str:
    report: MetricsReport = result.report
    if fmt == "json":
        payload = report.to_dict()
        if dump_inventory:
            payload["inventory"] = _inventory_block(result)
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"
    body = report.to_csv() if fmt == "csv" else report.to_text()
    if dump_inventory:
        body += "\n" + json.dumps(_inventory_block(result), sort_keys=True,
                                  indent=2) + "\n"
    return body


def _compare_report(two_step: RunResult, direct: RunResult, fmt: str,
                    dump_inventory: bool) -> str:
    payload = compare_report_dict(two_step, direct)
    if fmt == "json":
        if dump_inventory:
            payload["inventory"] = _inventory_block(direct)
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        lines = ["mode," + MetricsReport.CSV_COLUMNS]
        for label, result in (("two-step", two_step), ("direct", direct)):
            for row in result.report.to_csv().splitlines()[1:]:
                lines.append(f"{label},{row}")
        return "\n".join(lines) + "\n"
    body = ["=== two-step ===", two_step.report.to_text(),
            "=== direct ===", direct.report.to_text(), "=== delta ==="]
    for sid, delta in payload["delta"].items():
        saved = delta["batch_latency_mean_saved_ms"]
        saved_s = "-" if saved is None else f"{saved:.3f} ms"
        body.append(f"system {sid}: mean batch latency saved {saved_s}, "
                    f"ons queries saved {delta['ons_queries_saved']}")
    text = "\n".join(body) + "\n"
    if dump_inventory:
        text += "\n" + json.dumps(_inventory_block(direct), sort_keys=True,
                                  indent=2) + "\n"
    return text


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        scenario = _load(args.scenario)
    except FileNotFoundError:
        print(f"scenario not found: {args.scenario}", file=sys.stderr)
        return EXIT_SCENARIO
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO

    if args.validate_only:
        print(f"{scenario.name}: ok", file=sys.stderr)
        return EXIT_OK

    try:
        if args.mode == "compare":
            two_step = run(scenario, seed=args.seed, mode_override=Mode.TWO_STEP)
            direct = run(scenario, seed=args.seed, mode_override=Mode.DIRECT)
            output = _compare_report(two_step, direct, args.report,
                                     args.dump_inventory)
        else:
            override = Mode(args.mode) if args.mode else None
            result = run(scenario, seed=args.seed, mode_override=override)
            output = _single_report(result, args.report, args.dump_inventory)
    except FabricError as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT

    if args.out:
        Path(args.out).write_text(output)
    else:
        sys.stdout.write(output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
