"""
Command-line entry point.

    python -m securestate audit <scenario.yaml>
    python -m securestate reconstruct <scenario.yaml> [--r N] [--eq-tol X] [--residual-tol X]
    python -m securestate attack-synth <scenario.yaml> --target sesvs|sesgc [--rounds N]

Exit codes: 0 reconstructed (or certificate verified), 1 usage/config error,
2 ambiguous, 3 infeasible (or no certificate).
"""
import argparse
import logging
import sys
from typing import List, Optional

from securestate.config import settings
from securestate.errors import CombinatoricsError, ConfigError, DimensionError, PreconditionError, WindowError
from securestate.services.report_writer import write_report
from securestate.services.scenario_loader import load_scenario
from securestate.services.scenario_runner import (
    EXIT_CONFIG,
    EXIT_INFEASIBLE,
    RunOptions,
    audit_scenario,
    run_scenario,
    synthesize,
)

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="scenario YAML file")
    common.add_argument("--format", choices=["human", "machine"], default="human")
    common.add_argument("--out", help="write the report to this path instead of stdout")
    common.add_argument("--log-level", default=None, help=f"logging level (default {settings.log_level})")

    parser = _Parser(prog="securestate", description="Secure state reconstruction under sparse sensor attacks")
    verbs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    verbs.add_parser("audit", parents=[common], help="s-sparse observability audit")

    reconstruct = verbs.add_parser("reconstruct", parents=[common], help="simulate and reconstruct the state")
    reconstruct.add_argument("--r", type=int, default=None, help="window length override")
    reconstruct.add_argument("--eq-tol", type=float, default=None, help="absolute candidate-equality tolerance")
    reconstruct.add_argument("--residual-tol", type=float, default=None,
                             help=f"dynamics residual bound (default {settings.residual_tol})")
    reconstruct.add_argument("--max-rounds", type=int, default=None)

    synth = verbs.add_parser("attack-synth", parents=[common], help="synthesize a reconstruction-defeating attack")
    synth.add_argument("--target", choices=["sesvs", "sesgc"], default=None)
    synth.add_argument("--rounds", type=int, default=None, help="rounds the wrong hypothesis must survive")
    synth.add_argument("--r", type=int, default=None, help="window length override")
    return parser


def _log_details(exc) -> None:
    for detail in exc.details:
        location = f" (line {detail['line']})" if detail.get("line") else ""
        field = detail.get("field") or "scenario"
        logger.error(f"{field}{location}: {detail['message']}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(args.log_level or settings.log_level).upper(), stream=sys.stderr)

    options = RunOptions(
        r=getattr(args, "r", None),
        eq_tol=getattr(args, "eq_tol", None),
        residual_tol=getattr(args, "residual_tol", None),
        max_rounds=getattr(args, "max_rounds", None),
        target=getattr(args, "target", None),
        rounds=getattr(args, "rounds", None),
    )
    try:
        scenario = load_scenario(args.config)
        if args.command == "audit":
            report = audit_scenario(scenario)
        elif args.command == "reconstruct":
            report = run_scenario(scenario, options)
        else:
            report = synthesize(scenario, options)
    except (ConfigError, DimensionError, WindowError, CombinatoricsError) as exc:
        _log_details(exc)
        return EXIT_CONFIG
    except PreconditionError as exc:
        _log_details(exc)
        return EXIT_INFEASIBLE

    text = write_report(report, args.format, args.out)
    if args.out is None:
        sys.stdout.write(text)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
