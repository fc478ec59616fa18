import argparse
import json
import logging
import sys

from models.exceptions import TrapSimError
from models.scenario import COMMANDS, FIGURES
from scenario import emit_figure_data, load_scenario, run
from utils.logs import configure_logging

logger = logging.getLogger(__name__)

EXIT_CODES = {"config": 2, "numerical": 3, "domain": 4}

DESCRIPTION = """
===========================
   SURFACE TRAP SIMULATOR
===========================
Commands read a scenario file (JSON, unit-suffixed keys) and write
delimited tables with a '#' metadata header.
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trapsim", description=DESCRIPTION, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("--log-level", default="WARNING", help="logging level (default WARNING)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (default: scenario 'output' or results/)")
        p.add_argument("--seed", type=int, help="random seed, overrides the scenario")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")

    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--scenario", required=True, help="scenario file")
        common(p)

    fig = sub.add_parser("figure", help="run the checked-in scenario of a figure")
    fig.add_argument("figure_id", choices=sorted(FIGURES))
    common(fig)
    return parser


def _report(category: str, e: Exception) -> int:
    print(json.dumps({"error": category, "type": type(e).__name__, "message": str(e)}), file=sys.stderr)
    return EXIT_CODES.get(category, 1)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.command == "figure":
            written = emit_figure_data(args.figure_id, args.out or "results", args.threads, args.seed)
        else:
            scenario = load_scenario(args.scenario)
            scenario.command = args.command
            written = run(scenario, args.out, args.threads, args.seed)
    except TrapSimError as e:
        return _report(e.category, e)
    except Exception as e:
        # numpy and scipy failures outside the trapsim hierarchy
        logger.debug("unexpected failure in %s", args.command, exc_info=True)
        return _report("numerical", e)
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
