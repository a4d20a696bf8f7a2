"""Command-line entry point: declarative runs over content-hashed stages."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_run_config
from .stages import STAGE_ORDER, InputError, NumericError, run_stages

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_NUMERIC = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cortexmap",
        description="Phantom-to-report mapping pipeline. Each subcommand "
                    "runs one stage into <output_dir>/<stage>/ and skips "
                    "work whose inputs and configuration are unchanged.")
    parser.add_argument("command", choices=STAGE_ORDER + ["all"],
                        help="stage to run, or 'all' for the whole pipeline")
    parser.add_argument("-c", "--config", required=True,
                        help="YAML run configuration")
    parser.add_argument("--output-dir", default=None,
                        help="override the configured output directory")
    parser.add_argument("--force", action="store_true",
                        help="rebuild even if the stage looks up to date")
    parser.add_argument("--print-config", action="store_true",
                        help="print the fully resolved configuration and exit")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    log = logging.getLogger("cortexmap")
    try:
        cfg = load_run_config(args.config)
        if args.output_dir:
            cfg.output_dir = args.output_dir
    except FileNotFoundError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_CONFIG
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # malformed YAML and friends
        log.error("cannot parse config: %s", exc)
        return EXIT_CONFIG

    if args.print_config:
        json.dump(cfg.to_json(), sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
        return EXIT_OK

    stages = STAGE_ORDER if args.command == "all" else [args.command]
    try:
        run_stages(cfg, stages, force=args.force)
    except InputError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except Exception:
        log.exception("unexpected failure")
        return EXIT_UNEXPECTED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
