"""Command-line runner: ``erw <config.json> [--format csv|json] [--output PATH] [--threads K] [--validate]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from erw import _parallel
from erw.errors import ConfigError, DomainError, ResourceLimitError
from erw.experiments import emit, parse_config, run_experiment, write_output

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_RESOURCE = 4

log = logging.getLogger("erw")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erw", description="Elephant random walk experiments.")
    parser.add_argument("config", help="path to a flat JSON experiment config")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--output", help="write results here instead of stdout (overrides output_path)")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
    parser.add_argument("--validate", action="store_true", help="parse and validate the config only")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s", stream=sys.stderr)
    if args.threads is not None and args.threads < 1:
        log.error("--threads must be >= 1")
        return EXIT_CONFIG
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        log.error("cannot read config %s: %s", args.config, exc.strerror or exc)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
        if args.validate:
            log.info("config ok: %s", cfg.to_json())
            return EXIT_OK
        table = run_experiment(cfg, threads=args.threads or _parallel.default_threads())
        data = emit(table, args.format)
        out = args.output or cfg.output_path
        if out:
            write_output(data, out)
        else:
            sys.stdout.buffer.write(data)
            sys.stdout.flush()
    except ConfigError as exc:
        log.error("config error%s: %s", f" [{exc.key}]" if exc.key else "", exc)
        return EXIT_CONFIG
    except ResourceLimitError as exc:
        log.error("resource cap exceeded: %s", exc)
        return EXIT_RESOURCE
    except DomainError as exc:
        log.error("precondition violated: %s", exc)
        return EXIT_DOMAIN
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    log.info("%s finished in %.3f s", cfg.experiment, table.elapsed)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
