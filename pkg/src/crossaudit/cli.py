"""Command-line entry points.

Subcommands compose through the filesystem: `fetch` turns Overpass queries
into snapshot files, everything downstream runs offline from those files.
Exit codes: 0 success, 1 config error, 2 input/parse error, 3 network
error, 4 finished but with non-empty diagnostics.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, ParseError, ProtocolError, TransportError
from .report import QualityReport, fetch_snapshots, load_config, run_pipeline, write_outputs

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INPUT = 2
EXIT_NETWORK = 3
EXIT_PARTIAL = 4

SECTION_SUBCOMMANDS = {
    "analyze": ("counts", "contamination", "quality"),
    "match": ("matching",),
    "fit": ("fitting",),
    "estimate": ("estimates",),
    "text": ("text",),
}

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossaudit",
        description="Coverage, richness, and quality analytics for niche-tag OSM data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("fetch", "download snapshots from Overpass into the output directory"),
        ("analyze", "tag counts, contamination, and intrinsic quality metrics"),
        ("match", "conflate the reference register against OSM nodes"),
        ("fit", "per-region densities and the logistic fit"),
        ("estimate", "completeness extrapolation"),
        ("text", "name/inscription analytics"),
        ("report", "run every stage and write the full report"),
    ]:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to the JSON run config")
        cmd.add_argument("--out", help="override the configured output directory")
        cmd.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def _write_partial(report: QualityReport, names: tuple[str, ...], output_dir: Path) -> None:
    doc = {"schema_version": 1}
    for name in names:
        doc[name] = report.sections.get(name, {"skipped": "not computed"})
    doc["diagnostics"] = report.diagnostics
    path = output_dir / f"{names[-1]}.json"
    path.write_text(
        json.dumps(doc, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    for filename, content in sorted(report.csv_files.items()):
        (output_dir / filename).write_text(content, encoding="utf-8")
    print(path)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config, output_dir_override=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "fetch":
            paths = fetch_snapshots(config)
            for cat in sorted(paths, key=lambda c: c.name):
                print(paths[cat])
            return EXIT_OK

        report = run_pipeline(config)
        if args.command == "report":
            for path in write_outputs(report, config.output_dir):
                print(path)
        else:
            _write_partial(report, SECTION_SUBCOMMANDS[args.command], config.output_dir)
        return EXIT_PARTIAL if report.partial else EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (TransportError, ProtocolError) as exc:
        print(f"network error: {exc}", file=sys.stderr)
        return EXIT_NETWORK


if __name__ == "__main__":
    sys.exit(main())
