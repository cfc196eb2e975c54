"""Command line entry point: ``multichaos KIND [options]``, ``report``, ``replay``, ``schema``."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .config import KINDS, ConfigError, build_config, describe_schema, parse_text
from .runner import config_from_manifest, report, run

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _pairs(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError({item: "expected key=value"})
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="multichaos", description="Gaussian multiplicative chaos experiments")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment")
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--seed", help="master seed (unsigned 64-bit)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one parameter")
        sp.add_argument("--report", action="store_true", help="print the summary table after the run")
    sp = sub.add_parser("report", help="summarize a result directory")
    sp.add_argument("directory")
    sp = sub.add_parser("replay", help="re-run the experiment recorded in a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", required=True)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--report", action="store_true")
    sp = sub.add_parser("schema", help="list the parameters of an experiment kind")
    sp.add_argument("kind", choices=KINDS)
    return ap


def _config(args):
    raw = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            raw = parse_text(fh.read())
        if raw.get("kind", args.command) != args.command:
            raise ConfigError({"kind": f"config is for {raw['kind']!r}, command is {args.command!r}"})
    raw["kind"] = args.command
    overrides = _pairs(args.set)
    overrides.update({"seed": args.seed, "out": args.out})
    cfg = build_config(raw, overrides)
    if not cfg.out:
        raise ConfigError({"out": "an output directory is required (--out or out = ...)"})
    return cfg


def _finish(manifest: dict, out, show: bool) -> int:
    if show:
        print(report(out)[0])
    print(f"{manifest['kind']}: {'pass' if manifest['passed'] else 'FAIL'} ({out})")
    return EXIT_OK if manifest["passed"] else EXIT_FAILED


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "schema":
            print(describe_schema(args.kind))
            return EXIT_OK
        if args.command == "report":
            text, ok = report(args.directory)
            print(text)
            return EXIT_OK if ok else EXIT_FAILED
        if args.command == "replay":
            cfg = config_from_manifest(args.manifest)
            out = args.out
        else:
            cfg = _config(args)
            out = cfg.out
    except ConfigError as exc:
        for key, msg in sorted(exc.problems.items()):
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(cfg, out, args.threads)
    except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return _finish(manifest, out, args.report)


if __name__ == "__main__":
    sys.exit(main())
