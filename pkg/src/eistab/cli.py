"""eistab command line.

    eistab <command> [--config FILE] [--key=value ...]
    eistab replay MANIFEST [--key=value ...]

Exit codes: 0 pass, 1 tolerance failure, 2 usage or config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, coerce, load_config
from .experiments import COMMANDS, EXIT_NUMERICAL, EXIT_TOLERANCE, EXIT_USAGE, run_command
from .results import RunManifest


def _parse_overrides(tokens) -> dict:
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        else:
            try:
                val = next(it)
            except StopIteration:
                raise ConfigError(f"missing value for --{key}") from None
        out[key.replace("-", "_")] = val
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eistab", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=sorted(COMMANDS) + ["replay"])
    ap.add_argument("manifest", nargs="?", help="manifest.json (replay only)")
    ap.add_argument("--config", help="flat key = value file, # starts a comment")
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = build_parser()
    try:
        args, rest = ap.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    try:
        overrides = _parse_overrides(rest)
        if args.command == "replay":
            if args.manifest is None:
                raise ConfigError("replay needs a manifest path")
            manifest = RunManifest.read(args.manifest)
            values = dict(manifest.config)
            values.update(overrides)
            cfg = load_config(None, coerce(values), env={})
            command = manifest.command
        else:
            if args.manifest is not None:
                raise ConfigError(f"unexpected argument {args.manifest!r}")
            cfg = load_config(args.config, overrides)
            command = args.command
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"eistab: {exc}", file=sys.stderr)
        return EXIT_USAGE

    result, new_manifest = run_command(command, cfg)
    code = result.exit_code
    if args.command == "replay" and code != EXIT_NUMERICAL:
        bad = manifest.compare(cfg.output_dir)
        for name, (want, got) in bad.items():
            print(f"eistab: checksum mismatch for {name}: {want} != {got}", file=sys.stderr)
        if bad:
            code = max(code, EXIT_TOLERANCE)
    print(f"{command}: exit {code}, outputs in {cfg.output_dir}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
