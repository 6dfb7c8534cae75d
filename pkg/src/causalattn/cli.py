"""Command-line entry point.

Exit codes: 0 success, 1 failed acceptance criterion, 2 configuration error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config, parse_config
from .errors import ConfigError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SUBCOMMANDS = ("simulate", "meanfield", "correlations", "profile", "accuracy", "verify")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="causalattn", description="Causal attention particle experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, help=f"run the {name} experiment")
        s.add_argument("--config", help="YAML experiment configuration", required=name != "verify")
        s.add_argument("--threads", type=int, default=1, help="worker threads for replicate sweeps")
        s.add_argument("--output", help="output directory (overrides output_dir)")
        s.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides the config)")
        if name == "verify":
            s.add_argument("--tier", choices=("fast", "mc", "all"), default=None, help="criteria to run")
            s.add_argument("--replicate-scale", type=float, default=None,
                           help="multiply Monte Carlo replicate counts (1 = stated counts)")
    return p


def _load(args):
    if args.config:
        cfg = load_config(args.config, args.seed, args.output)
        if cfg.experiment != args.command:
            raise ConfigError(f"config describes experiment {cfg.experiment!r}, not {args.command!r}")
        return cfg
    raw = {"experiment": "verify", "output_dir": args.output or "verify-output"}
    return parse_config(raw, args.seed, args.output)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load(args)
        if args.command == "verify":
            if args.tier is not None:
                cfg.tier = args.tier
            if args.replicate_scale is not None:
                if not args.replicate_scale > 0:
                    raise ConfigError("--replicate-scale must be > 0")
                cfg.replicate_scale = args.replicate_scale
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .experiments import run

    try:
        result = run(cfg, threads=args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for line in result.get("lines", []):
        print(line)
    for f in result.get("files", []):
        print(f"wrote {f}")
    if args.command == "verify" and result["failed"]:
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
