"""Command line front end: ``fracheat <kind> --config PATH [--seed N] [--out DIR] [--threads N]``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback

from .config import KINDS, ConfigError, load_config
from .gridfile import GridFileError, read_grid


def _threads(arg: int | None) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get("FRACHEAT_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"FRACHEAT_THREADS must be an integer, got {env!r}") from None
    return None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracheat", description="Fractional heat equation experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in ("run",) + KINDS:
        s = sub.add_parser(kind, help="kind taken from the config" if kind == "run" else f"{kind} experiment")
        s.add_argument("--config", required=True, help="key = value config file")
        s.add_argument("--seed", type=int, help="override the master seed")
        s.add_argument("--out", help="output directory (must be empty or absent)")
        s.add_argument("--threads", type=int, help="BLAS threads (default: $FRACHEAT_THREADS)")
    s = sub.add_parser("inspect", help="validate a grid file and print its header")
    s.add_argument("path")
    return p


def _error(kind: str, exc: BaseException, code: int) -> int:
    record = {"status": "error", "error": type(exc).__name__, "message": str(exc), "stage": kind}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "inspect":
        try:
            f = read_grid(args.path)
        except (GridFileError, OSError) as exc:
            return _error("inspect", exc, 2)
        g = f.grid
        print(json.dumps({"t": [g.t_min, g.t_max, g.nt], "x": [g.x_min, g.x_max, g.nx], "status": "ok"}))
        return 0
    try:
        cfg = load_config(args.config, None if args.command == "run" else args.command)
        cfg = cfg.replace(seed=args.seed, out=args.out)
        threads = _threads(args.threads)
    except ConfigError as exc:
        return _error("validation", exc, 2)
    from threadpoolctl import threadpool_limits

    from .runner import run
    try:
        with threadpool_limits(limits=threads):
            report = run(cfg, threads=threads)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error record
        traceback.print_exc(file=sys.stderr)
        return _error(cfg.kind, exc, 1)
    print(json.dumps({"status": "ok", "out": str(report.out), "files": report.files}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
