"""Command-line entry point: ``trtlab <command> [--config PATH] [--out DIR] [--seed N]``."""

from __future__ import annotations

import argparse
import os
import sys
import time

COMMANDS = ("forward", "adjoint-test", "spanning", "inject-probe", "dim2-probe", "support-exp",
            "invert")
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _cap_threads():
    # must run before numpy loads its BLAS
    cap = os.environ.get("TRT_THREADS")
    if cap:
        for var in _THREAD_VARS:
            os.environ[var] = cap


def build_parser():
    p = argparse.ArgumentParser(prog="trtlab", description="Transverse ray transform experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key = value config file (defaults used when omitted)")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, help="overrides the seed key of the config")
    p.add_argument("--n", type=int, help="dimension override for the spanning command")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _cap_threads()
    from ..errors import ConfigError, TRTError
    from .commands import run_command
    from .config import parse_config

    start = time.perf_counter()
    try:
        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        cfg = parse_config(text)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        report = run_command(args.command, cfg, args.out, n=args.n)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 2
    except (TRTError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report.seconds = time.perf_counter() - start
    for m in report.metrics:
        flag = "" if m.passed == "" else ("  PASS" if m.passed else "  FAIL")
        rel = f" {m.relation} {m.threshold}" if m.relation else ""
        print(f"{m.name}: {m.value}{rel}{flag}")
    print(f"wall_seconds: {report.seconds:.2f}")
    print("all checks passed" if report.passed else "some checks FAILED")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
