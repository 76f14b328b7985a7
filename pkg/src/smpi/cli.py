"""Launcher CLI: spawn a world, run a named example, aggregate exit codes.

Usage::

    smpi --ranks 4 --transport inproc --example pingpong
    smpi --ranks 4 --transport tcp --example conformance --assert-level 3

The in-process transport runs ranks as threads of this process; tcp
re-invokes this interpreter as one child process per rank (hidden ``_rank``
mode) with the ``SMPI_*`` environment set and rank 0 acting as rendezvous
coordinator.  The exit code is 0 iff every rank exited 0; an abort
propagates its code; a timeout exits 124.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from typing import List, Optional

from .errors import Abort
from .launcher import (
    DEFAULT_TIMEOUT,
    LaunchConfig,
    aggregate_exit_code,
    free_coord_address,
    run_ranks,
    run_tcp_ranks,
)
from .programs import EXAMPLES, PUBLIC_EXAMPLES, run_example
from .session import SessionConfig

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smpi",
        description="Launch a desk-scale message-passing example.",
    )
    parser.add_argument("--ranks", type=int, default=1, metavar="N",
                        help="number of ranks to launch (default 1)")
    parser.add_argument("--transport", choices=("inproc", "tcp"), default="inproc",
                        help="inproc: ranks as threads; tcp: ranks as processes")
    parser.add_argument("--assert-level", type=int, choices=range(4), default=1,
                        metavar="{0..3}", help="runtime checking level (default 1)")
    parser.add_argument("--example", required=True, metavar="NAME",
                        help="one of: " + ", ".join(PUBLIC_EXAMPLES))
    parser.add_argument("--seed", type=int, default=0, metavar="U64",
                        help="deterministic seed for the example (default 0)")
    parser.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT,
                        metavar="SECS", help="per-run deadline (default 60)")
    parser.add_argument("--coord", default=None, metavar="HOST:PORT",
                        help="tcp coordinator address (default: a free local port)")
    return parser


def _rank_main(argv: List[str]) -> int:
    """Hidden child mode: run one rank from the SMPI_* environment."""
    parser = argparse.ArgumentParser(prog="smpi _rank")
    parser.add_argument("--example", required=True)
    parser.add_argument("--seed", type=int, default=0)
    options = parser.parse_args(argv)
    config = SessionConfig.from_env()
    try:
        return run_example(options.example, config, options.seed)
    except Abort as abort:
        return abort.code
    except Exception:
        traceback.print_exc()
        return 1


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "_rank":
        return _rank_main(argv[1:])
    parser = _build_parser()
    options = parser.parse_args(argv)
    if options.ranks < 1:
        parser.error(f"--ranks must be >= 1, got {options.ranks}")
    if options.example not in EXAMPLES:
        parser.error(
            f"unknown example {options.example!r} "
            f"(choose from {', '.join(PUBLIC_EXAMPLES)})"
        )
    config = LaunchConfig(
        ranks=options.ranks,
        transport=options.transport,
        assert_level=options.assert_level,
        example=options.example,
        seed=options.seed,
        timeout=options.timeout,
        coord=options.coord,
    )
    if options.transport == "inproc":
        outcomes = run_ranks(
            _rank_target,
            config.ranks,
            assert_level=config.assert_level,
            timeout=config.timeout,
            args=(config.example, config.seed),
        )
        for outcome in outcomes:
            if outcome.exit_code == 0 and outcome.value:
                outcome.exit_code = int(outcome.value)
    else:
        coord = config.coord or free_coord_address()
        config.coord = coord
        outcomes = run_tcp_ranks(
            config,
            rank_argv=lambda rank: [
                sys.executable,
                "-m",
                "smpi",
                "_rank",
                "--example",
                config.example,
                "--seed",
                str(config.seed),
            ],
        )
    code = aggregate_exit_code(outcomes)
    if code != 0:
        detail = " ".join(
            f"rank{o.rank}={'timeout' if o.timed_out else o.exit_code}"
            for o in outcomes
        )
        print(f"smpi: {config.example} failed: {detail}", file=sys.stderr)
    return code


def _rank_target(session_config: SessionConfig, name: str, seed: int) -> int:
    return run_example(name, session_config, seed)
