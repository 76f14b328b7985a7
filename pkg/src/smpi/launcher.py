"""Rank launching: thread worlds for inproc, child processes for tcp.

The in-process path spins one thread per rank around a shared fabric and
gathers per-rank outcomes (return value, exit code, exception).  A timeout
aborts the fabric so blocked ranks wake and die instead of hanging the
host.  The TCP path re-invokes this interpreter as one child process per
rank with the ``SMPI_*`` environment set, rank 0 doubling as the
rendezvous coordinator.
"""

from __future__ import annotations

import socket
import subprocess
import sys
import threading
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence

from .errors import Abort, TIMEOUT_EXIT_CODE
from .session import SessionConfig
from .transport import InprocFabric

__all__ = [
    "LaunchConfig",
    "RankOutcome",
    "run_ranks",
    "run_tcp_ranks",
    "aggregate_exit_code",
    "free_coord_address",
]

DEFAULT_TIMEOUT = 60.0


@dataclass
class LaunchConfig:
    ranks: int = 1
    transport: str = "inproc"
    assert_level: int = 1
    example: str = ""
    seed: int = 0
    timeout: float = DEFAULT_TIMEOUT
    coord: Optional[str] = None


@dataclass
class RankOutcome:
    rank: int
    exit_code: int = 0
    value: Any = None
    error: Optional[BaseException] = None
    timed_out: bool = False


def run_ranks(
    target: Callable[..., Any],
    ranks: int,
    *,
    assert_level: int = 1,
    timeout: float = DEFAULT_TIMEOUT,
    args: Sequence[Any] = (),
    quiet: bool = False,
) -> List[RankOutcome]:
    """Run ``target(config, *args)`` on ``ranks`` in-process rank threads.

    Returns one outcome per rank.  On timeout the fabric is aborted so
    stuck ranks unwind; their outcome carries the timeout exit code.
    """
    fabric = InprocFabric(ranks)
    outcomes = [RankOutcome(rank=r, exit_code=TIMEOUT_EXIT_CODE, timed_out=True)
                for r in range(ranks)]

    def runner(rank: int) -> None:
        config = SessionConfig(
            transport="inproc",
            rank=rank,
            world_size=ranks,
            assert_level=assert_level,
            fabric=fabric,
        )
        try:
            value = target(config, *args)
            outcomes[rank] = RankOutcome(rank=rank, exit_code=0, value=value)
        except Abort as abort:
            outcomes[rank] = RankOutcome(rank=rank, exit_code=abort.code, error=abort)
        except BaseException as exc:  # noqa: BLE001 - rank isolation boundary
            if not quiet:
                traceback.print_exc()
            outcomes[rank] = RankOutcome(rank=rank, exit_code=1, error=exc)

    threads = [
        threading.Thread(target=runner, args=(r,), daemon=True, name=f"rank-{r}")
        for r in range(ranks)
    ]
    for thread in threads:
        thread.start()
    deadline = timeout
    for thread in threads:
        thread.join(deadline)
    if any(thread.is_alive() for thread in threads):
        fabric.abort(TIMEOUT_EXIT_CODE)
        for thread in threads:
            thread.join(1.0)
    return outcomes


def free_coord_address(host: str = "127.0.0.1") -> str:
    """Pick a currently free TCP port for the coordinator."""
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.bind((host, 0))
    _, port = probe.getsockname()
    probe.close()
    return f"{host}:{port}"


def run_tcp_ranks(config: LaunchConfig, rank_argv: Callable[[int], List[str]],
                  extra_env: Optional[dict] = None) -> List[RankOutcome]:
    """Spawn one child process per rank and collect exit codes."""
    coord = config.coord or free_coord_address()
    base = SessionConfig(
        transport="tcp",
        world_size=config.ranks,
        coord=coord,
        assert_level=config.assert_level,
    )
    children: List[subprocess.Popen] = []
    for rank in range(config.ranks):
        env = base.child_environ(rank)
        if extra_env:
            env.update(extra_env)
        children.append(subprocess.Popen(rank_argv(rank), env=env))
    outcomes = []
    deadline = config.timeout
    for rank, child in enumerate(children):
        try:
            code = child.wait(deadline)
            outcomes.append(RankOutcome(rank=rank, exit_code=code))
        except subprocess.TimeoutExpired:
            outcomes.append(
                RankOutcome(rank=rank, exit_code=TIMEOUT_EXIT_CODE, timed_out=True)
            )
    if any(outcome.timed_out for outcome in outcomes):
        for child in children:
            if child.poll() is None:
                child.kill()
        for child in children:
            child.wait()
    return outcomes


def aggregate_exit_code(outcomes: Sequence[RankOutcome]) -> int:
    """0 iff every rank exited 0; otherwise the first nonzero code."""
    for outcome in outcomes:
        if outcome.exit_code != 0:
            return outcome.exit_code
    return 0
