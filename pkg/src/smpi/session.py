"""Sessions and groups: the root lifetimes every communication object hangs off.

No global communicator exists; a :class:`Session` binds a transport
endpoint, owns the type pool, and hands out groups built from named process
sets.  Closing the session after all descendant communicators is the normal
teardown; closing it while communicators are alive is a detectable usage
error at assert level >= 1.

Opening a second session after finalizing a first one (in the same process)
is explicitly supported; sessions are isolated incarnations, not a one-shot
global runtime.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from typing import Optional

from . import transport
from .datatype import fnv1a64
from .errors import (
    ASSERT_ABORT_CODE,
    Abort,
    InvalidArgument,
    UsageError,
    check,
)
from .typepool import TypePool

__all__ = ["WORLD_PSET", "SELF_PSET", "SessionConfig", "Group", "Session"]

WORLD_PSET = "mpi://WORLD"
SELF_PSET = "mpi://SELF"

ENV_RANK = "SMPI_RANK"
ENV_WORLD_SIZE = "SMPI_WORLD_SIZE"
ENV_TRANSPORT = "SMPI_TRANSPORT"
ENV_COORD = "SMPI_COORD"
ENV_ASSERT_LEVEL = "SMPI_ASSERT_LEVEL"

# TCP endpoints survive session close and are shared by later sessions in
# the same process: sockets are process infrastructure, sessions are views.
_tcp_endpoints: dict = {}
_tcp_lock = threading.Lock()


@dataclass
class SessionConfig:
    transport: str = "inproc"
    rank: int = 0
    world_size: int = 1
    coord: Optional[str] = None
    assert_level: int = 1
    connect_timeout: float = 10.0
    fabric: object = field(default=None, repr=False)

    @classmethod
    def from_env(cls, environ=os.environ) -> "SessionConfig":
        return cls(
            transport=environ.get(ENV_TRANSPORT, "inproc"),
            rank=int(environ.get(ENV_RANK, "0")),
            world_size=int(environ.get(ENV_WORLD_SIZE, "1")),
            coord=environ.get(ENV_COORD) or None,
            assert_level=int(environ.get(ENV_ASSERT_LEVEL, "1")),
        )

    def child_environ(self, rank: int) -> dict:
        """Environment variables a launched rank process should inherit."""
        env = dict(os.environ)
        env[ENV_RANK] = str(rank)
        env[ENV_WORLD_SIZE] = str(self.world_size)
        env[ENV_TRANSPORT] = self.transport
        env[ENV_ASSERT_LEVEL] = str(self.assert_level)
        if self.coord:
            env[ENV_COORD] = self.coord
        return env


class Group:
    """Immutable, duplicate-free, ordered set of global process identities."""

    __slots__ = ("members",)

    def __init__(self, members):
        members = tuple(int(m) for m in members)
        if len(set(members)) != len(members):
            raise InvalidArgument("group members must be duplicate-free")
        object.__setattr__(self, "members", members)

    def __setattr__(self, name, value):
        raise AttributeError("groups are immutable")

    @property
    def size(self) -> int:
        return len(self.members)

    def __eq__(self, other):
        return isinstance(other, Group) and self.members == other.members

    def __hash__(self):
        return hash(self.members)

    def __repr__(self):
        return f"Group{self.members}"


def _acquire_endpoint(config: SessionConfig):
    """Endpoint plus its attach ordinal (how many sessions used it before)."""
    if config.transport == "tcp":
        key = (config.rank, config.world_size, config.coord)
        with _tcp_lock:
            entry = _tcp_endpoints.get(key)
            if entry is not None:
                endpoint, ordinal = entry
                _tcp_endpoints[key] = (endpoint, ordinal + 1)
                return endpoint, ordinal + 1
        endpoint = transport.bootstrap(config)
        with _tcp_lock:
            _tcp_endpoints[key] = (endpoint, 0)
        return endpoint, 0
    endpoint = transport.bootstrap(config)
    return endpoint, getattr(endpoint, "attach_ordinal", 0)


class Session:
    """An open binding to a launched world.

    Thread-safe for pool access and communicator-creation sequencing;
    individual communicators stay single-owner.
    """

    def __init__(self, config: Optional[SessionConfig] = None):
        if config is None:
            config = SessionConfig.from_env()
        if not 0 <= config.assert_level <= 3:
            raise InvalidArgument(f"assert level {config.assert_level} not in 0..3")
        self.config = config
        self.assert_level = config.assert_level
        self._endpoint, self._incarnation = _acquire_endpoint(config)
        self._lock = threading.Lock()
        self._comm_seq = 0
        self._live_comms: set = set()
        self._open = True
        self.type_pool = TypePool(self)

    # -- lifecycle ---------------------------------------------------------

    @property
    def is_open(self) -> bool:
        return self._open

    @property
    def world_size(self) -> int:
        return self._endpoint.world_size

    @property
    def world_rank(self) -> int:
        return self._endpoint.rank

    @property
    def endpoint(self):
        return self._endpoint

    def close(self) -> None:
        """Finalize the session; all descendant objects must be gone."""
        if not self._open:
            return
        self._check(
            1,
            lambda: not self._live_comms,
            lambda: f"session finalized with {len(self._live_comms)} live communicators",
        )
        self._open = False
        self.type_pool._close()
        if self.config.transport != "tcp":
            self._endpoint.close()

    def __enter__(self) -> "Session":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self):
        try:
            if self._open and not self._live_comms:
                self.close()
        except Exception:
            pass

    # -- groups and communicators -------------------------------------------

    def group_from_pset(self, name: str) -> Group:
        self._require_open()
        if name == WORLD_PSET:
            return Group(range(self.world_size))
        if name == SELF_PSET:
            return Group((self.world_rank,))
        raise InvalidArgument(f"unknown process set {name!r}")

    def communicator_from_group(self, group: Group):
        """Collective over the group's members; all derive one context id."""
        from .comm import Communicator

        self._require_open()
        if self.world_rank not in group.members:
            raise InvalidArgument(
                f"process {self.world_rank} is not a member of {group!r}"
            )
        with self._lock:
            seq = self._comm_seq
            self._comm_seq += 1
        context_id = self._derive_context_id(group, seq)
        comm = Communicator(self, group, context_id)
        self._live_comms.add(id(comm))
        self._endpoint.register_context(context_id)
        comm._validate_context_agreement(seq)
        return comm

    def _derive_context_id(self, group: Group, seq: int) -> int:
        blob = bytearray(b"SMPI-CTX")
        blob += self._incarnation.to_bytes(8, "little")
        blob += len(group.members).to_bytes(4, "little")
        for member in sorted(group.members):
            blob += member.to_bytes(4, "little")
        blob += seq.to_bytes(8, "little")
        return fnv1a64(bytes(blob))

    def _forget_comm(self, comm) -> None:
        self._live_comms.discard(id(comm))
        self._endpoint.unregister_context(comm.context_id)

    # -- checking and abort ---------------------------------------------------

    def _check(self, required: int, predicate, diagnostic) -> None:
        check(self.assert_level, required, predicate, diagnostic, abort=self._abort_hook)

    def _abort_hook(self, message: str) -> None:
        try:
            self._endpoint.broadcast_abort(ASSERT_ABORT_CODE)
        except Exception:
            pass
        raise Abort(ASSERT_ABORT_CODE, message)

    def abort(self, code: int):
        """Terminate every rank of the world with ``code``."""
        try:
            self._endpoint.broadcast_abort(code)
        except Exception:
            pass
        raise Abort(code)

    def _require_open(self) -> None:
        if not self._open:
            raise UsageError("session is finalized")
