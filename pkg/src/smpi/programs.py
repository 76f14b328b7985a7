"""Named example programs runnable under the launcher.

Each program takes ``(config, seed)``, owns its session lifecycle, and
returns an exit code (0 = success).  Underscore-prefixed entries are error
injection hooks used by the verification suite; they are launchable but not
advertised.
"""

from __future__ import annotations

import numpy as np

from .buffer import adapt, adapt_counted, irregular, single
from .comm import ReduceOp
from .conformance import run_conformance
from .datatype import CommittedDatatype, FundamentalKind, contiguous, fundamental, struct_type
from .serialize import PairCodec, SequenceCodec, Utf8Codec, recv_serialized, send_serialized
from .session import Session, SessionConfig, WORLD_PSET

__all__ = ["EXAMPLES", "PUBLIC_EXAMPLES", "run_example"]


def _world(session: Session):
    return session.communicator_from_group(session.group_from_pset(WORLD_PSET))


def _pingpong(config: SessionConfig, seed: int) -> int:
    with Session(config) as session:
        with _world(session) as comm:
            if comm.size >= 2:
                rng = np.random.default_rng(seed)
                ball = rng.integers(-100, 100, size=32).astype(np.int32)
                if comm.rank == 0:
                    comm.send(adapt(ball), dest=1, tag=1)
                    back = np.zeros_like(ball)
                    comm.recv(adapt(back), source=1, tag=2)
                    assert np.array_equal(back, ball + 1)
                elif comm.rank == 1:
                    got = np.zeros_like(ball)
                    comm.recv(adapt(got), source=0, tag=1)
                    comm.send(adapt(got + 1), dest=0, tag=2)
            comm.barrier()
    return 0


def _ring(config: SessionConfig, seed: int) -> int:
    with Session(config) as session:
        with _world(session) as comm:
            right = (comm.rank + 1) % comm.size
            left = (comm.rank - 1) % comm.size
            token = np.array([comm.rank], dtype=np.int64)
            incoming = np.zeros(1, dtype=np.int64)
            for _ in range(comm.size):
                comm.send_recv(adapt(token), right, 5, adapt(incoming), left, 5)
                token = incoming.copy()
            assert int(token[0]) == comm.rank
    return 0


def _bcast(config: SessionConfig, seed: int) -> int:
    with Session(config) as session:
        with _world(session) as comm:
            rng = np.random.default_rng(seed)
            reference = rng.integers(-1000, 1000, size=16).astype(np.int64)
            mine = reference.copy() if comm.rank == 0 else np.zeros(16, dtype=np.int64)
            comm.broadcast(adapt(mine), root=0)
            assert np.array_equal(mine, reference)
    return 0


def _reduce(config: SessionConfig, seed: int) -> int:
    with Session(config) as session:
        with _world(session) as comm:
            contribution = single(comm.rank)
            comm.reduce(contribution, ReduceOp.SUM, root=0)
            if comm.rank == 0:
                expected = comm.size * (comm.size - 1) // 2
                assert contribution.value == expected
            pair = np.array([comm.rank, -comm.rank], dtype=np.int64)
            comm.reduce(adapt(pair), ReduceOp.MAX, root=0)
            if comm.rank == 0:
                assert pair.tolist() == [comm.size - 1, 0]
    return 0


def _allreduce(config: SessionConfig, seed: int) -> int:
    with Session(config) as session:
        with _world(session) as comm:
            one = single(1)
            comm.allreduce(one, ReduceOp.SUM)
            assert one.value == comm.size
            flag = single(comm.rank != 1)
            comm.allreduce(flag, ReduceOp.LAND)
            assert flag.value is (comm.size < 2)
    return 0


def _alltoallv(config: SessionConfig, seed: int) -> int:
    with Session(config) as session:
        with _world(session) as comm:
            n = comm.size
            outgoing = np.array([comm.rank * 10 + i for i in range(n)], dtype=np.int64)
            incoming = np.zeros(n, dtype=np.int64)
            ones = [1] * n
            displs = list(range(n))
            comm.alltoallv(
                irregular(outgoing, ones, displs), irregular(incoming, ones, displs)
            )
            assert incoming.tolist() == [r * 10 + comm.rank for r in range(n)]
    return 0


def _serialize(config: SessionConfig, seed: int) -> int:
    with Session(config) as session:
        with _world(session) as comm:
            codec = PairCodec(Utf8Codec(), SequenceCodec(FundamentalKind.INT64))
            value = (f"greetings from a world of {comm.size}", list(range(seed % 50, seed % 50 + 20)))
            if comm.size == 1:
                assert codec.decode(codec.encode(value)) == value
            else:
                send_serialized(comm, value, codec, dest=(comm.rank + 1) % comm.size, tag=9)
                got = recv_serialized(comm, codec, source=(comm.rank - 1) % comm.size, tag=9)
                assert got == value
    return 0


def _typepool(config: SessionConfig, seed: int) -> int:
    with Session(config) as session:
        with _world(session) as comm:
            record = CommittedDatatype(
                struct_type(
                    [
                        (0, fundamental(FundamentalKind.INT32)),
                        (4, contiguous(3, fundamental(FundamentalKind.INT32))),
                        (16, fundamental(FundamentalKind.FLOAT64)),
                        (24, fundamental(FundamentalKind.INT8)),
                    ],
                    extent=32,
                )
            )
            session.type_pool.register(0xBEEF, record)
            found = session.type_pool.lookup(0xBEEF)
            assert found.extent == 32 and found.size == 25
            if comm.size >= 2:
                if comm.rank == 0:
                    region = bytearray(64)
                    region[0:4] = (7).to_bytes(4, "little", signed=True)
                    region[32:36] = (9).to_bytes(4, "little", signed=True)
                    comm.send(adapt_counted(region, found, 2), dest=1, tag=3)
                elif comm.rank == 1:
                    sink = bytearray(64)
                    status = comm.recv(adapt_counted(sink, found, 2), source=0, tag=3)
                    assert status.count == 2
                    assert int.from_bytes(sink[0:4], "little", signed=True) == 7
                    assert int.from_bytes(sink[32:36], "little", signed=True) == 9
            comm.barrier()
    return 0


def _conformance(config: SessionConfig, seed: int) -> int:
    return run_conformance(config, seed)


def _abort_demo(config: SessionConfig, seed: int) -> int:
    """Error injection: rank 1 (or 0 alone) aborts with code 3 mid-run."""
    with Session(config) as session:
        with _world(session) as comm:
            aborter = 1 if comm.size > 1 else 0
            if comm.rank == aborter:
                comm.abort(3)
            sink = np.zeros(1, dtype=np.int64)
            comm.recv(adapt(sink), source=aborter, tag=0)  # never satisfied
    return 0


def _bcast_mismatch(config: SessionConfig, seed: int) -> int:
    """Error injection: broadcast called with inconsistent counts."""
    with Session(config) as session:
        with _world(session) as comm:
            if session.assert_level < 3 or comm.size < 2:
                return 0
            count = 4 if comm.rank == 0 else 5
            data = np.zeros(count, dtype=np.int64)
            comm.broadcast(adapt(data), root=0)
    return 0


EXAMPLES = {
    "pingpong": _pingpong,
    "ring": _ring,
    "bcast": _bcast,
    "reduce": _reduce,
    "allreduce": _allreduce,
    "alltoallv": _alltoallv,
    "serialize": _serialize,
    "typepool": _typepool,
    "conformance": _conformance,
    "_abort3": _abort_demo,
    "_bcast_mismatch": _bcast_mismatch,
}

PUBLIC_EXAMPLES = [name for name in EXAMPLES if not name.startswith("_")]


def run_example(name: str, config: SessionConfig, seed: int) -> int:
    try:
        program = EXAMPLES[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}") from None
    result = program(config, seed)
    return 0 if result is None else int(result)
