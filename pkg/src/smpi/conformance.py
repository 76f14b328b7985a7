"""Conformance suite: one deterministic transcript per (seed, ranks, level).

Every check runs collectively; local verdicts are combined with a logical
AND allreduce and only rank 0 prints, so the transcript is identical across
backends for the same seed, rank count, and assert level.  Failures keep
the transcript shape (the check line flips to FAIL) and surface details on
stderr plus a nonzero exit.
"""

from __future__ import annotations

import random
import struct
import sys
from typing import Callable, List, Tuple

import numpy as np

from .buffer import adapt, irregular, single
from .comm import ANY_SOURCE, ANY_TAG, Communicator, ReduceOp
from .datatype import (
    CommittedDatatype,
    FundamentalKind,
    contiguous,
    fundamental,
    pack,
    signature,
    struct_type,
    unpack,
    vector,
)
from .errors import MessagingError, Truncation, TypeMismatch
from .serialize import PairCodec, SequenceCodec, Utf8Codec, recv_serialized, send_serialized
from .session import Session, SessionConfig, WORLD_PSET

__all__ = ["run_conformance", "CHECK_NAMES"]


def _tree_corpus():
    i32 = FundamentalKind.INT32
    f64 = FundamentalKind.FLOAT64
    return [
        fundamental(i32),
        contiguous(4, fundamental(f64)),
        vector(3, 2, 3, fundamental(FundamentalKind.UINT16)),
        struct_type(
            [(0, fundamental(i32)), (8, contiguous(2, fundamental(f64)))], extent=24
        ),
        vector(2, 1, 2, contiguous(2, fundamental(FundamentalKind.INT8))),
    ]


def _random_small_tree(rng: random.Random, depth: int = 2):
    if depth == 0 or rng.random() < 0.4:
        return fundamental(rng.choice(list(FundamentalKind)))
    roll = rng.random()
    if roll < 0.45:
        return contiguous(rng.randint(1, 4), _random_small_tree(rng, depth - 1))
    if roll < 0.9:
        blocklength = rng.randint(1, 3)
        return vector(rng.randint(1, 4), blocklength,
                      blocklength + rng.randint(0, 2),
                      _random_small_tree(rng, depth - 1))
    inner = _random_small_tree(rng, depth - 1)
    from .datatype import extent_of

    gap = rng.randint(0, 4)
    return struct_type([(gap, inner)], extent=gap + extent_of(inner) + rng.randint(0, 4))


class _Ctx:
    def __init__(self, comm: Communicator, seed: int):
        self.comm = comm
        self.seed = seed

    def rng(self, check: str, rank: int = -1) -> random.Random:
        rank = self.comm.rank if rank < 0 else rank
        return random.Random((self.seed, check, rank))


def _check_datatype_roundtrip(ctx: _Ctx) -> None:
    rng = ctx.rng("datatype", rank=0)  # identical work on every rank
    for case in range(40):
        tree = _random_small_tree(rng)
        committed = CommittedDatatype(tree)
        assert sum(length for _, length in committed.segments) == committed.size
        assert all(
            b[0] >= a[0] + a[1]
            for a, b in zip(committed.segments, committed.segments[1:])
        )
        count = rng.randint(0, 3)
        src = bytes(rng.getrandbits(8) for _ in range(count * committed.extent))
        out = bytearray(count * committed.extent)
        unpack(pack(src, committed, count), committed, count, out)
        for e in range(count):
            base = e * committed.extent
            for off, length in committed.segments:
                assert out[base + off : base + off + length] == src[base + off : base + off + length]


def _check_signature_agreement(ctx: _Ctx) -> None:
    sigs = [signature(tree) for tree in _tree_corpus()]
    assert len(set(sigs)) == len(sigs)
    mine = np.array(sigs, dtype=np.uint64)
    shared = mine.copy()
    ctx.comm.broadcast(adapt(shared), root=0)
    assert shared.tolist() == mine.tolist()


def _check_pingpong(ctx: _Ctx) -> None:
    comm = ctx.comm
    if comm.size < 2:
        return
    rng = ctx.rng("pingpong", rank=0)
    payload = np.array([rng.randint(-1000, 1000) for _ in range(16)], dtype=np.int32)
    if comm.rank == 0:
        comm.send(adapt(payload), dest=1, tag=11)
        back = np.zeros(16, dtype=np.int32)
        status = comm.recv(adapt(back), source=1, tag=12)
        assert status.count == 16
        assert np.array_equal(back, payload * 2)
    elif comm.rank == 1:
        incoming = np.zeros(16, dtype=np.int32)
        comm.recv(adapt(incoming), source=0, tag=11)
        comm.send(adapt(incoming * 2), dest=0, tag=12)


def _check_ordering(ctx: _Ctx) -> None:
    comm = ctx.comm
    if comm.size < 2:
        return
    burst = 50
    if comm.rank == 0:
        for i in range(burst):
            comm.send(adapt(np.array([i], dtype=np.int64)), dest=1, tag=3)
    elif comm.rank == 1:
        seen = []
        slot = np.zeros(1, dtype=np.int64)
        for _ in range(burst):
            comm.recv(adapt(slot), source=0, tag=3)
            seen.append(int(slot[0]))
        assert seen == list(range(burst))


def _check_wildcards(ctx: _Ctx) -> None:
    comm = ctx.comm
    if comm.size < 2:
        return
    if comm.rank == 0:
        comm.send(adapt(np.array([2], dtype=np.int32)), dest=1, tag=2)
        comm.send(adapt(np.array([3], dtype=np.int32)), dest=1, tag=3)
    elif comm.rank == 1:
        slot = np.zeros(1, dtype=np.int32)
        status = comm.recv(adapt(slot), source=ANY_SOURCE, tag=3)
        assert (status.source, int(slot[0])) == (0, 3)
        status = comm.recv(adapt(slot), source=ANY_SOURCE, tag=ANY_TAG)
        assert (status.tag, int(slot[0])) == (2, 2)


def _check_truncation(ctx: _Ctx) -> None:
    comm = ctx.comm
    if comm.size < 2:
        return
    if comm.rank == 0:
        comm.send(adapt(np.arange(6, dtype=np.int32)), dest=1, tag=7)
    elif comm.rank == 1:
        small = np.zeros(4, dtype=np.int32)
        try:
            comm.recv(adapt(small), source=0, tag=7)
        except Truncation as err:
            assert err.actual_bytes == 24
        else:
            raise AssertionError("truncation not reported")


def _check_type_mismatch(ctx: _Ctx) -> None:
    comm = ctx.comm
    if comm.size < 2:
        return
    level = comm.session.assert_level
    if comm.rank == 0:
        comm.send(adapt(np.arange(4, dtype=np.int32)), dest=1, tag=8)
    elif comm.rank == 1:
        wrong = np.zeros(2, dtype=np.float64)
        if level >= 2:
            try:
                comm.recv(adapt(wrong), source=0, tag=8)
            except TypeMismatch:
                pass
            else:
                raise AssertionError("type mismatch not detected")
        else:
            status = comm.recv(adapt(wrong), source=0, tag=8)
            assert status.count == 2
            assert wrong.tobytes() == np.arange(4, dtype=np.int32).tobytes()


def _check_request_equivalence(ctx: _Ctx) -> None:
    comm = ctx.comm
    if comm.size < 2:
        return
    if comm.rank == 0:
        data = np.arange(32, dtype=np.int64)
        comm.send(adapt(data), dest=1, tag=21)
        comm.send(adapt(data), dest=1, tag=22)
    elif comm.rank == 1:
        first = np.zeros(32, dtype=np.int64)
        req = comm.irecv(adapt(first), source=0, tag=21)
        waited, status_w = req.wait()
        assert waited is first
        second = np.zeros(32, dtype=np.int64)
        req = comm.irecv(adapt(second), source=0, tag=22)
        result = None
        while result is None:
            result = req.test()
        tested, status_t = result
        assert tested is second
        assert np.array_equal(first, second)
        assert (status_w.count, status_t.count) == (32, 32)


def _check_probe(ctx: _Ctx) -> None:
    comm = ctx.comm
    if comm.size < 2:
        return
    if comm.rank == 0:
        comm.send(adapt(np.arange(5, dtype=np.int32)), dest=1, tag=30)
        comm.send(adapt(np.arange(5, dtype=np.int32)), dest=1, tag=31)
    elif comm.rank == 1:
        first = comm.probe(source=0, tag=30)
        again = comm.probe(source=0, tag=30)
        assert first == again == (0, 30, 20)
        storage, status = comm.recv_probe(FundamentalKind.INT32, source=0, tag=30)
        assert status.count == 5
        exact = np.zeros(5, dtype=np.int32)
        comm.recv(adapt(exact), source=0, tag=31)
        assert bytes(storage) == exact.tobytes()


def _collective_inputs(ctx: _Ctx, rank: int, count: int) -> np.ndarray:
    rng = ctx.rng("collective", rank=rank)
    return np.array([rng.randint(-50, 50) for _ in range(count)], dtype=np.int64)


def _check_collectives_oracle(ctx: _Ctx) -> None:
    comm = ctx.comm
    count = 8
    all_inputs = [_collective_inputs(ctx, r, count) for r in range(comm.size)]

    mine = all_inputs[comm.rank].copy()
    comm.broadcast(adapt(mine), root=0)
    assert np.array_equal(mine, all_inputs[0])

    mine = all_inputs[comm.rank].copy()
    comm.reduce(adapt(mine), ReduceOp.SUM, root=0)
    expected = all_inputs[0].copy()
    for r in range(1, comm.size):
        expected = expected + all_inputs[r]
    if comm.rank == 0:
        assert np.array_equal(mine, expected)
    else:
        assert np.array_equal(mine, all_inputs[comm.rank])

    mine = all_inputs[comm.rank].copy()
    comm.allreduce(adapt(mine), ReduceOp.MAX)
    expected = all_inputs[0].copy()
    for r in range(1, comm.size):
        expected = np.maximum(expected, all_inputs[r])
    assert np.array_equal(mine, expected)

    sendv = np.concatenate(
        [np.array([comm.rank * 100 + i], dtype=np.int64) for i in range(comm.size)]
    )
    recvv = np.zeros(comm.size, dtype=np.int64)
    ones = [1] * comm.size
    displs = list(range(comm.size))
    comm.alltoallv(
        irregular(sendv, ones, displs), irregular(recvv, ones, displs)
    )
    assert recvv.tolist() == [r * 100 + comm.rank for r in range(comm.size)]


def _check_serialization(ctx: _Ctx) -> None:
    comm = ctx.comm
    codec = PairCodec(Utf8Codec(), SequenceCodec(FundamentalKind.INT64))
    rng = ctx.rng("serialize", rank=0)
    value = ("payload-" + str(rng.randint(0, 10**9)),
             [rng.randint(-(2**40), 2**40) for _ in range(25)])
    if comm.size == 1:
        assert codec.decode(codec.encode(value)) == value
        return
    right = (comm.rank + 1) % comm.size
    left = (comm.rank - 1) % comm.size
    send_serialized(comm, value, codec, dest=right, tag=40)
    received = recv_serialized(comm, codec, source=left, tag=40)
    assert received == value


def _check_typepool(ctx: _Ctx) -> None:
    comm = ctx.comm
    pool = comm.session.type_pool
    token = 0xC0FFEE ^ ctx.seed
    record = CommittedDatatype(
        struct_type(
            [(0, fundamental(FundamentalKind.INT32)),
             (8, fundamental(FundamentalKind.FLOAT64))],
            extent=16,
        )
    )
    pool.register(token, record)
    found = pool.lookup(token)
    assert found.signature == record.signature
    assert found.extent == 16


def _check_zero_leaks(ctx: _Ctx) -> None:
    report = ctx.comm.session.endpoint.live_report()
    assert report["queued"] == 0, report
    assert report["posted"] == 0, report
    assert report["contexts"] == 1, report  # only the world communicator


_CHECKS: List[Tuple[str, Callable[[_Ctx], None]]] = [
    ("datatype_roundtrip", _check_datatype_roundtrip),
    ("signature_agreement", _check_signature_agreement),
    ("pt2pt_pingpong", _check_pingpong),
    ("pt2pt_ordering", _check_ordering),
    ("pt2pt_wildcards", _check_wildcards),
    ("truncation_reported", _check_truncation),
    ("type_mismatch_policy", _check_type_mismatch),
    ("request_equivalence", _check_request_equivalence),
    ("probe_nonconsuming", _check_probe),
    ("collectives_vs_oracle", _check_collectives_oracle),
    ("serialization_transfer", _check_serialization),
    ("type_pool", _check_typepool),
    ("zero_leaks", _check_zero_leaks),
]

CHECK_NAMES = [name for name, _ in _CHECKS]


def run_conformance(config: SessionConfig, seed: int) -> int:
    """Run every check; print the transcript on rank 0; 0 iff all passed."""
    failures = 0
    with Session(config) as session:
        comm = session.communicator_from_group(session.group_from_pset(WORLD_PSET))
        with comm:
            ctx = _Ctx(comm, seed)
            if comm.rank == 0:
                print(
                    f"conformance seed={seed} ranks={comm.size} "
                    f"level={session.assert_level}",
                    flush=True,
                )
            for index, (name, fn) in enumerate(_CHECKS, start=1):
                ok = True
                try:
                    fn(ctx)
                except (AssertionError, MessagingError) as exc:
                    ok = False
                    print(f"rank {comm.rank}: {name}: {exc}", file=sys.stderr, flush=True)
                verdict = single(ok)
                comm.allreduce(verdict, ReduceOp.LAND)
                agreed = bool(verdict.value)
                if not agreed:
                    failures += 1
                if comm.rank == 0:
                    marker = "ok" if agreed else "FAIL"
                    print(f"{marker} {index} - {name}", flush=True)
            comm.barrier()
            if comm.rank == 0:
                print(
                    "all checks passed" if failures == 0
                    else f"{failures} checks failed",
                    flush=True,
                )
    return 0 if failures == 0 else 1
