"""Communicators: point-to-point and collective operations over a context.

Every communicator owns an isolated context id; messages never match across
contexts.  Communicators cannot be copied (duplication is an explicit
collective yielding a fresh context), and all message-initiating calls
demand exclusive access, mirroring the fact that posting a message mutates
the communication state even when no Python attribute changes.

Calling modes: blocking calls borrow their buffers (the caller keeps the
reference, nothing is returned beyond status); nonblocking calls take
custody, and ``wait``/``test`` hand the very same object back.  Collective
reductions fold in ascending rank order so float results are bit-exact
reproducible.

User tags live in ``[0, 2**30)``; the upper tag space plus a distinct frame
kind isolates collective-internal traffic from user matching, including
wildcard receives.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .buffer import DataBuffer, IrregularBuffer, adapt
from .datatype import FundamentalKind, committed_fundamental
from .errors import (
    InternalError,
    InvalidArgument,
    MessagingError,
    Truncation,
    TypeMismatch,
    UsageError,
)
from .transport import (
    ANY_SOURCE,
    ANY_TAG,
    FLAG_SIGNATURE,
    KIND_COLLECTIVE,
    KIND_DATA,
    Envelope,
    MatchKey,
)

__all__ = [
    "ANY_SOURCE",
    "ANY_TAG",
    "RESERVED_TAG_BASE",
    "ReduceOp",
    "RequestState",
    "Status",
    "Request",
    "Communicator",
]

RESERVED_TAG_BASE = 1 << 30

_OP_BARRIER = 1
_OP_BCAST = 2
_OP_REDUCE = 3
_OP_ALLREDUCE_BCAST = 4
_OP_A2AV = 5
_OP_A2AV_CHECK = 6
_OP_CONSIST = 7
_OP_VERDICT = 8


def _ctag(op: int, sub: int = 0) -> int:
    return RESERVED_TAG_BASE + (op << 8) + sub


class ReduceOp(Enum):
    SUM = "sum"
    PROD = "prod"
    MIN = "min"
    MAX = "max"
    LAND = "land"
    LOR = "lor"


_ARITHMETIC_OPS = {ReduceOp.SUM, ReduceOp.PROD, ReduceOp.MIN, ReduceOp.MAX}
_LOGICAL_OPS = {ReduceOp.LAND, ReduceOp.LOR}

_NP_BY_KIND = {
    FundamentalKind.INT8: np.int8,
    FundamentalKind.UINT8: np.uint8,
    FundamentalKind.INT16: np.int16,
    FundamentalKind.UINT16: np.uint16,
    FundamentalKind.INT32: np.int32,
    FundamentalKind.UINT32: np.uint32,
    FundamentalKind.INT64: np.int64,
    FundamentalKind.UINT64: np.uint64,
    FundamentalKind.FLOAT32: np.float32,
    FundamentalKind.FLOAT64: np.float64,
    FundamentalKind.BOOL: np.bool_,
}


def reduce_op_defined(op: ReduceOp, kind: Optional[FundamentalKind]) -> bool:
    """Whether ``op`` has elementwise meaning for ``kind``."""
    if kind is None or kind is FundamentalKind.BYTE:
        return False
    if op in _LOGICAL_OPS:
        return kind.is_integer or kind is FundamentalKind.BOOL
    return kind.is_integer or kind.is_float


def _fold(op: ReduceOp, acc: np.ndarray, contrib: np.ndarray) -> np.ndarray:
    if op is ReduceOp.SUM:
        return acc + contrib
    if op is ReduceOp.PROD:
        return acc * contrib
    if op is ReduceOp.MIN:
        return np.minimum(acc, contrib)
    if op is ReduceOp.MAX:
        return np.maximum(acc, contrib)
    if op is ReduceOp.LAND:
        return np.logical_and(acc, contrib).astype(acc.dtype)
    if op is ReduceOp.LOR:
        return np.logical_or(acc, contrib).astype(acc.dtype)
    raise InternalError(f"unhandled reduce op {op}")


@dataclass(frozen=True)
class Status:
    """Receive metadata: matched source (communicator rank), tag, count."""

    source: int
    tag: int
    count: int


class RequestState(Enum):
    ACTIVE = "active"
    COMPLETED = "completed"
    CONSUMED = "consumed"


class Request:
    """In-flight nonblocking operation owning its buffer until completion.

    The buffer is inaccessible while the request is active; ``wait`` blocks
    and returns it (receives add a :class:`Status`), ``test`` polls with
    bounded transport progress and returns ``None`` while still in flight.
    A request dropped while active is completed first, so the buffer never
    escapes mid-operation.
    """

    __slots__ = ("_comm", "_op", "_buffer", "_ticket", "_consumed")

    def __init__(self, comm: "Communicator", op: str, buffer: DataBuffer, ticket):
        self._comm = comm
        self._op = op
        self._buffer = buffer
        self._ticket = ticket
        self._consumed = False
        buffer.claim(self)

    @property
    def state(self) -> RequestState:
        if self._consumed:
            return RequestState.CONSUMED
        if self._ticket is None or self._ticket.done:
            return RequestState.COMPLETED
        return RequestState.ACTIVE

    def wait(self):
        """Block until done; return the owned buffer (receives: with Status)."""
        self._require_live()
        if self._op == "send":
            return self._consume_send()
        self._comm.session.endpoint.complete(self._ticket)
        return self._consume_recv()

    def test(self):
        """Poll for completion; ``None`` while still active."""
        self._require_live()
        if self._op == "send":
            return self._consume_send()
        if not self._comm.session.endpoint.poll(self._ticket):
            return None
        return self._consume_recv()

    def _consume_send(self):
        self._consumed = True
        self._buffer.release(self)
        return self._buffer.obj

    def _consume_recv(self):
        self._consumed = True
        self._buffer.release(self)
        try:
            status = self._comm._finish_recv(
                self._buffer, self._ticket.envelope, self._ticket.payload
            )
        except MessagingError as exc:
            exc.buffer = self._buffer.obj
            raise
        return self._buffer.obj, status

    def _require_live(self) -> None:
        if self._consumed:
            raise UsageError("request already consumed by wait/test")

    def __del__(self):
        if self._consumed:
            return
        try:
            if self._ticket is not None and not self._ticket.done:
                self._comm.session.endpoint.complete(self._ticket)
            self._buffer.release(self)
        except BaseException:
            pass


class Communicator:
    """Isolated communication context over a group of processes."""

    def __init__(self, session, group, context_id: int):
        self.session = session
        self.group = group
        self.context_id = context_id
        self._rank = group.members.index(session.world_rank)
        self._size = group.size
        self._rank_of_global = {g: i for i, g in enumerate(group.members)}
        self._busy = False
        self._closed = False

    # -- identity ----------------------------------------------------------

    @property
    def rank(self) -> int:
        return self._rank

    @property
    def size(self) -> int:
        return self._size

    def __copy__(self):
        raise TypeError("communicators cannot be copied; use duplicate()")

    def __deepcopy__(self, memo):
        raise TypeError("communicators cannot be copied; use duplicate()")

    def __repr__(self):
        return (
            f"<Communicator ctx={self.context_id:#018x} "
            f"rank={self._rank} size={self._size}>"
        )

    def duplicate(self) -> "Communicator":
        """Collective: same membership, fresh context, no shared traffic."""
        self._require_usable()
        return self.session.communicator_from_group(self.group)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        self.session._forget_comm(self)

    def __enter__(self) -> "Communicator":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def abort(self, code: int):
        """Terminate all ranks of the session's world with ``code``."""
        self.session.abort(code)

    # -- point-to-point ------------------------------------------------------

    def send(self, buf, dest: int, tag: int = 0) -> None:
        """Blocking send; completes locally (messages are eagerly buffered)."""
        buf = adapt(buf)
        with self._exclusive():
            self._validate_endpoint_args(dest, tag, buf)
            self._send_user(buf, dest, tag)

    def recv(self, buf, source: int = ANY_SOURCE, tag: int = ANY_TAG) -> Status:
        """Blocking receive into ``buf``; never resizes the caller's storage."""
        buf = adapt(buf)
        with self._exclusive():
            self._validate_recv_args(source, tag, buf)
            ticket = self.session.endpoint.post_recv(self._recv_key(source, tag))
            self.session.endpoint.complete(ticket)
            return self._finish_recv(buf, ticket.envelope, ticket.payload)

    def send_recv(self, sendbuf, dest: int, sendtag: int,
                  recvbuf, source: int = ANY_SOURCE,
                  recvtag: int = ANY_TAG) -> Status:
        """Combined exchange, deadlock-free for pairwise patterns."""
        sendbuf = adapt(sendbuf)
        recvbuf = adapt(recvbuf)
        with self._exclusive():
            self._check(
                1,
                lambda: sendbuf.view.obj is not recvbuf.view.obj,
                "send and receive sides of send_recv alias the same storage",
            )
            self._validate_endpoint_args(dest, sendtag, sendbuf)
            self._validate_recv_args(source, recvtag, recvbuf)
            self._send_user(sendbuf, dest, sendtag)
            ticket = self.session.endpoint.post_recv(self._recv_key(source, recvtag))
            self.session.endpoint.complete(ticket)
            return self._finish_recv(recvbuf, ticket.envelope, ticket.payload)

    def isend(self, buf, dest: int, tag: int = 0) -> Request:
        """Nonblocking send; the request owns the buffer until wait/test."""
        buf = adapt(buf)
        with self._exclusive():
            self._validate_endpoint_args(dest, tag, buf)
            request = Request(self, "send", buf, None)
            self._send_user(buf, dest, tag)
            return request

    def irecv(self, buf, source: int = ANY_SOURCE, tag: int = ANY_TAG) -> Request:
        """Nonblocking receive; the request owns the buffer until wait/test."""
        buf = adapt(buf)
        with self._exclusive():
            self._validate_recv_args(source, tag, buf)
            ticket = self.session.endpoint.post_recv(self._recv_key(source, tag))
            return Request(self, "recv", buf, ticket)

    def probe(self, source: int = ANY_SOURCE, tag: int = ANY_TAG,
              block: bool = True) -> Optional[Tuple[int, int, int]]:
        """Blocking metadata peek: (source rank, tag, payload bytes).

        Does not consume the message; two probes without an intervening
        receive observe the same envelope.
        """
        with self._exclusive():
            self._require_usable()
            env = self.session.endpoint.probe(self._recv_key(source, tag), block=block)
            if env is None:
                return None
            return self._rank_of_global[env.source], env.tag, env.payload_len

    def recv_probe(self, ctype, source: int = ANY_SOURCE,
                   tag: int = ANY_TAG) -> Tuple[bytearray, Status]:
        """Receive a message of unknown size into freshly allocated storage.

        Probes for the envelope, allocates exactly the right number of
        elements, then receives.  Documented as allocating; use ``recv``
        with a pre-sized buffer on hot paths.
        """
        if isinstance(ctype, FundamentalKind):
            ctype = committed_fundamental(ctype)
        with self._exclusive():
            self._require_usable()
            env = self.session.endpoint.probe(self._recv_key(source, tag), block=True)
            if env.payload_len % ctype.size:
                raise InvalidArgument(
                    f"incoming payload of {env.payload_len} bytes is not a "
                    f"whole number of elements of size {ctype.size}"
                )
            count = env.payload_len // ctype.size
            storage = bytearray(count * ctype.extent)
            exact = MatchKey(self.context_id, env.source, env.tag, KIND_DATA)
            ticket = self.session.endpoint.post_recv(exact)
            self.session.endpoint.complete(ticket)
            buf = DataBuffer(storage, memoryview(storage), None, ctype, count)
            status = self._finish_recv(buf, ticket.envelope, ticket.payload)
            return storage, status

    # -- collectives -----------------------------------------------------------

    def barrier(self) -> None:
        """Dissemination barrier: ceil(log2(size)) rounds of pairwise tokens."""
        with self._exclusive():
            self._require_usable()
            if self._size == 1:
                return
            rounds = (self._size - 1).bit_length()
            for k in range(rounds):
                dist = 1 << k
                self._send_internal(b"", (self._rank + dist) % self._size,
                                    _ctag(_OP_BARRIER, k))
                self._recv_internal((self._rank - dist) % self._size,
                                    _ctag(_OP_BARRIER, k))

    def broadcast(self, buf, root: int = 0) -> None:
        """Binomial-tree broadcast of root's elements to every rank."""
        buf = adapt(buf)
        with self._exclusive():
            self._require_usable()
            self._check(1, lambda: 0 <= root < self._size,
                        lambda: f"broadcast root {root} outside [0, {self._size})")
            buf.require_unclaimed()
            if self._rank != root:
                buf.require_writable()
            self._consistency_check(
                b"bcast" + (buf.count * buf.element_size).to_bytes(8, "little")
            )
            self._broadcast_impl(buf, root, _OP_BCAST)

    def reduce(self, buf, op: ReduceOp, root: int = 0) -> None:
        """Elementwise fold at the root, in ascending rank order.

        The root's buffer is overwritten with the result; other ranks keep
        their contribution untouched.
        """
        buf = adapt(buf)
        with self._exclusive():
            self._validate_reduce_args(buf, op, root)
            if self._rank == root:
                buf.require_writable()
            self._consistency_check(self._reduce_blob(buf, op))
            self._reduce_impl(buf, op, root, _OP_REDUCE)

    def allreduce(self, buf, op: ReduceOp) -> None:
        """Reduce to rank 0 then broadcast: all ranks end with identical bytes."""
        buf = adapt(buf)
        with self._exclusive():
            self._validate_reduce_args(buf, op, 0)
            buf.require_writable()
            self._consistency_check(self._reduce_blob(buf, op))
            self._reduce_impl(buf, op, 0, _OP_REDUCE)
            self._broadcast_impl(buf, 0, _OP_ALLREDUCE_BCAST)

    def alltoallv(self, sendbuf: IrregularBuffer, recvbuf: IrregularBuffer) -> None:
        """Exchange per-rank windows: my send window i lands in i's window me."""
        with self._exclusive():
            self._require_usable()
            if not isinstance(sendbuf, IrregularBuffer) or not isinstance(
                recvbuf, IrregularBuffer
            ):
                raise InvalidArgument("alltoallv needs irregular buffers on both sides")
            if len(sendbuf.counts) != self._size or len(recvbuf.counts) != self._size:
                raise InvalidArgument(
                    f"irregular buffers must carry {self._size} windows"
                )
            recvbuf.require_writable()
            if not recvbuf.windows_disjoint():
                raise InvalidArgument("receive windows overlap")
            self._alltoallv_count_check(sendbuf, recvbuf)
            tag = _ctag(_OP_A2AV)
            size = sendbuf.element_size
            for peer in range(self._size):
                if peer == self._rank or sendbuf.counts[peer] == 0:
                    continue
                from .datatype import pack

                payload = pack(sendbuf.window(peer), sendbuf.ctype,
                               sendbuf.counts[peer])
                self._send_internal(payload, peer, tag)
            self._deliver_window(
                recvbuf,
                self._rank,
                pack_local=sendbuf,
            )
            for peer in range(self._size):
                if peer == self._rank or recvbuf.counts[peer] == 0:
                    continue
                payload = self._recv_internal(peer, tag)
                self._unpack_window(recvbuf, peer, payload)

    # -- internal plumbing -------------------------------------------------------

    def _exclusive(self):
        return _ExclusiveGuard(self)

    def _require_usable(self) -> None:
        if self._closed:
            raise UsageError("communicator is closed")
        self.session._require_open()

    def _check(self, level: int, predicate, diagnostic) -> None:
        self.session._check(level, predicate, diagnostic)

    def _validate_endpoint_args(self, dest: int, tag: int, buf: DataBuffer) -> None:
        self._require_usable()
        buf.require_unclaimed()
        self._check(1, lambda: 0 <= dest < self._size,
                    lambda: f"destination rank {dest} outside [0, {self._size})")
        self._check(1, lambda: 0 <= tag < RESERVED_TAG_BASE,
                    lambda: f"tag {tag} outside [0, {RESERVED_TAG_BASE})")

    def _validate_recv_args(self, source: int, tag: int, buf: DataBuffer) -> None:
        self._require_usable()
        buf.require_writable()
        buf.require_unclaimed()
        self._check(
            1,
            lambda: source == ANY_SOURCE or 0 <= source < self._size,
            lambda: f"source rank {source} outside [0, {self._size})",
        )
        self._check(
            1,
            lambda: tag == ANY_TAG or 0 <= tag < RESERVED_TAG_BASE,
            lambda: f"receive tag {tag} outside [0, {RESERVED_TAG_BASE})",
        )

    def _validate_reduce_args(self, buf: DataBuffer, op: ReduceOp, root: int) -> None:
        self._require_usable()
        buf.require_unclaimed()
        self._check(1, lambda: 0 <= root < self._size,
                    lambda: f"reduce root {root} outside [0, {self._size})")
        if not isinstance(op, ReduceOp) or not reduce_op_defined(op, buf.kind):
            kind = buf.kind.name if buf.kind else "a derived type"
            raise UsageError(f"reduction {op} is undefined for {kind}")

    def _reduce_blob(self, buf: DataBuffer, op: ReduceOp) -> bytes:
        return (
            b"reduce"
            + buf.count.to_bytes(8, "little")
            + bytes([buf.kind.code])
            + op.value.encode("ascii")
        )

    def _global(self, comm_rank: int) -> int:
        try:
            return self.group.members[comm_rank]
        except IndexError:
            raise UsageError(
                f"rank {comm_rank} outside communicator of size {self._size}"
            ) from None

    def _recv_key(self, source: int, tag: int, kind: int = KIND_DATA) -> MatchKey:
        src = ANY_SOURCE if source == ANY_SOURCE else self._global(source)
        return MatchKey(self.context_id, src, tag, kind)

    def _send_user(self, buf: DataBuffer, dest: int, tag: int) -> None:
        payload = buf.pack_elements()
        flags = 0
        sig = 0
        if self.session.assert_level >= 2:
            flags = FLAG_SIGNATURE
            sig = buf.type_signature
        env = Envelope(
            KIND_DATA,
            flags,
            self.context_id,
            self.group.members[self._rank],
            self._global(dest),
            tag,
            sig,
            len(payload),
        )
        self.session.endpoint.send(env, payload)

    def _send_internal(self, payload: bytes, dest: int, tag: int) -> None:
        env = Envelope(
            KIND_COLLECTIVE,
            0,
            self.context_id,
            self.group.members[self._rank],
            self._global(dest),
            tag,
            0,
            len(payload),
        )
        self.session.endpoint.send(env, payload)

    def _recv_internal(self, source: int, tag: int) -> bytes:
        key = self._recv_key(source, tag, kind=KIND_COLLECTIVE)
        ticket = self.session.endpoint.post_recv(key)
        self.session.endpoint.complete(ticket)
        return ticket.payload

    def _finish_recv(self, buf: DataBuffer, env: Envelope, payload: bytes) -> Status:
        if (
            self.session.assert_level >= 2
            and env.has_signature
            and env.signature_hash != buf.type_signature
        ):
            raise TypeMismatch(buf.type_signature, env.signature_hash)
        capacity = buf.count * buf.element_size
        if env.payload_len > capacity:
            raise Truncation(env.payload_len, capacity)
        if env.payload_len % buf.element_size:
            raise InvalidArgument(
                f"payload of {env.payload_len} bytes is not a whole number "
                f"of elements of size {buf.element_size}"
            )
        count = env.payload_len // buf.element_size
        buf.unpack_payload(payload, count)
        return Status(self._rank_of_global[env.source], env.tag, count)

    # -- collective internals ---------------------------------------------------

    def _broadcast_impl(self, buf: DataBuffer, root: int, op: int) -> None:
        if self._size == 1:
            return
        tag = _ctag(op)
        relrank = (self._rank - root) % self._size
        if relrank == 0:
            payload = buf.pack_elements()
            mask = 1
            while mask < self._size:
                mask <<= 1
        else:
            mask = 1
            while mask < self._size:
                if relrank & mask:
                    payload = self._recv_internal(
                        (relrank - mask + root) % self._size, tag
                    )
                    break
                mask <<= 1
        mask >>= 1
        while mask > 0:
            if relrank + mask < self._size:
                self._send_internal(payload, (relrank + mask + root) % self._size, tag)
            mask >>= 1
        if relrank != 0:
            capacity = buf.count * buf.element_size
            if len(payload) > capacity:
                raise Truncation(len(payload), capacity)
            if len(payload) % buf.element_size:
                raise InvalidArgument(
                    f"broadcast payload of {len(payload)} bytes does not "
                    f"divide into elements of size {buf.element_size}"
                )
            buf.unpack_payload(payload, len(payload) // buf.element_size)

    def _reduce_impl(self, buf: DataBuffer, op: ReduceOp, root: int,
                     tag_op: int) -> None:
        if self._size == 1:
            return
        tag = _ctag(tag_op)
        if self._rank != root:
            self._send_internal(buf.pack_elements(), root, tag)
            return
        dtype = _NP_BY_KIND[buf.kind]
        expected = buf.count * buf.element_size
        contributions: list = [None] * self._size
        contributions[self._rank] = np.frombuffer(buf.pack_elements(), dtype=dtype)
        for peer in range(self._size):
            if peer == root:
                continue
            payload = self._recv_internal(peer, tag)
            if len(payload) != expected:
                raise InvalidArgument(
                    f"reduce contribution from rank {peer} is {len(payload)} "
                    f"bytes, expected {expected}"
                )
            contributions[peer] = np.frombuffer(payload, dtype=dtype)
        acc = contributions[0].copy()
        for peer in range(1, self._size):
            acc = _fold(op, acc, contributions[peer])
        buf.unpack_payload(acc.tobytes(), buf.count)

    def _alltoallv_count_check(self, sendbuf: IrregularBuffer,
                               recvbuf: IrregularBuffer) -> None:
        if sendbuf.counts[self._rank] != recvbuf.counts[self._rank]:
            raise InvalidArgument(
                f"local window mismatch: sending {sendbuf.counts[self._rank]} "
                f"elements to self but expecting {recvbuf.counts[self._rank]}"
            )
        if self.session.assert_level < 3 or self._size == 1:
            return
        tag = _ctag(_OP_A2AV_CHECK)
        for peer in range(self._size):
            if peer == self._rank:
                continue
            self._send_internal(
                sendbuf.counts[peer].to_bytes(8, "little"), peer, tag
            )
        ok = True
        for peer in range(self._size):
            if peer == self._rank:
                continue
            announced = int.from_bytes(self._recv_internal(peer, tag), "little")
            if announced != recvbuf.counts[peer]:
                ok = False
        self._check(
            3, ok, "alltoallv send/receive count matrices are inconsistent"
        )

    def _deliver_window(self, recvbuf: IrregularBuffer, peer: int,
                        pack_local: IrregularBuffer) -> None:
        count = pack_local.counts[peer]
        if count == 0:
            return
        from .datatype import pack

        payload = pack(pack_local.window(peer), pack_local.ctype, count)
        self._unpack_window(recvbuf, peer, payload)

    def _unpack_window(self, recvbuf: IrregularBuffer, peer: int,
                       payload: bytes) -> None:
        from .datatype import unpack

        expected = recvbuf.counts[peer] * recvbuf.element_size
        if len(payload) != expected:
            raise InvalidArgument(
                f"window from rank {peer} is {len(payload)} bytes, "
                f"expected {expected}"
            )
        unpack(payload, recvbuf.ctype, recvbuf.counts[peer], recvbuf.window(peer))

    def _consistency_check(self, blob: bytes) -> None:
        """Level-3 all-equal agreement on collective arguments."""
        if self.session.assert_level < 3 or self._size == 1:
            return
        tag = _ctag(_OP_CONSIST)
        vtag = _ctag(_OP_VERDICT)
        if self._rank == 0:
            ok = True
            for peer in range(1, self._size):
                if self._recv_internal(peer, tag) != blob:
                    ok = False
            verdict = b"\x01" if ok else b"\x00"
            for peer in range(1, self._size):
                self._send_internal(verdict, peer, vtag)
            self._check(3, ok, "collective called with inconsistent arguments")
        else:
            self._send_internal(blob, 0, tag)
            verdict = self._recv_internal(0, vtag)
            self._check(
                3,
                verdict == b"\x01",
                "collective called with inconsistent arguments",
            )

    def _validate_context_agreement(self, seq: int) -> None:
        """Level-3 check that every member derived the same context id."""
        if self.session.assert_level < 3 or self._size == 1:
            return
        blob = self.context_id.to_bytes(8, "little")
        tag = _ctag(_OP_CONSIST, 1)
        vtag = _ctag(_OP_VERDICT, 1)
        endpoint = self.session.endpoint
        me = self.group.members[self._rank]
        if self._rank == 0:
            ok = True
            for peer in range(1, self._size):
                key = MatchKey(0, self.group.members[peer], tag, KIND_COLLECTIVE)
                ticket = endpoint.post_recv(key)
                endpoint.complete(ticket)
                if ticket.payload != blob:
                    ok = False
            for peer in range(1, self._size):
                env = Envelope(KIND_COLLECTIVE, 0, 0, me,
                               self.group.members[peer], vtag, 0, 1)
                endpoint.send(env, b"\x01" if ok else b"\x00")
            self._check(3, ok, "context id derivation disagreed across ranks")
        else:
            env = Envelope(KIND_COLLECTIVE, 0, 0, me, self.group.members[0],
                           tag, 0, len(blob))
            endpoint.send(env, blob)
            key = MatchKey(0, self.group.members[0], vtag, KIND_COLLECTIVE)
            ticket = endpoint.post_recv(key)
            endpoint.complete(ticket)
            self._check(
                3,
                ticket.payload == b"\x01",
                "context id derivation disagreed across ranks",
            )


class _ExclusiveGuard:
    __slots__ = ("_comm",)

    def __init__(self, comm: Communicator):
        self._comm = comm

    def __enter__(self):
        if self._comm._busy:
            raise UsageError(
                "communicator is already driving an operation; "
                "communicators are single-owner"
            )
        self._comm._busy = True
        return self

    def __exit__(self, *exc):
        self._comm._busy = False
