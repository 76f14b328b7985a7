"""TCP transport: one OS process per rank, coordinator rendezvous on rank 0.

Bootstrap is line-oriented: every rank sends ``REG <rank> <host:port>`` to
the coordinator and receives ``TABLE <n> <host:port>...`` once all ranks
registered.  Data connections are opened lazily on first send and used
unidirectionally, so per-source frame order is the socket's byte order.

There is no background progress thread: blocking calls drive a select loop
that accepts peers, reads whole frames, and feeds the local mailbox.  Sends
on a full socket drain incoming traffic while waiting, which keeps opposing
bulk transfers from deadlocking.
"""

from __future__ import annotations

import select
import socket
import time
from typing import Dict, List, Optional

from ..errors import BootstrapError, Disconnected, InternalError, InvalidArgument
from .frame import (
    DEFAULT_PAYLOAD_CAP,
    HEADER_LEN,
    KIND_ABORT,
    Envelope,
    decode_header,
    encode_frame,
    encode_header,
)
from .mailbox import Mailbox, MatchKey, Ticket

__all__ = ["TcpEndpoint"]

_POLL_INTERVAL = 0.05
_IO_TIMEOUT = 10.0


def _parse_addr(text: str):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise BootstrapError(f"bad address {text!r}, expected host:port")
    return host, int(port)


def _read_line(sock: socket.socket, deadline: float) -> str:
    chunks = bytearray()
    while not chunks.endswith(b"\n"):
        sock.settimeout(max(0.01, deadline - time.monotonic()))
        try:
            data = sock.recv(256)
        except socket.timeout:
            raise BootstrapError("rendezvous timed out") from None
        if not data:
            raise BootstrapError("rendezvous peer closed connection")
        chunks += data
    return chunks.decode("ascii").strip()


class TcpEndpoint:
    def __init__(self, rank: int, world_size: int, coord: str,
                 connect_timeout: float = 10.0,
                 payload_cap: int = DEFAULT_PAYLOAD_CAP):
        self.rank = rank
        self.world_size = world_size
        self.payload_cap = payload_cap
        self.frames_sent = 0
        self.frames_by_kind: dict = {}
        self._mailbox = Mailbox()
        self._contexts: set = set()
        self._send_conns: Dict[int, socket.socket] = {}
        self._recv_socks: List[socket.socket] = []
        self._closed = False
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        coord_host, coord_port = _parse_addr(coord)
        self._listener.bind((coord_host, 0))
        self._listener.listen(world_size + 2)
        my_host, my_port = self._listener.getsockname()
        self._table = self._rendezvous(
            coord_host, coord_port, f"{my_host}:{my_port}", connect_timeout
        )

    # -- bootstrap ---------------------------------------------------------

    def _rendezvous(self, coord_host: str, coord_port: int, my_addr: str,
                    timeout: float) -> List[str]:
        deadline = time.monotonic() + timeout
        if self.rank == 0:
            return self._run_coordinator(coord_host, coord_port, my_addr, deadline)
        last_error: Optional[Exception] = None
        while time.monotonic() < deadline:
            try:
                conn = socket.create_connection(
                    (coord_host, coord_port),
                    timeout=max(0.05, deadline - time.monotonic()),
                )
                break
            except OSError as exc:
                last_error = exc
                time.sleep(0.05)
        else:
            raise BootstrapError(
                f"coordinator {coord_host}:{coord_port} unreachable: {last_error}"
            )
        with conn:
            conn.sendall(f"REG {self.rank} {my_addr}\n".encode("ascii"))
            reply = _read_line(conn, deadline)
        parts = reply.split()
        if len(parts) != 2 + self.world_size or parts[0] != "TABLE":
            raise BootstrapError(f"malformed rendezvous reply {reply!r}")
        return parts[2:]

    def _run_coordinator(self, host: str, port: int, my_addr: str,
                         deadline: float) -> List[str]:
        table: Dict[int, str] = {0: my_addr}
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            server.bind((host, port))
        except OSError as exc:
            server.close()
            raise BootstrapError(f"cannot bind coordinator {host}:{port}: {exc}")
        server.listen(self.world_size + 2)
        registered = []
        try:
            while len(table) < self.world_size:
                server.settimeout(max(0.01, deadline - time.monotonic()))
                try:
                    conn, _ = server.accept()
                except socket.timeout:
                    raise BootstrapError(
                        f"only {len(table)}/{self.world_size} ranks registered"
                    ) from None
                line = _read_line(conn, deadline)
                parts = line.split()
                if len(parts) != 3 or parts[0] != "REG":
                    conn.close()
                    raise BootstrapError(f"malformed registration {line!r}")
                table[int(parts[1])] = parts[2]
                registered.append(conn)
            reply = ("TABLE %d %s\n" % (
                self.world_size,
                " ".join(table[i] for i in range(self.world_size)),
            )).encode("ascii")
            for conn in registered:
                conn.sendall(reply)
            return [table[i] for i in range(self.world_size)]
        finally:
            for conn in registered:
                conn.close()
            server.close()

    # -- sending -----------------------------------------------------------

    def send(self, env: Envelope, payload: bytes) -> None:
        self._mailbox.check_abort()
        if not 0 <= env.dest < self.world_size:
            raise InternalError(f"destination {env.dest} outside world")
        if env.payload_len > self.payload_cap:
            raise InvalidArgument(
                f"payload of {env.payload_len} bytes exceeds cap {self.payload_cap}"
            )
        self.frames_sent += 1
        self.frames_by_kind[env.kind] = self.frames_by_kind.get(env.kind, 0) + 1
        if env.dest == self.rank:
            self._mailbox.deliver(env, bytes(payload))
            return
        self._write_frame(env.dest, encode_frame(env, payload))

    def _conn_to(self, dest: int) -> socket.socket:
        conn = self._send_conns.get(dest)
        if conn is None:
            host, port = _parse_addr(self._table[dest])
            try:
                conn = socket.create_connection((host, port), timeout=_IO_TIMEOUT)
            except OSError as exc:
                raise Disconnected(dest, str(exc)) from None
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            conn.setblocking(False)
            self._send_conns[dest] = conn
        return conn

    def _write_frame(self, dest: int, frame: bytes) -> None:
        conn = self._conn_to(dest)
        view = memoryview(frame)
        while view:
            try:
                sent = conn.send(view)
                view = view[sent:]
            except (BlockingIOError, InterruptedError):
                # peer's socket is full; drain our own inbox meanwhile
                self._progress_pass(0.005)
                self._mailbox.check_abort()
            except OSError as exc:
                self._drop_send_conn(dest)
                raise Disconnected(dest, str(exc)) from None

    def _drop_send_conn(self, dest: int) -> None:
        conn = self._send_conns.pop(dest, None)
        if conn is not None:
            conn.close()

    # -- receiving ---------------------------------------------------------

    def post_recv(self, key: MatchKey) -> Ticket:
        return self._mailbox.post(key)

    def complete(self, ticket: Ticket) -> None:
        while True:
            self._mailbox.check_abort()
            if ticket.done:
                return
            self._progress_pass(_POLL_INTERVAL)

    def poll(self, ticket: Ticket) -> bool:
        self._mailbox.check_abort()
        if ticket.done:
            return True
        self._progress_pass(0.0)
        self._mailbox.check_abort()
        return ticket.done

    def cancel(self, ticket: Ticket) -> None:
        self._mailbox.cancel(ticket)

    def probe(self, key: MatchKey, block: bool = True):
        while True:
            env = self._mailbox.probe(key)
            if env is not None or not block:
                return env
            self._progress_pass(_POLL_INTERVAL)
            self._mailbox.check_abort()

    def progress(self, budget: int = 16) -> list:
        events = []
        for _ in range(budget):
            if not self._progress_pass(0.0):
                break
            events.append("frame")
        self._mailbox.check_abort()
        return events

    def _progress_pass(self, timeout: float) -> bool:
        """One select round: accept peers, read at most one frame per ready
        socket.  Returns True when any byte-level work happened."""
        if self._closed:
            return False
        sources = [self._listener, *self._recv_socks]
        try:
            ready, _, _ = select.select(sources, [], [], timeout)
        except (OSError, ValueError):
            return False
        worked = False
        for sock in ready:
            worked = True
            if sock is self._listener:
                conn, _ = sock.accept()
                conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                conn.settimeout(_IO_TIMEOUT)
                self._recv_socks.append(conn)
                continue
            self._read_one_frame(sock)
        return worked

    def _read_one_frame(self, sock: socket.socket) -> None:
        header = self._recv_exact(sock, HEADER_LEN)
        if header is None:
            self._recv_socks.remove(sock)
            sock.close()
            return
        env = decode_header(header, self.payload_cap)
        payload = b""
        if env.payload_len:
            payload = self._recv_exact(sock, env.payload_len, must=True)
        if env.kind == KIND_ABORT:
            code = int.from_bytes(payload[:4], "little")
            self._mailbox.set_abort(code)
            return
        self._mailbox.deliver(env, payload)

    def _recv_exact(self, sock: socket.socket, n: int, must: bool = False):
        chunks = bytearray()
        while len(chunks) < n:
            try:
                data = sock.recv(n - len(chunks))
            except socket.timeout:
                raise Disconnected(-1, "peer stalled mid-frame") from None
            except OSError:
                data = b""
            if not data:
                if chunks or must:
                    raise Disconnected(-1, "peer closed mid-frame")
                return None
            chunks += data
        return bytes(chunks)

    # -- control -----------------------------------------------------------

    def broadcast_abort(self, code: int) -> None:
        payload = (code & 0xFFFFFFFF).to_bytes(4, "little")
        for peer in range(self.world_size):
            if peer == self.rank:
                continue
            env = Envelope(KIND_ABORT, 0, 0, self.rank, peer, 0, 0, 4)
            try:
                self._write_frame(peer, encode_header(env) + payload)
                self.frames_sent += 1
                self.frames_by_kind[KIND_ABORT] = self.frames_by_kind.get(KIND_ABORT, 0) + 1
            except (Disconnected, OSError):
                pass
        self._mailbox.set_abort(code)

    def register_context(self, context_id: int) -> None:
        self._contexts.add(context_id)

    def unregister_context(self, context_id: int) -> None:
        self._contexts.discard(context_id)

    def live_report(self) -> dict:
        report = self._mailbox.live_report()
        report["contexts"] = len(self._contexts)
        return report

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for conn in self._send_conns.values():
            conn.close()
        for sock in self._recv_socks:
            sock.close()
        self._listener.close()
