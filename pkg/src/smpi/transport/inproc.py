"""In-process transport: ranks are threads sharing a mailbox array.

Delivery is a direct push into the destination mailbox under its lock, so
send order is arrival order and no sockets or progress loops exist.  One
fabric is one launched world; sessions attach to it through per-rank
endpoints.
"""

from __future__ import annotations

import threading
from typing import Optional

from ..errors import InternalError
from .frame import Envelope, KIND_ABORT
from .mailbox import Mailbox, MatchKey, Ticket

__all__ = ["InprocFabric", "InprocEndpoint"]


class InprocFabric:
    """Shared state of one in-process world of ``world_size`` rank threads."""

    def __init__(self, world_size: int):
        if world_size < 1:
            raise InternalError(f"world size must be >= 1, got {world_size}")
        self.world_size = world_size
        self.mailboxes = [Mailbox() for _ in range(world_size)]
        self._lock = threading.Lock()
        self._attach_counts = [0] * world_size
        self.abort_code: Optional[int] = None

    def endpoint(self, rank: int) -> "InprocEndpoint":
        if not 0 <= rank < self.world_size:
            raise InternalError(f"rank {rank} outside world of {self.world_size}")
        with self._lock:
            ordinal = self._attach_counts[rank]
            self._attach_counts[rank] += 1
        return InprocEndpoint(self, rank, ordinal)

    def abort(self, code: int) -> None:
        with self._lock:
            if self.abort_code is None:
                self.abort_code = code
        for mailbox in self.mailboxes:
            mailbox.set_abort(code)

    def live_report(self) -> dict:
        queued = posted = 0
        for mailbox in self.mailboxes:
            report = mailbox.live_report()
            queued += report["queued"]
            posted += report["posted"]
        return {"queued": queued, "posted": posted}


class InprocEndpoint:
    def __init__(self, fabric: InprocFabric, rank: int, attach_ordinal: int):
        self.fabric = fabric
        self.rank = rank
        self.world_size = fabric.world_size
        self.attach_ordinal = attach_ordinal
        self.frames_sent = 0
        self.frames_by_kind: dict = {}
        self._mailbox = fabric.mailboxes[rank]
        self._contexts: set = set()

    # -- sending ---------------------------------------------------------

    def send(self, env: Envelope, payload: bytes) -> None:
        self._mailbox.check_abort()
        if not 0 <= env.dest < self.world_size:
            raise InternalError(f"destination {env.dest} outside world")
        self.frames_sent += 1
        self.frames_by_kind[env.kind] = self.frames_by_kind.get(env.kind, 0) + 1
        self.fabric.mailboxes[env.dest].deliver(env, payload)

    # -- receiving -------------------------------------------------------

    def post_recv(self, key: MatchKey) -> Ticket:
        return self._mailbox.post(key)

    def complete(self, ticket: Ticket) -> None:
        """Block until the ticket is matched (or the world aborts)."""
        self._mailbox.wait(ticket)

    def poll(self, ticket: Ticket) -> bool:
        self._mailbox.check_abort()
        return ticket.done

    def cancel(self, ticket: Ticket) -> None:
        self._mailbox.cancel(ticket)

    def probe(self, key: MatchKey, block: bool = True):
        if block:
            return self._mailbox.wait_probe(key)
        return self._mailbox.probe(key)

    def progress(self, budget: int = 16) -> list:
        """Bounded progress; a push-based fabric has none to make."""
        self._mailbox.check_abort()
        return []

    # -- control ---------------------------------------------------------

    def broadcast_abort(self, code: int) -> None:
        env = Envelope(KIND_ABORT, 0, 0, self.rank, 0, 0, 0, 4)
        self.frames_sent += self.world_size - 1
        self.frames_by_kind[KIND_ABORT] = (
            self.frames_by_kind.get(KIND_ABORT, 0) + self.world_size - 1
        )
        del env  # direct flag propagation; no queue can outlive the abort
        self.fabric.abort(code)

    def register_context(self, context_id: int) -> None:
        self._contexts.add(context_id)

    def unregister_context(self, context_id: int) -> None:
        self._contexts.discard(context_id)

    def live_report(self) -> dict:
        report = self._mailbox.live_report()
        report["contexts"] = len(self._contexts)
        return report

    def close(self) -> None:
        pass
