"""Per-rank message matching: posted receives vs. arrived messages.

A posted receive matches the earliest queued message whose (context,
source, tag) satisfies its key under wildcard semantics; an arriving
message symmetrically matches the earliest posted receive.  Because both
sides scan in arrival/post order, delivery per (source, context, tag) is
non-overtaking.

Mailboxes are internally synchronized: any thread may deliver, the owning
rank posts and waits.  An abort marks the mailbox dead and wakes every
waiter with the carried exit code.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

from ..errors import Abort
from .frame import KIND_DATA, Envelope

__all__ = ["ANY_SOURCE", "ANY_TAG", "MatchKey", "Ticket", "Mailbox"]

ANY_SOURCE = 0xFFFFFFFF
ANY_TAG = -1


@dataclass(frozen=True)
class MatchKey:
    context_id: int
    source: int = ANY_SOURCE
    tag: int = ANY_TAG
    kind: int = KIND_DATA

    def matches(self, env: Envelope) -> bool:
        return (
            env.kind == self.kind
            and env.context_id == self.context_id
            and (self.source == ANY_SOURCE or env.source == self.source)
            and (self.tag == ANY_TAG or env.tag == self.tag)
        )


class Ticket:
    """Completion slot for one posted receive."""

    __slots__ = ("key", "envelope", "payload", "done")

    def __init__(self, key: MatchKey):
        self.key = key
        self.envelope: Optional[Envelope] = None
        self.payload: Optional[bytes] = None
        self.done = False

    def _complete(self, env: Envelope, payload: bytes) -> None:
        self.envelope = env
        self.payload = payload
        self.done = True


class Mailbox:
    def __init__(self):
        self._cond = threading.Condition()
        self._queued: list = []  # (Envelope, payload) in arrival order
        self._posted: list = []  # Tickets in post order
        self._abort_code: Optional[int] = None

    def deliver(self, env: Envelope, payload: bytes) -> bool:
        """Hand an arrived message to the earliest matching posted receive,
        or park it.  Returns True when a receive completed."""
        with self._cond:
            if self._abort_code is not None:
                return False
            for i, ticket in enumerate(self._posted):
                if ticket.key.matches(env):
                    del self._posted[i]
                    ticket._complete(env, payload)
                    self._cond.notify_all()
                    return True
            self._queued.append((env, payload))
            self._cond.notify_all()
            return False

    def post(self, key: MatchKey) -> Ticket:
        """Post a receive; matches the earliest parked message if any."""
        ticket = Ticket(key)
        with self._cond:
            self._raise_if_aborted()
            for i, (env, payload) in enumerate(self._queued):
                if key.matches(env):
                    del self._queued[i]
                    ticket._complete(env, payload)
                    return ticket
            self._posted.append(ticket)
        return ticket

    def cancel(self, ticket: Ticket) -> None:
        with self._cond:
            try:
                self._posted.remove(ticket)
            except ValueError:
                pass

    def wait(self, ticket: Ticket, timeout: Optional[float] = None) -> bool:
        """Block until the ticket completes, abort fires, or timeout."""
        with self._cond:
            done = self._cond.wait_for(
                lambda: ticket.done or self._abort_code is not None, timeout
            )
            self._raise_if_aborted()
            return done

    def probe(self, key: MatchKey) -> Optional[Envelope]:
        """Earliest matching parked envelope, without consuming it."""
        with self._cond:
            self._raise_if_aborted()
            for env, _ in self._queued:
                if key.matches(env):
                    return env
            return None

    def wait_probe(self, key: MatchKey, timeout: Optional[float] = None) -> Optional[Envelope]:
        with self._cond:
            result: list = []

            def scan() -> bool:
                if self._abort_code is not None:
                    return True
                for env, _ in self._queued:
                    if key.matches(env):
                        result.append(env)
                        return True
                return False

            self._cond.wait_for(scan, timeout)
            self._raise_if_aborted()
            return result[0] if result else None

    def set_abort(self, code: int) -> None:
        with self._cond:
            if self._abort_code is None:
                self._abort_code = code
            self._cond.notify_all()

    @property
    def abort_code(self) -> Optional[int]:
        with self._cond:
            return self._abort_code

    def check_abort(self) -> None:
        with self._cond:
            self._raise_if_aborted()

    def _raise_if_aborted(self) -> None:
        if self._abort_code is not None:
            raise Abort(self._abort_code, "peer abort")

    def live_report(self) -> dict:
        with self._cond:
            return {"queued": len(self._queued), "posted": len(self._posted)}
