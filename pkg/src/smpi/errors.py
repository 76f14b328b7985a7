"""Layered runtime checking and the error contract.

Two disjoint failure families:

* Recoverable conditions (:class:`MessagingError` and subclasses) are raised
  as ordinary exceptions carrying structured payloads; callers may catch and
  continue.  Nothing in the library signals a recoverable condition any other
  way.
* Usage violations caught by the layered assertion system are fatal.  A
  failed :func:`check` calls the supplied abort hook (which notifies peer
  ranks) and raises :class:`Abort`, which derives from ``BaseException`` so
  it cannot be swallowed by a stray ``except Exception``.

Assertion levels (``SMPI_ASSERT_LEVEL``, read once at session init):

* 0 - all checks off; predicates are never evaluated.
* 1 - cheap local checks: argument bounds, object state machines.
* 2 - checks using extra envelope metadata (type signature stamps).
* 3 - checks requiring extra communication (collective argument agreement).

A level enables every check of lower levels as well.
"""

from __future__ import annotations

from typing import Callable

__all__ = [
    "Abort",
    "UsageError",
    "MessagingError",
    "InvalidArgument",
    "Truncation",
    "TypeMismatch",
    "Disconnected",
    "BootstrapError",
    "InternalError",
    "ASSERT_ABORT_CODE",
    "TIMEOUT_EXIT_CODE",
    "check",
]

# Exit code used when a failed assertion tears the job down, and the code a
# launcher reports when it had to break a deadlocked run.
ASSERT_ABORT_CODE = 99
TIMEOUT_EXIT_CODE = 124


class Abort(BaseException):
    """Fatal termination of a rank, carrying the job-wide exit code."""

    def __init__(self, code: int, message: str = ""):
        super().__init__(message or f"abort with code {code}")
        self.code = code
        self.message = message


class UsageError(Abort):
    """A detected usage violation; execution cannot safely continue."""

    def __init__(self, message: str):
        super().__init__(ASSERT_ABORT_CODE, message)


class MessagingError(Exception):
    """Base class for recoverable errors returned to the caller."""


class InvalidArgument(MessagingError):
    pass


class Truncation(MessagingError):
    """Incoming payload exceeded the posted receive capacity.

    The message is consumed; ``actual_bytes`` reports the payload size that
    was dropped on the floor.
    """

    def __init__(self, actual_bytes: int, capacity_bytes: int):
        super().__init__(
            f"message of {actual_bytes} bytes truncated by a "
            f"{capacity_bytes}-byte receive buffer"
        )
        self.actual_bytes = actual_bytes
        self.capacity_bytes = capacity_bytes


class TypeMismatch(MessagingError):
    """Sender and receiver disagreed on the element type signature."""

    def __init__(self, expected_sig: int, got_sig: int):
        super().__init__(
            f"type signature mismatch: expected {expected_sig:#018x}, "
            f"got {got_sig:#018x}"
        )
        self.expected_sig = expected_sig
        self.got_sig = got_sig


class Disconnected(MessagingError):
    """A peer rank became unreachable."""

    def __init__(self, rank: int, detail: str = ""):
        super().__init__(f"rank {rank} disconnected" + (f": {detail}" if detail else ""))
        self.rank = rank


class BootstrapError(MessagingError):
    """Transport bootstrap (rendezvous, binding, attach) failed."""


class InternalError(MessagingError):
    """Invariant violation inside the library itself."""


def check(
    enabled_level: int,
    required_level: int,
    predicate: Callable[[], bool] | bool,
    diagnostic: str | Callable[[], str],
    abort: Callable[[str], None] | None = None,
) -> None:
    """Evaluate a layered assertion.

    Does nothing when ``enabled_level < required_level``; in particular the
    predicate is not evaluated, so side effects and evaluation cost are
    skipped entirely.  On failure the diagnostic is materialized and the
    ``abort`` hook is invoked (expected to notify peers and raise
    :class:`Abort`); if the hook returns or none is given, a
    :class:`UsageError` is raised locally.
    """
    if enabled_level < required_level:
        return
    ok = predicate() if callable(predicate) else predicate
    if ok:
        return
    message = diagnostic() if callable(diagnostic) else diagnostic
    if abort is not None:
        abort(message)
    raise UsageError(message)
