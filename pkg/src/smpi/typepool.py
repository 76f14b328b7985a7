"""Session-scoped registry of committed datatypes.

Callers register a committed type under an opaque 64-bit identity token and
look it up wherever the type object itself would be awkward to thread
through.  Entries live exactly as long as the owning session; finalizing
the session empties the pool and further access is a usage error.
"""

from __future__ import annotations

import threading
from typing import Dict

from .datatype import CommittedDatatype
from .errors import InvalidArgument, UsageError

__all__ = ["TypePool"]


class TypePool:
    def __init__(self, session):
        self._session = session
        self._lock = threading.Lock()
        self._entries: Dict[int, CommittedDatatype] = {}
        self._closed = False

    def register(self, identity: int, ctype: CommittedDatatype) -> None:
        """Store ``ctype`` under ``identity``; duplicate tokens are rejected."""
        if self._closed:
            raise UsageError("type pool used after session finalize")
        if not isinstance(ctype, CommittedDatatype):
            raise InvalidArgument("only committed datatypes can be pooled")
        with self._lock:
            self._session._check(
                1,
                lambda: identity not in self._entries,
                lambda: f"type identity {identity:#x} registered twice",
            )
            self._entries[identity] = ctype

    def lookup(self, identity: int) -> CommittedDatatype:
        """Shared reference, valid until the session is finalized."""
        if self._closed:
            raise UsageError("type pool used after session finalize")
        with self._lock:
            try:
                return self._entries[identity]
            except KeyError:
                raise InvalidArgument(
                    f"no type registered under identity {identity:#x}"
                ) from None

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def _close(self) -> None:
        with self._lock:
            self._closed = True
            self._entries.clear()
