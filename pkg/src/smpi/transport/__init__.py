"""Message delivery backends and the shared matching machinery.

Endpoints expose one duck-typed surface regardless of backend:

* ``send(envelope, payload)`` / ``post_recv(key)`` / ``complete(ticket)`` /
  ``poll(ticket)`` / ``probe(key, block)`` / ``progress(budget)``
* ``broadcast_abort(code)`` plus context registration and ``live_report``
  for leak accounting.

The in-process backend runs ranks as threads over shared mailboxes; the TCP
backend runs them as OS processes speaking the frame format in
:mod:`smpi.transport.frame`.
"""

from __future__ import annotations

from ..errors import BootstrapError
from .frame import (
    DEFAULT_PAYLOAD_CAP,
    FLAG_SIGNATURE,
    HEADER_LEN,
    KIND_ABORT,
    KIND_COLLECTIVE,
    KIND_DATA,
    MAGIC,
    WIRE_VERSION,
    Envelope,
    decode_header,
    encode_frame,
    encode_header,
)
from .inproc import InprocEndpoint, InprocFabric
from .mailbox import ANY_SOURCE, ANY_TAG, Mailbox, MatchKey, Ticket
from .tcp import TcpEndpoint

__all__ = [
    "ANY_SOURCE",
    "ANY_TAG",
    "DEFAULT_PAYLOAD_CAP",
    "FLAG_SIGNATURE",
    "HEADER_LEN",
    "KIND_ABORT",
    "KIND_COLLECTIVE",
    "KIND_DATA",
    "MAGIC",
    "WIRE_VERSION",
    "Envelope",
    "Mailbox",
    "MatchKey",
    "Ticket",
    "InprocEndpoint",
    "InprocFabric",
    "TcpEndpoint",
    "decode_header",
    "encode_frame",
    "encode_header",
    "bootstrap",
]


def bootstrap(config):
    """Create the endpoint described by a session config."""
    if config.transport == "inproc":
        if config.fabric is not None:
            return config.fabric.endpoint(config.rank)
        if config.world_size != 1:
            raise BootstrapError(
                "an in-process world larger than one rank needs a shared "
                "fabric; use the launcher"
            )
        return InprocFabric(1).endpoint(0)
    if config.transport == "tcp":
        if not config.coord:
            raise BootstrapError("tcp transport needs a coordinator address")
        return TcpEndpoint(
            config.rank,
            config.world_size,
            config.coord,
            connect_timeout=config.connect_timeout,
        )
    raise BootstrapError(f"unknown transport {config.transport!r}")
