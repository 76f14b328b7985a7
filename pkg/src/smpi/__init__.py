"""Safe desk-scale message passing.

Sessions own the runtime; groups come from named process sets; every
communicator is an isolated context created collectively.  Datatypes are
built as trees and frozen by ``commit`` before they may describe message
buffers; nonblocking operations own their buffers until completed.

Quick tour::

    import smpi

    def main(config):
        with smpi.Session(config) as session:
            group = session.group_from_pset(smpi.WORLD_PSET)
            with session.communicator_from_group(group) as comm:
                out = smpi.single(comm.rank)
                comm.allreduce(out, smpi.ReduceOp.SUM)
                return out.value

    results = smpi.run_ranks(main, ranks=4)
"""

from .buffer import (
    DataBuffer,
    IrregularBuffer,
    ScalarBuffer,
    adapt,
    adapt_counted,
    adapt_typed,
    borrow,
    irregular,
    single,
)
from .comm import (
    ANY_SOURCE,
    ANY_TAG,
    RESERVED_TAG_BASE,
    Communicator,
    ReduceOp,
    Request,
    RequestState,
    Status,
)
from .datatype import (
    CommittedDatatype,
    FundamentalKind,
    LayoutDescriptor,
    commit,
    contiguous,
    for_layout,
    fundamental,
    pack,
    signature,
    struct_type,
    unpack,
    vector,
)
from .errors import (
    Abort,
    BootstrapError,
    Disconnected,
    InternalError,
    InvalidArgument,
    MessagingError,
    Truncation,
    TypeMismatch,
    UsageError,
    check,
)
from .launcher import LaunchConfig, RankOutcome, aggregate_exit_code, run_ranks
from .serialize import (
    PairCodec,
    SequenceCodec,
    Utf8Codec,
    recv_serialized,
    send_serialized,
)
from .session import SELF_PSET, WORLD_PSET, Group, Session, SessionConfig
from .typepool import TypePool

__version__ = "0.1.0"


def abort(target, code: int):
    """Terminate every rank of ``target``'s world (session or communicator)."""
    target.abort(code)
