"""Ant-inspired route discovery for payment channel networks.

Endpoints flood direction-tagged pheromone seeds derived from a shared
secret; any node holding both directions becomes the meeting point, and
the payer picks among returned offers to lock a payment path. No node
ever learns who is paying whom. Includes a deterministic discrete-event
simulator for studying delivery rates, fees, overhead and adversaries.
"""

from .channels import (
    BroadcastPolicy,
    Channel,
    ChannelBook,
    NeighborStats,
    ScoreWeights,
    SettleError,
    can_forward,
    neighbor_score,
    record_relay_event,
    select_broadcast_set,
    settle_path,
)
from .kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION
from .messages import (
    CodecError,
    Direction,
    SeedKind,
    SeedMessage,
    conjugate,
    decode,
    derive_request_id,
    encode,
    logical_bit_length,
    make_pheromone_pair,
    promote_to_confirmed,
    promote_to_matched,
)
from .node import Node, NodeConfig

__version__ = "0.1.0"

__all__ = [
    "BroadcastPolicy",
    "Channel",
    "ChannelBook",
    "CodecError",
    "Direction",
    "KERNEL_IMPLEMENTATION",
    "NeighborStats",
    "Node",
    "NodeConfig",
    "ScoreWeights",
    "SeedKind",
    "SeedMessage",
    "SettleError",
    "can_forward",
    "conjugate",
    "decode",
    "derive_request_id",
    "encode",
    "logical_bit_length",
    "make_pheromone_pair",
    "neighbor_score",
    "promote_to_confirmed",
    "promote_to_matched",
    "record_relay_event",
    "select_broadcast_set",
    "settle_path",
]
