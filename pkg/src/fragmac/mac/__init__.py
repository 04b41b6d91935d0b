from fragmac.mac.base import MacNode
from fragmac.mac.dyfrag import DyFragSink, FragController, SizeChange, SizeRecord
from fragmac.mac.fragment import Fragment, Reassembly, fragment_packet
from fragmac.mac.frog import FrogSink, FrogSource, MacPhase, MacState, Transfer
from fragmac.mac.idsme import (
    GtsGrant,
    GtsRequest,
    IdsmeCoordinator,
    IdsmeSource,
    Superframe,
    adapt_cap,
    allocate_gts,
    build_superframe,
    draw_cap_backoff,
)

__all__ = [
    "DyFragSink",
    "FragController",
    "Fragment",
    "FrogSink",
    "FrogSource",
    "GtsGrant",
    "GtsRequest",
    "IdsmeCoordinator",
    "IdsmeSource",
    "MacNode",
    "MacPhase",
    "MacState",
    "Reassembly",
    "SizeChange",
    "SizeRecord",
    "Superframe",
    "Transfer",
    "adapt_cap",
    "allocate_gts",
    "build_superframe",
    "draw_cap_backoff",
    "fragment_packet",
]
