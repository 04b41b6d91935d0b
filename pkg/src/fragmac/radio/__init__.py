from fragmac.radio.frame import Airtime, Frame, FrameKind
from fragmac.radio.medium import (
    Medium,
    NodePlacement,
    OngoingTx,
    Radio,
    Reception,
    Verdict,
    circular_topology,
    reception_probability,
)

__all__ = [
    "Airtime",
    "Frame",
    "FrameKind",
    "Medium",
    "NodePlacement",
    "OngoingTx",
    "Radio",
    "Reception",
    "Verdict",
    "circular_topology",
    "reception_probability",
]
