"""Weighted-sum-power resource allocation for relay-assisted spectrum sharing.

A secondary transmitter relays a primary link in exchange for spectrum
access.  For one matched pair the library finds the time split and the three
transmit powers that minimize a weighted sum of powers subject to both links'
rate targets, and pairs many primaries with many secondaries by assignment.
"""

from .errors import (
    Infeasible,
    InternalInconsistency,
    InvalidAllocation,
    InvalidInput,
    InvalidScenario,
    Unconverged,
    WspError,
)
from .model import (
    Allocation,
    ChannelGains,
    LinkPair,
    Metrics,
    QosReq,
    ResourceGrid,
    Weights,
    check_feasible,
    metrics,
    wsp,
)
from .newton import NewtonConfig, SolveResult, allocate

__all__ = [
    "Allocation", "ChannelGains", "Infeasible", "InternalInconsistency",
    "InvalidAllocation", "InvalidInput", "InvalidScenario", "LinkPair", "Metrics",
    "NewtonConfig", "QosReq", "ResourceGrid", "SolveResult", "Unconverged",
    "Weights", "WspError", "allocate", "check_feasible", "metrics", "wsp",
]
