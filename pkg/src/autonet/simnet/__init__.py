"""Simulated 5G core environment on a deterministic logical clock."""

from .allocation import allocate_capacity
from .clock import SimClock
from .model import (
    Alert,
    AlertCode,
    Cell,
    FaultInjection,
    FaultPayload,
    Health,
    NfNode,
    NgQi,
    NodeKind,
    QosFlow,
    Severity,
    TelemetrySample,
    incident_key,
)
from .network import Network, ScenarioError, ToolEffectError

__all__ = [
    "Alert",
    "AlertCode",
    "Cell",
    "FaultInjection",
    "FaultPayload",
    "Health",
    "Network",
    "NfNode",
    "NgQi",
    "NodeKind",
    "QosFlow",
    "ScenarioError",
    "Severity",
    "SimClock",
    "TelemetrySample",
    "ToolEffectError",
    "allocate_capacity",
    "incident_key",
]
