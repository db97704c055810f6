"""State and observation types of the simulated 5G core."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional


class NgQi(Enum):
    BEST_EFFORT = "BestEffort"
    PRIORITY = "Priority"
    GUARANTEED_BITRATE = "GuaranteedBitrate"


class NodeKind(Enum):
    AMF = "AMF"
    SMF = "SMF"


class Health(Enum):
    UP = "Up"
    UNREACHABLE = "Unreachable"
    DEGRADED = "Degraded"


class AlertCode(Enum):
    HTTP_CONN_EXHAUSTION = "HttpConnExhaustion"
    AMF_UNREACHABLE = "AmfUnreachable"
    SESSION_CAPACITY_L1 = "SessionCapacityL1"


class Severity(Enum):
    CRITICAL = "Critical"
    MAJOR = "Major"


ALERT_SEVERITY = {
    AlertCode.AMF_UNREACHABLE: Severity.CRITICAL,
    AlertCode.HTTP_CONN_EXHAUSTION: Severity.CRITICAL,
    AlertCode.SESSION_CAPACITY_L1: Severity.MAJOR,
}

# SessionCapacityL1 fires at this fraction of session_capacity.
SESSION_L1_FRACTION = 0.95


@dataclass
class QosFlow:
    id: str
    terminal_id: str
    cell_id: str
    demand_mbps: float
    ng_qi: NgQi = NgQi.BEST_EFFORT
    gbr_mbps: float = 0.0
    granted_mbps: float = 0.0

    def guaranteed_part(self) -> float:
        if self.ng_qi is not NgQi.GUARANTEED_BITRATE:
            return 0.0
        return min(self.gbr_mbps, self.demand_mbps)


@dataclass
class Cell:
    id: str
    capacity_mbps: float
    flows: list[str] = field(default_factory=list)
    # (t_ms, total offered Mbps) steps shared equally by background flows.
    background_load_profile: list[tuple[int, float]] = field(default_factory=list)
    background_flows: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.capacity_mbps > 0:
            raise ValueError(f"cell {self.id}: capacity_mbps must be > 0")


@dataclass
class NfNode:
    id: str
    kind: NodeKind
    address: str
    params: dict[str, int] = field(default_factory=dict)
    usage: dict[str, int] = field(default_factory=dict)
    health: Health = Health.UP
    pod_running: bool = True
    link_up: bool = True


@dataclass(frozen=True)
class TelemetrySample:
    t: int
    cell_id: Optional[str]
    per_flow_granted: dict[str, float]
    cell_offered_load: float
    node_usages: dict[str, dict[str, int]]


@dataclass(frozen=True)
class Alert:
    t: int
    source_node: str
    code: AlertCode
    severity: Severity
    details: dict[str, str] = field(default_factory=dict)

    @property
    def key(self) -> str:
        return incident_key(self.source_node, self.code)


def incident_key(node_id: str, code: AlertCode) -> str:
    return f"{node_id}:{code.value}"


@dataclass(frozen=True)
class FaultPayload:
    params: dict[str, int] = field(default_factory=dict)
    usage: dict[str, int] = field(default_factory=dict)
    health: Optional[Health] = None
    pod_running: Optional[bool] = None
    link_up: Optional[bool] = None


@dataclass(frozen=True)
class FaultInjection:
    t_inject: int
    target_node: str
    code: AlertCode
    payload: FaultPayload = FaultPayload()
