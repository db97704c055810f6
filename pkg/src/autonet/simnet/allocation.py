"""Reservation-first water-filling of a cell's capacity."""

from __future__ import annotations

import math
from typing import Iterable

from .model import QosFlow


def allocate_capacity(capacity_mbps: float, flows: Iterable[QosFlow]) -> dict[str, float]:
    """Return the granted rate of every flow on a cell.

    Guaranteed-bitrate flows first receive ``min(gbr, demand)`` in flow-id
    order. What is left of the capacity is water-filled over every flow's
    remaining demand: equal shares, each capped at the flow's residual
    demand, with capped leftovers handed back to the others.

    ``math.fsum`` of the result never exceeds ``capacity_mbps``.
    """
    ordered = sorted(flows, key=lambda f: f.id)
    grants: dict[str, float] = {}
    remaining = float(capacity_mbps)
    for f in ordered:
        g = f.guaranteed_part()
        grants[f.id] = g
        remaining -= g
    remaining = max(remaining, 0.0)

    demand = {f.id: f.demand_mbps for f in ordered}
    residual = sorted(
        (demand[f.id] - grants[f.id], f.id) for f in ordered if demand[f.id] - grants[f.id] > 0
    )
    n_left = len(residual)
    level_flows: list[str] = []
    for i, (want, fid) in enumerate(residual):
        share = remaining / n_left
        if want <= share:
            grants[fid] = demand[fid]
            remaining -= want
            n_left -= 1
        else:
            level_flows = [fid for _, fid in residual[i:]]
            break

    if level_flows:
        share = remaining / len(level_flows)
        for fid in level_flows:
            grants[fid] = min(grants[fid] + share, demand[fid])

    _clamp_to_capacity(grants, capacity_mbps, level_flows)
    return grants


def _clamp_to_capacity(grants: dict[str, float], capacity: float, level_flows: list[str]) -> None:
    # Rounding in the share division can push the exact sum a few ulps past
    # capacity; shave the water-level flows until it fits.
    adjustable = level_flows or sorted(grants, key=lambda k: (-grants[k], k))
    i = 0
    while math.fsum(grants.values()) > capacity:
        fid = adjustable[i % len(adjustable)]
        grants[fid] = max(0.0, math.nextafter(grants[fid], 0.0))
        i += 1
