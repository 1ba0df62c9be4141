"""Zonal network model and lossless DC power transfer distribution factors.

A PTDF entry ``(i, j)`` is the flow on line ``j`` (signed by the line's
from->to reference direction) when one unit is injected at the slack zone
and withdrawn at zone ``i``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import BalanceError, StructuralError


@dataclass(frozen=True)
class Zone:
    id: str
    index: int


@dataclass(frozen=True)
class Line:
    id: int
    from_zone: str
    to_zone: str
    susceptance: float = 1.0
    capacity: float = 0.0

    def __post_init__(self):
        if self.from_zone == self.to_zone:
            raise StructuralError(f"line {self.id} connects zone {self.from_zone} to itself")
        if not self.susceptance > 0:
            raise StructuralError(f"line {self.id} has non-positive susceptance {self.susceptance}")
        if not self.capacity >= 0:
            raise StructuralError(f"line {self.id} has negative capacity {self.capacity}")


@dataclass(frozen=True)
class Topology:
    zones: tuple[Zone, ...]
    lines: tuple[Line, ...]
    slack: str

    def __post_init__(self):
        ids = [z.id for z in self.zones]
        if len(set(ids)) != len(ids):
            raise StructuralError(f"duplicate zone ids in {ids}")
        if [z.index for z in self.zones] != list(range(len(self.zones))):
            raise StructuralError("zone indices must be contiguous from 0 in list order")
        if self.slack not in ids:
            raise StructuralError(f"slack zone {self.slack!r} is not a member zone")
        line_ids = [ln.id for ln in self.lines]
        if len(set(line_ids)) != len(line_ids):
            raise StructuralError(f"duplicate line ids in {line_ids}")
        for ln in self.lines:
            for end in (ln.from_zone, ln.to_zone):
                if end not in ids:
                    raise StructuralError(f"line {ln.id} references unknown zone {end!r}")

    @classmethod
    def build(cls, zone_ids: Sequence[str], lines: Sequence[Line], slack: str | None = None) -> "Topology":
        zones = tuple(Zone(z, i) for i, z in enumerate(zone_ids))
        return cls(zones, tuple(lines), slack if slack is not None else zone_ids[0])

    @property
    def zone_ids(self) -> list[str]:
        return [z.id for z in self.zones]

    @property
    def capacities(self) -> np.ndarray:
        return np.array([ln.capacity for ln in self.lines], dtype=float)

    def index_of(self, zone: str) -> int:
        for z in self.zones:
            if z.id == zone:
                return z.index
        raise KeyError(zone)

    def with_capacities(self, capacities: Sequence[float]) -> "Topology":
        lines = tuple(
            Line(ln.id, ln.from_zone, ln.to_zone, ln.susceptance, float(c))
            for ln, c in zip(self.lines, capacities, strict=True)
        )
        return Topology(self.zones, lines, self.slack)

    def with_slack(self, slack: str) -> "Topology":
        return Topology(self.zones, self.lines, slack)

    def is_connected(self) -> bool:
        if not self.zones:
            return False
        adj: dict[str, set[str]] = {z.id: set() for z in self.zones}
        for ln in self.lines:
            adj[ln.from_zone].add(ln.to_zone)
            adj[ln.to_zone].add(ln.from_zone)
        seen = {self.zones[0].id}
        todo = deque(seen)
        while todo:
            for nxt in adj[todo.popleft()]:
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return len(seen) == len(self.zones)


@dataclass(frozen=True)
class PtdfMatrix:
    """Rows are non-slack zones (``zones`` order), columns are lines (``line_ids`` order)."""

    entries: np.ndarray
    zones: tuple[str, ...]
    line_ids: tuple[int, ...]
    slack: str
    _row_of: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_row_of", {z: i for i, z in enumerate(self.zones)})

    def row(self, zone: str) -> np.ndarray:
        if zone == self.slack:
            return np.zeros(len(self.line_ids))
        return self.entries[self._row_of[zone]]

    def full(self, zone_order: Sequence[str]) -> np.ndarray:
        """Matrix with one row per zone in ``zone_order``, slack row zero."""
        return np.array([self.row(z) for z in zone_order]).reshape(len(zone_order), len(self.line_ids))


def build_ptdf(topology: Topology) -> PtdfMatrix:
    if not topology.is_connected():
        raise StructuralError("network graph is disconnected")
    ids = topology.zone_ids
    n, m = len(ids), len(topology.lines)
    incidence = np.zeros((m, n))
    for k, ln in enumerate(topology.lines):
        incidence[k, topology.index_of(ln.from_zone)] = 1.0
        incidence[k, topology.index_of(ln.to_zone)] = -1.0
    b = np.array([ln.susceptance for ln in topology.lines])
    laplacian = incidence.T @ (b[:, None] * incidence)

    keep = [i for i, z in enumerate(ids) if z != topology.slack]
    reduced = laplacian[np.ix_(keep, keep)]
    if reduced.size and np.linalg.matrix_rank(reduced) < len(keep):
        raise StructuralError("reduced susceptance Laplacian is singular")

    # Withdrawal of one unit at each non-slack zone (slack supplies it).
    withdrawals = -np.eye(len(keep))
    theta = np.zeros((n, len(keep)))
    if keep:
        theta[keep, :] = np.linalg.solve(reduced, withdrawals)
    flows = (b[:, None] * (incidence @ theta)).T
    return PtdfMatrix(
        entries=flows,
        zones=tuple(ids[i] for i in keep),
        line_ids=tuple(ln.id for ln in topology.lines),
        slack=topology.slack,
    )


def flows_from_injections(ptdf: PtdfMatrix, injections: Mapping[str, float]) -> np.ndarray:
    """Line flows for a balanced injection pattern (positive = injection)."""
    values = np.array(list(injections.values()), dtype=float)
    scale = max(1.0, float(np.abs(values).max())) if values.size else 1.0
    if abs(values.sum()) > 1e-9 * scale:
        raise BalanceError(f"injections sum to {values.sum():.3e}, expected 0")
    flows = np.zeros(len(ptdf.line_ids))
    for zone, inj in injections.items():
        if inj:
            flows -= inj * ptdf.row(zone)
    return flows
