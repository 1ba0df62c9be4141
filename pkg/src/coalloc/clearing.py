"""Market clearing in decoupled, balanced and overprocurement modes.

Co-allocated modes solve a single linear program: welfare over the bid
acceptances plus, for every reserve activation vertex, a recourse plan of
reserve-supply activations whose flows (on top of the energy schedule) stay
within line limits.
"""
from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from . import lp as lpe
from .bids import PRODUCTS, RESERVES, Bid, BidBook, Product, accepted_volume, welfare
from .errors import BalanceError, SolverError, VertexCapError
from .network import PtdfMatrix, Topology, build_ptdf, flows_from_injections

DEFAULT_VERTEX_CAP = 10_000
VERTEX_CAP_ENV = "COALLOC_VERTEX_CAP"
UP, DOWN = Product.RESERVE_POS, Product.RESERVE_NEG


class ClearingMode(str, Enum):
    DECOUPLED = "decoupled"
    BALANCED = "balanced"
    OVERPROCURE = "overprocure"

    def __str__(self) -> str:
        return self.value


def vertex_cap() -> int:
    value = os.environ.get(VERTEX_CAP_ENV)
    return int(value) if value else DEFAULT_VERTEX_CAP


@dataclass
class ActivationVertex:
    """Realized reserve demand per zone; a zone never realizes both signs."""

    up: dict[str, float] = field(default_factory=dict)
    down: dict[str, float] = field(default_factory=dict)

    @property
    def label(self) -> str:
        parts = [f"{z}+" for z, r in self.up.items() if r > 0]
        parts += [f"{z}-" for z, r in self.down.items() if r > 0]
        return ",".join(parts) if parts else "none"

    @property
    def net_demand(self) -> float:
        return sum(self.up.values()) - sum(self.down.values())

    @property
    def idle(self) -> bool:
        """True when no reserve demand is realized anywhere."""
        return not any(r > 0 for r in self.up.values()) and not any(r > 0 for r in self.down.values())


@dataclass
class RecoursePlan:
    vertex: ActivationVertex
    up: dict[str, float] = field(default_factory=dict)    # activated positive supply
    down: dict[str, float] = field(default_factory=dict)  # activated negative supply

    def injections(self, zones: Iterable[str]) -> dict[str, float]:
        return {
            z: self.up.get(z, 0.0) - self.down.get(z, 0.0)
            - self.vertex.up.get(z, 0.0) + self.vertex.down.get(z, 0.0)
            for z in zones
        }

    @property
    def total_activation(self) -> float:
        return sum(self.up.values()) + sum(self.down.values())


@dataclass
class ClearingOutcome:
    mode: ClearingMode
    book: BidBook
    acceptance: dict[str, float]
    positions: dict[tuple[str, Product], float]
    base_flows: np.ndarray
    tsw: float
    recourse: list[RecoursePlan] = field(default_factory=list)
    # Market-visible reserve demand/supply per (zone, product) used by the program.
    reserve_demand: dict[tuple[str, Product], float] = field(default_factory=dict)
    reserve_supply: dict[tuple[str, Product], float] = field(default_factory=dict)
    program: "ClearingProgram | None" = field(default=None, repr=False)
    objective: float = math.nan


# --------------------------------------------------------------------------- decoupled


def _merit_order(bids: list[Bid]) -> dict[str, float]:
    demand = sorted((b for b in bids if b.is_demand), key=lambda b: -b.price)
    supply = sorted((b for b in bids if b.is_supply), key=lambda b: b.price)
    volume = {b.id: 0.0 for b in bids}
    di = si = 0
    d_left = demand[0].quantity if demand else 0.0
    s_left = -supply[0].quantity if supply else 0.0
    while di < len(demand) and si < len(supply) and demand[di].price > supply[si].price:
        traded = min(d_left, s_left)
        volume[demand[di].id] += traded
        volume[supply[si].id] += traded
        d_left -= traded
        s_left -= traded
        if d_left <= 0:
            di += 1
            d_left = demand[di].quantity if di < len(demand) else 0.0
        if s_left <= 0:
            si += 1
            s_left = -supply[si].quantity if si < len(supply) else 0.0
    return {b.id: volume[b.id] / abs(b.quantity) for b in bids}


def _positions(book: BidBook, acceptance: Mapping[str, float], zones: Iterable[str]):
    pos = {(z, p): 0.0 for z in zones for p in PRODUCTS}
    for b in book:
        pos[(b.zone, b.product)] = pos.get((b.zone, b.product), 0.0) + acceptance[b.id] * b.quantity
    return pos


def clear_decoupled(book: BidBook, topology: Topology | None = None) -> ClearingOutcome:
    """Welfare-maximal merit-order intersection in every zone and product separately.

    Only strictly profitable matches trade; zero-surplus pairs stay unmatched.
    """
    zones = topology.zone_ids if topology else sorted({b.zone for b in book})
    acceptance = {b.id: 0.0 for b in book}
    for z in {b.zone for b in book}:
        for p in PRODUCTS:
            acceptance.update(_merit_order(book.in_zone(z, p)))
    n_lines = len(topology.lines) if topology else 0
    tsw = welfare(book, acceptance)
    return ClearingOutcome(
        mode=ClearingMode.DECOUPLED,
        book=book,
        acceptance=acceptance,
        positions=_positions(book, acceptance, zones),
        base_flows=np.zeros(n_lines),
        tsw=tsw,
        objective=tsw,
    )


# --------------------------------------------------------------------------- vertices


def enumerate_vertices(demands: Mapping[str, tuple[float, float]], cap: int | None = None
                       ) -> list[ActivationVertex]:
    """All extreme realizations of zonal reserve demand.

    Each zone independently realizes nothing, its full positive demand, or its
    full negative demand; zones are taken in mapping order and the first zone
    varies slowest.
    """
    cap = vertex_cap() if cap is None else cap
    options = []
    for zone, (d_up, d_down) in demands.items():
        if d_up < 0 or d_down < 0:
            raise ValueError(f"negative reserve demand in zone {zone}")
        opts = [(0.0, 0.0)]
        if d_up > 0:
            opts.append((float(d_up), 0.0))
        if d_down > 0:
            opts.append((0.0, float(d_down)))
        options.append((zone, opts))
    count = math.prod(len(o) for _, o in options)
    if count > cap:
        raise VertexCapError(f"{count} activation vertices exceed the cap of {cap}")
    vertices = []
    for combo in itertools.product(*(o for _, o in options)):
        up = {z: r[0] for (z, _), r in zip(options, combo) if r[0] > 0}
        down = {z: r[1] for (z, _), r in zip(options, combo) if r[1] > 0}
        vertices.append(ActivationVertex(up, down))
    return vertices


# --------------------------------------------------------------------------- co-allocation


@dataclass
class ClearingProgram:
    lp: lpe.LinearProgram
    mode: ClearingMode
    bid_vars: dict[str, int]
    energy_vars: dict[str, int]
    demand_vars: dict[tuple[str, Product], int]
    supply_vars: dict[tuple[str, Product], int]
    patterns: list[ActivationVertex]
    recourse_vars: list[dict[tuple[str, Product], int]]
    solution: lpe.LpSolution | None = None

    def position_tag(self, zone: str, product: Product):
        return ("position", zone, product.value)


def build_program(book: BidBook, topology: Topology, mode: ClearingMode,
                  ptdf: PtdfMatrix | None = None, cap: int | None = None) -> ClearingProgram:
    if mode == ClearingMode.DECOUPLED:
        raise ValueError("decoupled clearing does not use the co-allocation program")
    ptdf = ptdf or build_ptdf(topology)
    zones = topology.zone_ids
    lp = lpe.LinearProgram()
    bid_vars = {b.id: lp.add_variable(("x", b.id), 0.0, 1.0, b.quantity * b.price) for b in book}

    energy_vars = {z: lp.add_variable(("n", z), -math.inf, math.inf) for z in zones}
    for z in zones:
        coeffs = {bid_vars[b.id]: b.quantity for b in book.in_zone(z, Product.ENERGY)}
        coeffs[energy_vars[z]] = -1.0
        lp.add_constraint(coeffs, lpe.EQ, 0.0, ("position", z, Product.ENERGY.value))
    lp.add_constraint({v: 1.0 for v in energy_vars.values()}, lpe.EQ, 0.0, ("balance", "E"))

    demand_vars: dict[tuple[str, Product], int] = {}
    supply_vars: dict[tuple[str, Product], int] = {}
    for p in RESERVES:
        for z in zones:
            zone_bids = book.in_zone(z, p)
            if not zone_bids:
                continue
            d = demand_vars[(z, p)] = lp.add_variable(("D", z, p.value), 0.0, math.inf)
            s = supply_vars[(z, p)] = lp.add_variable(("S", z, p.value), 0.0, math.inf)
            coeffs = {bid_vars[b.id]: b.quantity for b in zone_bids}
            coeffs[d] = -1.0
            coeffs[s] = 1.0
            lp.add_constraint(coeffs, lpe.EQ, 0.0, ("position", z, p.value))
            # Market-visible demand may net against local supply but never exceed the bids.
            cap_coeffs = {bid_vars[b.id]: -b.quantity for b in zone_bids if b.is_demand}
            cap_coeffs[d] = 1.0
            lp.add_constraint(cap_coeffs, lpe.LE, 0.0, ("netting", z, p.value))
        if mode == ClearingMode.BALANCED:
            # Written over zonal positions (equal to the bid sum by the position rows)
            # so that each zone's price is carried by its own position row.
            coeffs = {}
            for z in zones:
                if (z, p) in demand_vars:
                    coeffs[demand_vars[(z, p)]] = 1.0
                    coeffs[supply_vars[(z, p)]] = -1.0
            if coeffs:
                lp.add_constraint(coeffs, lpe.EQ, 0.0, ("balance", p.value))

    up_zones = [z for z in zones if (z, UP) in demand_vars and any(
        b.is_demand for b in book.in_zone(z, UP))]
    down_zones = [z for z in zones if (z, DOWN) in demand_vars and any(
        b.is_demand for b in book.in_zone(z, DOWN))]
    structural = {z: (1.0 if z in up_zones else 0.0, 1.0 if z in down_zones else 0.0)
                  for z in zones if z in up_zones or z in down_zones}
    patterns = enumerate_vertices(structural, cap)

    up_supply = [z for z in zones if (z, UP) in supply_vars and any(
        b.is_supply for b in book.in_zone(z, UP))]
    down_supply = [z for z in zones if (z, DOWN) in supply_vars and any(
        b.is_supply for b in book.in_zone(z, DOWN))]
    caps = topology.capacities
    ptdf_rows = {z: ptdf.row(z) for z in zones}
    recourse_vars = []
    for v, pattern in enumerate(patterns):
        rv: dict[tuple[str, Product], int] = {}
        # Nothing is activated when no reserve demand is realized: the energy
        # schedule alone must respect the line limits.
        limit = math.inf if pattern.up or pattern.down else 0.0
        for z in up_supply:
            rv[(z, UP)] = lp.add_variable(("a", v, z, UP.value), 0.0, limit)
            lp.add_constraint({rv[(z, UP)]: 1.0, supply_vars[(z, UP)]: -1.0}, lpe.LE, 0.0,
                              ("recourse-cap", v, z, UP.value))
        for z in down_supply:
            rv[(z, DOWN)] = lp.add_variable(("a", v, z, DOWN.value), 0.0, limit)
            lp.add_constraint({rv[(z, DOWN)]: 1.0, supply_vars[(z, DOWN)]: -1.0}, lpe.LE, 0.0,
                              ("recourse-cap", v, z, DOWN.value))
        recourse_vars.append(rv)

        # Zonal reserve injection as {var: coeff}: a+ - a- - r+ + r-.
        inj: dict[str, dict[int, float]] = {z: {} for z in zones}
        for (z, p), j in rv.items():
            inj[z][j] = 1.0 if p == UP else -1.0
        for z in pattern.up:
            inj[z][demand_vars[(z, UP)]] = inj[z].get(demand_vars[(z, UP)], 0.0) - 1.0
        for z in pattern.down:
            inj[z][demand_vars[(z, DOWN)]] = inj[z].get(demand_vars[(z, DOWN)], 0.0) + 1.0
        balance: dict[int, float] = {}
        for z in zones:
            for j, a in inj[z].items():
                balance[j] = balance.get(j, 0.0) + a
        lp.add_constraint(balance, lpe.EQ, 0.0, ("activation", v))

        for k, line in enumerate(topology.lines):
            flow: dict[int, float] = {}
            for z in zones:
                f = ptdf_rows[z][k]
                if f == 0.0:
                    continue
                # Energy injection is -n_z; flow = -sum(inj * ptdf).
                flow[energy_vars[z]] = flow.get(energy_vars[z], 0.0) + f
                for j, a in inj[z].items():
                    flow[j] = flow.get(j, 0.0) - f * a
            lp.add_constraint(flow, lpe.LE, caps[k], ("line+", v, line.id))
            lp.add_constraint(flow, lpe.GE, -caps[k], ("line-", v, line.id))

    return ClearingProgram(lp, mode, bid_vars, energy_vars, demand_vars, supply_vars,
                           patterns, recourse_vars)


def _require_optimal(sol: lpe.LpSolution, what: str) -> lpe.LpSolution:
    if sol.status == "failure":
        raise SolverError(f"{what}: {sol.message}")
    if not sol.optimal:
        raise SolverError(f"{what} is {sol.status}; the all-zero dispatch should be feasible")
    return sol


def clear_coallocated(book: BidBook, topology: Topology, mode: ClearingMode | str,
                      cap: int | None = None) -> ClearingOutcome:
    """Welfare-optimal co-allocation with worst-case deliverability of reserves.

    Ties among welfare-optimal solutions are broken by a second solve that
    keeps welfare at its optimum and maximizes acceptance weighted towards
    earlier-listed bids.
    """
    mode = ClearingMode(mode)
    ptdf = build_ptdf(topology)
    prog = build_program(book, topology, mode, ptdf, cap)
    first = _require_optimal(lpe.solve(prog.lp), "clearing program")
    prog.solution = first

    tie = lpe.optimal_face(prog.lp, first)
    n = len(book)
    tie.objective = [0.0] * tie.n_vars
    for i, b in enumerate(book):
        tie.objective[prog.bid_vars[b.id]] = float(n - i)
    second = lpe.solve(tie)
    sol = second if second.optimal else first

    acceptance = {b.id: min(1.0, max(0.0, lpe.snap(sol.value(prog.bid_vars[b.id])))) for b in book}
    zones = topology.zone_ids
    positions = _positions(book, acceptance, zones)
    base = flows_from_injections(ptdf, {zz: -positions[(zz, Product.ENERGY)] for zz in zones})
    demand = {k: max(0.0, lpe.snap(sol.value(j))) for k, j in prog.demand_vars.items()}
    supply = {k: max(0.0, lpe.snap(sol.value(j))) for k, j in prog.supply_vars.items()}
    plans = []
    for pattern, rv in zip(prog.patterns, prog.recourse_vars):
        vertex = ActivationVertex(
            up={zz: demand[(zz, UP)] for zz in pattern.up},
            down={zz: demand[(zz, DOWN)] for zz in pattern.down},
        )
        plan = RecoursePlan(vertex)
        for (zz, p), j in rv.items():
            (plan.up if p == UP else plan.down)[zz] = max(0.0, sol.value(j))
        plans.append(_leanest_plan(vertex, supply, base, ptdf, topology) or plan)
    return ClearingOutcome(
        mode=mode,
        book=book,
        acceptance=acceptance,
        positions=positions,
        base_flows=base,
        tsw=welfare(book, acceptance),
        recourse=plans,
        reserve_demand=demand,
        reserve_supply=supply,
        program=prog,
        objective=first.objective,
    )


def clear(book: BidBook, topology: Topology, mode: ClearingMode | str,
          cap: int | None = None) -> ClearingOutcome:
    mode = ClearingMode(mode)
    if mode == ClearingMode.DECOUPLED:
        return clear_decoupled(book, topology)
    return clear_coallocated(book, topology, mode, cap)


def verify_committed(outcome: ClearingOutcome, topology: Topology, tol: float = 1e-7) -> list[str]:
    """Re-check every committed recourse plan against balance, supply and line limits."""
    ptdf = build_ptdf(topology)
    zones = topology.zone_ids
    caps = topology.capacities
    problems = []
    for plan in outcome.recourse:
        label = plan.vertex.label
        for zz, a in plan.up.items():
            if a > outcome.reserve_supply.get((zz, UP), 0.0) + tol:
                problems.append(f"vertex {label}: R+ activation {a} in {zz} exceeds supply")
        for zz, a in plan.down.items():
            if a > outcome.reserve_supply.get((zz, DOWN), 0.0) + tol:
                problems.append(f"vertex {label}: R- activation {a} in {zz} exceeds supply")
        inj = plan.injections(zones)
        if abs(sum(inj.values())) > tol:
            problems.append(f"vertex {label}: activation imbalance {sum(inj.values()):.3e}")
            continue
        flows = outcome.base_flows + flows_from_injections(ptdf, inj)
        for k, line in enumerate(topology.lines):
            if abs(flows[k]) > caps[k] + tol:
                problems.append(f"vertex {label}: line {line.id} load {flows[k]:.6g} exceeds {caps[k]:g}")
    return problems


# --------------------------------------------------------------------------- activation analysis


@dataclass
class _Recourse:
    lp: lpe.LinearProgram
    vars: dict[tuple[str, Product], int]
    flow_const: np.ndarray
    flow_coeffs: list[dict[int, float]]


def gross_reserves(book: BidBook, acceptance: Mapping[str, float]):
    """Accepted reserve demand and supply volumes per (zone, product)."""
    demand, supply = {}, {}
    for p in RESERVES:
        for z, v in accepted_volume(book, acceptance, p, "demand").items():
            demand[(z, p)] = v
        for z, v in accepted_volume(book, acceptance, p, "supply").items():
            supply[(z, p)] = v
    return demand, supply


def _vertices_for(demand: Mapping[tuple[str, Product], float], zones: list[str],
                  cap: int | None = None) -> list[ActivationVertex]:
    structural = {}
    for z in zones:
        d_up, d_down = demand.get((z, UP), 0.0), demand.get((z, DOWN), 0.0)
        if d_up > 0 or d_down > 0:
            structural[z] = (d_up, d_down)
    return enumerate_vertices(structural, cap)


def _recourse_lp(vertex: ActivationVertex, supply: Mapping[tuple[str, Product], float],
                 base_flows: np.ndarray, ptdf: PtdfMatrix, zones: list[str]) -> _Recourse:
    lp = lpe.LinearProgram()
    rv = {}
    for (z, p), s in supply.items():
        if s > 0:
            # No realized demand means no activation at all.
            rv[(z, p)] = lp.add_variable(("a", z, p.value), 0.0, 0.0 if vertex.idle else s)
    balance = {j: (1.0 if p == UP else -1.0) for (z, p), j in rv.items()}
    lp.add_constraint(balance, lpe.EQ, vertex.net_demand, "activation")
    const = np.array(base_flows, dtype=float)
    for z in zones:
        const = const + ptdf.row(z) * (vertex.up.get(z, 0.0) - vertex.down.get(z, 0.0))
    coeffs = []
    for k in range(len(const)):
        row = {}
        for (z, p), j in rv.items():
            f = ptdf.row(z)[k]
            if f:
                row[j] = -f if p == UP else f
        coeffs.append(row)
    return _Recourse(lp, rv, const, coeffs)


def _plan_from(rec: _Recourse, vertex: ActivationVertex, x: np.ndarray) -> RecoursePlan:
    plan = RecoursePlan(vertex)
    for (z, p), j in rec.vars.items():
        (plan.up if p == UP else plan.down)[z] = max(0.0, lpe.snap(float(x[j])))
    return plan


def _flows_of(rec: _Recourse, x: np.ndarray) -> np.ndarray:
    return np.array([rec.flow_const[k] + sum(a * x[j] for j, a in row.items())
                     for k, row in enumerate(rec.flow_coeffs)])


def _min_overload(rec: _Recourse, caps: np.ndarray) -> lpe.LpSolution:
    """Recourse minimizing the largest absolute excess over line capacity."""
    lp = rec.lp.copy()
    s = lp.add_variable("overload", 0.0, math.inf, -1.0)
    for k, row in enumerate(rec.flow_coeffs):
        lp.add_constraint({**row, s: -1.0}, lpe.LE, caps[k] - rec.flow_const[k], ("line+", k))
        neg = {j: -a for j, a in row.items()}
        lp.add_constraint({**neg, s: -1.0}, lpe.LE, caps[k] + rec.flow_const[k], ("line-", k))
    return lpe.solve(lp)


def _min_activation(rec: _Recourse, extra: list[tuple[dict[int, float], str, float]] = ()
                    ) -> lpe.LpSolution:
    lp = rec.lp.copy()
    for coeffs, rel, rhs in extra:
        lp.add_constraint(coeffs, rel, rhs)
    lp.objective = [-1.0 if j in rec.vars.values() else 0.0 for j in range(lp.n_vars)]
    return lpe.solve(lp)


def _leanest_plan(vertex: ActivationVertex, supply, base_flows, ptdf: PtdfMatrix,
                  topology: Topology) -> RecoursePlan | None:
    """Within-limits recourse with the least total activation, if one exists."""
    rec = _recourse_lp(vertex, supply, base_flows, ptdf, topology.zone_ids)
    caps = topology.capacities
    extra = []
    for k, row in enumerate(rec.flow_coeffs):
        extra.append((row, lpe.LE, caps[k] - rec.flow_const[k]))
        extra.append((row, lpe.GE, -caps[k] - rec.flow_const[k]))
    sol = _min_activation(rec, extra)
    return _plan_from(rec, vertex, sol.x) if sol.optimal else None


def _steered_plan(rec: _Recourse, caps: np.ndarray) -> np.ndarray | None:
    """Recourse minimizing the maximum relative loading, then total activation."""
    over = _min_overload(rec, caps)
    if not over.optimal:
        return None
    if -over.objective > 1e-7:
        return over.x[: rec.lp.n_vars]
    lp = rec.lp.copy()
    t = lp.add_variable("loading", 0.0, math.inf, -1.0)
    for k, row in enumerate(rec.flow_coeffs):
        if caps[k] > 0:
            lp.add_constraint({**row, t: -caps[k]}, lpe.LE, -rec.flow_const[k])
            lp.add_constraint({j: -a for j, a in row.items()} | {t: -caps[k]}, lpe.LE,
                              rec.flow_const[k])
        else:
            lp.add_constraint(row, lpe.EQ, -rec.flow_const[k])
    first = lpe.solve(lp)
    if not first.optimal:
        return over.x[: rec.lp.n_vars]
    face = lpe.optimal_face(lp, first)
    face.objective = [-1.0 if j in rec.vars.values() else 0.0 for j in range(face.n_vars)]
    second = lpe.solve(face)
    best = second if second.optimal else first
    return best.x[: rec.lp.n_vars]


@dataclass
class WorstCaseEntry:
    line: int
    direction: str  # "+" or "-"
    load: float
    capacity: float
    vertex: ActivationVertex
    plan: RecoursePlan

    @property
    def vertex_label(self) -> str:
        return self.vertex.label


def worst_case_report(outcome: ClearingOutcome, topology: Topology, with_recourse: bool = True,
                      cap: int | None = None) -> list[WorstCaseEntry]:
    """Maximal directional load of every line over all activation vertices.

    Without recourse the activation only covers the realized net demand
    (minimal total activation) and the supplies used are the ones loading the
    line most.  With recourse the TSO steers activations per vertex to
    minimize the highest relative line loading, then total activation.
    """
    ptdf = build_ptdf(topology)
    zones = topology.zone_ids
    caps = topology.capacities
    demand, supply = gross_reserves(outcome.book, outcome.acceptance)
    best: dict[tuple[int, str], WorstCaseEntry] = {}

    def offer(k: int, direction: str, load: float, vertex, plan):
        # Ties (within 1e-9) go to the vertex realizing the most reserve demand.
        key = (k, direction)
        load = lpe.snap(load)
        size = sum(vertex.up.values()) + sum(vertex.down.values())
        if key in best:
            held = best[key]
            held_size = sum(held.vertex.up.values()) + sum(held.vertex.down.values())
            if load < held.load + 1e-9 and not (load > held.load - 1e-9 and size > held_size):
                return
        best[key] = WorstCaseEntry(topology.lines[k].id, direction, load, caps[k], vertex, plan)

    for vertex in _vertices_for(demand, zones, cap):
        rec = _recourse_lp(vertex, supply, outcome.base_flows, ptdf, zones)
        if with_recourse:
            x = _steered_plan(rec, caps)
            if x is None:
                continue
            flows = _flows_of(rec, x)
            plan = _plan_from(rec, vertex, x)
            for k in range(len(caps)):
                offer(k, "+", flows[k], vertex, plan)
                offer(k, "-", -flows[k], vertex, plan)
            continue
        base = _min_activation(rec)
        if not base.optimal:
            continue
        limit = -base.objective
        total = {j: 1.0 for j in rec.vars.values()}
        for k, row in enumerate(rec.flow_coeffs):
            for sign, direction in ((1.0, "+"), (-1.0, "-")):
                lp = rec.lp.copy()
                lp.add_constraint(total, lpe.LE, limit + 1e-9 * max(1.0, limit))
                lp.objective = [0.0] * lp.n_vars
                for j, a in row.items():
                    lp.objective[j] = sign * a
                sol = lpe.solve(lp)
                if not sol.optimal:
                    continue
                load = sign * rec.flow_const[k] + sol.objective
                offer(k, direction, load, vertex, _plan_from(rec, vertex, sol.x))
    return [best[(k, d)] for k in range(len(caps)) for d in ("+", "-") if (k, d) in best]


@dataclass
class Violation:
    vertex: ActivationVertex
    line: int | None
    load: float
    capacity: float
    reason: str = "line limit"


@dataclass
class DeliverabilityResult:
    feasible: bool
    witnesses: list[RecoursePlan]
    violations: list[Violation]


def recourse_feasible(vertex: ActivationVertex, supply, base_flows, ptdf: PtdfMatrix,
                      topology: Topology, tol: float = 1e-7):
    """Best-effort recourse for one realization: (feasible, plan, flows or None)."""
    zones = topology.zone_ids
    rec = _recourse_lp(vertex, supply, base_flows, ptdf, zones)
    sol = _min_overload(rec, topology.capacities)
    if not sol.optimal:
        return False, None, None
    x = sol.x[: rec.lp.n_vars]
    return -sol.objective <= tol, _plan_from(rec, vertex, x), _flows_of(rec, x)


def deliverability_check(acceptance: Mapping[str, float], book: BidBook, topology: Topology,
                         cap: int | None = None, tol: float = 1e-7,
                         stop_early: bool = False) -> DeliverabilityResult:
    """Check that every activation vertex admits a recourse within line limits.

    With ``stop_early`` the scan ends at the first violating vertex, which is
    enough for a yes/no answer.
    """
    zones = topology.zone_ids
    positions = _positions(book, acceptance, zones)
    energy = {z: -positions[(z, Product.ENERGY)] for z in zones}
    ptdf = build_ptdf(topology)
    try:
        base = flows_from_injections(ptdf, energy)
    except BalanceError as exc:
        raise BalanceError(f"accepted energy is not balanced: {exc}") from None
    demand, supply = gross_reserves(book, acceptance)
    caps = topology.capacities
    witnesses, violations = [], []
    for vertex in _vertices_for(demand, zones, cap):
        ok, plan, flows = recourse_feasible(vertex, supply, base, ptdf, topology, tol)
        if plan is None:
            violations.append(Violation(vertex, None, abs(vertex.net_demand), 0.0,
                                        "insufficient reserve supply to balance activation"))
            if stop_early:
                break
            continue
        if ok:
            witnesses.append(plan)
            continue
        for k, line in enumerate(topology.lines):
            if abs(flows[k]) > caps[k] + tol:
                violations.append(Violation(vertex, line.id, float(flows[k]), float(caps[k])))
        if stop_early and violations:
            break
    return DeliverabilityResult(not violations, witnesses, violations)
