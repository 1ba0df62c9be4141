"""Brute-force verification of clearing optima and deliverability on small instances."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bids import PRODUCTS, Bid, BidBook, Product
from .clearing import (
    ActivationVertex,
    ClearingMode,
    ClearingOutcome,
    _positions,
    deliverability_check,
    gross_reserves,
    recourse_feasible,
)
from .errors import VertexCapError
from .network import Line, Topology, build_ptdf, flows_from_injections

DEFAULT_ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class GridSpec:
    step: float = 1.0
    samples: int = 100
    seed: int = 0
    cap: int = DEFAULT_ENUMERATION_CAP

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")


@dataclass
class OracleResult:
    tsw: float
    acceptance: dict[str, float]
    candidates: int
    checked: int


def grid_exact(book: BidBook, step: float) -> bool:
    return all(abs(abs(b.quantity) / step - round(abs(b.quantity) / step)) < 1e-9 for b in book)


def _product_candidates(bids: list[Bid], zones: list[str], mode: ClearingMode, product: Product,
                        step: float):
    """Feasible accepted-quantity vectors for one product, with their welfare."""
    levels = [np.arange(round(abs(b.quantity) / step) + 1) * step for b in bids]
    if not bids:
        return np.zeros((1, 0)), np.zeros(1)
    grid = np.array(list(itertools.product(*levels)), dtype=float)
    signed = grid * np.sign([b.quantity for b in bids])
    if mode == ClearingMode.DECOUPLED:
        keep = np.ones(len(grid), dtype=bool)
        for z in zones:
            cols = [i for i, b in enumerate(bids) if b.zone == z]
            if cols:
                keep &= np.abs(signed[:, cols].sum(axis=1)) < 1e-9
    elif product == Product.ENERGY or mode == ClearingMode.BALANCED:
        keep = np.abs(signed.sum(axis=1)) < 1e-9
    else:
        # Covering the all-positive (all-negative) vertex needs supply >= demand.
        keep = signed.sum(axis=1) <= 1e-9
    signed = signed[keep]
    value = signed @ np.array([b.price for b in bids])
    fractions = grid[keep] / np.array([abs(b.quantity) for b in bids])
    return fractions, value


def brute_force_clear(book: BidBook, topology: Topology, mode: ClearingMode | str,
                      grid: GridSpec = GridSpec()) -> OracleResult:
    """Best welfare over all acceptances on the quantity grid.

    Candidates are visited in order of decreasing welfare; for co-allocated
    modes the first one passing the vertex deliverability check is optimal.
    """
    mode = ClearingMode(mode)
    if not grid_exact(book, grid.step):
        raise ValueError(f"bid quantities are not multiples of the grid step {grid.step}")
    total = math.prod(round(abs(b.quantity) / grid.step) + 1 for b in book)
    if total > grid.cap:
        raise VertexCapError(f"{total} grid candidates exceed the oracle cap of {grid.cap}")
    zones = topology.zone_ids
    per_product = []
    for p in PRODUCTS:
        bids = book.of_product(p)
        per_product.append((bids, *_product_candidates(bids, zones, mode, p, grid.step)))

    sizes = [len(v) for _, _, v in per_product]
    value = np.zeros(1)
    for _, _, v in per_product:
        value = (value[:, None] + v[None, :]).ravel()
    order = np.argsort(-value, kind="stable")
    checked = 0
    for flat in order:
        idx = np.unravel_index(flat, sizes)
        acceptance = {}
        for (bids, fractions, _), i in zip(per_product, idx):
            acceptance.update({b.id: float(f) for b, f in zip(bids, fractions[i])})
        checked += 1
        if mode != ClearingMode.DECOUPLED:
            if not deliverability_check(acceptance, book, topology, stop_early=True).feasible:
                continue
        return OracleResult(float(value[flat]), acceptance, int(value.size), checked)
    raise AssertionError("the all-zero acceptance is always feasible")


@dataclass
class SampleReport:
    samples: int
    violations: list[ActivationVertex] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.violations)


def sample_realizations(outcome: ClearingOutcome, topology: Topology, grid: GridSpec = GridSpec(),
                        tol: float = 1e-7) -> SampleReport:
    """Check fresh recourse for random interior reserve-demand realizations.

    Each zone holding accepted reserve demand independently realizes nothing,
    a uniform fraction of its positive demand, or of its negative demand.
    """
    book = outcome.book
    zones = topology.zone_ids
    ptdf = build_ptdf(topology)
    positions = _positions(book, outcome.acceptance, zones)
    base = flows_from_injections(ptdf, {z: -positions[(z, Product.ENERGY)] for z in zones})
    demand, supply = gross_reserves(book, outcome.acceptance)
    options = []
    for z in zones:
        opts = []
        if demand.get((z, Product.RESERVE_POS), 0.0) > 0:
            opts.append(("+", demand[(z, Product.RESERVE_POS)]))
        if demand.get((z, Product.RESERVE_NEG), 0.0) > 0:
            opts.append(("-", demand[(z, Product.RESERVE_NEG)]))
        if opts:
            options.append((z, [("0", 0.0)] + opts))
    rng = np.random.default_rng(grid.seed)
    report = SampleReport(grid.samples)
    for _ in range(grid.samples):
        vertex = ActivationVertex()
        for z, opts in options:
            sign, size = opts[int(rng.integers(len(opts)))]
            r = float(rng.uniform(0.0, size))
            if sign == "+":
                vertex.up[z] = r
            elif sign == "-":
                vertex.down[z] = r
        ok, _, _ = recourse_feasible(vertex, supply, base, ptdf, topology, tol)
        if not ok:
            report.violations.append(vertex)
    return report


def random_instance(seed: int, n_zones: int = 3, max_bids: int = 2) -> tuple[BidBook, Topology]:
    """Small random instance on a ring of zones with integer quantities."""
    rng = np.random.default_rng(seed)
    names = [chr(ord("A") + i) for i in range(n_zones)]
    lines = []
    for i in range(n_zones):
        j = (i + 1) % n_zones
        if n_zones == 2 and i == 1:
            break
        lines.append(Line(i + 1, names[i], names[j], float(rng.choice([1.0, 2.0])),
                          float(rng.integers(0, 5))))
    topology = Topology.build(names, lines, names[0])
    bids = []
    price_range = {Product.ENERGY: (10, 31), Product.RESERVE_POS: (1, 11), Product.RESERVE_NEG: (1, 11)}
    for z in names:
        for p in PRODUCTS:
            for _ in range(int(rng.integers(0, max_bids + 1))):
                q = int(rng.integers(1, 4)) * (1 if rng.random() < 0.5 else -1)
                price = int(rng.integers(*price_range[p]))
                bids.append(Bid(f"{p.value}{z}{len(bids)}", p, z, float(q), float(price)))
    return BidBook(bids), topology
