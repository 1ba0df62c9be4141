"""Zonal market-clearing price intervals and bid/price consistency checks."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import lp as lpe
from .bids import PRODUCTS, Bid, BidBook, Product
from .clearing import ClearingMode, ClearingOutcome
from .errors import MissingPriceError

ACCEPT_TOL = 1e-9
PRICE_TOL = 1e-9


@dataclass
class PriceEntry:
    lo: float = -math.inf
    hi: float = math.inf
    settled: float | None = None

    def __post_init__(self):
        if self.settled is None and math.isfinite(self.lo) and math.isfinite(self.hi):
            self.settled = 0.5 * (self.lo + self.hi)

    @property
    def consistent(self) -> bool:
        return self.lo <= self.hi + PRICE_TOL


@dataclass
class PriceSheet:
    entries: dict[tuple[str, Product], PriceEntry] = field(default_factory=dict)
    source: str = "dual"  # dual | merit-order | external

    def __getitem__(self, key: tuple[str, Product]) -> PriceEntry:
        return self.entries.get(key, PriceEntry())

    def settled(self, zone: str, product: Product) -> float | None:
        return self[(zone, product)].settled

    @classmethod
    def external(cls, prices: Mapping[tuple[str, Product], float]) -> "PriceSheet":
        return cls({k: PriceEntry(v, v, v) for k, v in prices.items()}, source="external")


def rule_interval(bids: Iterable[Bid], acceptance: Mapping[str, float]) -> PriceEntry:
    """Prices at which every bid's acceptance obeys the uniform-price rules.

    Fully accepted demand and rejected supply cap the price from above at the
    bid price; rejected demand and fully accepted supply bound it from below;
    a partially accepted bid pins it.
    """
    lo, hi = -math.inf, math.inf
    for b in bids:
        x = acceptance[b.id]
        accepted, rejected = x > ACCEPT_TOL, x < 1.0 - ACCEPT_TOL
        if b.is_demand:
            if accepted:
                hi = min(hi, b.price)
            if rejected:
                lo = max(lo, b.price)
        else:
            if accepted:
                lo = max(lo, b.price)
            if rejected:
                hi = min(hi, b.price)
    return PriceEntry(lo, hi)


def decoupled_price_intervals(book: BidBook, outcome: ClearingOutcome) -> PriceSheet:
    zones = list(dict.fromkeys(z for z, _ in outcome.positions))
    sheet = PriceSheet(source="merit-order")
    for z in zones:
        for p in PRODUCTS:
            bids = book.in_zone(z, p)
            sheet.entries[(z, p)] = rule_interval(bids, outcome.acceptance) if bids else PriceEntry()
    return sheet


def dual_price_intervals(outcome: ClearingOutcome) -> PriceSheet:
    """Price intervals from the dual ranges of the position-defining rows.

    A binding netting row lets demand bids see a lower price than supply in
    the same zone; its dual is held at zero so that the range describes one
    uniform zonal price.  When no optimal dual allows that, the unrestricted
    range is reported instead.
    """
    prog = outcome.program
    if prog is None or prog.solution is None:
        raise ValueError("dual prices need a solved co-allocation program")
    sheet = PriceSheet(source="dual")
    zones = list(dict.fromkeys(z for z, _ in outcome.positions))
    for z in zones:
        for p in PRODUCTS:
            if not outcome.book.in_zone(z, p):
                sheet.entries[(z, p)] = PriceEntry()
                continue
            tag = prog.position_tag(z, p)
            try:
                prog.lp.row_of(tag)
            except KeyError:
                raise ValueError(f"clearing program has no row tagged {tag!r}") from None
            netting = ("netting", z, p.value)
            try:
                lo, hi = lpe.dual_range(prog.lp, tag, prog.solution, zero_duals=[netting])
            except (KeyError, ValueError):
                lo, hi = lpe.dual_range(prog.lp, tag, prog.solution)
            sheet.entries[(z, p)] = PriceEntry(lpe.snap(lo), lpe.snap(hi))
    return sheet


def price_intervals(outcome: ClearingOutcome) -> PriceSheet:
    if outcome.mode == ClearingMode.DECOUPLED:
        return decoupled_price_intervals(outcome.book, outcome)
    return dual_price_intervals(outcome)


def traded_zone_products(book: BidBook, acceptance: Mapping[str, float]) -> list[tuple[str, Product]]:
    seen: dict[tuple[str, Product], None] = {}
    for b in book:
        if acceptance[b.id] * abs(b.quantity) > ACCEPT_TOL:
            seen.setdefault((b.zone, b.product), None)
    return list(seen)


@dataclass
class PriceViolation:
    bid: str
    rule: str
    price: float


def verify_consistency(book: BidBook, acceptance: Mapping[str, float], prices: PriceSheet,
                       require_all: bool = True) -> list[PriceViolation]:
    """Bids whose acceptance contradicts their zone's settled price.

    With ``require_all`` a traded zone-product lacking a settled price raises
    MissingPriceError; otherwise its bids are skipped.
    """
    missing = [k for k in traded_zone_products(book, acceptance) if prices.settled(*k) is None]
    if missing and require_all:
        raise MissingPriceError(missing)
    out = []
    for b in book:
        mcp = prices.settled(b.zone, b.product)
        if mcp is None:
            continue
        x = acceptance[b.id]
        full, none = x >= 1.0 - ACCEPT_TOL, x <= ACCEPT_TOL
        above, below = b.price > mcp + PRICE_TOL, b.price < mcp - PRICE_TOL
        if b.is_demand:
            if above and not full:
                out.append(PriceViolation(b.id, "demand priced above MCP must be fully accepted", mcp))
            if below and not none:
                out.append(PriceViolation(b.id, "demand priced below MCP must be fully rejected", mcp))
        else:
            if below and not full:
                out.append(PriceViolation(b.id, "supply priced below MCP must be fully accepted", mcp))
            if above and not none:
                out.append(PriceViolation(b.id, "supply priced above MCP must be fully rejected", mcp))
    return out
