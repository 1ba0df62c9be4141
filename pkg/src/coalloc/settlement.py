"""Bid surpluses, zonal cash flows and congestion rents under a price sheet."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .bids import PRODUCTS, BidBook, Product, welfare
from .errors import MissingPriceError
from .pricing import PriceSheet, traded_zone_products


@dataclass
class SettlementReport:
    surplus: dict[str, float]
    cash_flow: dict[tuple[str, Product], float]  # positive = the zone's participants pay
    rent: dict[Product, float]
    tsw: float
    price_source: str
    prices: dict[tuple[str, Product], float] = field(default_factory=dict)

    @property
    def total_surplus(self) -> float:
        return sum(self.surplus.values())

    @property
    def total_rent(self) -> float:
        return sum(self.rent.values())


def settle(book: BidBook, acceptance: Mapping[str, float], prices: PriceSheet) -> SettlementReport:
    traded = traded_zone_products(book, acceptance)
    missing = [k for k in traded if prices.settled(*k) is None]
    if missing:
        raise MissingPriceError(missing)
    used = {k: prices.settled(*k) for k in traded}
    surplus = {}
    cash: dict[tuple[str, Product], float] = {k: 0.0 for k in traded}
    for b in book:
        key = (b.zone, b.product)
        if key not in used:
            surplus[b.id] = 0.0
            continue
        x, mcp = acceptance[b.id], used[key]
        surplus[b.id] = x * b.quantity * (b.price - mcp)
        cash[key] += x * b.quantity * mcp
    rent = {p: sum(v for (z, q), v in cash.items() if q == p) for p in PRODUCTS}
    return SettlementReport(surplus, cash, rent, welfare(book, acceptance), prices.source, used)


@dataclass
class SurplusDiscrepancy:
    bid: str
    reported: float
    computed: float


def compare_surpluses(report: SettlementReport, reported: Mapping[str, float], tol: float = 1e-9
                      ) -> list[SurplusDiscrepancy]:
    """Rows where an externally reported bid surplus differs from the settled one."""
    return [
        SurplusDiscrepancy(bid, float(value), report.surplus.get(bid, 0.0))
        for bid, value in reported.items()
        if abs(float(value) - report.surplus.get(bid, 0.0)) > tol
    ]
