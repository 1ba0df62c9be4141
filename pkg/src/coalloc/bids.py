"""Bid book: divisible quantity-price bids for energy and reserve products.

Quantities are demand-positive: supply bids carry negative quantities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Literal

from .network import Topology


class Product(str, Enum):
    ENERGY = "E"
    RESERVE_POS = "R+"
    RESERVE_NEG = "R-"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> "Product":
        aliases = {
            "e": cls.ENERGY, "energy": cls.ENERGY,
            "r+": cls.RESERVE_POS, "reservepos": cls.RESERVE_POS, "reserve_pos": cls.RESERVE_POS,
            "r-": cls.RESERVE_NEG, "reserveneg": cls.RESERVE_NEG, "reserve_neg": cls.RESERVE_NEG,
        }
        try:
            return aliases[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown product {text!r}") from None


PRODUCTS = (Product.ENERGY, Product.RESERVE_POS, Product.RESERVE_NEG)
RESERVES = (Product.RESERVE_POS, Product.RESERVE_NEG)

Side = Literal["demand", "supply"]


@dataclass(frozen=True)
class Bid:
    id: str
    product: Product
    zone: str
    quantity: float
    price: float

    @property
    def is_demand(self) -> bool:
        return self.quantity > 0

    @property
    def is_supply(self) -> bool:
        return self.quantity < 0


@dataclass(frozen=True)
class BidBook:
    bids: tuple[Bid, ...] = ()

    def __init__(self, bids: Iterable[Bid] = ()):
        object.__setattr__(self, "bids", tuple(bids))

    def __iter__(self):
        return iter(self.bids)

    def __len__(self) -> int:
        return len(self.bids)

    def of_product(self, product: Product) -> list[Bid]:
        return [b for b in self.bids if b.product == product]

    @property
    def partitions(self) -> dict[Product, list[Bid]]:
        return {p: self.of_product(p) for p in PRODUCTS}

    def in_zone(self, zone: str, product: Product) -> list[Bid]:
        return [b for b in self.bids if b.zone == zone and b.product == product]

    def index(self, bid_id: str) -> int:
        for i, b in enumerate(self.bids):
            if b.id == bid_id:
                return i
        raise KeyError(bid_id)


def validate(book: BidBook, topology: Topology) -> list[str]:
    """Return every violation found in ``book``; an empty list means valid."""
    zones = set(topology.zone_ids)
    problems = []
    seen: set[str] = set()
    for b in book:
        if b.id in seen:
            problems.append(f"bid {b.id}: duplicate id")
        seen.add(b.id)
        if b.zone not in zones:
            problems.append(f"bid {b.id}: unknown zone {b.zone!r}")
        if not isinstance(b.product, Product):
            problems.append(f"bid {b.id}: unknown product {b.product!r}")
        if not math.isfinite(b.quantity):
            problems.append(f"bid {b.id}: non-finite quantity {b.quantity}")
        elif b.quantity == 0:
            problems.append(f"bid {b.id}: zero quantity")
        if not math.isfinite(b.price):
            problems.append(f"bid {b.id}: non-finite price {b.price}")
    return problems


def zonal_capacity(book: BidBook, product: Product, side: Side) -> dict[str, float]:
    """Per-zone sum of ``|quantity|`` over bids of one product and side."""
    if side not in ("demand", "supply"):
        raise ValueError(f"side must be 'demand' or 'supply', got {side!r}")
    out: dict[str, float] = {}
    for b in book.of_product(product):
        if (side == "demand") == b.is_demand:
            out[b.zone] = out.get(b.zone, 0.0) + abs(b.quantity)
    return out


def accepted_volume(book: BidBook, acceptance, product: Product, side: Side) -> dict[str, float]:
    """Per-zone accepted ``|quantity|`` for one product and side."""
    out: dict[str, float] = {}
    for b in book.of_product(product):
        if (side == "demand") == b.is_demand:
            out[b.zone] = out.get(b.zone, 0.0) + acceptance[b.id] * abs(b.quantity)
    return out


def welfare(book: BidBook, acceptance) -> float:
    """Total social welfare: sum of x * q * p over all bids."""
    return float(sum(acceptance[b.id] * b.quantity * b.price for b in book))
