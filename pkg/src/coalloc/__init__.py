"""Zonal clearing of energy and reserve products with transmission-aware deliverability."""

__version__ = "0.1.0"

from .bids import Bid, BidBook, Product
from .clearing import ClearingMode, ClearingOutcome, clear, deliverability_check, worst_case_report
from .formats import Instance, load_instance
from .network import Line, Topology, build_ptdf, flows_from_injections
from .pricing import PriceSheet, price_intervals, verify_consistency
from .settlement import settle

__all__ = [
    "Bid", "BidBook", "Product", "ClearingMode", "ClearingOutcome", "clear", "deliverability_check",
    "worst_case_report", "Instance", "load_instance", "Line", "Topology", "build_ptdf", "flows_from_injections", "PriceSheet",
    "price_intervals", "verify_consistency", "settle",
]
