import pytest

from coalloc.bids import Bid, BidBook, Product
from coalloc.clearing import clear
from coalloc.errors import VertexCapError
from coalloc.network import Line, Topology
from coalloc.oracle import GridSpec, brute_force_clear, grid_exact, random_instance, sample_realizations

from published import ACCEPTANCE, BID_IDS, TSW


@pytest.mark.parametrize("mode", ["decoupled", "balanced", "overprocure"])
def test_brute_force_reproduces_published_optimum(book, topo, mode):
    res = brute_force_clear(book, topo, mode)
    assert res.tsw == pytest.approx(TSW[mode], abs=1e-9)
    assert res.checked >= 1 and res.candidates >= res.checked


def test_brute_force_finds_published_acceptance_when_unique(book, topo):
    res = brute_force_clear(book, topo, "overprocure")
    assert [res.acceptance[i] for i in BID_IDS] == ACCEPTANCE["overprocure"]


def test_grid_guards(book, topo):
    assert grid_exact(book, 1.0) and not grid_exact(book, 3.0)
    with pytest.raises(ValueError):
        brute_force_clear(book, topo, "balanced", GridSpec(step=3.0))
    with pytest.raises(VertexCapError):
        brute_force_clear(book, topo, "overprocure", GridSpec(cap=1000))
    with pytest.raises(ValueError):
        GridSpec(step=0)


def test_sampled_realizations_are_recoverable(book, topo):
    for mode in ("balanced", "overprocure"):
        report = sample_realizations(clear(book, topo, mode), topo, GridSpec(samples=200, seed=5))
        assert report.samples == 200 and report.count == 0


def test_sampling_detects_undeliverable_dispatch(book, topo):
    out = clear(book, topo, "overprocure")
    out.acceptance = dict(out.acceptance, **{"RP-B-sup-6": 0.0})
    report = sample_realizations(out, topo, GridSpec(samples=100, seed=0))
    assert report.count > 0
    assert all("B" in v.up for v in report.violations)


def test_sampling_is_deterministic(book, topo):
    out = clear(book, topo, "balanced")
    a = sample_realizations(out, topo, GridSpec(samples=30, seed=9))
    b = sample_realizations(out, topo, GridSpec(samples=30, seed=9))
    assert a == b


def test_random_instances_are_reproducible_and_valid():
    b1, t1 = random_instance(4)
    b2, t2 = random_instance(4)
    assert list(b1) == list(b2) and t1.lines == t2.lines
    assert t1.is_connected() and len(t1.zones) == 3
    assert all(float(b.quantity).is_integer() for b in b1)


def test_small_hand_instance_with_congestion():
    # Cheap supply at A, demand at B, one line of capacity 1: only 1 MWh flows.
    topo = Topology.build(["A", "B"], [Line(1, "A", "B", 1.0, 1.0)])
    book = BidBook([Bid("s", Product.ENERGY, "A", -3, 1), Bid("d", Product.ENERGY, "B", 3, 5)])
    for mode in ("balanced", "overprocure"):
        assert brute_force_clear(book, topo, mode).tsw == pytest.approx(4.0)
        assert clear(book, topo, mode).tsw == pytest.approx(4.0)
    assert brute_force_clear(book, topo, "decoupled").tsw == 0
