import numpy as np
import pytest

from coalloc.bids import Bid, BidBook, Product, RESERVES
from coalloc.clearing import (
    ActivationVertex,
    ClearingMode,
    build_program,
    clear,
    clear_coallocated,
    clear_decoupled,
    deliverability_check,
    enumerate_vertices,
    verify_committed,
    worst_case_report,
)
from coalloc.errors import VertexCapError
from coalloc.network import Topology, build_ptdf
from coalloc.oracle import GridSpec, brute_force_clear, random_instance

from oracles import scipy_solve
from published import ACCEPTANCE, BID_IDS, LINE4_CAPACITY, TSW


def _acc(outcome):
    return [outcome.acceptance[i] for i in BID_IDS]


@pytest.mark.parametrize("mode", ["decoupled", "balanced", "overprocure"])
def test_example_acceptances_and_welfare(book, topo, mode):
    out = clear(book, topo, mode)
    assert out.tsw == pytest.approx(TSW[mode], abs=1e-6)
    assert _acc(out) == pytest.approx(ACCEPTANCE[mode], abs=1e-9)


@pytest.mark.parametrize("mode", ["balanced", "overprocure"])
def test_program_optimum_agrees_with_highs(book, topo, mode):
    prog = build_program(book, topo, ClearingMode(mode), build_ptdf(topo))
    status, value, _ = scipy_solve(prog.lp)
    assert status == "optimal"
    assert clear(book, topo, mode).objective == pytest.approx(value, abs=1e-9)


def test_decoupled_zones_balance_each_product(book):
    out = clear_decoupled(book)
    assert all(abs(v) < 1e-12 for v in out.positions.values())
    assert np.all(out.base_flows == 0)


def test_decoupled_skips_zero_margin_trades():
    # Demand and supply at the same price add no welfare; the merit order leaves them out.
    book = BidBook([Bid("d", Product.ENERGY, "A", 1.0, 5.0), Bid("s", Product.ENERGY, "A", -1.0, 5.0)])
    out = clear_decoupled(book, Topology.build(["A"], []))
    assert out.acceptance == {"d": 0.0, "s": 0.0}


def test_decoupled_partial_acceptance_of_marginal_bid():
    book = BidBook([Bid("d", Product.ENERGY, "A", 3.0, 10.0), Bid("s1", Product.ENERGY, "A", -2.0, 1.0),
                    Bid("s2", Product.ENERGY, "A", -4.0, 4.0)])
    out = clear_decoupled(book)
    assert out.acceptance == {"d": 1.0, "s1": 1.0, "s2": 0.25}
    assert out.tsw == pytest.approx(3 * 10 - 2 - 4)


def test_balanced_reserves_net_to_zero(book, topo):
    out = clear(book, topo, "balanced")
    for p in RESERVES:
        assert sum(out.positions[(z, p)] for z in topo.zone_ids) == pytest.approx(0, abs=1e-9)


def test_overprocurement_supplies_at_least_demand(book, topo):
    out = clear(book, topo, "overprocure")
    for p in RESERVES:
        supply = sum(-b.quantity * out.acceptance[b.id] for b in book.of_product(p) if b.is_supply)
        demand = sum(b.quantity * out.acceptance[b.id] for b in book.of_product(p) if b.is_demand)
        assert supply >= demand - 1e-9
    assert sum(-b.quantity * out.acceptance[b.id] for b in book.of_product(Product.RESERVE_POS)
               if b.is_supply) == pytest.approx(6.0)


@pytest.mark.parametrize("mode", ["balanced", "overprocure"])
def test_committed_plans_are_valid(book, topo, mode):
    out = clear(book, topo, mode)
    assert verify_committed(out, topo) == []
    labels = {plan.vertex.label for plan in out.recourse}
    assert {"B+", "B-"} <= labels


def _line4(entries):
    return next(e for e in entries if e.line == 4 and e.direction == "+")


def test_worst_case_line4_loads(book, topo):
    bal = clear(book, topo, "balanced")
    e = _line4(worst_case_report(bal, topo))
    assert e.load == pytest.approx(2.0, abs=1e-7) and e.vertex_label == "B+"

    op = clear(book, topo, "overprocure")
    fixed = _line4(worst_case_report(op, topo, with_recourse=False))
    steered = _line4(worst_case_report(op, topo, with_recourse=True))
    assert fixed.load == pytest.approx(3.0, abs=1e-7)
    assert steered.load == pytest.approx(2.0, abs=1e-7)
    assert steered.plan.up.get("B", 0.0) == pytest.approx(2.0, abs=1e-7)
    assert steered.plan.down.get("C", 0.0) == pytest.approx(2.0, abs=1e-7)
    assert steered.capacity == LINE4_CAPACITY


def test_tampered_overprocure_dispatch_fails_on_line4(book, topo):
    x = dict(zip(BID_IDS, ACCEPTANCE["overprocure"]))
    x["RP-B-sup-6"] = 0.0
    res = deliverability_check(x, book, topo)
    assert not res.feasible
    worst = max(res.violations, key=lambda v: v.load)
    assert (worst.line, worst.vertex.label) == (4, "B+")
    assert worst.load == pytest.approx(3.0, abs=1e-7)


@pytest.mark.parametrize("mode", ["balanced", "overprocure"])
def test_example_dispatch_is_deliverable(book, topo, mode):
    x = dict(zip(BID_IDS, ACCEPTANCE[mode]))
    res = deliverability_check(x, book, topo)
    assert res.feasible and res.violations == []


def test_zero_capacity_matches_decoupled(book, topo):
    closed = topo.with_capacities([0.0] * len(topo.lines))
    dec = clear_decoupled(book, closed).tsw
    for mode in ("balanced", "overprocure"):
        assert clear(book, closed, mode).tsw == pytest.approx(dec, abs=1e-6)


def test_ample_capacity_matches_brute_force(book, topo):
    wide = topo.with_capacities([100.0] * len(topo.lines))
    for mode in ("balanced", "overprocure"):
        lp = clear(book, wide, mode).tsw
        assert lp == pytest.approx(brute_force_clear(book, wide, mode).tsw, abs=1e-6)
        assert lp >= TSW[mode]


def test_vertex_enumeration_counts_and_order():
    verts = enumerate_vertices({"A": (1.0, 2.0), "B": (3.0, 0.0)})
    assert len(verts) == 3 * 2
    assert verts[0].label == "none"
    assert [v.net_demand for v in verts] == [0.0, 3.0, 1.0, 4.0, -2.0, 1.0]


def test_vertex_cap_raises_and_env_override(monkeypatch, book, topo):
    demands = {f"Z{i}": (1.0, 1.0) for i in range(5)}
    with pytest.raises(VertexCapError):
        enumerate_vertices(demands, cap=100)
    monkeypatch.setenv("COALLOC_VERTEX_CAP", "1")
    with pytest.raises(VertexCapError):
        clear_coallocated(book, topo, "balanced")


def test_activation_vertex_label_and_net_demand():
    v = ActivationVertex({"B": 4.0}, {"C": 1.0})
    assert v.label == "B+,C-"
    assert v.net_demand == 3.0
    assert ActivationVertex().label == "none"


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4, 5, 18, 19])
def test_random_instances_match_brute_force(seed):
    # The grid holds every integer-volume dispatch, so the LP can only do better
    # than the grid optimum, and exactly as well when its own volumes are integral.
    book, topo = random_instance(seed)
    for mode in ("decoupled", "balanced", "overprocure"):
        lp = clear(book, topo, mode)
        grid = brute_force_clear(book, topo, mode, GridSpec()).tsw
        on_grid = all(abs(x * abs(b.quantity) - round(x * abs(b.quantity))) < 1e-9
                      for b in book for x in [lp.acceptance[b.id]])
        assert lp.tsw >= grid - 1e-6
        if on_grid:
            assert lp.tsw == pytest.approx(grid, abs=1e-6)
        if mode != "decoupled":
            assert verify_committed(lp, topo) == []
            assert deliverability_check(lp.acceptance, book, topo).feasible


@pytest.mark.parametrize("seed", [18, 19])
def test_no_reserve_activation_without_realized_demand(seed):
    # These instances can only trade across closed lines by permanently
    # counter-activating reserves; with nothing realized nothing is activated.
    book, topo = random_instance(seed)
    closed = topo.with_capacities([0.0] * len(topo.lines))
    dec = clear_decoupled(book, closed).tsw
    for mode in ("balanced", "overprocure"):
        out = clear(book, closed, mode)
        assert out.tsw == pytest.approx(dec, abs=1e-9)
        assert brute_force_clear(book, closed, mode).tsw == pytest.approx(dec, abs=1e-9)
        idle = [p for p in out.recourse if p.vertex.idle]
        assert all(p.total_activation == 0 for p in idle)


def test_idle_vertex_requires_base_case_within_limits(book, topo):
    # 8 MWh A->B loads line 4 with 2; a limit of 1.5 makes the schedule undeliverable
    # even though counter-activation could relieve it.
    x = dict(zip(BID_IDS, ACCEPTANCE["overprocure"]))
    tight = topo.with_capacities([10, 10, 10, 1.5])
    res = deliverability_check(x, book, tight)
    assert not res.feasible
    assert any(v.vertex.idle and v.line == 4 for v in res.violations)


def test_program_matches_highs_on_random_instances():
    for seed in range(10):
        book, topo = random_instance(seed)
        for mode in (ClearingMode.BALANCED, ClearingMode.OVERPROCURE):
            prog = build_program(book, topo, mode)
            status, value, _ = scipy_solve(prog.lp)
            assert status == "optimal"
            assert clear(book, topo, mode).objective == pytest.approx(value, abs=1e-7)
