"""Command-line front end: ``coalloc ptdf|clear|settle|verify``.

Exit codes: 0 ok, 1 a check failed, 2 invalid input (including missing
prices), 3 an enumeration cap was exceeded, 4 the LP solver failed.
Findings about externally published figures (price sheets, surplus tables)
are printed as warnings with their own codes and never change the exit code.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence, TextIO

from . import __version__
from .bids import PRODUCTS, welfare
from .clearing import (
    ClearingMode,
    ClearingOutcome,
    clear,
    deliverability_check,
    verify_committed,
    worst_case_report,
)
from .errors import (
    BalanceError,
    InputError,
    MissingPriceError,
    SolverError,
    StructuralError,
    VertexCapError,
)
from .formats import (
    FORMAT_VERSION,
    RESULTS_FORMAT,
    Instance,
    check_results_match,
    fmt,
    fmt_exact,
    load_instance,
    read_results,
    write_table,
)
from .network import build_ptdf
from .oracle import GridSpec, brute_force_clear, grid_exact
from .pricing import PriceSheet, price_intervals, traded_zone_products, verify_consistency
from .settlement import SettlementReport, compare_surpluses, settle

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_CAPACITY, EXIT_SOLVER = 0, 1, 2, 3, 4

# Warning codes for findings about published figures, reported but not failing.
W_PRICE_CONSISTENCY = "W101"
W_SURPLUS_DISCREPANCY = "W102"
W_UNSETTLED_PRICE = "W103"

TSW_TOL = 1e-6


def _warn(err: TextIO, code: str, message: str) -> None:
    print(f"warning {code}: {message}", file=err)


def _table(out: TextIO, header: list[str], rows: list[list]) -> None:
    print(",".join(header), file=out)
    for row in rows:
        print(",".join(str(v) for v in row), file=out)


# --------------------------------------------------------------------------- ptdf


def cmd_ptdf(args, out: TextIO, err: TextIO) -> int:
    inst = load_instance(args.instance)
    ptdf = build_ptdf(inst.topology)
    ids = [ln.id for ln in inst.topology.lines]
    rows = [[z] + [fmt_exact(v) for v in ptdf.row(z)] for z in inst.topology.zone_ids]
    _table(out, ["zone"] + [str(i) for i in ids], rows)
    return EXIT_OK


# --------------------------------------------------------------------------- clear


def write_outcome(directory: Path, inst: Instance, outcome: ClearingOutcome, prices: PriceSheet,
                  report: list, report_fixed: list) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    summary = [
        ["format", RESULTS_FORMAT], ["version", FORMAT_VERSION], ["instance", inst.name],
        ["mode", outcome.mode.value], ["tsw", fmt(outcome.tsw)], ["price_source", prices.source],
    ]
    for p in PRODUCTS:
        summary.append([f"tsw_{p.value}", fmt(welfare(outcome.book.of_product(p), outcome.acceptance))])
    write_table(directory / "summary.csv", ["key", "value"], summary)
    write_table(directory / "acceptances.csv", ["bid", "product", "zone", "quantity", "price", "acceptance"],
                [[b.id, b.product.value, b.zone, fmt(b.quantity), fmt(b.price), fmt(outcome.acceptance[b.id])]
                 for b in outcome.book])
    write_table(directory / "prices.csv", ["zone", "product", "lo", "hi", "settled"],
                [[z, p.value, fmt(e.lo), fmt(e.hi), fmt(e.settled)]
                 for (z, p), e in prices.entries.items()])
    write_table(directory / "flows.csv", ["line", "flow", "capacity"],
                [[ln.id, fmt(f), fmt(ln.capacity)] for ln, f in zip(inst.topology.lines, outcome.base_flows)])
    rows = []
    for recourse, entries in (("yes", report), ("no", report_fixed)):
        rows += [[e.line, e.direction, recourse, fmt(e.load), fmt(e.capacity), e.vertex_label]
                 for e in entries]
    write_table(directory / "worst_case.csv", ["line", "direction", "recourse", "load", "capacity", "vertex"], rows)
    plans = []
    for plan in outcome.recourse:
        for z in inst.topology.zone_ids:
            up, down = plan.up.get(z, 0.0), plan.down.get(z, 0.0)
            if up or down:
                plans.append([plan.vertex.label, z, fmt(up), fmt(down)])
    write_table(directory / "recourse.csv", ["vertex", "zone", "up", "down"], plans)


def cmd_clear(args, out: TextIO, err: TextIO) -> int:
    inst = load_instance(args.instance)
    mode = ClearingMode(args.mode)
    outcome = clear(inst.book, inst.topology, mode)
    prices = price_intervals(outcome)
    report = worst_case_report(outcome, inst.topology, with_recourse=True)
    fixed = worst_case_report(outcome, inst.topology, with_recourse=False)
    problems = verify_committed(outcome, inst.topology)
    if args.out:
        write_outcome(Path(args.out), inst, outcome, prices, report, fixed)
    _table(out, ["key", "value"], [["mode", mode.value], ["tsw", fmt(outcome.tsw)]])
    print(file=out)
    _table(out, ["bid", "acceptance"], [[b.id, fmt(outcome.acceptance[b.id])] for b in inst.book])
    print(file=out)
    _table(out, ["zone", "product", "lo", "hi", "settled"],
           [[z, p.value, fmt(e.lo), fmt(e.hi), fmt(e.settled)] for (z, p), e in prices.entries.items()
            if inst.book.in_zone(z, p)])
    print(file=out)
    _table(out, ["line", "direction", "recourse", "load", "capacity", "vertex"],
           [[e.line, e.direction, r, fmt(e.load), fmt(e.capacity), e.vertex_label]
            for r, entries in (("yes", report), ("no", fixed)) for e in entries])
    for p in problems:
        print(f"error: committed recourse plan invalid: {p}", file=err)
    return EXIT_CHECK if problems else EXIT_OK


# --------------------------------------------------------------------------- settle


def _load_pair(args) -> tuple[Instance, object]:
    inst = load_instance(args.instance)
    results = read_results(args.results)
    check_results_match(results, inst)
    return inst, results


def _price_sheet(kind: str, inst: Instance, results) -> PriceSheet:
    if kind == "external":
        sheet = inst.overrides(results.mode)
        if sheet is None:
            raise InputError(f"instance has no price overrides for mode {results.mode.value}")
        return sheet
    return results.prices


def print_settlement(rep: SettlementReport, out: TextIO) -> None:
    zones = list(dict.fromkeys(z for z, _ in rep.cash_flow))
    _table(out, ["zone", "product", "price", "cash_flow"],
           [[z, p.value, fmt(rep.prices[(z, p)]), fmt(rep.cash_flow[(z, p)])]
            for z in zones for p in PRODUCTS if (z, p) in rep.cash_flow])
    print(file=out)
    _table(out, ["product", "rent"], [[p.value, fmt(rep.rent[p])] for p in PRODUCTS])
    print(file=out)
    _table(out, ["bid", "surplus"], [[b, fmt(s)] for b, s in rep.surplus.items()])
    print(file=out)
    _table(out, ["key", "value"], [["tsw", fmt(rep.tsw)], ["surplus", fmt(rep.total_surplus)],
                                   ["rent", fmt(rep.total_rent)], ["price_source", rep.price_source]])


def cmd_settle(args, out: TextIO, err: TextIO) -> int:
    inst, results = _load_pair(args)
    prices = _price_sheet(args.prices, inst, results)
    rep = settle(inst.book, results.acceptance, prices)
    print_settlement(rep, out)
    if args.out:
        d = Path(args.out)
        d.mkdir(parents=True, exist_ok=True)
        write_table(d / "cash_flows.csv", ["zone", "product", "price", "cash_flow"],
                    [[z, p.value, fmt(rep.prices[(z, p)]), fmt(v)] for (z, p), v in rep.cash_flow.items()])
        write_table(d / "rents.csv", ["product", "rent"], [[p.value, fmt(rep.rent[p])] for p in PRODUCTS])
        write_table(d / "surplus.csv", ["bid", "surplus"], [[b, fmt(s)] for b, s in rep.surplus.items()])
    reported = inst.reported_surplus.get(results.mode)
    if reported and args.prices == "external":
        for d in compare_surpluses(rep, reported):
            _warn(err, W_SURPLUS_DISCREPANCY,
                  f"bid {d.bid}: published surplus {fmt(d.reported)}, recomputed {fmt(d.computed)}")
    return EXIT_OK


# --------------------------------------------------------------------------- verify


def cmd_verify(args, out: TextIO, err: TextIO) -> int:
    inst, results = _load_pair(args)
    failed = False

    def verdict(name: str, ok: bool, detail: str = "") -> None:
        nonlocal failed
        failed |= not ok
        print(f"{name}: {'pass' if ok else 'FAIL'}{' - ' + detail if detail else ''}", file=out)

    tsw = welfare(inst.book, results.acceptance)
    verdict("tsw", abs(tsw - results.tsw) <= TSW_TOL, f"recomputed {fmt(tsw)}, recorded {fmt(results.tsw)}")

    # Prices: published overrides are audited (warnings); the engine's own sheet must be consistent.
    external = args.prices == "external" or (args.prices is None and inst.overrides(results.mode) is not None)
    prices = _price_sheet("external" if external else "dual", inst, results)
    if not external:
        # One-sided dual intervals settle no price; those zone-products are skipped.
        for z, p in traded_zone_products(inst.book, results.acceptance):
            if prices.settled(z, p) is None:
                _warn(err, W_UNSETTLED_PRICE, f"traded ({z}, {p.value}) has no finite price interval; "
                      "rules not checked")
        prices = PriceSheet({k: e for k, e in prices.entries.items() if e.settled is not None}, prices.source)
    violations = verify_consistency(inst.book, results.acceptance, prices, require_all=external)
    for v in violations:
        message = f"bid {v.bid}: {v.rule} (price {fmt(v.price)})"
        if external:
            _warn(err, W_PRICE_CONSISTENCY, message)
        else:
            print(f"  {message}", file=out)
    verdict("price-consistency", external or not violations,
            f"{len(violations)} finding(s) against {prices.source} prices")

    if results.mode != ClearingMode.DECOUPLED:
        deliver = deliverability_check(results.acceptance, inst.book, inst.topology)
        for v in deliver.violations:
            line = "-" if v.line is None else v.line
            print(f"  vertex {v.vertex.label}: line {line} load {fmt(v.load)} > {fmt(v.capacity)} ({v.reason})",
                  file=out)
        verdict("deliverability", deliver.feasible, f"{len(deliver.violations)} violating vertex(es)")
    else:
        nets = {}
        for b in inst.book:
            key = (b.zone, b.product)
            nets[key] = nets.get(key, 0.0) + results.acceptance[b.id] * b.quantity
        bad = [k for k, v in nets.items() if abs(v) > 1e-9]
        verdict("zonal-balance", not bad, ", ".join(f"({z}, {p.value})" for z, p in bad))

    grid = GridSpec(step=args.grid_step)
    if not grid_exact(inst.book, grid.step):
        print(f"oracle: skipped - quantities not multiples of {fmt(grid.step)}", file=out)
    else:
        try:
            best = brute_force_clear(inst.book, inst.topology, results.mode, grid)
        except VertexCapError as exc:
            print(f"oracle: skipped - {exc}", file=out)
        else:
            verdict("oracle", best.tsw <= results.tsw + TSW_TOL and tsw >= best.tsw - TSW_TOL,
                    f"grid optimum {fmt(best.tsw)} over {best.candidates} candidates")

    reported = inst.reported_surplus.get(results.mode)
    if reported and external:
        rep = settle(inst.book, results.acceptance, prices)
        for d in compare_surpluses(rep, reported):
            _warn(err, W_SURPLUS_DISCREPANCY,
                  f"bid {d.bid}: published surplus {fmt(d.reported)}, recomputed {fmt(d.computed)}")
    return EXIT_CHECK if failed else EXIT_OK


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coalloc", description="Zonal energy/reserve co-allocation clearing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    instance_help = "instance YAML file, or the name of a bundled instance (e.g. paper-4zone)"

    p = sub.add_parser("ptdf", help="print the PTDF matrix")
    p.add_argument("instance", help=instance_help)
    p.set_defaults(func=cmd_ptdf)

    p = sub.add_parser("clear", help="clear the market and write result tables")
    p.add_argument("instance", help=instance_help)
    p.add_argument("--mode", choices=[m.value for m in ClearingMode], default=ClearingMode.BALANCED.value)
    p.add_argument("--out", help="results directory to create or overwrite")
    p.set_defaults(func=cmd_clear)

    p = sub.add_parser("settle", help="compute surpluses, cash flows and congestion rents")
    p.add_argument("instance", help=instance_help)
    p.add_argument("results", help="results directory written by 'clear'")
    p.add_argument("--prices", choices=["external", "dual"], default="dual")
    p.add_argument("--out", help="directory for settlement tables")
    p.set_defaults(func=cmd_settle)

    p = sub.add_parser("verify", help="audit results: prices, deliverability, brute-force optimum")
    p.add_argument("instance", help=instance_help)
    p.add_argument("results", help="results directory written by 'clear'")
    p.add_argument("--prices", choices=["external", "dual"], default=None,
                   help="price sheet to audit (default: instance overrides if present)")
    p.add_argument("--grid-step", type=float, default=1.0, help="quantity grid of the brute-force oracle")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out, err)
    except MissingPriceError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INPUT
    except (InputError, StructuralError, BalanceError, ValueError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_INPUT
    except VertexCapError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_CAPACITY
    except SolverError as exc:
        print(f"error: {exc}", file=err)
        return EXIT_SOLVER


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
