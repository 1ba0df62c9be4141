"""Instance files (YAML, schema-checked) and result directories (CSV tables)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .bids import PRODUCTS, Bid, BidBook, Product, validate
from .clearing import ClearingMode
from .errors import InputError, StructuralError
from .network import Line, Topology
from .pricing import PriceEntry, PriceSheet

INSTANCE_FORMAT = "coalloc-instance"
RESULTS_FORMAT = "coalloc-results"
FORMAT_VERSION = 1

_PRODUCT = {"type": "string", "enum": ["E", "R+", "R-"]}
_MODES = ["decoupled", "balanced", "overprocure"]
_NUMBER = {"type": "number"}

INSTANCE_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Energy-reserve co-allocation instance",
    "type": "object",
    "additionalProperties": False,
    "required": ["format", "version", "zones", "slack", "lines", "bids"],
    "properties": {
        "format": {"const": INSTANCE_FORMAT},
        "version": {"const": FORMAT_VERSION},
        "name": {"type": "string"},
        "zones": {"type": "array", "minItems": 1, "items": {"type": "string", "minLength": 1}},
        "slack": {"type": "string"},
        "lines": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "from", "to", "capacity"],
                "properties": {
                    "id": {"type": "integer"},
                    "from": {"type": "string"},
                    "to": {"type": "string"},
                    "susceptance": {"type": "number", "exclusiveMinimum": 0},
                    "capacity": {"type": "number", "minimum": 0},
                },
            },
        },
        "bids": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "product", "zone", "quantity", "price"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "product": _PRODUCT,
                    "zone": {"type": "string"},
                    "quantity": _NUMBER,
                    "price": _NUMBER,
                },
            },
        },
        "price_overrides": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                mode: {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["zone", "product", "price"],
                        "properties": {"zone": {"type": "string"}, "product": _PRODUCT, "price": _NUMBER},
                    },
                }
                for mode in _MODES
            },
        },
        "reported_surplus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                mode: {"type": "object", "additionalProperties": _NUMBER} for mode in _MODES
            },
        },
    },
}


@dataclass
class Instance:
    topology: Topology
    book: BidBook
    name: str = ""
    price_overrides: dict[ClearingMode, dict[tuple[str, Product], float]] = field(default_factory=dict)
    reported_surplus: dict[ClearingMode, dict[str, float]] = field(default_factory=dict)
    path: Path | None = None

    def overrides(self, mode: ClearingMode) -> PriceSheet | None:
        prices = self.price_overrides.get(ClearingMode(mode))
        return PriceSheet.external(prices) if prices else None


def bundled(name: str) -> Path:
    """Path of an instance shipped with the package, e.g. ``paper-4zone``."""
    path = resources.files("coalloc") / "instances" / f"{name}.yaml"
    return Path(str(path))


def _locate(node: yaml.Node, path) -> str:
    """Line/column of the YAML node at a JSON-schema error path."""
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = [v for k, v in node.value if k.value == key]
            if not nxt:
                break
            node = nxt[0]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    mark = node.start_mark
    return f"line {mark.line + 1}, column {mark.column + 1}"


def load_instance(path: str | Path) -> Instance:
    path = Path(path)
    if not path.exists() and not path.suffix and bundled(str(path)).exists():
        path = bundled(str(path))
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read instance ({exc.strerror})") from None
    return parse_instance(text, source=str(path), path=path)


def parse_instance(text: str, source: str = "<instance>", path: Path | None = None) -> Instance:
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise InputError(f"{source}: {where}{getattr(exc, 'problem', exc)}") from None
    errors = sorted(jsonschema.Draft202012Validator(INSTANCE_SCHEMA).iter_errors(data),
                    key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        where = _locate(node, err.absolute_path) if node is not None else "document"
        field_path = "/".join(map(str, err.absolute_path)) or "<root>"
        raise InputError(f"{source}: {where}: {field_path}: {err.message}")

    zones = data["zones"]
    try:
        lines = [
            Line(int(ln["id"]), ln["from"], ln["to"], float(ln.get("susceptance", 1.0)), float(ln["capacity"]))
            for ln in data["lines"]
        ]
        topology = Topology.build(zones, lines, data["slack"])
    except StructuralError as exc:
        raise InputError(f"{source}: {exc}") from None
    if not topology.is_connected():
        raise InputError(f"{source}: network graph is disconnected")

    book = BidBook(
        Bid(str(b["id"]), Product.parse(b["product"]), b["zone"], float(b["quantity"]), float(b["price"]))
        for b in data["bids"]
    )
    problems = validate(book, topology)
    if problems:
        raise InputError(f"{source}: invalid bids: " + "; ".join(problems))

    overrides = {}
    for mode, rows in (data.get("price_overrides") or {}).items():
        table = {}
        for row in rows:
            if row["zone"] not in zones:
                raise InputError(f"{source}: price override for unknown zone {row['zone']!r}")
            table[(row["zone"], Product.parse(row["product"]))] = float(row["price"])
        overrides[ClearingMode(mode)] = table
    ids = {b.id for b in book}
    reported = {}
    for mode, rows in (data.get("reported_surplus") or {}).items():
        unknown = sorted(set(rows) - ids)
        if unknown:
            raise InputError(f"{source}: reported surplus for unknown bids {unknown}")
        reported[ClearingMode(mode)] = {k: float(v) for k, v in rows.items()}
    return Instance(topology, book, data.get("name", ""), overrides, reported, path)


# --------------------------------------------------------------------------- numbers


def fmt(value: float | None) -> str:
    """Shortest text that round-trips the float exactly."""
    if value is None:
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if value == 0:
        return "0"
    if float(value).is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def fmt_exact(value: float, digits: int = 12) -> str:
    """Decimal text rounded to ``digits`` places without trailing zeros."""
    text = f"{round(value, digits) + 0.0:.{digits}f}".rstrip("0").rstrip(".")
    return "0" if text in ("", "-0") else text


def parse_number(text: str) -> float | None:
    text = text.strip()
    return None if text == "" else float(text)


# --------------------------------------------------------------------------- results


@dataclass
class Results:
    mode: ClearingMode
    tsw: float
    acceptance: dict[str, float]
    prices: PriceSheet
    summary: dict[str, str] = field(default_factory=dict)


def write_table(path: Path, header: list[str], rows: list[list[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def read_table(path: Path) -> list[dict[str, str]]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"{path}: cannot read results table ({exc.strerror})") from None


def read_results(directory: str | Path) -> Results:
    directory = Path(directory)
    summary = {row["key"]: row["value"] for row in read_table(directory / "summary.csv")}
    if summary.get("format") != RESULTS_FORMAT or summary.get("version") != str(FORMAT_VERSION):
        raise InputError(f"{directory}: not a {RESULTS_FORMAT} v{FORMAT_VERSION} directory")
    try:
        mode = ClearingMode(summary["mode"])
        acceptance = {row["bid"]: float(row["acceptance"]) for row in read_table(directory / "acceptances.csv")}
        entries = {}
        for row in read_table(directory / "prices.csv"):
            lo, hi = parse_number(row["lo"]), parse_number(row["hi"])
            entries[(row["zone"], Product.parse(row["product"]))] = PriceEntry(
                -math.inf if lo is None else lo, math.inf if hi is None else hi, parse_number(row["settled"]))
        tsw = float(summary["tsw"])
    except (KeyError, ValueError) as exc:
        raise InputError(f"{directory}: malformed results ({exc})") from None
    return Results(mode, tsw, acceptance, PriceSheet(entries, summary.get("price_source", "dual")), summary)


def check_results_match(results: Results, instance: Instance) -> None:
    ids = [b.id for b in instance.book]
    if sorted(ids) != sorted(results.acceptance):
        raise InputError("results bid ids do not match the instance bid book")
    for bid, x in results.acceptance.items():
        if not -1e-9 <= x <= 1 + 1e-9:
            raise InputError(f"acceptance of bid {bid} is {x}, outside [0, 1]")


def product_label(p: Product) -> str:
    return p.value


__all__ = [
    "INSTANCE_SCHEMA", "Instance", "Results", "bundled", "load_instance", "parse_instance",
    "read_results", "write_table", "read_table", "fmt", "fmt_exact", "PRODUCTS",
]
