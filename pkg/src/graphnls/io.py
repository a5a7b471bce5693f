"""Graph description files, CSV results and run manifests.

The graph format is strict JSON: unknown keys are errors, because a typo in
a projector matrix would otherwise corrupt a vertex condition silently.

    {
      "p": 3.0,
      "vertices": [
        {"id": "v0", "condition": {"type": "delta", "alpha": -2.0}}
      ],
      "edges": [
        {"id": "e0", "from": "v0", "to": null, "length": "inf"},
        {"id": "e1", "from": "v0", "to": null, "length": "inf"}
      ]
    }

Conditions: {"type": "delta", "alpha": s}, {"type": "kirchhoff"} or
{"type": "general", "P_D": [[..]], "P_N": [[..]], "P_R": [[..]],
"Lambda": [[..]], "edge_order": ["e0", ...]} (edge_order optional).  A
length of "inf" requires "to": null and vice versa.

CSV output is RFC-4180 style: header row, LF line endings, '.' decimal
separator, floats at 17 significant digits so parsing the file reproduces
every value bit-exactly.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    CsvWriteError,
    GraphFileSyntaxError,
    SchemaError,
    SemanticError,
)
from .graphs import (
    DeltaCondition,
    EdgeSpec,
    GeneralCondition,
    GraphSpec,
    VertexSpec,
)

__all__ = ["parse_graph_file", "parse_graph_text", "write_csv", "write_manifest", "format_float"]


def _require_keys(obj: dict, required: set[str], optional: set[str], where: str):
    keys = set(obj)
    unknown = keys - required - optional
    if unknown:
        raise SchemaError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - keys
    if missing:
        raise SchemaError(f"{where}: missing keys {sorted(missing)}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _matrix(value, where: str) -> list[list[float]]:
    if not isinstance(value, list) or not value:
        raise SchemaError(f"{where}: expected a nonempty matrix (list of rows)")
    rows = []
    width = None
    for r, row in enumerate(value):
        if not isinstance(row, list):
            raise SchemaError(f"{where}: row {r} is not a list")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise SchemaError(f"{where}: ragged rows")
        rows.append([_number(x, f"{where}[{r}]") for x in row])
    if width != len(rows):
        raise SchemaError(f"{where}: matrix must be square")
    return rows


def _parse_condition(obj, where: str):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: condition must be an object")
    ctype = obj.get("type")
    if ctype == "delta":
        _require_keys(obj, {"type", "alpha"}, set(), where)
        return DeltaCondition(alpha=_number(obj["alpha"], f"{where}.alpha"))
    if ctype == "kirchhoff":
        _require_keys(obj, {"type"}, set(), where)
        return DeltaCondition(alpha=0.0)
    if ctype == "general":
        _require_keys(
            obj, {"type", "P_D", "P_N", "P_R", "Lambda"}, {"edge_order"}, where
        )
        edge_order = None
        if "edge_order" in obj:
            eo = obj["edge_order"]
            if not isinstance(eo, list) or not all(isinstance(e, str) for e in eo):
                raise SchemaError(f"{where}.edge_order: expected a list of edge ids")
            edge_order = tuple(eo)
        return GeneralCondition(
            p_d=_matrix(obj["P_D"], f"{where}.P_D"),
            p_n=_matrix(obj["P_N"], f"{where}.P_N"),
            p_r=_matrix(obj["P_R"], f"{where}.P_R"),
            coupling=_matrix(obj["Lambda"], f"{where}.Lambda"),
            edge_order=edge_order,
        )
    raise SchemaError(f"{where}: unknown condition type {ctype!r}")


def parse_graph_text(text: str, source: str = "<string>") -> GraphSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFileSyntaxError(
            f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"{source}: top level must be an object")
    _require_keys(doc, {"p", "vertices", "edges"}, set(), source)
    p = _number(doc["p"], f"{source}.p")

    if not isinstance(doc["vertices"], list) or not doc["vertices"]:
        raise SchemaError(f"{source}.vertices: expected a nonempty list")
    vertices = []
    for i, v in enumerate(doc["vertices"]):
        where = f"{source}.vertices[{i}]"
        if not isinstance(v, dict):
            raise SchemaError(f"{where}: expected an object")
        _require_keys(v, {"id", "condition"}, set(), where)
        if not isinstance(v["id"], str):
            raise SchemaError(f"{where}.id: expected a string")
        vertices.append(VertexSpec(v["id"], _parse_condition(v["condition"], where)))

    if not isinstance(doc["edges"], list) or not doc["edges"]:
        raise SchemaError(f"{source}.edges: expected a nonempty list")
    edges = []
    for i, e in enumerate(doc["edges"]):
        where = f"{source}.edges[{i}]"
        if not isinstance(e, dict):
            raise SchemaError(f"{where}: expected an object")
        _require_keys(e, {"id", "from", "to", "length"}, set(), where)
        if not isinstance(e["id"], str) or not isinstance(e["from"], str):
            raise SchemaError(f"{where}: 'id' and 'from' must be strings")
        to = e["to"]
        if to is not None and not isinstance(to, str):
            raise SchemaError(f"{where}.to: expected a vertex id or null")
        raw_len = e["length"]
        if raw_len == "inf":
            length = math.inf
        else:
            length = _number(raw_len, f"{where}.length")
            if not length > 0 or math.isinf(length):
                raise SchemaError(f"{where}.length: {raw_len!r} must be positive and finite, or \"inf\"")
        if (to is None) != math.isinf(length):
            raise SchemaError(
                f'{where}: "to": null and "length": "inf" must be used together'
            )
        edges.append(EdgeSpec(e["id"], e["from"], to, length))

    _check_semantics(vertices, edges, source)
    return GraphSpec(tuple(vertices), tuple(edges), p)


def _check_semantics(vertices, edges, source):
    vids = [v.id for v in vertices]
    if len(set(vids)) != len(vids):
        raise SemanticError(f"{source}: duplicate vertex ids")
    eids = [e.id for e in edges]
    if len(set(eids)) != len(eids):
        raise SemanticError(f"{source}: duplicate edge ids")
    vset = set(vids)
    pairs = set()
    for e in edges:
        if e.tail not in vset:
            raise SemanticError(f"{source}: edge {e.id!r} references unknown vertex {e.tail!r}")
        if e.head is not None:
            if e.head not in vset:
                raise SemanticError(
                    f"{source}: edge {e.id!r} references unknown vertex {e.head!r}"
                )
            if e.head == e.tail:
                raise SemanticError(f"{source}: edge {e.id!r} is a loop")
            pair = frozenset((e.tail, e.head))
            if pair in pairs:
                raise SemanticError(
                    f"{source}: multiple edges between {e.tail!r} and {e.head!r}"
                )
            pairs.add(pair)
    incident = {v: [] for v in vids}
    for e in edges:
        incident[e.tail].append(e.id)
        if e.head is not None:
            incident[e.head].append(e.id)
    for v in vertices:
        cond = v.condition
        if isinstance(cond, GeneralCondition) and cond.edge_order is not None:
            if sorted(cond.edge_order) != sorted(incident[v.id]):
                raise SemanticError(
                    f"{source}: vertex {v.id!r} edge_order does not match its edges"
                )


def parse_graph_file(path) -> GraphSpec:
    """Parse a graph description file; see the module docstring for the schema."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")  # FileNotFoundError propagates
    return parse_graph_text(text, source=str(path))


# ---------------------------------------------------------------------------
# output

def format_float(x: float) -> str:
    """17 significant digits: enough for bit-exact float round trips."""
    return format(float(x), ".17g")


def _format_cell(x) -> str:
    if isinstance(x, bool):
        s = "true" if x else "false"
    elif isinstance(x, (int,)):
        s = str(x)
    elif isinstance(x, float):
        s = format_float(x)
    else:
        s = str(x)
    if any(c in s for c in (",", '"', "\n")):
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_csv(rows: Sequence[Sequence], schema: Sequence[str], path) -> None:
    """Write rows under a header; every row must match the schema arity."""
    lines = [",".join(schema)]
    for i, row in enumerate(rows):
        if len(row) != len(schema):
            raise CsvWriteError(
                f"row {i} has {len(row)} cells, schema has {len(schema)}"
            )
        lines.append(",".join(_format_cell(x) for x in row))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise CsvWriteError(f"cannot write {path}: {exc}") from exc


def write_manifest(path, entries: Mapping[str, object]) -> None:
    """Plain-text echo of every parameter and tolerance that shaped a run."""
    lines = [f"{key} = {entries[key]}" for key in entries]
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise CsvWriteError(f"cannot write {path}: {exc}") from exc
