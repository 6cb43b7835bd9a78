"""On-disk formats for layouts and witnesses.

Layout: a complete JSON description (columns, gate polynomials as
s-expressions, full table contents, fixed column values, copies, instance
map) so a layout written by `compile` can be checked in a separate
process.  The witness plan is deliberately not serialized; witnesses are
regenerated by recompiling, which is deterministic.

Witness: binary.  Header, then advice columns in id-sorted order, each
cell a 32-byte little-endian unsigned integer, column-major; unassigned
cells are encoded as 32 bytes of 0xFF (an impossible canonical value
since the modulus must fit 255 bits).  The instance vector follows in the
same 32-byte encoding.
"""

from __future__ import annotations

import json
import struct

from .circuit import (
    Assignment,
    CircuitLayout,
    Column,
    CopyConstraint,
    LookupArg,
    LookupTable,
    GateDef,
    parse_sexpr,
)
from .field import Field

_MAGIC = b"ZKWT"
_UNASSIGNED = b"\xff" * 32


class FormatError(ValueError):
    pass


# --- layout ------------------------------------------------------------------

def layout_to_json(layout: CircuitLayout) -> dict:
    return {
        "format": "zkgrid-layout",
        "version": 1,
        "modulus": str(layout.field.modulus),
        "n_rows": layout.n_rows,
        "n_rows_logical": layout.n_rows_logical,
        "columns": [{"id": c.id, "kind": c.kind} for c in layout.columns.values()],
        "gates": [
            {"id": g.id, "name": g.name, "selector": g.selector, "poly": g.poly.to_sexpr()}
            for g in layout.gates
        ],
        "tables": {
            t.id: {"arity": t.arity, "rows": sorted(list(r) for r in t.rows)}
            for t in layout.tables.values()
        },
        "lookups": [
            {"id": l.id, "table": l.table, "columns": list(l.columns), "selector": l.selector}
            for l in layout.lookups
        ],
        "copies": [[c.a[0], c.a[1], c.b[0], c.b[1]] for c in layout.copies],
        "fixed": {col: vals for col, vals in layout.fixed.items()},
        "instance_map": [[cell[0], cell[1], idx] for cell, idx in layout.instance_map],
    }


def layout_from_json(doc: dict) -> CircuitLayout:
    try:
        if doc.get("format") != "zkgrid-layout" or doc.get("version") != 1:
            raise FormatError("not a v1 layout document")
        layout = CircuitLayout(
            field=Field(int(doc["modulus"])),
            columns={c["id"]: Column(c["id"], c["kind"]) for c in doc["columns"]},
            n_rows=int(doc["n_rows"]),
            n_rows_logical=int(doc["n_rows_logical"]),
            gates=[
                GateDef(id=g["id"], name=g["name"], selector=g["selector"], poly=parse_sexpr(g["poly"]))
                for g in doc["gates"]
            ],
            tables={
                tid: LookupTable(
                    id=tid, arity=int(t["arity"]), rows=frozenset(tuple(r) for r in t["rows"])
                )
                for tid, t in doc["tables"].items()
            },
            lookups=[
                LookupArg(id=l["id"], table=l["table"], columns=tuple(l["columns"]), selector=l["selector"])
                for l in doc["lookups"]
            ],
            copies=[CopyConstraint(a=(c[0], c[1]), b=(c[2], c[3])) for c in doc["copies"]],
            fixed={col: list(vals) for col, vals in doc["fixed"].items()},
            instance_map=[((m[0], m[1]), m[2]) for m in doc["instance_map"]],
        )
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed layout document: {e}") from e
    layout.validate()
    return layout


def dump_layout(layout: CircuitLayout) -> bytes:
    return json.dumps(layout_to_json(layout), sort_keys=True).encode("ascii")


def load_layout(raw: bytes | str) -> CircuitLayout:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise FormatError(f"layout is not valid JSON: {e}") from e
    return layout_from_json(doc)


# --- witness -----------------------------------------------------------------

def _encode_cell(v: int | None) -> bytes:
    if v is None:
        return _UNASSIGNED
    v = int(v)
    if not 0 <= v < (1 << 255):
        raise FormatError(f"cell value {v} does not fit the 32-byte cell encoding")
    return v.to_bytes(32, "little")


def dump_witness(assignment: Assignment) -> bytes:
    cols = sorted(assignment.advice)
    n_rows = assignment.n_rows()
    for col in cols:
        if len(assignment.advice[col]) != n_rows:
            raise FormatError("ragged advice columns")
    out = [_MAGIC, struct.pack("<IIII", 1, n_rows, len(cols), len(assignment.instance))]
    for col in cols:
        cid = col.encode("utf-8")
        out.append(struct.pack("<H", len(cid)))
        out.append(cid)
    for col in cols:
        for v in assignment.advice[col]:
            out.append(_encode_cell(v))
    for v in assignment.instance:
        out.append(_encode_cell(v))
    return b"".join(out)


def load_witness(raw: bytes) -> Assignment:
    if len(raw) < 20 or raw[:4] != _MAGIC:
        raise FormatError("not a witness file")
    version, n_rows, n_cols, n_inst = struct.unpack("<IIII", raw[4:20])
    if version != 1:
        raise FormatError(f"unsupported witness version {version}")
    pos = 20
    cols = []
    for _ in range(n_cols):
        if pos + 2 > len(raw):
            raise FormatError("truncated witness header")
        (ln,) = struct.unpack("<H", raw[pos : pos + 2])
        pos += 2
        cols.append(raw[pos : pos + ln].decode("utf-8"))
        pos += ln
    need = pos + 32 * (n_cols * n_rows + n_inst)
    if len(raw) != need:
        raise FormatError(f"witness length {len(raw)} != expected {need}")
    advice = {}
    for col in cols:
        vals = []
        for _ in range(n_rows):
            chunk = raw[pos : pos + 32]
            pos += 32
            vals.append(None if chunk == _UNASSIGNED else int.from_bytes(chunk, "little"))
        advice[col] = vals
    instance = []
    for _ in range(n_inst):
        chunk = raw[pos : pos + 32]
        pos += 32
        if chunk == _UNASSIGNED:
            raise FormatError("instance values cannot be unassigned")
        instance.append(int.from_bytes(chunk, "little"))
    return Assignment(advice=advice, instance=instance)
