"""Exhaustive constraint-satisfaction checking.

Every gate is evaluated on every row, every enabled lookup row is tested
for table membership, every copy constraint and instance binding is
compared directly.  This is exact verification of the arithmetization;
there is no succinctness and no randomization.

The row loops run in a compiled Cython kernel when available, with a
pure-Python fallback selected at import time (set ZKGRID_PURE_PYTHON=1 to
force the fallback).  Results are identical either way.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .circuit import Assignment, CircuitLayout, GateDef, compile_expr

if os.environ.get("ZKGRID_PURE_PYTHON"):
    from . import _kernel_py as _kernel
else:
    try:
        from . import _kernel  # type: ignore[attr-defined]
    except ImportError:
        from . import _kernel_py as _kernel

KERNEL = _kernel.IMPL

DEFAULT_VIOLATION_CAP = 1000

_KIND_ORDER = {"gate": 0, "lookup": 1, "copy": 2, "instance": 3}


class CheckError(ValueError):
    """Malformed inputs: dimension mismatch or unassigned referenced cell."""


@dataclass(frozen=True, slots=True)
class Violation:
    kind: str       # gate | lookup | copy | instance
    id: str         # gate/table id, or constraint index for copy/instance
    row: int
    detail: str

    def sort_key(self):
        return (_KIND_ORDER[self.kind], self.id, self.row)

    def to_json(self) -> dict:
        return {"kind": self.kind, "id": self.id, "row": self.row, "detail": self.detail}


def _prep_gate(layout: CircuitLayout, gate: GateDef, assignment: Assignment):
    slots: dict[str, int] = {}
    cols = []
    for col_id in sorted(gate.poly.columns()):
        slots[col_id] = len(cols)
        cols.append(layout.resolve_column(col_id, assignment))
    ops, args, consts, max_stack = compile_expr(gate.poly, slots)
    p = layout.field.modulus
    consts = [c % p for c in consts]
    sel = layout.fixed[gate.selector]
    return ops, args, consts, cols, sel, max_stack


def _check_range(
    layout: CircuitLayout,
    assignment: Assignment,
    start: int,
    stop: int,
    cap: int,
    table_sets: dict,
) -> list[Violation]:
    """All violations whose natural row lies in [start, stop), capped.

    Constraints are scanned in canonical (kind, id, row) order so that
    capped truncation keeps the canonically-first violations; that makes
    the merged result independent of the shard count.
    """
    out: list[Violation] = []
    p = layout.field.modulus

    for gate in sorted(layout.gates, key=lambda g: g.id):
        if len(out) >= cap:
            return out
        ops, args, consts, cols, sel, max_stack = _prep_gate(layout, gate, assignment)
        try:
            hits = _kernel.gate_scan(
                ops, args, consts, cols, sel, p, start, stop, cap - len(out), max_stack
            )
        except ValueError as e:
            raise CheckError(f"gate {gate.id}: {e}") from e
        for row, value in hits:
            out.append(Violation("gate", gate.id, row, f"{gate.name} evaluates to {value}"))

    for lk in sorted(layout.lookups, key=lambda l: l.id):
        if len(out) >= cap:
            return out
        cols = [layout.resolve_column(c, assignment) for c in lk.columns]
        sel = layout.fixed[lk.selector]
        table = table_sets[lk.table]
        try:
            rows = _kernel.lookup_scan(cols, sel, table, start, stop, cap - len(out))
        except ValueError as e:
            raise CheckError(f"lookup {lk.id}: {e}") from e
        for row in rows:
            out.append(Violation("lookup", lk.id, row, f"tuple not in table {lk.table}"))

    for idx, cp in enumerate(layout.copies):
        if len(out) >= cap:
            return out
        if not start <= cp.a[1] < stop:
            continue
        va = layout.resolve_column(cp.a[0], assignment)[cp.a[1]]
        vb = layout.resolve_column(cp.b[0], assignment)[cp.b[1]]
        if va is None or vb is None:
            raise CheckError(f"copy {idx}: unassigned cell")
        if va % p != vb % p:
            out.append(
                Violation("copy", f"{idx:09d}", cp.a[1], f"{cp.a} = {va} but {cp.b} = {vb}")
            )

    for idx, (cell_ref, inst_idx) in enumerate(layout.instance_map):
        if len(out) >= cap:
            return out
        if not start <= cell_ref[1] < stop:
            continue
        v = layout.resolve_column(cell_ref[0], assignment)[cell_ref[1]]
        if v is None:
            raise CheckError(f"instance binding {idx}: unassigned cell {cell_ref}")
        declared = assignment.instance[inst_idx]
        if v % p != declared % p:
            out.append(
                Violation(
                    "instance", f"{idx:09d}", cell_ref[1],
                    f"cell {cell_ref} = {v} but instance[{inst_idx}] = {declared}",
                )
            )
    return out


def _validate_dimensions(layout: CircuitLayout, assignment: Assignment) -> None:
    advice_cols = {c.id for c in layout.columns.values() if c.kind == "advice"}
    if set(assignment.advice) != advice_cols:
        missing = advice_cols - set(assignment.advice)
        extra = set(assignment.advice) - advice_cols
        raise CheckError(f"advice columns mismatch (missing {sorted(missing)}, extra {sorted(extra)})")
    for col_id, vals in assignment.advice.items():
        if len(vals) != layout.n_rows:
            raise CheckError(f"column {col_id} has {len(vals)} rows, grid has {layout.n_rows}")
    for _, inst_idx in layout.instance_map:
        if inst_idx >= len(assignment.instance):
            raise CheckError(f"instance vector too short for binding index {inst_idx}")


def check(
    layout: CircuitLayout,
    assignment: Assignment,
    cap: int = DEFAULT_VIOLATION_CAP,
) -> list[Violation]:
    """All violations, deterministically ordered by (kind, id, row).

    Empty list means the assignment satisfies the layout.
    """
    return check_parallel(layout, assignment, shards=1, cap=cap)


def check_parallel(
    layout: CircuitLayout,
    assignment: Assignment,
    shards: int,
    cap: int = DEFAULT_VIOLATION_CAP,
) -> list[Violation]:
    """Same result set as check() for any shard count.

    Rows are partitioned into contiguous ranges checked independently and
    merged; each shard over-collects up to the cap so the globally first
    `cap` violations in canonical order are always reported.
    """
    if shards < 1:
        raise CheckError("shards must be >= 1")
    _validate_dimensions(layout, assignment)
    table_sets = {tid: set(t.rows) for tid, t in layout.tables.items()}
    n = layout.n_rows
    if shards == 1 or n == 0:
        results = _check_range(layout, assignment, 0, n, cap, table_sets)
    else:
        shards = min(shards, max(n, 1))
        step = -(-n // shards)
        ranges = [(i, min(i + step, n)) for i in range(0, n, step)]
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            parts = list(
                pool.map(
                    lambda r: _check_range(layout, assignment, r[0], r[1], cap, table_sets),
                    ranges,
                )
            )
        results = [v for part in parts for v in part]
    results.sort(key=Violation.sort_key)
    return results[:cap]
