"""Plonkish-style constraint grid: columns, row-local polynomial gates
gated by selectors, lookup arguments, and copy (equality) constraints.

Gate polynomials are expression trees over same-row cells and constants.
A gate is satisfied on a row when selector * polynomial == 0 there.  The
trees compile to small postfix programs the checker kernels execute.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .field import Field, FieldElement

ADVICE = "advice"
FIXED = "fixed"
INSTANCE = "instance"

# Postfix opcodes shared with the checker kernels.
OP_CONST = 0
OP_CELL = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_POW5 = 5


class CircuitError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Column:
    id: str
    kind: str

    def __post_init__(self):
        if self.kind not in (ADVICE, FIXED, INSTANCE):
            raise CircuitError(f"unknown column kind {self.kind!r}")


# --- expression trees -------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Expr:
    """One node: op in {const, cell, add, sub, mul, pow5}."""

    op: str
    value: int = 0            # const payload
    col: str = ""             # cell payload
    args: tuple = ()          # operands

    def degree(self) -> int:
        if self.op == "const":
            return 0
        if self.op == "cell":
            return 1
        if self.op in ("add", "sub"):
            return max(a.degree() for a in self.args)
        if self.op == "mul":
            return sum(a.degree() for a in self.args)
        if self.op == "pow5":
            return 5 * self.args[0].degree()
        raise CircuitError(f"bad expr op {self.op!r}")

    def columns(self) -> set[str]:
        if self.op == "cell":
            return {self.col}
        out: set[str] = set()
        for a in self.args:
            out |= a.columns()
        return out

    def to_sexpr(self) -> str:
        if self.op == "const":
            return str(self.value)
        if self.op == "cell":
            return f"(col {self.col})"
        inner = " ".join(a.to_sexpr() for a in self.args)
        name = {"add": "+", "sub": "-", "mul": "*", "pow5": "pow5"}[self.op]
        return f"({name} {inner})"


def const(v: int) -> Expr:
    return Expr("const", value=v)


def cell(col_id: str) -> Expr:
    return Expr("cell", col=col_id)


def add(*args: Expr) -> Expr:
    if len(args) == 1:
        return args[0]
    return Expr("add", args=tuple(args))


def sub(a: Expr, b: Expr) -> Expr:
    return Expr("sub", args=(a, b))


def mul(*args: Expr) -> Expr:
    if len(args) == 1:
        return args[0]
    return Expr("mul", args=tuple(args))


def pow5(a: Expr) -> Expr:
    return Expr("pow5", args=(a,))


def parse_sexpr(text: str) -> Expr:
    """Inverse of Expr.to_sexpr, used by the layout file loader."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse() -> Expr:
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok != "(":
            return const(int(tok))
        head = tokens[pos]
        pos += 1
        if head == "col":
            col_id = tokens[pos]
            pos += 1
            if tokens[pos] != ")":
                raise CircuitError("malformed s-expression: unterminated col")
            pos += 1
            return cell(col_id)
        args = []
        while tokens[pos] != ")":
            args.append(parse())
        pos += 1
        op = {"+": "add", "-": "sub", "*": "mul", "pow5": "pow5"}.get(head)
        if op is None:
            raise CircuitError(f"unknown s-expression head {head!r}")
        return Expr(op, args=tuple(args))

    out = parse()
    if pos != len(tokens):
        raise CircuitError("trailing tokens in s-expression")
    return out


def compile_expr(expr: Expr, col_slots: dict[str, int]) -> tuple[list[int], list[int], list[int], int]:
    """Flatten to postfix (ops, args, consts, max_stack) for the kernels.

    n-ary add/mul are emitted as left folds so the stack stays shallow.
    """
    ops: list[int] = []
    args: list[int] = []
    consts: list[int] = []

    def emit(e: Expr) -> None:
        if e.op == "const":
            ops.append(OP_CONST)
            args.append(len(consts))
            consts.append(e.value)
        elif e.op == "cell":
            ops.append(OP_CELL)
            args.append(col_slots[e.col])
        elif e.op in ("add", "sub", "mul"):
            opcode = {"add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL}[e.op]
            emit(e.args[0])
            for a in e.args[1:]:
                emit(a)
                ops.append(opcode)
                args.append(0)
        elif e.op == "pow5":
            emit(e.args[0])
            ops.append(OP_POW5)
            args.append(0)
        else:
            raise CircuitError(f"bad expr op {e.op!r}")

    emit(expr)
    depth = max_depth = 0
    for op in ops:
        if op in (OP_CONST, OP_CELL):
            depth += 1
            max_depth = max(max_depth, depth)
        elif op in (OP_ADD, OP_SUB, OP_MUL):
            depth -= 1
    return ops, args, consts, max_depth


# --- constraints ------------------------------------------------------------

CellRef = tuple[str, int]  # (column id, row)


@dataclass(frozen=True, slots=True)
class GateDef:
    id: str
    name: str
    selector: str  # fixed column id
    poly: Expr


@dataclass(frozen=True, slots=True)
class LookupTable:
    id: str
    arity: int
    rows: frozenset  # of tuples of canonical field ints

    def __post_init__(self):
        if self.arity < 1:
            raise CircuitError("lookup table arity must be >= 1")
        for r in self.rows:
            if len(r) != self.arity:
                raise CircuitError(f"table {self.id}: tuple arity mismatch")


@dataclass(frozen=True, slots=True)
class LookupArg:
    id: str
    table: str
    columns: tuple[str, ...]
    selector: str


@dataclass(frozen=True, slots=True)
class CopyConstraint:
    a: CellRef
    b: CellRef


@dataclass
class Assignment:
    """Witness: advice column values plus the public instance vector.

    Unassigned cells are None; touching one from an enabled constraint is
    an error, not a violation.
    """

    advice: dict[str, list]
    instance: list

    def n_rows(self) -> int:
        return len(next(iter(self.advice.values()))) if self.advice else 0


@dataclass
class CircuitLayout:
    field: Field
    columns: dict[str, Column]
    n_rows: int  # padded grid height (power of two)
    n_rows_logical: int
    gates: list[GateDef]
    tables: dict[str, LookupTable]
    lookups: list[LookupArg]
    copies: list[CopyConstraint]
    fixed: dict[str, list[int]]  # fully populated, length n_rows
    instance_map: list[tuple[CellRef, int]]
    # Opaque witness-construction plan attached by the compiler; not part
    # of the serialized layout or of layout equality.
    plan: object = field(default=None, compare=False, repr=False)

    def validate(self) -> None:
        for col_id, col in self.columns.items():
            if col_id != col.id:
                raise CircuitError("column key/id mismatch")
        for col_id, vals in self.fixed.items():
            if self.columns[col_id].kind != FIXED:
                raise CircuitError(f"fixed values for non-fixed column {col_id}")
            if len(vals) != self.n_rows:
                raise CircuitError(f"fixed column {col_id} not fully populated")
        for col_id, col in self.columns.items():
            if col.kind == FIXED and col_id not in self.fixed:
                raise CircuitError(f"fixed column {col_id} has no values")
        for g in self.gates:
            if self.columns.get(g.selector, None) is None or self.columns[g.selector].kind != FIXED:
                raise CircuitError(f"gate {g.id}: selector must be a fixed column")
            for c in g.poly.columns():
                if c not in self.columns:
                    raise CircuitError(f"gate {g.id}: unknown column {c}")
        for lk in self.lookups:
            if lk.table not in self.tables:
                raise CircuitError(f"lookup {lk.id}: unknown table {lk.table}")
            if len(lk.columns) != self.tables[lk.table].arity:
                raise CircuitError(f"lookup {lk.id}: arity mismatch")
            for c in lk.columns + (lk.selector,):
                if c not in self.columns:
                    raise CircuitError(f"lookup {lk.id}: unknown column {c}")
        for cp in self.copies:
            for col_id, row in (cp.a, cp.b):
                if col_id not in self.columns:
                    raise CircuitError(f"copy references unknown column {col_id}")
                if not 0 <= row < self.n_rows:
                    raise CircuitError(f"copy references row {row} outside grid")

    def max_gate_degree(self) -> int:
        # Selector contributes one to every gate's total degree.
        return max((1 + g.poly.degree() for g in self.gates), default=0)

    def resolve_column(self, col_id: str, assignment: Assignment) -> list:
        col = self.columns[col_id]
        if col.kind == FIXED:
            return self.fixed[col_id]
        if col.kind == ADVICE:
            return assignment.advice[col_id]
        vals = list(assignment.instance) + [0] * (self.n_rows - len(assignment.instance))
        return vals

    def eval_gate(self, gate: GateDef, assignment: Assignment, row: int) -> FieldElement:
        """selector(row) * poly(row); skips poly evaluation when disabled."""
        if not 0 <= row < self.n_rows:
            raise CircuitError(f"row {row} outside grid of {self.n_rows}")
        p = self.field.modulus
        sel = self.fixed[gate.selector][row]
        if sel % p == 0:
            return self.field.zero()
        v = _eval_expr(gate.poly, self, assignment, row)
        return self.field.element(sel * v)

    def debug_dump(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "n_rows_logical": self.n_rows_logical,
            "columns": [
                {"id": c.id, "kind": c.kind} for c in self.columns.values()
            ],
            "gates": [
                {"id": g.id, "name": g.name, "selector": g.selector, "poly": g.poly.to_sexpr()}
                for g in self.gates
            ],
            "tables": {t.id: {"arity": t.arity, "size": len(t.rows)} for t in self.tables.values()},
            "lookups": [
                {"id": l.id, "table": l.table, "columns": list(l.columns), "selector": l.selector}
                for l in self.lookups
            ],
            "n_copies": len(self.copies),
            "max_gate_degree": self.max_gate_degree(),
        }


def _eval_expr(e: Expr, layout: CircuitLayout, assignment: Assignment, row: int) -> int:
    p = layout.field.modulus
    if e.op == "const":
        return e.value % p
    if e.op == "cell":
        v = layout.resolve_column(e.col, assignment)[row]
        if v is None:
            raise CircuitError(f"unassigned cell ({e.col}, {row}) referenced")
        return v % p
    if e.op == "add":
        out = 0
        for a in e.args:
            out = (out + _eval_expr(a, layout, assignment, row)) % p
        return out
    if e.op == "sub":
        out = _eval_expr(e.args[0], layout, assignment, row)
        for a in e.args[1:]:
            out = (out - _eval_expr(a, layout, assignment, row)) % p
        return out
    if e.op == "mul":
        out = 1
        for a in e.args:
            out = out * _eval_expr(a, layout, assignment, row) % p
        return out
    if e.op == "pow5":
        v = _eval_expr(e.args[0], layout, assignment, row)
        return pow(v, 5, p)
    raise CircuitError(f"bad expr op {e.op!r}")


# --- built-in gate families -------------------------------------------------

@dataclass(frozen=True)
class GateColumns:
    """Column ids one gate group operates on."""

    xs: tuple[str, ...]       # advice: dot inputs / addends / div operands
    ws: tuple[str, ...]       # dot weights (advice or fixed, mode dependent)
    out: str                  # advice: gate output
    act: str                  # advice: post-lookup activation
    z: str                    # fixed: dot zero point
    div_a: str                # fixed: numerator
    div_b: str                # fixed: divisor
    div_off: str              # fixed: table offset for negative domains
    q_add: str
    q_dot: str
    q_div: str


def builtin_gates(n_width: int, cols: GateColumns, prefix: str = "") -> list[GateDef]:
    """The three row-local gate families for linear layers.

    ADD_N:  out = sum(xs)
    DOT_N:  out = sum((x_j - z) * w_j), z from a fixed cell so one gate
            serves every layer; short dot products pad with w_j = 0
    DIV:    xs[0] * a = (out - off) * b + xs[1], pairing with the range
            lookup 0 <= xs[1] < b; out then holds floor(x*a/b) + off,
            which is exactly the shifted key of the clip table
    """
    if n_width < 2:
        raise CircuitError("gate width must be >= 2")
    add_poly = sub(add(*[cell(x) for x in cols.xs]), cell(cols.out))
    dot_terms = [mul(sub(cell(x), cell(cols.z)), cell(w)) for x, w in zip(cols.xs, cols.ws)]
    dot_poly = sub(add(*dot_terms), cell(cols.out))
    div_poly = sub(
        mul(cell(cols.xs[0]), cell(cols.div_a)),
        add(mul(sub(cell(cols.out), cell(cols.div_off)), cell(cols.div_b)), cell(cols.xs[1])),
    )
    return [
        GateDef(id=f"{prefix}add{n_width}", name=f"ADD_{n_width}", selector=cols.q_add, poly=add_poly),
        GateDef(id=f"{prefix}dot{n_width}", name=f"DOT_{n_width}", selector=cols.q_dot, poly=dot_poly),
        GateDef(id=f"{prefix}div", name="DIV", selector=cols.q_div, poly=div_poly),
    ]
