"""Pure-Python checker kernels.

Same contract as the compiled module zkgrid._kernel; selected at import
time by zkgrid.checker when the extension is unavailable (or when the
ZKGRID_PURE_PYTHON environment variable is set).
"""

from __future__ import annotations

OP_CONST = 0
OP_CELL = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_POW5 = 5

IMPL = "python"


def gate_scan(ops, opargs, consts, cols, sel, modulus, start, stop, cap, max_stack):
    """Rows in [start, stop) where selector * poly != 0.

    Returns a list of (row, value) with value = sel * poly mod modulus.
    Raises ValueError on an unassigned (None) cell in an enabled row.
    """
    out = []
    p = modulus
    n_ops = len(ops)
    stack = [0] * (max_stack + 1)
    for row in range(start, stop):
        s = sel[row]
        if s == 0:
            continue
        sp = 0
        for i in range(n_ops):
            op = ops[i]
            if op == OP_CELL:
                v = cols[opargs[i]][row]
                if v is None:
                    raise ValueError(f"unassigned cell in enabled row {row}")
                stack[sp] = v
                sp += 1
            elif op == OP_MUL:
                sp -= 1
                stack[sp - 1] = stack[sp - 1] * stack[sp] % p
            elif op == OP_ADD:
                sp -= 1
                stack[sp - 1] = (stack[sp - 1] + stack[sp]) % p
            elif op == OP_SUB:
                sp -= 1
                stack[sp - 1] = (stack[sp - 1] - stack[sp]) % p
            elif op == OP_CONST:
                stack[sp] = consts[opargs[i]]
                sp += 1
            else:  # OP_POW5
                v = stack[sp - 1]
                v2 = v * v % p
                stack[sp - 1] = v2 * v2 % p * v % p
        v = stack[0]
        if v != 0:
            out.append((row, s * v % p))
            if len(out) >= cap:
                break
    return out


def lookup_scan(cols, sel, table, start, stop, cap):
    """Rows in [start, stop) where the selector is on and the cell tuple
    is missing from the table."""
    out = []
    n_cols = len(cols)
    for row in range(start, stop):
        if sel[row] == 0:
            continue
        if n_cols == 1:
            v = cols[0][row]
            if v is None:
                raise ValueError(f"unassigned cell in enabled row {row}")
            key = (v,)
        else:
            key = tuple(c[row] for c in cols)
            for v in key:
                if v is None:
                    raise ValueError(f"unassigned cell in enabled row {row}")
        if key not in table:
            out.append(row)
            if len(out) >= cap:
                break
    return out
