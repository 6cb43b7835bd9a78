# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled checker kernels.

Field values are arbitrary-precision Python ints, so the arithmetic still
goes through CPython's long objects; the win over the pure-Python kernel
is the C-level dispatch loop, stack, and row scan.  Contract mirrored by
zkgrid._kernel_py.
"""

DEF OP_CONST = 0
DEF OP_CELL = 1
DEF OP_ADD = 2
DEF OP_SUB = 3
DEF OP_MUL = 4
DEF OP_POW5 = 5

IMPL = "compiled"


def gate_scan(ops, opargs, consts, cols, sel, modulus, start, stop, cap, max_stack):
    """Rows in [start, stop) where selector * poly != 0."""
    cdef Py_ssize_t row, i, sp, n_ops
    cdef int op
    cdef list out = []
    cdef list stack = [0] * (max_stack + 1)
    cdef list ops_l = list(ops)
    cdef list args_l = list(opargs)
    cdef list consts_l = list(consts)
    cdef list cols_l = list(cols)
    cdef object p = modulus
    cdef object v, v2, s
    n_ops = len(ops_l)
    for row in range(start, stop):
        s = sel[row]
        if s == 0:
            continue
        sp = 0
        for i in range(n_ops):
            op = ops_l[i]
            if op == OP_CELL:
                v = (<list>cols_l[<Py_ssize_t>args_l[i]])[row]
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
                stack[sp] = consts_l[<Py_ssize_t>args_l[i]]
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
    """Rows in [start, stop) with selector on and cell tuple not in table."""
    cdef Py_ssize_t row, j, n_cols
    cdef list out = []
    cdef list cols_l = list(cols)
    cdef object v
    cdef tuple key
    cdef set table_s = table if isinstance(table, set) else set(table)
    n_cols = len(cols_l)
    for row in range(start, stop):
        if sel[row] == 0:
            continue
        if n_cols == 1:
            v = (<list>cols_l[0])[row]
            if v is None:
                raise ValueError(f"unassigned cell in enabled row {row}")
            key = (v,)
        else:
            key = tuple([(<list>cols_l[j])[row] for j in range(n_cols)])
            for j in range(n_cols):
                if key[j] is None:
                    raise ValueError(f"unassigned cell in enabled row {row}")
        if key not in table_s:
            out.append(row)
            if len(out) >= cap:
                break
    return out
