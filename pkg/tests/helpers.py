"""Shared test machinery: the independent convolution oracle and the
single-cell tamper harness."""

from __future__ import annotations

import random

from zkgrid.checker import check
from zkgrid.circuit import ADVICE
from zkgrid.model import INPUT_REF


def naive_layer_oracle(graph, inp_codes):
    """Direct nested-loop re-implementation of quantized inference.

    Deliberately shares no code with the interpreter: plain lists, plain
    loops, explicit padding, explicit floor division.
    """
    def clip(v):
        return min(255, max(0, v))

    acts = {}
    accs = {}

    def value_at(ref, i, j, ch, shape):
        src = inp_codes if ref == INPUT_REF else acts[ref]
        h, w, c = shape
        return src[(i * w + j) * c + ch]

    logits = None
    for li, layer in enumerate(graph.layers):
        if layer.kind in ("conv2d", "depthwise_conv2d"):
            ref = layer.input_refs[0]
            in_shape = graph.shape_of_ref(ref)
            h, w, c = in_shape
            oh, ow, oc = graph.output_shapes[li]
            z = graph.quant_of_ref(ref).zero_point
            wv = layer.weights.signed_values()
            if layer.padding == "same":
                kh = layer.weights.shape[1] if layer.kind == "conv2d" else layer.weights.shape[0]
                kw = layer.weights.shape[2] if layer.kind == "conv2d" else layer.weights.shape[1]
                ph = max((oh - 1) * layer.stride + kh - h, 0)
                pw = max((ow - 1) * layer.stride + kw - w, 0)
                top, left = ph // 2, pw // 2
            else:
                if layer.kind == "conv2d":
                    kh, kw = layer.weights.shape[1], layer.weights.shape[2]
                else:
                    kh, kw = layer.weights.shape[0], layer.weights.shape[1]
                top = left = 0
            acc_list, act_list = [], []
            for i in range(oh):
                for j in range(ow):
                    for o in range(oc):
                        total = 0
                        for r in range(kh):
                            for s in range(kw):
                                ih, iw = i * layer.stride - top + r, j * layer.stride - left + s
                                if not (0 <= ih < h and 0 <= iw < w):
                                    continue
                                if layer.kind == "conv2d":
                                    _, _, _, ic = layer.weights.shape
                                    for ci in range(ic):
                                        x = value_at(ref, ih, iw, ci, in_shape)
                                        total += (x - z) * wv[((o * kh + r) * kw + s) * ic + ci]
                                else:
                                    x = value_at(ref, ih, iw, o, in_shape)
                                    total += (x - z) * wv[(r * kw + s) * oc + o]
                        total += layer.bias[o]
                        acc_list.append(total)
                        s_ = layer.out_quant.scale
                        act_list.append(clip((total * s_.a) // s_.b + layer.out_quant.zero_point))
            accs[li], acts[li] = acc_list, act_list
        elif layer.kind == "fully_connected":
            ref = layer.input_refs[0]
            src = inp_codes if ref == INPUT_REF else acts[ref]
            z = graph.quant_of_ref(ref).zero_point
            units, feat = layer.weights.shape
            wv = layer.weights.signed_values()
            acc_list, act_list = [], []
            for u in range(units):
                total = sum((src[j] - z) * wv[u * feat + j] for j in range(feat)) + layer.bias[u]
                acc_list.append(total)
                s_ = layer.out_quant.scale
                act_list.append(clip((total * s_.a) // s_.b + layer.out_quant.zero_point))
            accs[li], acts[li] = acc_list, act_list
        elif layer.kind == "residual_add":
            ra, rb = layer.input_refs
            xa = inp_codes if ra == INPUT_REF else acts[ra]
            xb = inp_codes if rb == INPUT_REF else acts[rb]
            z = layer.out_quant.zero_point
            accs[li] = [a + b_ - 2 * z for a, b_ in zip(xa, xb)]
            acts[li] = [clip(a + b_ - z) for a, b_ in zip(xa, xb)]
        elif layer.kind == "average_pool":
            ref = layer.input_refs[0]
            h, w, c = graph.shape_of_ref(ref)
            src = inp_codes if ref == INPUT_REF else acts[ref]
            acc_list, act_list = [], []
            for ch in range(c):
                total = sum(src[(i * w + j) * c + ch] for i in range(h) for j in range(w))
                acc_list.append(total)
                act_list.append(total // (h * w))
            accs[li], acts[li] = acc_list, act_list
        else:  # output
            ref = layer.input_refs[0]
            logits = list(inp_codes) if ref == INPUT_REF else list(accs[ref])
            accs[li], acts[li] = logits, (list(inp_codes) if ref == INPUT_REF else acts[ref])
    return accs, acts, logits


def constrained_advice_cells(layout):
    """Every advice cell referenced by an enabled gate row, an enabled
    lookup row, a copy constraint, or an instance binding."""
    cells = set()
    adv = {c.id for c in layout.columns.values() if c.kind == ADVICE}
    for cp in layout.copies:
        for ref in (cp.a, cp.b):
            if ref[0] in adv:
                cells.add(ref)
    for lk in layout.lookups:
        sel = layout.fixed[lk.selector]
        lk_adv = [c for c in lk.columns if c in adv]
        for row in range(layout.n_rows):
            if sel[row]:
                for c in lk_adv:
                    cells.add((c, row))
    for ref, _ in layout.instance_map:
        if ref[0] in adv:
            cells.add(ref)
    for g in layout.gates:
        cols = [c for c in g.poly.columns() if c in adv]
        sel = layout.fixed[g.selector]
        for row in range(layout.n_rows):
            if sel[row]:
                for c in cols:
                    cells.add((c, row))
    return sorted(cells)


def tamper_trials(layout, assignment, rng: random.Random, n_trials: int) -> tuple[int, int]:
    """Flip n_trials random constrained cells by +1; count detections."""
    cells = constrained_advice_cells(layout)
    picks = [cells[rng.randrange(len(cells))] for _ in range(n_trials)]
    caught = 0
    p = layout.field.modulus
    for col, row in picks:
        old = assignment.advice[col][row]
        assert old is not None, f"constrained cell ({col},{row}) unassigned"
        assignment.advice[col][row] = (old + 1) % p
        if check(layout, assignment, cap=4):
            caught += 1
        assignment.advice[col][row] = old
    return caught, n_trials
