"""Algebraic sponge hashing over the field, and the visibility modes that
decide which tensors are committed versus revealed.

The permutation is the usual x^5 S-box design: per round, add round
constants, apply the S-box (to the whole state in full rounds, to lane 0
in partial rounds), then mix through an invertible Cauchy matrix.  Round
constants and the matrix are derived from a public seed via SHA-256 in
counter mode, documented below.  These parameters are deterministic and
reproducible, NOT bit-compatible with any published constant set, and the
construction carries no security proof; treat digests as binding only
within this toolkit.

Constant derivation: rc[i] = SHA256("%s|rc|%d" % (seed, i)) read as a
big-endian integer reduced mod p, consumed in round-major, lane-minor
order.  The mixing matrix is M[r][c] = 1 / (x_r + y_c) with x_r = r,
y_c = t + c.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .field import DEFAULT_MODULUS, Field
from .interpreter import run_inference
from .model import ModelGraph, QuantTensor


class VisibilityMode(Enum):
    HIDDEN_INPUT_PUBLIC_WEIGHTS = "hidden_input_public_weights"
    PUBLIC_INPUT_HIDDEN_WEIGHTS = "public_input_hidden_weights"
    HIDDEN_INPUT_HIDDEN_WEIGHTS = "hidden_input_hidden_weights"

    @property
    def input_hidden(self) -> bool:
        return self in (
            VisibilityMode.HIDDEN_INPUT_PUBLIC_WEIGHTS,
            VisibilityMode.HIDDEN_INPUT_HIDDEN_WEIGHTS,
        )

    @property
    def weights_hidden(self) -> bool:
        return self in (
            VisibilityMode.PUBLIC_INPUT_HIDDEN_WEIGHTS,
            VisibilityMode.HIDDEN_INPUT_HIDDEN_WEIGHTS,
        )


DEFAULT_SEED = "zkgrid-sponge-v1"


def _derive_constant(seed: str, label: str, i: int, modulus: int) -> int:
    h = hashlib.sha256(f"{seed}|{label}|{i}".encode("ascii")).digest()
    return int.from_bytes(h, "big") % modulus


def _matrix_invertible(m: list[list[int]], p: int) -> bool:
    """Gaussian elimination mod p."""
    t = len(m)
    a = [row[:] for row in m]
    for col in range(t):
        piv = next((r for r in range(col, t) if a[r][col] % p != 0), None)
        if piv is None:
            return False
        a[col], a[piv] = a[piv], a[col]
        inv = pow(a[col][col], p - 2, p)
        for r in range(col + 1, t):
            f = a[r][col] * inv % p
            for c in range(col, t):
                a[r][c] = (a[r][c] - f * a[col][c]) % p
    return True


@dataclass(frozen=True)
class SpongeParams:
    modulus: int = DEFAULT_MODULUS
    t: int = 3
    full_rounds: int = 8
    partial_rounds: int = 57
    seed: str = DEFAULT_SEED
    round_constants: tuple = field(default=(), compare=False)
    mds: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.t < 2:
            raise ValueError("state width must be >= 2")
        if self.full_rounds < 2 or self.full_rounds % 2 != 0:
            raise ValueError("full round count must be even and >= 2")
        p = self.modulus
        n_rounds = self.full_rounds + self.partial_rounds
        rc = tuple(
            tuple(_derive_constant(self.seed, "rc", r * self.t + c, p) for c in range(self.t))
            for r in range(n_rounds)
        )
        mds = [
            [pow(r + self.t + c, p - 2, p) for c in range(self.t)] for r in range(self.t)
        ]
        if not _matrix_invertible(mds, p):
            raise ValueError("derived mixing matrix is singular; pick another seed")
        object.__setattr__(self, "round_constants", rc)
        object.__setattr__(self, "mds", tuple(tuple(row) for row in mds))

    @property
    def rate(self) -> int:
        return self.t - 1

    @property
    def n_rounds(self) -> int:
        return self.full_rounds + self.partial_rounds

    def is_full_round(self, r: int) -> bool:
        half = self.full_rounds // 2
        return r < half or r >= half + self.partial_rounds

    def to_json(self) -> dict:
        return {
            "modulus": str(self.modulus),
            "t": self.t,
            "full_rounds": self.full_rounds,
            "partial_rounds": self.partial_rounds,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SpongeParams":
        extra = set(doc) - {"modulus", "t", "full_rounds", "partial_rounds", "seed"}
        if extra:
            raise ValueError(f"unknown sponge param fields: {sorted(extra)}")
        return cls(
            modulus=int(doc.get("modulus", DEFAULT_MODULUS)),
            t=int(doc.get("t", 3)),
            full_rounds=int(doc.get("full_rounds", 8)),
            partial_rounds=int(doc.get("partial_rounds", 57)),
            seed=doc.get("seed", DEFAULT_SEED),
        )

    @classmethod
    def load(cls, path: str) -> "SpongeParams":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_json(json.load(fh))


def round_function(state: list[int], r: int, params: SpongeParams) -> list[int]:
    """One round: add constants, S-box (all lanes or lane 0), then mix."""
    p = params.modulus
    t = params.t
    rc = params.round_constants[r]
    s = [(state[i] + rc[i]) % p for i in range(t)]
    if params.is_full_round(r):
        s = [_pow5(v, p) for v in s]
    else:
        s[0] = _pow5(s[0], p)
    return [sum(params.mds[i][j] * s[j] for j in range(t)) % p for i in range(t)]


def permute(state: list[int], params: SpongeParams) -> list[int]:
    """One full permutation of the sponge state (canonical residues)."""
    s = [v % params.modulus for v in state]
    for r in range(params.n_rounds):
        s = round_function(s, r, params)
    return s


def _pow5(v: int, p: int) -> int:
    v2 = v * v % p
    return v2 * v2 % p * v % p


def sponge_hash(elements, params: SpongeParams) -> int:
    """Absorb field elements at rate t-1 and squeeze one digest element.

    The initial capacity lane carries the input length, so inputs of
    different lengths are domain separated even after zero padding.
    """
    elements = [int(e) % params.modulus for e in elements]
    if not elements:
        raise ValueError("sponge input must be nonempty")
    state = [0] * params.t
    state[params.t - 1] = len(elements) % params.modulus
    rate = params.rate
    for i in range(0, len(elements), rate):
        chunk = elements[i : i + rate]
        chunk = chunk + [0] * (rate - len(chunk))
        for j in range(rate):
            state[j] = (state[j] + chunk[j]) % params.modulus
        state = permute(state, params)
    return state[0]


# ---------------------------------------------------------------------------
# Canonical absorb sequences for model tensors

def input_elements(inp: QuantTensor) -> list[int]:
    """Input codes, row-major, as field elements."""
    return [int(b) for b in inp.data]


def weight_elements(graph: ModelGraph, modulus: int) -> list[int]:
    """All model parameters in layer order: weights (signed, embedded as
    p - |w| for negatives) then biases, per parameterized layer."""
    out: list[int] = []
    for layer in graph.layers:
        if layer.weights is not None:
            out.extend(v % modulus for v in layer.weights.signed_values())
        if layer.bias is not None:
            out.extend(v % modulus for v in layer.bias)
    return out


def commit_model_io(
    graph: ModelGraph,
    inp: QuantTensor,
    mode: VisibilityMode | None,
    params: SpongeParams | None = None,
    fld: Field | None = None,
) -> list[int]:
    """The public instance vector for a run of the model.

    Layout: logits, then the input section (digest if hidden, raw codes if
    public), then the weight digest when weights are hidden.  Public
    weights live in the circuit's fixed columns, so they contribute
    nothing here.
    """
    fld = fld or Field()
    params = params or SpongeParams(modulus=fld.modulus)
    if params.modulus != fld.modulus:
        raise ValueError("sponge params and field disagree on the modulus")
    trace = run_inference(graph, inp)
    instance = [int(v) % fld.modulus for v in np.asarray(trace.logits)]
    if mode is None or not mode.input_hidden:
        instance.extend(input_elements(inp))
    else:
        instance.append(sponge_hash(input_elements(inp), params))
    if mode is not None and mode.weights_hidden:
        instance.append(sponge_hash(weight_elements(graph, fld.modulus), params))
    return instance
