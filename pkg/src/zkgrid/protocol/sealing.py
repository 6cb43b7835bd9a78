"""Pluggable sealing for the data-transfer subprotocol.

The bundled implementation is a SHA-256 keyed stream cipher placeholder:
deterministic, reversible, and NOT cryptographically secure.  It exists
so the simulator can exercise hash-of-ciphertext commitments end to end;
swap in a real sealed-box implementation for anything that matters.
"""

from __future__ import annotations

import hashlib
from typing import Callable

Sealer = Callable[[bytes, bytes], bytes]


def _stream(key: bytes, n: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < n:
        out.extend(hashlib.sha256(key + counter.to_bytes(8, "big")).digest())
        counter += 1
    return bytes(out[:n])


def seal(key: bytes, data: bytes) -> bytes:
    """XOR with a keyed SHA-256 stream.  Placeholder, not secure."""
    return bytes(a ^ b for a, b in zip(data, _stream(key, len(data))))


def unseal(key: bytes, blob: bytes) -> bytes:
    return seal(key, blob)


def commitment(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()
