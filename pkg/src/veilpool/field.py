"""Prime-field scalars used throughout the pool.

A field element is a canonical Python ``int`` in ``[0, MODULUS)``. The
modulus is the 254-bit scalar field order of the BN254 pairing curve; every
commitment, key, blinding factor and tree node is an element of this field.
Elements serialize to exactly 32 big-endian bytes.
"""

from __future__ import annotations

import random

from .errors import NonCanonicalElement

MODULUS = 21888242871839275222246405745257275088548364400416034343698204186575808495617
FIELD_BYTES = 32
_FIELD_BITS = 254

FieldElement = int


def is_canonical(value: object) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and 0 <= value < MODULUS


def to_field(value: int) -> int:
    """Reduce an arbitrary integer into canonical form."""
    return value % MODULUS


def check_canonical(value: int) -> int:
    if not is_canonical(value):
        raise NonCanonicalElement(f"not a canonical field element: {value!r}")
    return value


def fe_to_bytes(value: int) -> bytes:
    check_canonical(value)
    return value.to_bytes(FIELD_BYTES, "big")


def fe_from_bytes(data: bytes) -> int:
    if len(data) != FIELD_BYTES:
        raise NonCanonicalElement(f"expected {FIELD_BYTES} bytes, got {len(data)}")
    value = int.from_bytes(data, "big")
    if value >= MODULUS:
        raise NonCanonicalElement("encoding exceeds the field modulus")
    return value


def random_field_element(rng: random.Random) -> int:
    """Uniform element via rejection sampling on 254-bit draws."""
    while True:
        value = rng.getrandbits(_FIELD_BITS)
        if value < MODULUS:
            return value


def random_bytes(rng: random.Random, n: int) -> bytes:
    return rng.getrandbits(8 * n).to_bytes(n, "big") if n else b""
