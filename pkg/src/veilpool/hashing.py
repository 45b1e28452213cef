"""Fixed zk-friendly hash over the shared prime field.

The hash is one frozen parameterization of the modern sponge/permutation
family built from a degree-5 S-box over a 254-bit prime field: eight full
rounds wrapped around a block of partial rounds, an add-chain external
mixing layer and a sum-plus-diagonal internal layer (the Poseidon2 layout).
Round constants come from a SHA-256 counter stream seeded with the tags
below, so the whole parameterization is reproducible from this file alone.
Golden vectors in the test suite pin it against silent drift.

Widths follow the input arity: ``zk_hash`` accepts 1..16 canonical field
elements, pads the state with zeros up to the next supported width, and
stores the arity in the capacity slot so padded inputs cannot collide with
shorter ones.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

from .errors import InvalidArity
from .field import MODULUS, check_canonical

try:
    from gmpy2 import mpz
except ImportError:  # pragma: no cover - gmpy2 is a plain speedup
    def mpz(x):  # type: ignore[misc]
        return x

_P = mpz(MODULUS)

FULL_ROUNDS = 8
_PARTIAL_ROUNDS = {2: 56, 3: 56, 4: 56, 8: 57, 12: 57, 16: 59, 20: 59}
_WIDTHS = sorted(_PARTIAL_ROUNDS)
MAX_ARITY = 16

_CONSTANT_TAG = "veilpool.permutation.v1"


def _width_for(arity: int) -> int:
    for width in _WIDTHS:
        if width >= arity + 1:
            return width
    raise InvalidArity(f"arity {arity} exceeds the maximum of {MAX_ARITY}")


def _constant_stream(tag: str):
    """SHA-256 counter stream, rejection-sampled into the field."""
    import hashlib

    counter = 0
    while True:
        digest = hashlib.sha256(f"{_CONSTANT_TAG}/{tag}/{counter}".encode()).digest()
        counter += 1
        value = int.from_bytes(digest, "big") >> 2  # 254 bits
        if value < MODULUS:
            yield value


@lru_cache(maxsize=None)
def _round_constants(width: int):
    partial = _PARTIAL_ROUNDS[width]
    stream = _constant_stream(f"rc/{width}")
    full_rc = tuple(mpz(next(stream)) for _ in range(FULL_ROUNDS * width))
    partial_rc = tuple(mpz(next(stream)) for _ in range(partial))
    return full_rc, partial_rc


def _mix_external(state: list, width: int) -> None:
    """Add-chain external layer; the published 4x4 block matrix above width 3."""
    if width <= 3:
        total = sum(state)
        for i in range(width):
            state[i] = (total + state[i]) % _P
        return
    for base in range(0, width, 4):
        x0, x1, x2, x3 = state[base:base + 4]
        t0 = x0 + x1
        t1 = x2 + x3
        t2 = x1 + x1 + t1
        t3 = x3 + x3 + t0
        t4 = 4 * t1 + t3
        t5 = 4 * t0 + t2
        state[base] = (t3 + t5) % _P
        state[base + 1] = t5 % _P
        state[base + 2] = (t2 + t4) % _P
        state[base + 3] = t4 % _P
    if width > 4:
        col = [mpz(0)] * 4
        for base in range(0, width, 4):
            for j in range(4):
                col[j] += state[base + j]
        for i in range(width):
            state[i] = (state[i] + col[i & 3]) % _P


def _permute_general(state: list, width: int) -> None:
    full_rc, partial_rc = _round_constants(width)
    half = FULL_ROUNDS // 2
    _mix_external(state, width)
    idx = 0
    for _ in range(half):
        for i in range(width):
            x = (state[i] + full_rc[idx + i]) % _P
            sq = x * x % _P
            state[i] = sq * sq % _P * x % _P
        idx += width
        _mix_external(state, width)
    for rc in partial_rc:
        x = (state[0] + rc) % _P
        sq = x * x % _P
        state[0] = sq * sq % _P * x % _P
        # internal layer: row i adds the state sum to (i+1) * state[i]
        total = sum(state)
        for i in range(width):
            state[i] = (total + i * state[i] + state[i]) % _P
    for _ in range(half):
        for i in range(width):
            x = (state[i] + full_rc[idx + i]) % _P
            sq = x * x % _P
            state[i] = sq * sq % _P * x % _P
        idx += width
        _mix_external(state, width)


def _permute_w3(s0, s1, s2):
    """Unrolled width-3 permutation; this is the hot path for the whole pool."""
    full_rc, partial_rc = _round_constants(3)
    idx = 0
    t = s0 + s1 + s2
    s0, s1, s2 = (t + s0) % _P, (t + s1) % _P, (t + s2) % _P
    for _ in range(4):
        x = (s0 + full_rc[idx]) % _P
        sq = x * x % _P
        s0 = sq * sq % _P * x % _P
        x = (s1 + full_rc[idx + 1]) % _P
        sq = x * x % _P
        s1 = sq * sq % _P * x % _P
        x = (s2 + full_rc[idx + 2]) % _P
        sq = x * x % _P
        s2 = sq * sq % _P * x % _P
        idx += 3
        t = s0 + s1 + s2
        s0, s1, s2 = (t + s0) % _P, (t + s1) % _P, (t + s2) % _P
    for rc in partial_rc:
        x = (s0 + rc) % _P
        sq = x * x % _P
        s0 = sq * sq % _P * x % _P
        t = s0 + s1 + s2
        s0, s1, s2 = (t + s0) % _P, (t + s1 + s1) % _P, (t + s2 + s2 + s2) % _P
    for _ in range(4):
        x = (s0 + full_rc[idx]) % _P
        sq = x * x % _P
        s0 = sq * sq % _P * x % _P
        x = (s1 + full_rc[idx + 1]) % _P
        sq = x * x % _P
        s1 = sq * sq % _P * x % _P
        x = (s2 + full_rc[idx + 2]) % _P
        sq = x * x % _P
        s2 = sq * sq % _P * x % _P
        idx += 3
        t = s0 + s1 + s2
        s0, s1, s2 = (t + s0) % _P, (t + s1) % _P, (t + s2) % _P
    return s0


@lru_cache(maxsize=1 << 18)
def _hash_tuple(inputs: tuple) -> int:
    arity = len(inputs)
    if arity == 2:
        return int(_permute_w3(mpz(arity), mpz(inputs[0]), mpz(inputs[1])))
    width = _width_for(arity)
    state = [mpz(arity)] + [mpz(x) for x in inputs] + [mpz(0)] * (width - arity - 1)
    _permute_general(state, width)
    return int(state[0])


def zk_hash(inputs: Sequence[int]) -> int:
    """Hash 1..16 canonical field elements into one."""
    if not 1 <= len(inputs) <= MAX_ARITY:
        raise InvalidArity(f"zk_hash takes 1..{MAX_ARITY} inputs, got {len(inputs)}")
    for value in inputs:
        check_canonical(value)
    return _hash_tuple(tuple(inputs))


def zk_hash_many(values: Sequence[int]) -> int:
    """Hash an arbitrary-length list by length-prefixed chunked absorption."""
    if not values:
        return zk_hash([0])
    items = [len(values) % MODULUS] + [check_canonical(v) for v in values]
    digest = zk_hash(items[:MAX_ARITY])
    pos = MAX_ARITY
    while pos < len(items):
        chunk = items[pos:pos + MAX_ARITY - 1]
        digest = zk_hash([digest] + chunk)
        pos += MAX_ARITY - 1
    return digest


def zk_hash_bytes(data: bytes) -> int:
    """Hash a byte string via 31-byte big-endian limbs (always < modulus)."""
    limbs = [len(data)]
    for pos in range(0, len(data), 31):
        limbs.append(int.from_bytes(data[pos:pos + 31], "big"))
    return zk_hash_many(limbs)


def hash_cache_clear() -> None:
    _hash_tuple.cache_clear()
