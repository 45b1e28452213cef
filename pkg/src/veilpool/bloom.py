"""Bloom-filter chain states and their analytic envelope.

A chain state is an m-bit filter whose k indices per element come from the
shared zk-friendly hash, so the same positions are computable inside
statement predicates. Filters are value types: insertion and union return
new filters, and union never clears a bit, which is what makes taint
permanent across transfers.

``inserted_count`` rides along for rate-limit accounting; unions sum the
counts as a conservative upper bound because popcount under-counts after
overlapping merges.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import MalformedTarget, ParamMismatch
from .field import FieldElement, check_canonical
from .hashing import zk_hash

DEFAULT_M = 1 << 14
DEFAULT_K = 2


class Membership(enum.Enum):
    DEFINITELY_ABSENT = "definitely_absent"
    PROBABLY_PRESENT = "probably_present"


class Exclusion(enum.Enum):
    CERTAINLY_EXCLUDED = "certainly_excluded"
    POSSIBLY_INCLUDED = "possibly_included"


class Capacity(enum.Enum):
    OK = "ok"
    OVER_LIMIT = "over_limit"


@dataclass(frozen=True)
class BloomParams:
    m: int = DEFAULT_M
    k: int = DEFAULT_K

    def __post_init__(self):
        if self.m < 8 or self.m & (self.m - 1):
            raise ValueError("m must be a power of two >= 8")
        if not 1 <= self.k <= 8:
            raise ValueError("k must be in [1, 8]")


def bloom_indices(element: FieldElement, params: BloomParams) -> list[int]:
    """The k bit positions of ``element``, domain-separated per index slot."""
    check_canonical(element)
    return [zk_hash([element, i]) % params.m for i in range(params.k)]


@dataclass(frozen=True)
class BloomFilter:
    params: BloomParams
    bits: int = 0
    inserted_count: int = 0

    def insert(self, element: FieldElement) -> "BloomFilter":
        bits = self.bits
        for index in bloom_indices(element, self.params):
            bits |= 1 << index
        return BloomFilter(self.params, bits, self.inserted_count + 1)

    def contains(self, element: FieldElement) -> Membership:
        for index in bloom_indices(element, self.params):
            if not self.bits >> index & 1:
                return Membership.DEFINITELY_ABSENT
        return Membership.PROBABLY_PRESENT

    def popcount(self) -> int:
        return self.bits.bit_count()

    def to_bytes(self) -> bytes:
        """Params header (two u32 LE) plus the bit array, LSB-first in bytes."""
        header = self.params.m.to_bytes(4, "little") + self.params.k.to_bytes(4, "little")
        return header + self.bits.to_bytes(self.params.m // 8, "little")

    @classmethod
    def from_bytes(cls, data: bytes) -> "BloomFilter":
        if len(data) < 8:
            raise ValueError("truncated bloom serialization")
        m = int.from_bytes(data[:4], "little")
        k = int.from_bytes(data[4:8], "little")
        params = BloomParams(m=m, k=k)
        body = data[8:8 + m // 8]
        if len(body) != m // 8:
            raise ValueError("truncated bloom bit array")
        return cls(params, int.from_bytes(body, "little"))

    def byte_size(self) -> int:
        return 8 + self.params.m // 8


def empty(params: BloomParams) -> BloomFilter:
    return BloomFilter(params)


def encode_single(element: FieldElement, params: BloomParams) -> BloomFilter:
    """Fresh filter holding exactly one element's indices."""
    return BloomFilter(params).insert(element)


def union(filters: Sequence[BloomFilter]) -> BloomFilter:
    if not filters:
        raise ValueError("union needs at least one filter")
    params = filters[0].params
    bits = 0
    count = 0
    for f in filters:
        if f.params != params:
            raise ParamMismatch("all filters in a union must share parameters")
        bits |= f.bits
        count += f.inserted_count
    return BloomFilter(params, bits, count)


def exclusion_check(chain_state: BloomFilter, target: BloomFilter) -> Exclusion:
    """Certain exclusion iff the target's set bits are not all present.

    The comparison uses the target's popcount rather than the constant k:
    when an element's k indices collide the intersection can never reach k,
    and a literal-k test would wrongly report exclusion for a present
    element. The two coincide whenever the indices are distinct.
    """
    if chain_state.params != target.params:
        raise ParamMismatch("exclusion check needs matching parameters")
    if target.popcount() > target.params.k:
        raise MalformedTarget("target must encode a single element")
    if (chain_state.bits & target.bits).bit_count() != target.popcount():
        return Exclusion.CERTAINLY_EXCLUDED
    return Exclusion.POSSIBLY_INCLUDED


# -- closed forms -------------------------------------------------------


def fp_rate(n: int, params: BloomParams) -> float:
    """False-positive probability after n insertions."""
    if n < 0:
        raise ValueError("element count must be >= 0")
    if n == 0:
        return 0.0
    m, k = params.m, params.k
    return (1.0 - math.exp(-k * n / (m - 1))) ** k


def optimal_k(m: int, n: int) -> float:
    if n < 1:
        raise ValueError("element count must be >= 1")
    return math.log(2) * m / n


@dataclass(frozen=True)
class RateLimitConfig:
    tau_base: float = 0.05
    alpha: float = 0.0
    window: int = 100  # blocks per rate window

    def __post_init__(self):
        if not 0.0 < self.tau_base < 1.0:
            raise ValueError("tau_base must be in (0, 1)")
        if self.alpha < 0.0:
            raise ValueError("alpha must be >= 0")
        if self.window < 1:
            raise ValueError("window must be a positive block count")


def adaptive_tau(config: RateLimitConfig, volume: float) -> float:
    """Threshold that tightens exponentially with window volume."""
    if volume < 0:
        raise ValueError("volume must be >= 0")
    return config.tau_base * math.exp(-config.alpha * volume)


def rate_limit_max(params: BloomParams, config: RateLimitConfig, volume: float) -> float:
    """Maximum tolerable insertions before the filter outgrows the threshold."""
    return params.m / params.k * math.log(1.0 / adaptive_tau(config, volume))


def merge_capacity_check(
    chain_state: BloomFilter, config: RateLimitConfig, volume: float
) -> Capacity:
    limit = rate_limit_max(chain_state.params, config, volume)
    if chain_state.inserted_count > limit:
        return Capacity.OVER_LIMIT
    return Capacity.OK
