"""Authenticated accumulators: append-only Merkle trees and a sparse key map.

The append-only tree stores commitments and compliance statuses; the sparse
tree maps 32-byte keys to field values with provable membership and absence.
Internal nodes hash as ``zk_hash([left, right])`` and the empty leaf is 0.
Both trees keep a bounded ring of recent roots so proofs generated against a
slightly stale root stay verifiable after later insertions.

Sparse-tree leaves bind the *full* 32-byte key (``zk_hash([hi, lo, value])``)
even when the tree height is below 256, so truncated-prefix addressing can
never silently alias two keys: a prefix collision surfaces as KeyConflict.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

from .errors import IndexOutOfRange, KeyConflict, TreeFull
from .field import FIELD_BYTES, FieldElement, check_canonical
from .hashing import zk_hash

DEFAULT_HEIGHT = 20
ROOT_HISTORY = 100


@lru_cache(maxsize=None)
def _zero_hashes(height: int) -> tuple:
    levels = [0]
    for _ in range(height):
        levels.append(zk_hash([levels[-1], levels[-1]]))
    return tuple(levels)


@dataclass(frozen=True)
class MerklePath:
    leaf_index: int
    siblings: tuple
    indices: tuple  # position bit per level, 1 = node is the right child


def verify_path(root: FieldElement, leaf: FieldElement, path: MerklePath) -> bool:
    if len(path.siblings) != len(path.indices):
        return False
    node = leaf
    for sibling, bit in zip(path.siblings, path.indices):
        if bit not in (0, 1):
            return False
        try:
            node = zk_hash([sibling, node]) if bit else zk_hash([node, sibling])
        except Exception:
            return False
    return node == root


class AppendTree:
    """Append-only Merkle tree over field elements."""

    def __init__(self, height: int = DEFAULT_HEIGHT, root_history: int = ROOT_HISTORY):
        if not 1 <= height <= 32:
            raise ValueError("tree height must be in [1, 32]")
        self.height = height
        self.zero_hashes = _zero_hashes(height)
        self._levels: list[list[int]] = [[] for _ in range(height + 1)]
        self._recent_roots: deque = deque(maxlen=root_history)
        self._recent_roots.append(self.root)

    @property
    def leaf_count(self) -> int:
        return len(self._levels[0])

    @property
    def leaves(self) -> list:
        return list(self._levels[0])

    @property
    def root(self) -> FieldElement:
        top = self._levels[self.height]
        return top[0] if top else self.zero_hashes[self.height]

    @property
    def recent_roots(self) -> tuple:
        return tuple(self._recent_roots)

    def knows_root(self, root: FieldElement) -> bool:
        return root in self._recent_roots

    def leaf(self, index: int) -> FieldElement:
        if not 0 <= index < self.leaf_count:
            raise IndexOutOfRange(f"leaf {index} of {self.leaf_count}")
        return self._levels[0][index]

    def _node(self, level: int, index: int) -> FieldElement:
        nodes = self._levels[level]
        return nodes[index] if index < len(nodes) else self.zero_hashes[level]

    def append(self, leaf: FieldElement) -> tuple[int, FieldElement]:
        """Insert the next leaf; returns its index and the new root."""
        check_canonical(leaf)
        if self.leaf_count >= 1 << self.height:
            raise TreeFull(f"capacity 2^{self.height} reached")
        index = self.leaf_count
        self._levels[0].append(leaf)
        pos = index
        for level in range(self.height):
            parent = pos >> 1
            value = zk_hash([self._node(level, parent * 2), self._node(level, parent * 2 + 1)])
            nodes = self._levels[level + 1]
            if parent < len(nodes):
                nodes[parent] = value
            else:
                nodes.append(value)
            pos = parent
        self._recent_roots.append(self.root)
        return index, self.root

    def prove_membership(self, index: int) -> MerklePath:
        if not 0 <= index < self.leaf_count:
            raise IndexOutOfRange(f"leaf {index} of {self.leaf_count}")
        siblings = []
        bits = []
        pos = index
        for level in range(self.height):
            siblings.append(self._node(level, pos ^ 1))
            bits.append(pos & 1)
            pos >>= 1
        return MerklePath(leaf_index=index, siblings=tuple(siblings), indices=tuple(bits))

    def export_bytes(self) -> bytes:
        out = [self.height.to_bytes(4, "big"), self.leaf_count.to_bytes(8, "big")]
        out.extend(leaf.to_bytes(FIELD_BYTES, "big") for leaf in self._levels[0])
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes, root_history: int = ROOT_HISTORY) -> "AppendTree":
        height = int.from_bytes(data[:4], "big")
        count = int.from_bytes(data[4:12], "big")
        if len(data) != 12 + count * FIELD_BYTES:
            raise ValueError("truncated tree export")
        tree = cls(height, root_history=root_history)
        for i in range(count):
            offset = 12 + i * FIELD_BYTES
            tree.append(int.from_bytes(data[offset:offset + FIELD_BYTES], "big"))
        return tree


@dataclass(frozen=True)
class SmtProof:
    key: bytes
    value: FieldElement
    siblings: tuple
    membership: bool
    # occupying leaf shown by a non-membership proof for a taken slot
    conflict_key: Optional[bytes] = None
    conflict_value: Optional[FieldElement] = None


def _leaf_hash(key: bytes, value: FieldElement) -> FieldElement:
    hi = int.from_bytes(key[:16], "big")
    lo = int.from_bytes(key[16:], "big")
    return zk_hash([hi, lo, value])


class SparseTree:
    """Fixed-depth sparse Merkle map from 32-byte keys to field values.

    Keys are addressed by their first ``height`` bits, most significant
    first; absent keys provably map to the empty leaf.
    """

    def __init__(self, height: int = 256, root_history: int = ROOT_HISTORY):
        if not 8 <= height <= 256:
            raise ValueError("sparse tree height must be in [8, 256]")
        self.height = height
        self.zero_hashes = _zero_hashes(height)
        self.entries: dict[bytes, int] = {}
        self._positions: dict[int, bytes] = {}
        self._nodes: dict[tuple[int, int], int] = {}
        self._recent_roots: deque = deque(maxlen=root_history)
        self._recent_roots.append(self.root)

    @property
    def root(self) -> FieldElement:
        return self._nodes.get((self.height, 0), self.zero_hashes[self.height])

    def knows_root(self, root: FieldElement) -> bool:
        return root in self._recent_roots

    def _position(self, key: bytes) -> int:
        if len(key) != 32:
            raise ValueError("sparse tree keys are 32 bytes")
        return int.from_bytes(key, "big") >> (256 - self.height)

    def _node(self, level: int, index: int) -> FieldElement:
        return self._nodes.get((level, index), self.zero_hashes[level])

    def insert(self, key: bytes, value: FieldElement) -> FieldElement:
        """Bind ``key`` to ``value``; re-inserting the same pair is a no-op."""
        check_canonical(value)
        existing = self.entries.get(key)
        if existing is not None:
            if existing != value:
                raise KeyConflict("key already bound to a different value")
            return self.root
        pos = self._position(key)
        holder = self._positions.get(pos)
        if holder is not None:
            raise KeyConflict("key prefix collides with an existing entry")
        self.entries[key] = value
        self._positions[pos] = key
        node = _leaf_hash(key, value)
        self._nodes[(0, pos)] = node
        for level in range(self.height):
            parent = pos >> 1
            left = self._node(level, parent * 2)
            right = self._node(level, parent * 2 + 1)
            self._nodes[(level + 1, parent)] = zk_hash([left, right])
            pos = parent
        self._recent_roots.append(self.root)
        return self.root

    def prove(self, key: bytes) -> SmtProof:
        """Membership proof if present, otherwise a proof of absence."""
        pos = self._position(key)
        siblings = []
        walk = pos
        for level in range(self.height):
            siblings.append(self._node(level, walk ^ 1))
            walk >>= 1
        value = self.entries.get(key)
        if value is not None:
            return SmtProof(key=key, value=value, siblings=tuple(siblings), membership=True)
        holder = self._positions.get(pos)
        return SmtProof(
            key=key,
            value=0,
            siblings=tuple(siblings),
            membership=False,
            conflict_key=holder,
            conflict_value=self.entries[holder] if holder is not None else None,
        )


def smt_verify(root: FieldElement, proof: SmtProof) -> bool:
    height = len(proof.siblings)
    if not 8 <= height <= 256 or len(proof.key) != 32:
        return False
    pos = int.from_bytes(proof.key, "big") >> (256 - height)
    try:
        if proof.membership:
            node = _leaf_hash(proof.key, proof.value)
        elif proof.conflict_key is None:
            if proof.value != 0:
                return False
            node = 0
        else:
            # the slot is occupied by a different key, which proves ours absent
            if len(proof.conflict_key) != 32 or proof.conflict_key == proof.key:
                return False
            conflict_pos = int.from_bytes(proof.conflict_key, "big") >> (256 - height)
            if conflict_pos != pos or proof.conflict_value is None:
                return False
            node = _leaf_hash(proof.conflict_key, proof.conflict_value)
    except Exception:
        return False
    walk = pos
    for sibling in proof.siblings:
        try:
            node = zk_hash([sibling, node]) if walk & 1 else zk_hash([node, sibling])
        except Exception:
            return False
        walk >>= 1
    return node == root


def recompute_root(leaves: Iterable[FieldElement], height: int) -> FieldElement:
    """Brute-force root for small trees; test oracle and import validator."""
    level = list(leaves)
    if len(level) > 1 << height:
        raise TreeFull("too many leaves for the given height")
    zeros = _zero_hashes(height)
    for depth in range(height):
        if len(level) % 2:
            level = level + [zeros[depth]]
        level = [zk_hash([level[2 * i], level[2 * i + 1]]) for i in range(len(level) // 2)]
    return level[0] if level else zeros[height]
