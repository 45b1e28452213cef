"""Append-only tree and sparse map: roots, proofs, history, fuzzing."""

import random

import pytest

from veilpool.errors import IndexOutOfRange, KeyConflict, TreeFull
from veilpool.field import MODULUS, random_field_element
from veilpool.hashing import zk_hash
from veilpool.trees import (
    AppendTree,
    MerklePath,
    SmtProof,
    SparseTree,
    recompute_root,
    smt_verify,
    verify_path,
)


def key32(value: int) -> bytes:
    return value.to_bytes(32, "big")


def test_append_first_index(rng):
    tree = AppendTree(height=3)
    index, root = tree.append(random_field_element(rng))
    assert index == 0
    assert root == tree.root


def test_append_order_matters(rng):
    a, b = random_field_element(rng), random_field_element(rng)
    t1 = AppendTree(height=3)
    t2 = AppendTree(height=3)
    t1.append(a); t1.append(b)
    t2.append(b); t2.append(a)
    assert t1.root != t2.root
    assert t1.root == recompute_root([a, b], 3)
    assert t2.root == recompute_root([b, a], 3)


@pytest.mark.parametrize("height,count", [(3, 1), (3, 8), (4, 5), (5, 17), (8, 32)])
def test_incremental_root_equals_rebuild(rng, height, count):
    tree = AppendTree(height=height)
    leaves = [random_field_element(rng) for _ in range(count)]
    for leaf in leaves:
        tree.append(leaf)
    assert tree.root == recompute_root(leaves, height)


def test_membership_all_leaves(rng):
    tree = AppendTree(height=4)
    leaves = [random_field_element(rng) for _ in range(5)]
    for leaf in leaves:
        tree.append(leaf)
    for index, leaf in enumerate(leaves):
        path = tree.prove_membership(index)
        assert verify_path(tree.root, leaf, path)


def test_flipped_direction_bit_fails(rng):
    tree = AppendTree(height=4)
    leaves = [random_field_element(rng) for _ in range(5)]
    for leaf in leaves:
        tree.append(leaf)
    path = tree.prove_membership(2)
    bits = list(path.indices)
    bits[1] ^= 1
    bad = MerklePath(leaf_index=path.leaf_index, siblings=path.siblings, indices=tuple(bits))
    assert not verify_path(tree.root, leaves[2], bad)


def test_stale_root_in_history_ring(rng):
    tree = AppendTree(height=6, root_history=100)
    tree.append(random_field_element(rng))
    old_root = tree.root
    path = tree.prove_membership(0)
    leaf = tree.leaf(0)
    for _ in range(50):
        tree.append(random_field_element(rng))
    assert tree.knows_root(old_root)
    assert verify_path(old_root, leaf, path)


def test_root_beyond_ring_capacity_forgotten(rng):
    tree = AppendTree(height=8, root_history=100)
    tree.append(random_field_element(rng))
    old_root = tree.root
    for _ in range(101):
        tree.append(random_field_element(rng))
    assert not tree.knows_root(old_root)


def test_tree_full():
    tree = AppendTree(height=2)
    for i in range(4):
        tree.append(i + 1)
    with pytest.raises(TreeFull):
        tree.append(5)


def test_prove_out_of_range():
    tree = AppendTree(height=3)
    tree.append(1)
    with pytest.raises(IndexOutOfRange):
        tree.prove_membership(1)
    with pytest.raises(IndexOutOfRange):
        tree.leaf(7)


def test_export_import_roundtrip(rng):
    tree = AppendTree(height=5)
    for _ in range(9):
        tree.append(random_field_element(rng))
    clone = AppendTree.from_bytes(tree.export_bytes())
    assert clone.root == tree.root
    assert clone.leaves == tree.leaves
    assert clone.height == tree.height


def test_path_mutation_fuzz_never_accepts(rng):
    """Random single-mutation fuzz over (leaf, siblings, indices, root)."""
    tree = AppendTree(height=3)
    leaves = [random_field_element(rng) for _ in range(6)]
    for leaf in leaves:
        tree.append(leaf)
    root = tree.root
    paths = [tree.prove_membership(i) for i in range(6)]
    trials = 100_000
    for trial in range(trials):
        index = trial % 6
        leaf = leaves[index]
        path = paths[index]
        choice = rng.randrange(4)
        if choice == 0:
            bad = (root + 1 + rng.randrange(1 << 64)) % MODULUS
            assert not verify_path(bad, leaf, path)
        elif choice == 1:
            bad = (leaf + 1 + rng.randrange(1 << 64)) % MODULUS
            assert not verify_path(root, bad, path)
        elif choice == 2:
            level = rng.randrange(3)
            siblings = list(path.siblings)
            siblings[level] = (siblings[level] + 1 + rng.randrange(1 << 64)) % MODULUS
            mutated = MerklePath(path.leaf_index, tuple(siblings), path.indices)
            assert not verify_path(root, leaf, mutated)
        else:
            level = rng.randrange(3)
            bits = list(path.indices)
            bits[level] ^= 1
            mutated = MerklePath(path.leaf_index, path.siblings, tuple(bits))
            assert not verify_path(root, leaf, mutated)


# -- sparse tree -------------------------------------------------------------


def test_smt_membership(rng):
    smt = SparseTree(height=32)
    value = random_field_element(rng)
    smt.insert(key32(5), value)
    proof = smt.prove(key32(5))
    assert proof.membership and proof.value == value
    assert smt_verify(smt.root, proof)


def test_smt_absence(rng):
    smt = SparseTree(height=32)
    smt.insert(key32(5), 77)
    proof = smt.prove(key32(9))
    assert not proof.membership
    assert smt_verify(smt.root, proof)
    # and a completely empty tree proves absence of anything
    empty = SparseTree(height=32)
    assert smt_verify(empty.root, empty.prove(key32(1)))


def test_smt_insert_order_independent(rng):
    pairs = [(key32(random_field_element(rng)), random_field_element(rng)) for _ in range(100)]
    forward = SparseTree(height=64)
    backward = SparseTree(height=64)
    for key, value in pairs:
        forward.insert(key, value)
    for key, value in reversed(pairs):
        backward.insert(key, value)
    assert forward.root == backward.root


def test_smt_reinsert_same_pair_is_noop(rng):
    smt = SparseTree(height=32)
    root = smt.insert(key32(8), 3)
    assert smt.insert(key32(8), 3) == root


def test_smt_key_conflict(rng):
    smt = SparseTree(height=32)
    smt.insert(key32(8), 3)
    with pytest.raises(KeyConflict):
        smt.insert(key32(8), 4)
    # truncated addressing: a different full key routed to the same slot
    with pytest.raises(KeyConflict):
        smt.insert(key32(99), 5)


def test_smt_proof_binds_full_key(rng):
    # two keys sharing the routing prefix cannot alias each other's proofs
    smt = SparseTree(height=32)
    key = key32((7 << (256 - 32)) | 1)
    twin = key32((7 << (256 - 32)) | 2)
    smt.insert(key, 11)
    proof = smt.prove(key)
    forged = SmtProof(
        key=twin, value=proof.value, siblings=proof.siblings, membership=True
    )
    assert smt_verify(smt.root, proof)
    assert not smt_verify(smt.root, forged)
    # absence of the twin is provable by showing the occupying leaf
    absence = smt.prove(twin)
    assert not absence.membership and absence.conflict_key == key
    assert smt_verify(smt.root, absence)


def test_smt_root_history(rng):
    smt = SparseTree(height=32, root_history=10)
    first, second = key32(1 << 250), key32(2 << 250)
    smt.insert(first, 1)
    old_root = smt.root
    old_proof = smt.prove(first)
    smt.insert(second, 2)
    assert smt.root != old_root
    assert smt.knows_root(old_root)
    assert smt_verify(old_root, old_proof)


def test_smt_mutation_fuzz(rng):
    smt = SparseTree(height=16)
    keys = [key32(random_field_element(rng)) for _ in range(8)]
    for i, key in enumerate(keys):
        smt.insert(key, i + 1)
    root = smt.root
    for trial in range(2000):
        key = keys[trial % len(keys)]
        proof = smt.prove(key)
        choice = rng.randrange(3)
        if choice == 0:
            mutated = SmtProof(key, (proof.value + 1) % MODULUS, proof.siblings, True)
        elif choice == 1:
            level = rng.randrange(len(proof.siblings))
            siblings = list(proof.siblings)
            siblings[level] = (siblings[level] + 1) % MODULUS
            mutated = SmtProof(key, proof.value, tuple(siblings), True)
        else:
            mutated = SmtProof(key, proof.value, proof.siblings, False)
        assert not smt_verify(root, mutated)


def test_smt_rejects_short_keys():
    smt = SparseTree(height=32)
    with pytest.raises(ValueError):
        smt.insert(b"\x01" * 31, 1)


def test_zero_leaf_semantics():
    # the empty leaf is 0; an explicit zero-value insert is distinguishable
    smt = SparseTree(height=16)
    root_before = smt.root
    smt.insert(key32(3), 0)
    assert smt.root != root_before
    proof = smt.prove(key32(3))
    assert proof.membership and smt_verify(smt.root, proof)
