"""Shared fixtures: one satisfying instance per statement, plus wire fuzzing.

The mutation helpers work on the canonical wire encoding, so a "single-field
mutation" means perturbing exactly one leaf value anywhere in the public
inputs or the witness, then rebuilding the typed objects.
"""

import random

from veilpool import bloom
from veilpool import statements as st
from veilpool.bloom import BloomParams
from veilpool.field import MODULUS, random_bytes, random_field_element, fe_to_bytes
from veilpool.hashing import zk_hash
from veilpool.keys import EncKeypair, SpendKeypair, encrypt_with_ephemeral
from veilpool.trees import AppendTree, SparseTree
from veilpool.utxo import Utxo, build_joinsplit, commit, make_dummy

PARAMS = BloomParams(m=64, k=2)


def satisfying_instances(seed: int = 7) -> dict:
    """A (statement, witness) pair per statement id, all on tiny trees."""
    rng = random.Random(seed)
    sender = SpendKeypair.generate(rng)
    sender_enc = EncKeypair.generate(rng)
    out = {}

    # deposit bootstrapping chain: request -> response -> binding
    amount, blinding = 25, random_field_element(rng)
    commitment = zk_hash([amount, sender.pk, blinding])
    out[st.StatementId.BOOTSTRAP_REQUEST] = (
        st.bootstrap_request_statement(commitment),
        st.BootstrapRequestWitness(amount=amount, owner_pk=sender.pk, blinding=blinding),
    )

    bootstrap_tree = AppendTree(height=3)
    index, _ = bootstrap_tree.append(commitment)
    mask_blinding = random_field_element(rng)
    masked = zk_hash([commitment, mask_blinding])
    eph_seed = random_bytes(rng, 32)
    masked_enc = encrypt_with_ephemeral(sender_enc.enc_pk, fe_to_bytes(masked), eph_seed)
    masked_enc_hash = st.enc_digest(masked_enc, masked)
    out[st.StatementId.BOOTSTRAP_RESPONSE] = (
        st.bootstrap_response_statement(bootstrap_tree.root, masked_enc, masked_enc_hash),
        st.BootstrapResponseWitness(
            commitment=commitment,
            path=bootstrap_tree.prove_membership(index),
            blinding=mask_blinding,
            masked=masked,
            enc_pk=sender_enc.enc_pk,
            eph_seed=eph_seed,
        ),
    )

    chain_state = bloom.encode_single(masked, PARAMS)
    out[st.StatementId.DEPOSIT_BINDING] = (
        st.deposit_binding_statement(
            masked_enc_hash, st.chain_state_commitment(chain_state)
        ),
        st.DepositBindingWitness(
            masked_enc=masked_enc, masked=masked, chain_state=chain_state
        ),
    )

    # one real note in a small pool, transferred to self
    pool = AppendTree(height=4)
    note = Utxo(amount, sender.pk, blinding, chain_state)
    note_index, _ = pool.append(commit(note))
    note = note.with_leaf_index(note_index)
    inputs = [
        (note, pool.prove_membership(note_index), sender.sk),
        (make_dummy(sender.pk, PARAMS, rng), None, sender.sk),
    ]
    outputs = [
        Utxo(amount - 5, sender.pk, random_field_element(rng), chain_state),
        Utxo(5, sender.pk, random_field_element(rng), chain_state),
    ]
    tx, witness = build_joinsplit(
        inputs, outputs, 0, [sender_enc.enc_pk, sender_enc.enc_pk], rng
    )
    out[st.StatementId.JOINSPLIT] = (st.joinsplit_statement(tx), witness)

    # innocence: allowed leaves for every pool commitment
    status_tree = AppendTree(height=4)
    status_tree.append(zk_hash([commit(note), 1]))
    status_entries = []
    for utxo, path, sk in inputs:
        if path is None:
            status_entries.append((utxo, 0, sk, None))
        else:
            status_entries.append((utxo, path.leaf_index, sk, status_tree.prove_membership(0)))
    out[st.StatementId.INNOCENCE] = (
        st.innocence_statement(status_tree.root, tx.input_nullifiers, tx.tx_context),
        st.InnocenceWitness(tuple(status_entries)),
    )

    # ancestry: some other deposit is flagged, our lineage excludes it
    registry = SparseTree(height=16)
    foreign = random_field_element(rng)
    foreign_single = bloom.encode_single(foreign, PARAMS)
    while bloom.exclusion_check(chain_state, foreign_single) is bloom.Exclusion.POSSIBLY_INCLUDED:
        foreign = random_field_element(rng)
        foreign_single = bloom.encode_single(foreign, PARAMS)
    foreign_key = fe_to_bytes(foreign)
    registry.insert(foreign_key, st.chain_state_commitment(foreign_single))
    merged = bloom.union([note.chain_state])
    out[st.StatementId.ANCESTRY] = (
        st.ancestry_statement(
            registry.root,
            foreign_key,
            st.chain_state_commitment(merged),
            1,
            tx.tx_context,
        ),
        st.AncestryWitness(
            parents=(note.chain_state,),
            merged=merged,
            single=foreign_single,
            smt_proof=registry.prove(foreign_key),
        ),
    )

    # masking: the authority proves its masked key covers a pooled commitment
    out[st.StatementId.MASKING] = (
        st.masking_statement(fe_to_bytes(masked), pool.root),
        st.MaskingWitness(
            commitment=commit(note),
            blinding=mask_blinding,
            path=pool.prove_membership(note_index),
        ),
    )
    return out


# -- wire-level single-field mutation ---------------------------------------


def _leaf_paths(node, prefix=()):
    if isinstance(node, dict):
        for key, value in node.items():
            if key == "t":
                continue
            yield from _leaf_paths(value, prefix + (key,))
    elif isinstance(node, list):
        for index, value in enumerate(node):
            yield from _leaf_paths(value, prefix + (index,))
    else:
        yield prefix, node


def _set_path(node, path, value):
    if not path:
        return value
    head, rest = path[0], path[1:]
    if isinstance(node, dict):
        copy = dict(node)
        copy[head] = _set_path(node[head], rest, value)
        return copy
    copy = list(node)
    copy[head] = _set_path(node[head], rest, value)
    return copy


def _perturb_leaf(value, rng: random.Random):
    if isinstance(value, bool):
        return not value
    if isinstance(value, int):
        delta = rng.choice([1, -1, 1 << 16, -(1 << 16), 1 << 128])
        return (value + delta) % MODULUS if rng.random() < 0.5 else value + delta
    if isinstance(value, str):
        if value.startswith("0x"):
            body = value[2:] or "0"
            pos = rng.randrange(len(body))
            old = int(body[pos], 16)
            new = format((old + rng.randrange(1, 16)) % 16, "x")
            return "0x" + body[:pos] + new + body[pos + 1:]
        if value and all(c in "0123456789abcdef" for c in value):
            pos = rng.randrange(len(value))
            old = int(value[pos], 16)
            new = format((old + rng.randrange(1, 16)) % 16, "x")
            return value[:pos] + new + value[pos + 1:]
        return value + "x"
    if value is None:
        return 0
    return value


def mutate_one_field(obj, rng: random.Random, attempts: int = 50):
    """Typed copy of ``obj`` with exactly one wire leaf perturbed, or None."""
    encoded = st.encode_value(obj)
    paths = list(_leaf_paths(encoded))
    if not paths:
        return None
    for _ in range(attempts):
        path, value = paths[rng.randrange(len(paths))]
        mutated_leaf = _perturb_leaf(value, rng)
        if mutated_leaf == value:
            continue
        mutated = _set_path(encoded, list(path), mutated_leaf)
        try:
            rebuilt = st.decode_value(mutated)
        except Exception:
            continue
        if rebuilt != obj:
            return rebuilt
    return None
