"""Private notes and the two-or-sixteen-in, two-out transfer format.

A note commits to (amount, owner key, blinding); its bloom chain state rides
outside the commitment, inside the encrypted payload. Spend tags are derived
from the commitment, its leaf position and a keyed hash standing in for the
owner's signature, so the same note at the same position always nullifies to
the same value while revealing neither.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .bloom import BloomFilter, BloomParams
from .errors import (
    AmountOutOfRange,
    ArityViolation,
    ChainStateMismatch,
    DoubleSpend,
    DummyWithValue,
    KeyMismatch,
    ParamMismatch,
    ValueImbalance,
)
from .field import MODULUS, FieldElement, fe_to_bytes, random_field_element
from .hashing import zk_hash, zk_hash_many
from .keys import derive_public_key, encrypt
from .trees import MerklePath, verify_path

MAX_AMOUNT = 1 << 64
INPUT_ARITIES = (2, 16)
OUTPUT_ARITY = 2


@dataclass(frozen=True)
class Utxo:
    amount: int
    owner_pk: FieldElement
    blinding: FieldElement
    chain_state: BloomFilter
    leaf_index: Optional[int] = None

    def with_leaf_index(self, index: int) -> "Utxo":
        return replace(self, leaf_index=index)


def commit(utxo: Utxo) -> FieldElement:
    if not 0 <= utxo.amount < MAX_AMOUNT:
        raise AmountOutOfRange(f"amount {utxo.amount} outside [0, 2^64)")
    return zk_hash([utxo.amount, utxo.owner_pk, utxo.blinding])


def nullifier_value(commitment: FieldElement, leaf_index: int, sk: FieldElement) -> FieldElement:
    """Spend tag: the inner keyed hash stands in for an ownership signature."""
    return zk_hash([commitment, leaf_index, zk_hash([sk, commitment, leaf_index])])


def derive_nullifier(utxo: Utxo, leaf_index: int, sk: FieldElement) -> FieldElement:
    if derive_public_key(sk) != utxo.owner_pk:
        raise KeyMismatch("spend key does not own this note")
    return nullifier_value(commit(utxo), leaf_index, sk)


def make_dummy(owner_pk: FieldElement, params: BloomParams, rng: random.Random) -> Utxo:
    """Zero-amount padding note; skips path checks in every statement."""
    return Utxo(
        amount=0,
        owner_pk=owner_pk,
        blinding=random_field_element(rng),
        chain_state=BloomFilter(params),
    )


def tx_context_hash(
    merkle_root: FieldElement,
    input_nullifiers: Sequence[FieldElement],
    output_commitments: Sequence[FieldElement],
    public_amount: int,
) -> FieldElement:
    """Binding hash over the exact transaction context, in calldata order."""
    values = [merkle_root, *input_nullifiers, *output_commitments, public_amount % MODULUS]
    return zk_hash_many(values)


@dataclass(frozen=True)
class JoinSplitTx:
    input_nullifiers: tuple
    output_commitments: tuple
    public_amount: int
    merkle_root: FieldElement
    encrypted_outputs: tuple
    tx_context: FieldElement
    remediation: bool = False

    def to_bytes(self) -> bytes:
        out = [
            fe_to_bytes(self.merkle_root),
            bytes([len(self.input_nullifiers)]),
        ]
        out.extend(fe_to_bytes(n) for n in self.input_nullifiers)
        out.extend(fe_to_bytes(c) for c in self.output_commitments)
        out.append(struct.pack(">q", self.public_amount))
        out.append(bytes([int(self.remediation)]))
        out.append(fe_to_bytes(self.tx_context))
        for ct in self.encrypted_outputs:
            out.append(struct.pack(">I", len(ct)))
            out.append(ct)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "JoinSplitTx":
        from .field import fe_from_bytes

        pos = 0
        root = fe_from_bytes(data[pos:pos + 32]); pos += 32
        n_in = data[pos]; pos += 1
        if n_in not in INPUT_ARITIES:
            raise ArityViolation(f"{n_in} inputs on the wire")
        nulls = []
        for _ in range(n_in):
            nulls.append(fe_from_bytes(data[pos:pos + 32])); pos += 32
        outs = []
        for _ in range(OUTPUT_ARITY):
            outs.append(fe_from_bytes(data[pos:pos + 32])); pos += 32
        (public_amount,) = struct.unpack(">q", data[pos:pos + 8]); pos += 8
        remediation = bool(data[pos]); pos += 1
        ctx = fe_from_bytes(data[pos:pos + 32]); pos += 32
        cts = []
        for _ in range(OUTPUT_ARITY):
            (length,) = struct.unpack(">I", data[pos:pos + 4]); pos += 4
            cts.append(data[pos:pos + length]); pos += length
        if pos != len(data):
            raise ValueError("trailing bytes in transaction encoding")
        return cls(
            input_nullifiers=tuple(nulls),
            output_commitments=tuple(outs),
            public_amount=public_amount,
            merkle_root=root,
            encrypted_outputs=tuple(cts),
            tx_context=ctx,
            remediation=remediation,
        )


@dataclass(frozen=True)
class JoinSplitWitness:
    """Private side of a transfer: full notes, paths and spend keys."""

    inputs: tuple  # (Utxo, MerklePath | None, sk) per input
    outputs: tuple  # exactly two Utxos


def utxo_plaintext(utxo: Utxo) -> bytes:
    """Payload sealed to the recipient: amount(8) || blinding(32) || chain state."""
    return utxo.amount.to_bytes(8, "big") + fe_to_bytes(utxo.blinding) + utxo.chain_state.to_bytes()


def utxo_from_plaintext(data: bytes, owner_pk: FieldElement) -> Utxo:
    from .field import fe_from_bytes

    if len(data) < 40:
        raise ValueError("truncated note plaintext")
    amount = int.from_bytes(data[:8], "big")
    blinding = fe_from_bytes(data[8:40])
    chain_state = BloomFilter.from_bytes(data[40:])
    filt = chain_state
    # wire format carries no local accounting, recover a lower-bound estimate
    estimated = -(-filt.popcount() // filt.params.k)
    filt = BloomFilter(filt.params, filt.bits, estimated)
    return Utxo(amount=amount, owner_pk=owner_pk, blinding=blinding, chain_state=filt)


def build_joinsplit(
    inputs: Sequence[tuple],
    outputs: Sequence[Utxo],
    public_amount: int,
    recipient_enc_pks: Sequence[bytes],
    rng: random.Random,
    remediation: bool = False,
) -> tuple[JoinSplitTx, JoinSplitWitness]:
    """Assemble a transfer from padded inputs and two completed outputs.

    Inputs are (utxo, path, sk) triples already padded with dummies to an
    allowed arity; dummies carry no path and must carry no value. Output
    chain states must equal the union of the pathful inputs' states (or
    match each other for a pure deposit, where the binding proof vouches
    for their content).
    """
    if len(inputs) not in INPUT_ARITIES:
        raise ArityViolation(f"joinsplit takes 2 or 16 inputs, got {len(inputs)}")
    if len(outputs) != OUTPUT_ARITY or len(recipient_enc_pks) != OUTPUT_ARITY:
        raise ArityViolation("joinsplit produces exactly 2 outputs")
    if not -(1 << 63) <= public_amount < 1 << 63:
        raise AmountOutOfRange("public amount outside signed 64-bit range")

    total_in = 0
    union_bits = None
    params = outputs[0].chain_state.params
    for utxo, path, sk in inputs:
        if derive_public_key(sk) != utxo.owner_pk:
            raise KeyMismatch("input not owned by the supplied key")
        if path is None:
            if utxo.amount != 0:
                raise DummyWithValue("pathless input with nonzero amount")
        else:
            if utxo.chain_state.params != params:
                raise ParamMismatch("input chain state parameters differ")
            union_bits = utxo.chain_state.bits | (union_bits or 0)
        total_in += utxo.amount

    total_out = 0
    for out in outputs:
        if not 0 <= out.amount < MAX_AMOUNT:
            raise AmountOutOfRange(f"output amount {out.amount}")
        if out.chain_state.params != params:
            raise ParamMismatch("output chain state parameters differ")
        total_out += out.amount
    if total_in + public_amount != total_out:
        raise ValueImbalance(f"{total_in} + {public_amount} != {total_out}")

    if union_bits is not None:
        for out in outputs:
            if out.chain_state.bits != union_bits:
                raise ChainStateMismatch("outputs must inherit the input union")
    elif outputs[0].chain_state.bits != outputs[1].chain_state.bits:
        raise ChainStateMismatch("deposit outputs must share one chain state")

    nullifiers = []
    for utxo, path, sk in inputs:
        leaf_index = path.leaf_index if path is not None else 0
        nullifiers.append(nullifier_value(commit(utxo), leaf_index, sk))
    if len(set(nullifiers)) != len(nullifiers):
        raise DoubleSpend("duplicate input within one transaction")

    out_commitments = tuple(commit(out) for out in outputs)
    merkle_root = _root_from_inputs(inputs)
    ctx = tx_context_hash(merkle_root, nullifiers, out_commitments, public_amount)
    encrypted = tuple(
        encrypt(pk, utxo_plaintext(out), rng) for pk, out in zip(recipient_enc_pks, outputs)
    )
    tx = JoinSplitTx(
        input_nullifiers=tuple(nullifiers),
        output_commitments=out_commitments,
        public_amount=public_amount,
        merkle_root=merkle_root,
        encrypted_outputs=encrypted,
        tx_context=ctx,
        remediation=remediation,
    )
    return tx, JoinSplitWitness(inputs=tuple(inputs), outputs=tuple(outputs))


def _root_from_inputs(inputs: Sequence[tuple]) -> FieldElement:
    """All pathful inputs must have been proven against one snapshot root."""
    roots = set()
    for utxo, path, _sk in inputs:
        if path is not None:
            node = commit(utxo)
            for sibling, bit in zip(path.siblings, path.indices):
                node = zk_hash([sibling, node]) if bit else zk_hash([node, sibling])
            roots.add(node)
    if len(roots) > 1:
        raise ValueError("input paths target different roots")
    return roots.pop() if roots else 0


def validate_joinsplit(
    tx: JoinSplitTx,
    recent_roots: Sequence[FieldElement],
    nullifier_set,
) -> list[tuple[str, object]]:
    """Stateful admission checks; proof and compliance checks live elsewhere.

    Returns a list of (code, detail) violations, empty when admissible.
    """
    violations: list[tuple[str, object]] = []
    if len(tx.input_nullifiers) not in INPUT_ARITIES:
        violations.append(("ArityViolation", len(tx.input_nullifiers)))
    if len(tx.output_commitments) != OUTPUT_ARITY or len(tx.encrypted_outputs) != OUTPUT_ARITY:
        violations.append(("ArityViolation", "outputs"))
    # root 0 means "no membership claims", the pure-deposit shape
    if tx.merkle_root != 0 and tx.merkle_root not in recent_roots:
        violations.append(("StaleRoot", tx.merkle_root))
    seen = set()
    for nullifier in tx.input_nullifiers:
        if nullifier in nullifier_set or nullifier in seen:
            violations.append(("DoubleSpend", nullifier))
        seen.add(nullifier)
    expected = tx_context_hash(
        tx.merkle_root, tx.input_nullifiers, tx.output_commitments, tx.public_amount
    )
    if tx.tx_context != expected:
        violations.append(("ContextMismatch", tx.tx_context))
    return violations
