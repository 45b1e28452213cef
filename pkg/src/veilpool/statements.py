"""Executable statement predicates behind a pluggable prove/verify backend.

Seven statements cover the whole protocol: the transfer arithmetic itself,
the three deposit-bootstrapping steps, withdrawal innocence, ancestral
exclusion of flagged commitments, and commitment masking. Every predicate is
a pure, total boolean function over (public inputs, witness).

The default backend is transparent: a proof embeds an authenticated copy of
the witness and verification re-executes the predicate. That preserves the
soundness and completeness semantics end to end while providing no secrecy;
the interface is shaped so a real succinct backend can replace it without
touching callers.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

from . import bloom
from .bloom import BloomFilter, BloomParams, Exclusion
from .errors import WitnessUnsatisfied
from .field import MODULUS, FieldElement, fe_from_bytes, fe_to_bytes
from .hashing import zk_hash, zk_hash_bytes
from .keys import derive_public_key, encrypt_with_ephemeral
from .trees import MerklePath, SmtProof, smt_verify, verify_path
from .utxo import (
    MAX_AMOUNT,
    INPUT_ARITIES,
    JoinSplitWitness,
    Utxo,
    commit,
    nullifier_value,
    tx_context_hash,
)


class StatementId(enum.Enum):
    JOINSPLIT = 1
    BOOTSTRAP_REQUEST = 2
    BOOTSTRAP_RESPONSE = 3
    DEPOSIT_BINDING = 4
    INNOCENCE = 5
    ANCESTRY = 6
    MASKING = 7


@dataclass(frozen=True)
class Statement:
    id: StatementId
    public_inputs: tuple


@dataclass(frozen=True)
class Proof:
    statement_id: StatementId
    public_inputs: tuple
    attestation: bytes

    @property
    def context_binding(self) -> FieldElement:
        """Transaction context the proof is pinned to (0 when standalone)."""
        slot = _CONTEXT_SLOT.get(self.statement_id)
        if slot is None or slot >= len(self.public_inputs):
            return 0
        return self.public_inputs[slot]

    def to_bytes(self) -> bytes:
        publics = _canonical_json(encode_value(self.public_inputs))
        return b"".join([
            bytes([self.statement_id.value]),
            len(publics).to_bytes(4, "big"),
            publics,
            len(self.attestation).to_bytes(4, "big"),
            self.attestation,
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Proof":
        sid = StatementId(data[0])
        publics_len = int.from_bytes(data[1:5], "big")
        publics = decode_value(json.loads(data[5:5 + publics_len]))
        pos = 5 + publics_len
        att_len = int.from_bytes(data[pos:pos + 4], "big")
        attestation = data[pos + 4:pos + 4 + att_len]
        if pos + 4 + att_len != len(data):
            raise ValueError("trailing bytes in proof encoding")
        return cls(statement_id=sid, public_inputs=publics, attestation=attestation)


_CONTEXT_SLOT = {
    StatementId.JOINSPLIT: 4,
    StatementId.INNOCENCE: 2,
    StatementId.ANCESTRY: 4,
}


# -- wire codec -----------------------------------------------------------
#
# Statements travel as canonical JSON: ints stay ints, bytes become tagged
# hex, tuples become arrays, and the handful of structured values carry a
# type tag so a witness can be rebuilt from its attestation alone.


def _canonical_json(value) -> bytes:
    return json.dumps(value, sort_keys=True, separators=(",", ":")).encode()


def encode_value(value):
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, bytes):
        return {"t": "b", "v": value.hex()}
    if isinstance(value, (tuple, list)):
        return [encode_value(v) for v in value]
    if isinstance(value, StatementId):
        return {"t": "sid", "v": value.value}
    if isinstance(value, MerklePath):
        return {
            "t": "path",
            "i": value.leaf_index,
            "s": [encode_value(s) for s in value.siblings],
            "d": list(value.indices),
        }
    if isinstance(value, SmtProof):
        return {
            "t": "smt",
            "k": value.key.hex(),
            "v": encode_value(value.value),
            "s": [encode_value(s) for s in value.siblings],
            "m": value.membership,
            "ck": value.conflict_key.hex() if value.conflict_key is not None else None,
            "cv": encode_value(value.conflict_value),
        }
    if isinstance(value, BloomFilter):
        return {
            "t": "bloom",
            "m": value.params.m,
            "k": value.params.k,
            "bits": hex(value.bits),
            "n": value.inserted_count,
        }
    if isinstance(value, Utxo):
        return {
            "t": "utxo",
            "a": value.amount,
            "pk": encode_value(value.owner_pk),
            "bl": encode_value(value.blinding),
            "cs": encode_value(value.chain_state),
            "li": value.leaf_index,
        }
    if isinstance(value, JoinSplitWitness):
        return {
            "t": "jsw",
            "in": [encode_value(entry) for entry in value.inputs],
            "out": [encode_value(out) for out in value.outputs],
        }
    if isinstance(value, _WITNESS_TYPES):
        payload = {name: encode_value(getattr(value, name)) for name in value.__dataclass_fields__}
        payload["t"] = _WITNESS_TAGS[type(value)]
        return payload
    raise TypeError(f"cannot encode {type(value).__name__}")


def decode_value(value):
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, list):
        return tuple(decode_value(v) for v in value)
    if isinstance(value, dict):
        tag = value.get("t")
        if tag == "b":
            return bytes.fromhex(value["v"])
        if tag == "sid":
            return StatementId(value["v"])
        if tag == "path":
            return MerklePath(
                leaf_index=value["i"],
                siblings=tuple(decode_value(s) for s in value["s"]),
                indices=tuple(value["d"]),
            )
        if tag == "smt":
            return SmtProof(
                key=bytes.fromhex(value["k"]),
                value=decode_value(value["v"]),
                siblings=tuple(decode_value(s) for s in value["s"]),
                membership=value["m"],
                conflict_key=bytes.fromhex(value["ck"]) if value["ck"] is not None else None,
                conflict_value=decode_value(value["cv"]),
            )
        if tag == "bloom":
            return BloomFilter(
                BloomParams(m=value["m"], k=value["k"]),
                int(value["bits"], 16),
                value["n"],
            )
        if tag == "utxo":
            return Utxo(
                amount=value["a"],
                owner_pk=decode_value(value["pk"]),
                blinding=decode_value(value["bl"]),
                chain_state=decode_value(value["cs"]),
                leaf_index=value["li"],
            )
        if tag == "jsw":
            return JoinSplitWitness(
                inputs=tuple(decode_value(entry) for entry in value["in"]),
                outputs=tuple(decode_value(out) for out in value["out"]),
            )
        if tag in _TAG_WITNESS:
            cls = _TAG_WITNESS[tag]
            fields = {k: decode_value(v) for k, v in value.items() if k != "t"}
            return cls(**fields)
    raise TypeError(f"cannot decode {value!r}")


# -- witnesses --------------------------------------------------------------


@dataclass(frozen=True)
class BootstrapRequestWitness:
    amount: int
    owner_pk: FieldElement
    blinding: FieldElement


@dataclass(frozen=True)
class BootstrapResponseWitness:
    commitment: FieldElement
    path: MerklePath
    blinding: FieldElement
    masked: FieldElement
    enc_pk: bytes
    eph_seed: bytes


@dataclass(frozen=True)
class DepositBindingWitness:
    masked_enc: bytes
    masked: FieldElement
    chain_state: BloomFilter


@dataclass(frozen=True)
class InnocenceWitness:
    # (utxo, main leaf index, sk, status path or None for dummies) per input
    inputs: tuple


@dataclass(frozen=True)
class AncestryWitness:
    parents: tuple
    merged: BloomFilter
    single: BloomFilter
    smt_proof: SmtProof


@dataclass(frozen=True)
class MaskingWitness:
    commitment: FieldElement
    blinding: FieldElement
    path: MerklePath


_WITNESS_TAGS = {
    BootstrapRequestWitness: "w_breq",
    BootstrapResponseWitness: "w_bresp",
    DepositBindingWitness: "w_bind",
    InnocenceWitness: "w_inno",
    AncestryWitness: "w_anc",
    MaskingWitness: "w_mask",
}
_WITNESS_TYPES = tuple(_WITNESS_TAGS)
_TAG_WITNESS = {tag: cls for cls, tag in _WITNESS_TAGS.items()}


# -- statement constructors ---------------------------------------------------


def joinsplit_statement(tx, remediation_pks: Sequence[FieldElement] = ()) -> Statement:
    publics = (
        tx.merkle_root,
        tuple(tx.input_nullifiers),
        tuple(tx.output_commitments),
        tx.public_amount,
        tx.tx_context,
        tx.remediation,
        tuple(remediation_pks) if tx.remediation else (),
    )
    return Statement(StatementId.JOINSPLIT, publics)


def bootstrap_request_statement(commitment: FieldElement) -> Statement:
    return Statement(StatementId.BOOTSTRAP_REQUEST, (commitment,))


def bootstrap_response_statement(
    bootstrap_root: FieldElement, masked_enc: bytes, masked_enc_hash: bytes
) -> Statement:
    return Statement(
        StatementId.BOOTSTRAP_RESPONSE, (bootstrap_root, masked_enc, masked_enc_hash)
    )


def deposit_binding_statement(
    masked_enc_hash: bytes, chain_state_commitment: FieldElement
) -> Statement:
    return Statement(StatementId.DEPOSIT_BINDING, (masked_enc_hash, chain_state_commitment))


def innocence_statement(
    status_root: FieldElement, nullifiers: Sequence[FieldElement], tx_context: FieldElement
) -> Statement:
    return Statement(StatementId.INNOCENCE, (status_root, tuple(nullifiers), tx_context))


def ancestry_statement(
    smt_root: FieldElement,
    flagged_key: bytes,
    chain_state_commitment: FieldElement,
    flag_count: int,
    tx_context: FieldElement,
) -> Statement:
    return Statement(
        StatementId.ANCESTRY,
        (smt_root, flagged_key, chain_state_commitment, flag_count, tx_context),
    )


def masking_statement(masked_key: bytes, mixer_root: FieldElement) -> Statement:
    return Statement(StatementId.MASKING, (masked_key, mixer_root))


def enc_digest(masked_enc: bytes, masked: FieldElement) -> bytes:
    """Byte-level digest binding the masked value to its ciphertext."""
    return hashlib.sha256(b"veilpool.encdigest.v1" + masked_enc + fe_to_bytes(masked)).digest()


def chain_state_commitment(chain_state: BloomFilter) -> FieldElement:
    """In-field binding of a filter's canonical serialization."""
    return zk_hash_bytes(chain_state.to_bytes())


# -- predicates ----------------------------------------------------------------


def _same_bits(a: BloomFilter, b: BloomFilter) -> bool:
    return a.params == b.params and a.bits == b.bits


def eval_joinsplit(publics: tuple, witness: JoinSplitWitness) -> bool:
    root, nullifiers, out_comms, public_amount, ctx, remediation, rem_pks = publics
    if len(witness.inputs) != len(nullifiers) or len(nullifiers) not in INPUT_ARITIES:
        return False
    if len(witness.outputs) != 2 or len(out_comms) != 2:
        return False
    if not -(1 << 63) <= public_amount < 1 << 63:
        return False

    params = witness.outputs[0].chain_state.params
    total_in = 0
    union_bits = None
    for (utxo, path, sk), nullifier in zip(witness.inputs, nullifiers):
        if derive_public_key(sk) != utxo.owner_pk:
            return False
        commitment = commit(utxo)
        if path is not None:
            if not verify_path(root, commitment, path):
                return False
            if utxo.chain_state.params != params:
                return False
            union_bits = utxo.chain_state.bits | (union_bits or 0)
            leaf_index = path.leaf_index
        else:
            if utxo.amount != 0:
                return False
            leaf_index = 0
        if nullifier_value(commitment, leaf_index, sk) != nullifier:
            return False
        total_in += utxo.amount

    total_out = 0
    for out, expected in zip(witness.outputs, out_comms):
        if not 0 <= out.amount < MAX_AMOUNT:
            return False
        if out.chain_state.params != params:
            return False
        if commit(out) != expected:
            return False
        total_out += out.amount
    if total_in + public_amount != total_out:
        return False

    if union_bits is not None:
        if any(out.chain_state.bits != union_bits for out in witness.outputs):
            return False
    elif witness.outputs[0].chain_state.bits != witness.outputs[1].chain_state.bits:
        return False

    if remediation:
        if not rem_pks:
            return False
        for out in witness.outputs:
            if out.amount > 0 and out.owner_pk not in rem_pks:
                return False

    return ctx == tx_context_hash(root, nullifiers, out_comms, public_amount)


def eval_bootstrap_request(publics: tuple, witness: BootstrapRequestWitness) -> bool:
    (commitment,) = publics
    if not 0 <= witness.amount < MAX_AMOUNT:
        return False
    return zk_hash([witness.amount, witness.owner_pk, witness.blinding]) == commitment


def eval_bootstrap_response(publics: tuple, witness: BootstrapResponseWitness) -> bool:
    bootstrap_root, masked_enc, masked_enc_hash = publics
    if not verify_path(bootstrap_root, witness.commitment, witness.path):
        return False
    if zk_hash([witness.commitment, witness.blinding]) != witness.masked:
        return False
    # encryption correctness is proven by re-encrypting with the witnessed seed
    sealed = encrypt_with_ephemeral(witness.enc_pk, fe_to_bytes(witness.masked), witness.eph_seed)
    if sealed != masked_enc:
        return False
    return enc_digest(masked_enc, witness.masked) == masked_enc_hash


def eval_deposit_binding(publics: tuple, witness: DepositBindingWitness) -> bool:
    masked_enc_hash, state_commitment = publics
    if enc_digest(witness.masked_enc, witness.masked) != masked_enc_hash:
        return False
    expected = bloom.encode_single(witness.masked, witness.chain_state.params)
    if not _same_bits(witness.chain_state, expected):
        return False
    return chain_state_commitment(witness.chain_state) == state_commitment


def eval_innocence(publics: tuple, witness: InnocenceWitness) -> bool:
    status_root, nullifiers, _ctx = publics
    if len(witness.inputs) != len(nullifiers) or len(nullifiers) not in INPUT_ARITIES:
        return False
    for (utxo, leaf_index, sk, status_path), nullifier in zip(witness.inputs, nullifiers):
        if derive_public_key(sk) != utxo.owner_pk:
            return False
        commitment = commit(utxo)
        if nullifier_value(commitment, leaf_index, sk) != nullifier:
            return False
        if utxo.amount != 0:
            # allowed-status leaf for this commitment must sit in the tree
            leaf = zk_hash([commitment, 1])
            if status_path is None or not verify_path(status_root, leaf, status_path):
                return False
    return True


def eval_ancestry(publics: tuple, witness: AncestryWitness) -> bool:
    smt_root, flagged_key, state_commitment, flag_count, _ctx = publics
    if not witness.parents or flag_count < 1 or len(flagged_key) != 32:
        return False
    merged = witness.parents[0]
    for parent in witness.parents[1:]:
        if parent.params != merged.params:
            return False
        merged = bloom.union([merged, parent])
    if not _same_bits(witness.merged, merged):
        return False
    if chain_state_commitment(witness.merged) != state_commitment:
        return False
    flagged = fe_from_bytes(flagged_key)
    if not _same_bits(witness.single, bloom.encode_single(flagged, merged.params)):
        return False
    proof = witness.smt_proof
    if not proof.membership or proof.key != flagged_key:
        return False
    if proof.value != chain_state_commitment(witness.single):
        return False
    if not smt_verify(smt_root, proof):
        return False
    return bloom.exclusion_check(witness.merged, witness.single) is Exclusion.CERTAINLY_EXCLUDED


def eval_masking(publics: tuple, witness: MaskingWitness) -> bool:
    masked_key, mixer_root = publics
    if len(masked_key) != 32:
        return False
    if zk_hash([witness.commitment, witness.blinding]) != fe_from_bytes(masked_key):
        return False
    return verify_path(mixer_root, witness.commitment, witness.path)


_PREDICATES = {
    StatementId.JOINSPLIT: (eval_joinsplit, JoinSplitWitness),
    StatementId.BOOTSTRAP_REQUEST: (eval_bootstrap_request, BootstrapRequestWitness),
    StatementId.BOOTSTRAP_RESPONSE: (eval_bootstrap_response, BootstrapResponseWitness),
    StatementId.DEPOSIT_BINDING: (eval_deposit_binding, DepositBindingWitness),
    StatementId.INNOCENCE: (eval_innocence, InnocenceWitness),
    StatementId.ANCESTRY: (eval_ancestry, AncestryWitness),
    StatementId.MASKING: (eval_masking, MaskingWitness),
}


def evaluate(statement: Statement, witness) -> bool:
    """Run a statement's predicate; malformed inputs evaluate to False."""
    predicate, witness_type = _PREDICATES[statement.id]
    if not isinstance(witness, witness_type):
        return False
    try:
        return bool(predicate(statement.public_inputs, witness))
    except Exception:
        return False


# -- backend --------------------------------------------------------------------


class ProofBackend(Protocol):
    def prove(self, statement: Statement, witness) -> Proof: ...

    def verify(self, proof: Proof) -> bool: ...


class TransparentBackend:
    """Re-executing backend: sound and complete, explicitly not hiding."""

    def prove(self, statement: Statement, witness) -> Proof:
        if not evaluate(statement, witness):
            raise WitnessUnsatisfied(f"{statement.id.name} predicate is false")
        witness_json = _canonical_json(encode_value(witness))
        tag = self._tag(statement.id, statement.public_inputs, witness_json)
        return Proof(
            statement_id=statement.id,
            public_inputs=statement.public_inputs,
            attestation=witness_json + tag,
        )

    def verify(self, proof: Proof) -> bool:
        if len(proof.attestation) < 32:
            return False
        witness_json, tag = proof.attestation[:-32], proof.attestation[-32:]
        try:
            expected = self._tag(proof.statement_id, proof.public_inputs, witness_json)
        except Exception:
            return False
        if tag != expected:
            return False
        try:
            witness = decode_value(json.loads(witness_json))
        except Exception:
            return False
        return evaluate(Statement(proof.statement_id, proof.public_inputs), witness)

    @staticmethod
    def _tag(statement_id: StatementId, publics: tuple, witness_json: bytes) -> bytes:
        digest = hashlib.sha256()
        digest.update(b"veilpool.attest.v1")
        digest.update(bytes([statement_id.value]))
        digest.update(_canonical_json(encode_value(publics)))
        digest.update(witness_json)
        return digest.digest()


DEFAULT_BACKEND = TransparentBackend()


def prove(statement: Statement, witness, backend: Optional[ProofBackend] = None) -> Proof:
    return (backend or DEFAULT_BACKEND).prove(statement, witness)


def verify(proof: Proof, backend: Optional[ProofBackend] = None) -> bool:
    return (backend or DEFAULT_BACKEND).verify(proof)


def extract_witness(proof: Proof):
    """Recover the attested witness of a transparent proof, or None.

    Only the transparent backend exposes witnesses; the simulated contracts
    use this where a real circuit would constrain private values in place.
    """
    if len(proof.attestation) < 32:
        return None
    try:
        return decode_value(json.loads(proof.attestation[:-32]))
    except Exception:
        return None
