"""Deterministic in-process ledger: mixer, flag registry, users, event log.

Every state-changing call arrives as a signed UserOp through ``handle_ops``,
which realizes the mandatory-relayer rule structurally. Ops are validated
first and applied atomically: a failed op leaves the state hash untouched
(its nonce included). Replaying the journal from genesis reproduces a
byte-identical state.

Compliance statuses for new commitments come from a registered hook; a
Pending answer defers the status-tree leaf until the authority resolves it,
so the status tree is in lockstep with the commitment tree at every
quiescent point.
"""

from __future__ import annotations

import enum
import hashlib
import hmac as hmac_mod
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from . import statements as st
from .bloom import BloomParams, RateLimitConfig
from .errors import (
    AlreadyRegistered,
    ArityViolation,
    BadSignature,
    ComplianceHookUnavailable,
    ContextMismatch,
    DoubleSpend,
    EpochLimitExceeded,
    InsufficientFunds,
    InvalidProof,
    KeyConflict,
    MissingBootstrap,
    MissingCoverage,
    NonceReplay,
    NotAuthorized,
    PoolError,
    RepeatBootstrap,
    StaleRoot,
    StepBudgetExceeded,
    TreeFull,
    UnknownAccount,
    UnknownDeposit,
    ValueImbalance,
)
from .field import fe_to_bytes
from .hashing import zk_hash, zk_hash_bytes
from .statements import Proof, StatementId
from .trees import AppendTree, SparseTree
from .utxo import JoinSplitTx, commit, validate_joinsplit

ACCOUNT_BYTES = 32
BURN_ACCOUNT = hashlib.sha256(b"veilpool.burn.account.v1").digest()
TREASURY_ACCOUNT = hashlib.sha256(b"veilpool.treasury.account.v1").digest()
# spend key with no known preimage: value burnt here is gone for good
BURN_SPEND_PK = zk_hash_bytes(b"veilpool.burn.spend.v1")
BURN_ENC_PK = hashlib.sha256(b"veilpool.burn.enc.v1").digest()


class EventKind(enum.Enum):
    BOOTSTRAP_INIT = "BootstrapInit"
    BOOTSTRAPPED_DATA = "BootstrappedData"
    NEW_COMMITMENT = "NewCommitment"
    NEW_NULLIFIER = "NewNullifier"
    STATUS_FLAGGED = "StatusFlagged"
    USER_REGISTERED = "UserRegistered"
    ENCRYPTED_BLOB = "EncryptedBlob"


@dataclass(frozen=True)
class Event:
    kind: EventKind
    payload: bytes
    block: int


class PoiStatus(enum.Enum):
    ALLOWED = 1
    ILLICIT = 0
    PENDING = -1


@dataclass(frozen=True)
class ComplianceContext:
    kind: str  # deposit | transfer | withdraw
    commitment: int
    depositor_external: Optional[str]
    parent_commitments: tuple


ComplianceHook = Callable[[ComplianceContext], PoiStatus]


@dataclass(frozen=True)
class UserOp:
    sender: bytes
    nonce: int  # (key << 64) | seq over 256 bits
    call: tuple  # (name, args dict)
    signature: bytes

    @property
    def nonce_key(self) -> int:
        return self.nonce >> 64

    @property
    def nonce_seq(self) -> int:
        return self.nonce & ((1 << 64) - 1)

    def to_wire(self):
        return {
            "sender": self.sender.hex(),
            "nonce": self.nonce,
            "call": st.encode_value(self.call),
            "sig": self.signature.hex(),
        }

    @classmethod
    def from_wire(cls, data) -> "UserOp":
        return cls(
            sender=bytes.fromhex(data["sender"]),
            nonce=data["nonce"],
            call=st.decode_value(data["call"]),
            signature=bytes.fromhex(data["sig"]),
        )


def op_digest(sender: bytes, nonce: int, call: tuple) -> bytes:
    body = sender + nonce.to_bytes(32, "big") + st._canonical_json(st.encode_value(call))
    return hashlib.sha256(b"veilpool.userop.v1" + body).digest()


def sign_op(op_key: bytes, sender: bytes, nonce: int, call: tuple) -> bytes:
    """Keyed-MAC stand-in for the account signature scheme."""
    return hmac_mod.new(op_key, op_digest(sender, nonce, call), hashlib.sha256).digest()


def make_user_op(op_key: bytes, sender: bytes, nonce: int, name: str, args: dict) -> UserOp:
    call = (name, tuple(sorted(args.items())))
    return UserOp(sender=sender, nonce=nonce, call=call, signature=sign_op(op_key, sender, nonce, call))


@dataclass
class OpResult:
    ok: bool
    error: Optional[str] = None
    detail: str = ""
    data: dict = field(default_factory=dict)


@dataclass(frozen=True)
class LedgerConfig:
    tree_height: int = 20
    smt_height: int = 64
    bloom_m: int = 1 << 14
    bloom_k: int = 2
    epoch_blocks: int = 100
    step_budget: int = 10_000
    root_history: int = 100
    tau_base: float = 0.05
    alpha: float = 0.0

    @property
    def bloom_params(self) -> BloomParams:
        return BloomParams(m=self.bloom_m, k=self.bloom_k)

    @property
    def rate_config(self) -> RateLimitConfig:
        return RateLimitConfig(tau_base=self.tau_base, alpha=self.alpha, window=self.epoch_blocks)

    @property
    def epoch_flag_cap(self) -> int:
        return self.bloom_m // (2 * self.bloom_k)

    def to_wire(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class _UserRecord:
    spend_pk: int
    enc_pk: bytes
    op_key: Optional[bytes]
    external: str


class Ledger:
    """Single-writer contract state machine with an ordered event log."""

    def __init__(self, config: LedgerConfig = LedgerConfig()):
        self.config = config
        self.genesis_id = hashlib.sha256(
            b"veilpool.genesis.v1" + st._canonical_json(config.to_wire())
        ).hexdigest()[:16]
        self.block_height = 0
        self.events: list[Event] = []
        # mixer state
        self.commitment_tree = AppendTree(config.tree_height, config.root_history)
        self.poi_tree = AppendTree(config.tree_height, config.root_history)
        self.bootstrap_tree = AppendTree(config.tree_height, config.root_history)
        self.nullifiers: set[int] = set()
        self.bootstrap_requested: dict[bytes, bool] = {}
        self.registered_enc_hashes: set[bytes] = set()
        self._poi_index: dict[int, int] = {}
        self._pending_status: dict[int, bool] = {}
        # flag registry
        self.smt = SparseTree(config.smt_height, config.root_history)
        self.flagged: list[tuple[bytes, int]] = []
        self._epoch_flags: dict[int, int] = {}
        # accounts and balances
        self.users: dict[bytes, _UserRecord] = {
            BURN_ACCOUNT: _UserRecord(BURN_SPEND_PK, BURN_ENC_PK, None, "burn"),
        }
        self.blobs: list[tuple[bytes, bytes]] = []
        self.nonce_table: dict[tuple[bytes, int], int] = {}
        self.external_balances: dict[str, int] = {}
        self.pool_balance = 0
        self._volume: dict[int, int] = {}
        # wiring
        self._hook: Optional[ComplianceHook] = None
        self.authority_account: Optional[bytes] = None
        self._journal: list = []
        self._hook_trace: Optional[list] = None
        self._handlers = {
            "register_user": self._op_register_user,
            "bootstrap_init": self._op_bootstrap_init,
            "bootstrap_data": self._op_bootstrap_data,
            "deposit": self._op_deposit,
            "transact": self._op_transact,
            "withdraw": self._op_withdraw,
            "smt_flag": self._op_smt_flag,
            "insert_encrypted_data": self._op_insert_blob,
            "resolve_status": self._op_resolve_status,
        }

    # -- wiring and simulation controls ------------------------------------

    def register_compliance_hook(self, hook: ComplianceHook, authority_account: bytes) -> None:
        self._hook = hook
        self.authority_account = authority_account

    def fund_external(self, address: str, amount: int) -> None:
        """Genesis faucet standing in for on-chain token balances."""
        if amount < 0:
            raise ValueError("cannot fund a negative amount")
        self.external_balances[address] = self.external_balances.get(address, 0) + amount
        self._journal.append(("fund", address, amount))

    def advance_block(self, count: int = 1) -> int:
        if count < 1:
            raise ValueError("advance at least one block")
        self.block_height += count
        self._journal.append(("advance", count))
        return self.block_height

    # -- op pipeline ----------------------------------------------------------

    def handle_ops(self, ops: Sequence[UserOp]) -> list[OpResult]:
        """Validate and execute a batch; each op applies atomically or not at all."""
        trace: list = []
        self._hook_trace = trace
        results = []
        try:
            for op in ops:
                results.append(self._apply_op(op))
        finally:
            self._hook_trace = None
        self._journal.append(("ops", [op.to_wire() for op in ops], trace))
        return results

    def _apply_op(self, op: UserOp) -> OpResult:
        try:
            name, args_items = op.call
            args = dict(args_items)
            if name not in self._handlers:
                raise PoolError(f"unknown call {name!r}")
            self._check_signature(op, name, args)
            self._check_nonce(op)
            if self._step_cost(name, args) > self.config.step_budget:
                raise StepBudgetExceeded(f"{name} exceeds the per-op step budget")
            data = self._handlers[name](op.sender, args)
        except PoolError as exc:
            return OpResult(ok=False, error=type(exc).__name__, detail=str(exc))
        except (KeyError, TypeError, ValueError, struct.error) as exc:
            # malformed calldata is rejected like any other invalid op
            return OpResult(ok=False, error="MalformedOp", detail=repr(exc))
        # effects done; consume the nonce only for applied ops so that a
        # rejected op leaves literally no trace in the state hash
        self.nonce_table[(op.sender, op.nonce_key)] = op.nonce_seq + 1
        return OpResult(ok=True, data=data or {})

    def _check_signature(self, op: UserOp, name: str, args: dict) -> None:
        if name == "register_user":
            op_key = args.get("op_key")
        else:
            record = self.users.get(op.sender)
            if record is None:
                raise UnknownAccount("sender is not registered")
            op_key = record.op_key
        if not isinstance(op_key, bytes) or not op_key:
            raise BadSignature("no signing key for sender")
        expected = sign_op(op_key, op.sender, op.nonce, op.call)
        if not hmac_mod.compare_digest(expected, op.signature):
            raise BadSignature("op signature mismatch")

    def _check_nonce(self, op: UserOp) -> None:
        if not 0 <= op.nonce < 1 << 256:
            raise NonceReplay("nonce out of range")
        expected = self.nonce_table.get((op.sender, op.nonce_key), 0)
        if op.nonce_seq != expected:
            raise NonceReplay(f"expected seq {expected}, got {op.nonce_seq}")

    def next_nonce(self, sender: bytes, key: int = 0) -> int:
        return (key << 64) | self.nonce_table.get((sender, key), 0)

    @staticmethod
    def _step_cost(name: str, args: dict) -> int:
        cost = 10
        for value in args.values():
            if isinstance(value, bytes):
                cost += 2 + len(value) // 64
        if name in ("deposit", "withdraw"):
            cost += 120
        elif name == "transact":
            cost += 150
        elif name == "smt_flag":
            cost += 80
        return cost

    # -- events --------------------------------------------------------------------

    def _emit(self, kind: EventKind, payload: bytes) -> None:
        self.events.append(Event(kind=kind, payload=payload, block=self.block_height))

    def scan_events(self, from_block: int = 0, kinds: Optional[set] = None) -> list[Event]:
        return [
            event
            for event in self.events
            if event.block >= from_block and (kinds is None or event.kind in kinds)
        ]

    # -- handlers -----------------------------------------------------------------

    def _op_register_user(self, sender: bytes, args: dict) -> dict:
        if sender in self.users:
            raise AlreadyRegistered("account already registered")
        if len(sender) != ACCOUNT_BYTES:
            raise UnknownAccount("account ids are 32 bytes")
        spend_pk, enc_pk, op_key = args["spend_pk"], args["enc_pk"], args["op_key"]
        external = args.get("external", "")
        self.users[sender] = _UserRecord(spend_pk, enc_pk, op_key, external)
        self._emit(EventKind.USER_REGISTERED, sender + fe_to_bytes(spend_pk) + enc_pk)
        return {}

    def _op_bootstrap_init(self, sender: bytes, args: dict) -> dict:
        self._require_registered(sender)
        if self.bootstrap_requested.get(sender):
            raise RepeatBootstrap("bootstrapping already requested for this account")
        commitment, enc_pk = args["commitment"], args["enc_pk"]
        proof = Proof.from_bytes(args["proof"])
        if proof.statement_id is not StatementId.BOOTSTRAP_REQUEST:
            raise InvalidProof("wrong statement for bootstrap request")
        if proof.public_inputs != (commitment,) or not st.verify(proof):
            raise InvalidProof("bootstrap request proof rejected")
        if self.bootstrap_tree.leaf_count >= 1 << self.config.tree_height:
            raise TreeFull("bootstrap tree is full")
        self.bootstrap_requested[sender] = True
        self.bootstrap_tree.append(commitment)
        self._emit(EventKind.BOOTSTRAP_INIT, fe_to_bytes(commitment) + enc_pk)
        return {"bootstrap_root": self.bootstrap_tree.root}

    def _op_bootstrap_data(self, sender: bytes, args: dict) -> dict:
        self._require_registered(sender)
        masked_enc, masked_enc_hash = args["masked_enc"], args["masked_enc_hash"]
        proof = Proof.from_bytes(args["proof"])
        if proof.statement_id is not StatementId.BOOTSTRAP_RESPONSE:
            raise InvalidProof("wrong statement for bootstrap response")
        root = proof.public_inputs[0]
        if not self.bootstrap_tree.knows_root(root):
            raise StaleRoot("bootstrap proof against an unknown root")
        if proof.public_inputs[1:] != (masked_enc, masked_enc_hash) or not st.verify(proof):
            raise InvalidProof("bootstrap response proof rejected")
        self.registered_enc_hashes.add(masked_enc_hash)
        payload = struct.pack(">I", len(masked_enc)) + masked_enc + masked_enc_hash
        self._emit(EventKind.BOOTSTRAPPED_DATA, payload)
        return {}

    def _parse_tx(self, args: dict) -> JoinSplitTx:
        return JoinSplitTx.from_bytes(args["tx"])

    def _admit_joinsplit(self, tx: JoinSplitTx, proof: Proof, remediation_ok: bool) -> None:
        capacity = 1 << self.config.tree_height
        if self.commitment_tree.leaf_count + len(tx.output_commitments) > capacity:
            raise TreeFull("commitment tree is full")
        violations = validate_joinsplit(tx, self.commitment_tree.recent_roots, self.nullifiers)
        for code, detail in violations:
            raise {
                "StaleRoot": StaleRoot,
                "DoubleSpend": DoubleSpend,
                "ArityViolation": ArityViolation,
                "ContextMismatch": ContextMismatch,
            }[code](str(detail))
        if proof.statement_id is not StatementId.JOINSPLIT:
            raise InvalidProof("wrong statement for a transfer")
        if tx.remediation and not remediation_ok:
            raise InvalidProof("remediation shape not allowed for this call")
        expected = st.joinsplit_statement(tx, self.remediation_pks() if tx.remediation else ())
        if proof.public_inputs != expected.public_inputs:
            raise InvalidProof("transfer proof does not match the transaction")
        if not st.verify(proof):
            raise InvalidProof("transfer proof rejected")

    def _witness_of(self, proof: Proof):
        witness = st.extract_witness(proof)
        if witness is None:
            raise InvalidProof("attestation does not carry a witness")
        return witness

    def _require_registered(self, sender: bytes) -> _UserRecord:
        record = self.users.get(sender)
        if record is None:
            raise UnknownAccount("sender is not registered")
        return record

    def _require_hook(self) -> ComplianceHook:
        if self._hook is None:
            raise ComplianceHookUnavailable("no compliance hook registered")
        return self._hook

    def _op_deposit(self, sender: bytes, args: dict) -> dict:
        record = self._require_registered(sender)
        hook = self._require_hook()
        tx = self._parse_tx(args)
        if tx.public_amount <= 0:
            raise ValueImbalance("deposits must add value to the pool")
        tx_proof = Proof.from_bytes(args["tx_proof"])
        self._admit_joinsplit(tx, tx_proof, remediation_ok=False)
        binding = Proof.from_bytes(args["binding_proof"])
        if binding.statement_id is not StatementId.DEPOSIT_BINDING:
            raise InvalidProof("wrong statement for the deposit binding")
        masked_enc_hash, state_commitment = binding.public_inputs
        if masked_enc_hash not in self.registered_enc_hashes:
            raise MissingBootstrap("deposit references an unregistered bootstrap digest")
        if not st.verify(binding):
            raise InvalidProof("deposit binding proof rejected")
        witness = self._witness_of(tx_proof)
        if st.chain_state_commitment(witness.outputs[0].chain_state) != state_commitment:
            raise InvalidProof("deposit outputs do not carry the bootstrapped state")
        if self.external_balances.get(record.external, 0) < tx.public_amount:
            raise InsufficientFunds("external balance below deposit amount")
        # effects
        self.external_balances[record.external] -= tx.public_amount
        self._absorb_transaction(tx, witness, hook, "deposit", record.external)
        return {"leaf_indices": self._last_leaf_indices(tx)}

    def _op_transact(self, sender: bytes, args: dict) -> dict:
        self._require_registered(sender)
        hook = self._require_hook()
        tx = self._parse_tx(args)
        if tx.public_amount != 0:
            raise ValueImbalance("internal transfers keep the pool balance")
        tx_proof = Proof.from_bytes(args["tx_proof"])
        self._admit_joinsplit(tx, tx_proof, remediation_ok=True)
        witness = self._witness_of(tx_proof)
        if not tx.remediation:
            self._check_ancestry_coverage(tx, witness, args.get("ancestry_proofs", ()))
        # effects
        self._absorb_transaction(tx, witness, hook, "transfer", None)
        epoch = self.block_height // self.config.epoch_blocks
        self._volume[epoch] = self._volume.get(epoch, 0) + 1
        return {"leaf_indices": self._last_leaf_indices(tx)}

    def _check_ancestry_coverage(self, tx: JoinSplitTx, witness, proofs_wire) -> None:
        proofs = [Proof.from_bytes(raw) for raw in proofs_wire]
        by_key: dict[bytes, Proof] = {}
        for proof in proofs:
            if proof.statement_id is not StatementId.ANCESTRY:
                raise InvalidProof("wrong statement among ancestry proofs")
            by_key[proof.public_inputs[1]] = proof
        parent_states = tuple(
            entry[0].chain_state for entry in witness.inputs if entry[1] is not None
        )
        expected_commitment = st.chain_state_commitment(witness.outputs[0].chain_state)
        for key, _value in self.flagged:
            proof = by_key.get(key)
            if proof is None:
                raise MissingCoverage(f"no ancestry proof for flagged key {key.hex()}")
            smt_root, _key, state_commitment, flag_count, ctx = proof.public_inputs
            if not self.smt.knows_root(smt_root):
                raise StaleRoot("ancestry proof against an unknown registry root")
            if flag_count != len(self.flagged):
                raise MissingCoverage("ancestry proof covers a stale flag count")
            if ctx != tx.tx_context:
                raise ContextMismatch("ancestry proof bound to another transaction")
            if state_commitment != expected_commitment:
                raise InvalidProof("ancestry proof binds a different chain state")
            if not st.verify(proof):
                raise InvalidProof("ancestry proof rejected")
            anc_witness = st.extract_witness(proof)
            if anc_witness is None or tuple(
                p.bits for p in anc_witness.parents
            ) != tuple(p.bits for p in parent_states):
                raise InvalidProof("ancestry parents differ from the spent inputs")

    def _op_withdraw(self, sender: bytes, args: dict) -> dict:
        self._require_registered(sender)
        hook = self._require_hook()
        tx = self._parse_tx(args)
        recipient = args["recipient"]
        if tx.public_amount >= 0:
            raise ValueImbalance("withdrawals must remove value from the pool")
        tx_proof = Proof.from_bytes(args["tx_proof"])
        self._admit_joinsplit(tx, tx_proof, remediation_ok=False)
        innocence = Proof.from_bytes(args["innocence_proof"])
        if innocence.statement_id is not StatementId.INNOCENCE:
            raise InvalidProof("wrong statement for withdrawal innocence")
        status_root, nullifiers, ctx = innocence.public_inputs
        if not self.poi_tree.knows_root(status_root):
            raise StaleRoot("innocence proof against an unknown status root")
        if nullifiers != tx.input_nullifiers or ctx != tx.tx_context:
            raise ContextMismatch("innocence proof bound to another transaction")
        if not st.verify(innocence):
            raise InvalidProof("innocence proof rejected")
        witness = self._witness_of(tx_proof)
        # effects
        self._absorb_transaction(tx, witness, hook, "withdraw", None)
        amount = -tx.public_amount
        self.external_balances[recipient] = self.external_balances.get(recipient, 0) + amount
        return {"leaf_indices": self._last_leaf_indices(tx)}

    def _absorb_transaction(
        self,
        tx: JoinSplitTx,
        witness,
        hook: ComplianceHook,
        kind: str,
        depositor_external: Optional[str],
    ) -> None:
        parents = tuple(
            commit(entry[0]) for entry in witness.inputs if entry[1] is not None
        )
        for nullifier in tx.input_nullifiers:
            self.nullifiers.add(nullifier)
            self._emit(EventKind.NEW_NULLIFIER, fe_to_bytes(nullifier))
        for commitment, ciphertext in zip(tx.output_commitments, tx.encrypted_outputs):
            index, _root = self.commitment_tree.append(commitment)
            payload = (
                fe_to_bytes(commitment)
                + index.to_bytes(8, "big")
                + struct.pack(">I", len(ciphertext))
                + ciphertext
            )
            self._emit(EventKind.NEW_COMMITMENT, payload)
            ctx = ComplianceContext(
                kind=kind,
                commitment=commitment,
                depositor_external=depositor_external,
                parent_commitments=parents,
            )
            status = hook(ctx)
            if self._hook_trace is not None:
                self._hook_trace.append(status.value)
            if status is PoiStatus.PENDING:
                self._pending_status[commitment] = True
            else:
                self._append_status_leaf(commitment, status.value)
        self.pool_balance += tx.public_amount

    def _append_status_leaf(self, commitment: int, status_bit: int) -> None:
        index, _root = self.poi_tree.append(zk_hash([commitment, status_bit]))
        self._poi_index[commitment] = index

    def _last_leaf_indices(self, tx: JoinSplitTx) -> tuple:
        count = self.commitment_tree.leaf_count
        return tuple(range(count - len(tx.output_commitments), count))

    def _op_smt_flag(self, sender: bytes, args: dict) -> dict:
        self._require_registered(sender)
        key, value = args["key"], args["value"]
        proof = Proof.from_bytes(args["proof"])
        if proof.statement_id is not StatementId.MASKING:
            raise InvalidProof("wrong statement for a flag insertion")
        if self.smt.entries.get(key) == value:
            return {"root": self.smt.root, "noop": True}
        epoch = self.block_height // self.config.epoch_blocks
        if self._epoch_flags.get(epoch, 0) >= self.config.epoch_flag_cap:
            raise EpochLimitExceeded(
                f"epoch cap of {self.config.epoch_flag_cap} insertions reached"
            )
        masked_key, mixer_root = proof.public_inputs
        if masked_key != key:
            raise InvalidProof("flag proof masks a different key")
        if not self.commitment_tree.knows_root(mixer_root):
            raise StaleRoot("flag proof against an unknown pool root")
        if not st.verify(proof):
            raise InvalidProof("flag proof rejected")
        if key in self.smt.entries:
            raise KeyConflict("flagged key already bound to a different value")
        # effects
        root = self.smt.insert(key, value)
        self.flagged.append((key, value))
        self._epoch_flags[epoch] = self._epoch_flags.get(epoch, 0) + 1
        self._emit(EventKind.STATUS_FLAGGED, key + fe_to_bytes(value) + fe_to_bytes(root))
        return {"root": root}

    def _op_insert_blob(self, sender: bytes, args: dict) -> dict:
        self._require_registered(sender)
        blob = args["blob"]
        self.blobs.append((sender, blob))
        self._emit(EventKind.ENCRYPTED_BLOB, sender + struct.pack(">I", len(blob)) + blob)
        return {"index": len(self.blobs) - 1}

    def _op_resolve_status(self, sender: bytes, args: dict) -> dict:
        self._require_registered(sender)
        if sender != self.authority_account:
            raise NotAuthorized("only the compliance authority resolves statuses")
        commitment, status = args["commitment"], args["status"]
        if status not in (0, 1):
            raise ValueImbalance("status must be 0 or 1")
        if commitment not in self._pending_status:
            raise UnknownDeposit("commitment has no pending status")
        del self._pending_status[commitment]
        self._append_status_leaf(commitment, status)
        return {"index": self._poi_index[commitment]}

    # -- read-only views -------------------------------------------------------

    def remediation_pks(self) -> tuple:
        pks = [BURN_SPEND_PK]
        treasury = self.users.get(TREASURY_ACCOUNT)
        if treasury is not None:
            pks.append(treasury.spend_pk)
        return tuple(pks)

    def registry(self, account: bytes) -> Optional[tuple]:
        record = self.users.get(account)
        return (record.spend_pk, record.enc_pk) if record else None

    def nullifier_present(self, nullifier: int) -> bool:
        return nullifier in self.nullifiers

    def poi_leaf_index(self, commitment: int) -> Optional[int]:
        return self._poi_index.get(commitment)

    def is_pending(self, commitment: int) -> bool:
        return commitment in self._pending_status

    def external_balance(self, address: str) -> int:
        return self.external_balances.get(address, 0)

    def transact_volume(self) -> int:
        epoch = self.block_height // self.config.epoch_blocks
        return self._volume.get(epoch, 0)

    def flagged_entries(self) -> tuple:
        return tuple(self.flagged)

    # -- snapshots, hashing, replay ------------------------------------------------

    def export_state(self) -> bytes:
        state = {
            "config": self.config.to_wire(),
            "block": self.block_height,
            "commitments": [hex(x) for x in self.commitment_tree.leaves],
            "statuses": [hex(x) for x in self.poi_tree.leaves],
            "bootstrap": [hex(x) for x in self.bootstrap_tree.leaves],
            "nullifiers": sorted(hex(x) for x in self.nullifiers),
            "requested": sorted(k.hex() for k, v in self.bootstrap_requested.items() if v),
            "enc_hashes": sorted(h.hex() for h in self.registered_enc_hashes),
            "poi_index": sorted((hex(c), i) for c, i in self._poi_index.items()),
            "pending": sorted(hex(c) for c in self._pending_status),
            "flagged": [[k.hex(), hex(v)] for k, v in self.flagged],
            "epoch_flags": sorted(self._epoch_flags.items()),
            "users": sorted(
                (
                    account.hex(),
                    hex(rec.spend_pk),
                    rec.enc_pk.hex(),
                    rec.op_key.hex() if rec.op_key else "",
                    rec.external,
                )
                for account, rec in self.users.items()
            ),
            "blobs": [[acct.hex(), blob.hex()] for acct, blob in self.blobs],
            "nonces": sorted(
                (sender.hex(), key, seq) for (sender, key), seq in self.nonce_table.items()
            ),
            "balances": sorted(self.external_balances.items()),
            "pool": self.pool_balance,
            "volume": sorted(self._volume.items()),
            "events": [
                [event.kind.value, event.payload.hex(), event.block] for event in self.events
            ],
        }
        return st._canonical_json(state)

    def state_hash(self) -> bytes:
        return hashlib.sha256(self.export_state()).digest()

    @property
    def journal(self) -> tuple:
        return tuple(self._journal)

    @classmethod
    def replay(cls, config: LedgerConfig, journal: Sequence) -> "Ledger":
        """Re-derive a ledger from genesis; hook answers come from the journal."""
        ledger = cls(config)
        for entry in journal:
            kind = entry[0]
            if kind == "fund":
                ledger.fund_external(entry[1], entry[2])
            elif kind == "advance":
                ledger.advance_block(entry[1])
            elif kind == "ops":
                ops = [UserOp.from_wire(raw) for raw in entry[1]]
                script = list(entry[2])
                ledger._hook, saved = _ScriptedHook(script), ledger._hook
                try:
                    ledger.handle_ops(ops)
                finally:
                    ledger._hook = saved
            else:
                raise ValueError(f"unknown journal entry {kind!r}")
        return ledger


class _ScriptedHook:
    """Replays recorded hook decisions in order."""

    def __init__(self, decisions: list):
        self._decisions = decisions

    def __call__(self, ctx: ComplianceContext) -> PoiStatus:
        return PoiStatus(self._decisions.pop(0))
