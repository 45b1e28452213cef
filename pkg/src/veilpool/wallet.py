"""Client-side wallet: scanning, deposits, transfers, withdrawal, onboarding.

A wallet discovers its notes by trial-decrypting commitment events, keeps a
local mirror of the flag registry for ancestry proofs, and submits every
state change as a signed UserOp. One-time-key onboarding transfers to a
throwaway key pair encoded in an invite link; redeeming immediately respends
the note to the new wallet's own keys so the inviter loses all control.
"""

from __future__ import annotations

import base64
import hashlib
import random
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

from . import bloom
from . import statements as st
from .bloom import BloomFilter, Capacity, Exclusion
from .errors import (
    BootstrapTimeout,
    CapacityExceeded,
    DoubleSpend,
    IllicitInput,
    InsufficientFunds,
    InvalidLink,
    LinkAlreadyRedeemed,
    PendingCompliance,
    PoolError,
    TaintedLineage,
    UnknownAccount,
)
from .field import (
    FieldElement,
    fe_from_bytes,
    fe_to_bytes,
    random_bytes,
    random_field_element,
)
from .hashing import zk_hash
from .keys import EncKeypair, SpendKeypair, decrypt, derive_public_key
from .ledger import (
    BURN_ACCOUNT,
    BURN_ENC_PK,
    BURN_SPEND_PK,
    TREASURY_ACCOUNT,
    EventKind,
    Ledger,
    OpResult,
    make_user_op,
)
from .utxo import Utxo, commit, derive_nullifier, make_dummy, build_joinsplit
from . import errors as _errors

ARITY_SMALL = 2
ARITY_LARGE = 16


@dataclass
class WalletUtxo:
    utxo: Utxo
    commitment: FieldElement
    nullifier: FieldElement
    spent: bool = False

    @property
    def amount(self) -> int:
        return self.utxo.amount

    @property
    def leaf_index(self) -> int:
        return self.utxo.leaf_index


@dataclass(frozen=True)
class InviteLink:
    otk_sk: FieldElement
    amount_hint: int
    genesis_id: str

    def encode(self) -> str:
        raw = fe_to_bytes(self.otk_sk) + self.amount_hint.to_bytes(8, "big")
        raw += bytes.fromhex(self.genesis_id)
        return base64.urlsafe_b64encode(raw).decode().rstrip("=")

    @classmethod
    def decode(cls, text: str) -> "InviteLink":
        try:
            raw = base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
            if len(raw) != 48:
                raise ValueError(len(raw))
            return cls(
                otk_sk=fe_from_bytes(raw[:32]),
                amount_hint=int.from_bytes(raw[32:40], "big"),
                genesis_id=raw[40:].hex(),
            )
        except (ValueError, PoolError) as exc:
            raise InvalidLink(f"cannot parse invite link: {exc}") from exc


def _account_id(spend_pk: FieldElement, enc_pk: bytes) -> bytes:
    return hashlib.sha256(b"veilpool.account.v1" + fe_to_bytes(spend_pk) + enc_pk).digest()


def raise_for(result: OpResult) -> OpResult:
    """Translate a failed op result into its exception class."""
    if result.ok:
        return result
    cls = getattr(_errors, result.error or "", PoolError)
    if not (isinstance(cls, type) and issubclass(cls, PoolError)):
        cls = PoolError
    raise cls(result.detail)


class Wallet:
    """One user's keys, notes and protocol flows against a ledger."""

    def __init__(
        self,
        ledger: Ledger,
        rng: random.Random,
        external: str = "",
        account: Optional[bytes] = None,
    ):
        self.ledger = ledger
        self.rng = rng
        self.external = external
        self.spend = SpendKeypair.generate(rng)
        self.enc = EncKeypair.generate(rng)
        self.account = account or _account_id(self.spend.pk, self.enc.enc_pk)
        self.op_key = random_bytes(rng, 32)
        self.params = ledger.config.bloom_params
        self.utxos: list[WalletUtxo] = []
        self.contacts: list[tuple] = []
        self.flagged_cache: list[tuple] = []
        from .trees import SparseTree

        self._mirror_smt = SparseTree(ledger.config.smt_height, ledger.config.root_history)
        # nothing can be addressed to keys that did not exist yet, except the
        # onboarding note, which redeem_invite locates with its own scan;
        # flags are global state and are ingested from genesis
        self._scan_cursor = len(ledger.events)
        self._known: set[tuple] = set()
        for event in ledger.events[: self._scan_cursor]:
            if event.kind is EventKind.STATUS_FLAGGED:
                self._ingest_flag(event.payload)
        # bootstrap state: masked value, its ciphertext and registered digest
        self.masked: Optional[FieldElement] = None
        self.masked_enc: Optional[bytes] = None
        self.masked_enc_hash: Optional[bytes] = None
        self._planned_deposit: Optional[tuple] = None
        self._bootstrap_sent = False

    @classmethod
    def create(
        cls,
        ledger: Ledger,
        rng: random.Random,
        external: str = "",
        account: Optional[bytes] = None,
    ) -> "Wallet":
        wallet = cls(ledger, rng, external=external, account=account)
        wallet._submit(
            "register_user",
            {
                "spend_pk": wallet.spend.pk,
                "enc_pk": wallet.enc.enc_pk,
                "op_key": wallet.op_key,
                "external": external,
            },
        )
        return wallet

    # -- plumbing ------------------------------------------------------------

    def _submit(self, name: str, args: dict) -> OpResult:
        nonce = self.ledger.next_nonce(self.account)
        op = make_user_op(self.op_key, self.account, nonce, name, args)
        return raise_for(self.ledger.handle_ops([op])[0])

    def balance(self) -> int:
        return sum(entry.amount for entry in self.utxos if not entry.spent)

    # -- scanning ---------------------------------------------------------------

    def _ingest_flag(self, payload: bytes) -> None:
        key = payload[:32]
        value = fe_from_bytes(payload[32:64])
        root = fe_from_bytes(payload[64:96])
        self.flagged_cache.append((key, value, root))
        self._mirror_smt.insert(key, value)
        if self._mirror_smt.root != root:
            raise PoolError("flag registry mirror diverged from the ledger")

    def scan(self) -> int:
        """Ingest events since the cursor; returns the number of new notes."""
        events = self.ledger.events
        found = 0
        own_nullifiers = {entry.nullifier: entry for entry in self.utxos}
        while self._scan_cursor < len(events):
            event = events[self._scan_cursor]
            self._scan_cursor += 1
            if event.kind is EventKind.NEW_COMMITMENT:
                note = self._try_note(event.payload, self.enc.enc_sk, self.spend.pk)
                if note is None:
                    continue
                utxo, commitment = note
                key = (commitment, utxo.leaf_index)
                if key in self._known:
                    continue
                self._known.add(key)
                nullifier = derive_nullifier(utxo, utxo.leaf_index, self.spend.sk)
                entry = WalletUtxo(utxo=utxo, commitment=commitment, nullifier=nullifier)
                if self.ledger.nullifier_present(nullifier):
                    entry.spent = True
                self.utxos.append(entry)
                own_nullifiers[nullifier] = entry
                found += 1
            elif event.kind is EventKind.NEW_NULLIFIER:
                value = int.from_bytes(event.payload, "big")
                entry = own_nullifiers.get(value)
                if entry is not None:
                    entry.spent = True
            elif event.kind is EventKind.STATUS_FLAGGED:
                self._ingest_flag(event.payload)
        return found

    @staticmethod
    def _try_note(payload: bytes, enc_sk: bytes, owner_pk: FieldElement) -> Optional[tuple]:
        commitment = int.from_bytes(payload[:32], "big")
        leaf_index = int.from_bytes(payload[32:40], "big")
        (ct_len,) = struct.unpack(">I", payload[40:44])
        ciphertext = payload[44:44 + ct_len]
        try:
            plaintext = decrypt(enc_sk, ciphertext)
        except PoolError:
            return None
        from .utxo import utxo_from_plaintext

        try:
            utxo = utxo_from_plaintext(plaintext, owner_pk).with_leaf_index(leaf_index)
        except (PoolError, ValueError):
            return None
        if commit(utxo) != commitment:
            return None
        return utxo, commitment

    # -- deposits -------------------------------------------------------------------

    def deposit_flow(self, amount: int, authority=None) -> OpResult:
        """First deposit bootstraps the masked chain state, later ones reuse it."""
        if amount <= 0:
            raise ValueError("deposit amount must be positive")
        self.scan()
        if self.masked is None:
            self._bootstrap(amount, authority)
        if self._planned_deposit is not None:
            planned_amount, blinding = self._planned_deposit
            if planned_amount != amount:
                raise PoolError("first deposit must match the bootstrapped amount")
        else:
            blinding = random_field_element(self.rng)
        chain_state = bloom.encode_single(self.masked, self.params)
        outputs = [
            Utxo(amount, self.spend.pk, blinding, chain_state),
            Utxo(0, self.spend.pk, random_field_element(self.rng), chain_state),
        ]
        dummies = [
            (make_dummy(self.spend.pk, self.params, self.rng), None, self.spend.sk)
            for _ in range(ARITY_SMALL)
        ]
        tx, witness = build_joinsplit(
            dummies, outputs, amount, [self.enc.enc_pk, self.enc.enc_pk], self.rng
        )
        tx_proof = st.prove(st.joinsplit_statement(tx), witness)
        binding_stmt = st.deposit_binding_statement(
            self.masked_enc_hash, st.chain_state_commitment(chain_state)
        )
        binding_witness = st.DepositBindingWitness(
            masked_enc=self.masked_enc, masked=self.masked, chain_state=chain_state
        )
        binding_proof = st.prove(binding_stmt, binding_witness)
        result = self._submit(
            "deposit",
            {
                "tx": tx.to_bytes(),
                "tx_proof": tx_proof.to_bytes(),
                "binding_proof": binding_proof.to_bytes(),
            },
        )
        self._planned_deposit = None
        self.scan()
        return result

    def _bootstrap(self, amount: int, authority) -> None:
        if not self._bootstrap_sent:
            blinding = random_field_element(self.rng)
            self._planned_deposit = (amount, blinding)
            commitment = zk_hash([amount, self.spend.pk, blinding])
            statement = st.bootstrap_request_statement(commitment)
            witness = st.BootstrapRequestWitness(
                amount=amount, owner_pk=self.spend.pk, blinding=blinding
            )
            proof = st.prove(statement, witness)
            self._bootstrap_marker = len(self.ledger.events)
            self._submit(
                "bootstrap_init",
                {"commitment": commitment, "proof": proof.to_bytes(), "enc_pk": self.enc.enc_pk},
            )
            self._bootstrap_sent = True
        if authority is not None:
            authority.poll()
        candidates = [
            event
            for event in self.ledger.events[self._bootstrap_marker:]
            if event.kind is EventKind.BOOTSTRAPPED_DATA
        ]
        for event in candidates:
            (enc_len,) = struct.unpack(">I", event.payload[:4])
            masked_enc = event.payload[4:4 + enc_len]
            masked_enc_hash = event.payload[4 + enc_len:4 + enc_len + 32]
            try:
                masked = fe_from_bytes(decrypt(self.enc.enc_sk, masked_enc))
            except PoolError:
                continue
            if st.enc_digest(masked_enc, masked) != masked_enc_hash:
                continue
            self.masked = masked
            self.masked_enc = masked_enc
            self.masked_enc_hash = masked_enc_hash
            return
        raise BootstrapTimeout("no bootstrap response addressed to this wallet")

    # -- input selection -------------------------------------------------------------

    def _selectable(self) -> list[WalletUtxo]:
        out = []
        for entry in self.utxos:
            if entry.spent:
                continue
            if self.ledger.poi_leaf_index(entry.commitment) is None:
                continue  # status still pending
            out.append(entry)
        return out

    def _select_inputs(self, amount: int) -> list[WalletUtxo]:
        candidates = sorted(
            self._selectable(), key=lambda e: (-e.amount, e.leaf_index)
        )
        chosen: list[WalletUtxo] = []
        total = 0
        for entry in candidates:
            if total >= amount and len(chosen) >= 1:
                break
            if len(chosen) == ARITY_LARGE:
                break
            chosen.append(entry)
            total += entry.amount
        if total < amount:
            raise InsufficientFunds(f"have {total}, need {amount}")
        return chosen

    def _padded(self, chosen: Sequence[WalletUtxo], owner_pk=None, sk=None):
        owner_pk = owner_pk if owner_pk is not None else self.spend.pk
        sk = sk if sk is not None else self.spend.sk
        inputs = []
        for entry in chosen:
            path = self.ledger.commitment_tree.prove_membership(entry.leaf_index)
            inputs.append((entry.utxo, path, sk))
        arity = ARITY_SMALL if len(inputs) <= ARITY_SMALL else ARITY_LARGE
        while len(inputs) < arity:
            inputs.append((make_dummy(owner_pk, self.params, self.rng), None, sk))
        return inputs

    # -- compliance proofs -----------------------------------------------------------

    def _ancestry_proofs(self, merged: BloomFilter, parents: Sequence[BloomFilter], tx) -> list:
        proofs = []
        state_commitment = st.chain_state_commitment(merged)
        for key, value, _root in self.flagged_cache:
            target = bloom.encode_single(fe_from_bytes(key), self.params)
            if bloom.exclusion_check(merged, target) is Exclusion.POSSIBLY_INCLUDED:
                raise TaintedLineage(f"flagged key {key.hex()} may be an ancestor")
            statement = st.ancestry_statement(
                self._mirror_smt.root,
                key,
                state_commitment,
                len(self.flagged_cache),
                tx.tx_context,
            )
            witness = st.AncestryWitness(
                parents=tuple(parents),
                merged=merged,
                single=target,
                smt_proof=self._mirror_smt.prove(key),
            )
            proofs.append(st.prove(statement, witness).to_bytes())
        return proofs

    def _check_capacity(self, merged: BloomFilter) -> None:
        status = bloom.merge_capacity_check(
            merged, self.ledger.config.rate_config, self.ledger.transact_volume()
        )
        if status is Capacity.OVER_LIMIT:
            raise CapacityExceeded("merged chain state exceeds the rate-limit budget")

    # -- transfers ----------------------------------------------------------------------

    def transfer(self, recipient_account: bytes, amount: int) -> OpResult:
        if amount <= 0:
            raise ValueError("transfer amount must be positive")
        registry = self.ledger.registry(recipient_account)
        if registry is None:
            raise UnknownAccount("recipient is not registered")
        rec_spend_pk, rec_enc_pk = registry
        return self._spend_to(rec_spend_pk, rec_enc_pk, amount)

    def _spend_to(
        self,
        rec_spend_pk: FieldElement,
        rec_enc_pk: bytes,
        amount: int,
        remediation: bool = False,
        inputs_override=None,
    ) -> OpResult:
        self.scan()
        if inputs_override is None:
            chosen = self._select_inputs(amount)
            inputs = self._padded(chosen)
            spent_states = [entry.utxo.chain_state for entry in chosen]
            total = sum(entry.amount for entry in chosen)
            change_pk, change_enc = self.spend.pk, self.enc.enc_pk
        else:
            inputs, spent_states, total, change_pk, change_enc = inputs_override
        merged = bloom.union(spent_states)
        if not remediation:
            self._check_capacity(merged)
        outputs = [
            Utxo(amount, rec_spend_pk, random_field_element(self.rng), merged),
            Utxo(total - amount, change_pk, random_field_element(self.rng), merged),
        ]
        tx, witness = build_joinsplit(
            inputs, outputs, 0, [rec_enc_pk, change_enc], self.rng, remediation=remediation
        )
        rem_pks = self.ledger.remediation_pks() if remediation else ()
        tx_proof = st.prove(st.joinsplit_statement(tx, rem_pks), witness)
        args = {"tx": tx.to_bytes(), "tx_proof": tx_proof.to_bytes()}
        if not remediation:
            parents = [utxo.chain_state for utxo, path, _sk in inputs if path is not None]
            args["ancestry_proofs"] = tuple(self._ancestry_proofs(merged, parents, tx))
        result = self._submit("transact", args)
        self.scan()
        return result

    # -- withdrawal ------------------------------------------------------------------------

    def withdraw(self, amount: int, to_external: str) -> OpResult:
        if amount <= 0:
            raise ValueError("withdrawal amount must be positive")
        self.scan()
        chosen = self._select_inputs(amount)
        for entry in chosen:
            index = self.ledger.poi_leaf_index(entry.commitment)
            if index is None:
                raise PendingCompliance("input status not yet resolved")
            leaf = self.ledger.poi_tree.leaf(index)
            if leaf == zk_hash([entry.commitment, 0]):
                raise IllicitInput("input is marked illicit in the status tree")
            if leaf != zk_hash([entry.commitment, 1]):
                raise PendingCompliance("input status unrecognized")
        inputs = self._padded(chosen)
        total = sum(entry.amount for entry in chosen)
        merged = bloom.union([entry.utxo.chain_state for entry in chosen])
        outputs = [
            Utxo(total - amount, self.spend.pk, random_field_element(self.rng), merged),
            Utxo(0, self.spend.pk, random_field_element(self.rng), merged),
        ]
        tx, witness = build_joinsplit(
            inputs, outputs, -amount, [self.enc.enc_pk, self.enc.enc_pk], self.rng
        )
        tx_proof = st.prove(st.joinsplit_statement(tx), witness)
        status_entries = []
        poi_tree = self.ledger.poi_tree
        for utxo, path, sk in inputs:
            if path is None:
                status_entries.append((utxo, 0, sk, None))
            else:
                commitment = commit(utxo)
                index = self.ledger.poi_leaf_index(commitment)
                status_entries.append((utxo, path.leaf_index, sk, poi_tree.prove_membership(index)))
        innocence_stmt = st.innocence_statement(
            poi_tree.root, tx.input_nullifiers, tx.tx_context
        )
        innocence_proof = st.prove(innocence_stmt, st.InnocenceWitness(tuple(status_entries)))
        result = self._submit(
            "withdraw",
            {
                "tx": tx.to_bytes(),
                "tx_proof": tx_proof.to_bytes(),
                "innocence_proof": innocence_proof.to_bytes(),
                "recipient": to_external,
            },
        )
        self.scan()
        return result

    # -- onboarding -----------------------------------------------------------------------

    def onboard_invite(self, amount: int) -> InviteLink:
        """Send ``amount`` to a fresh one-time key and hand out the link."""
        otk_sk = random_field_element(self.rng)
        otk_pk = derive_public_key(otk_sk)
        otk_enc = EncKeypair.from_seed(fe_to_bytes(otk_sk))
        self._spend_to(otk_pk, otk_enc.enc_pk, amount)
        return InviteLink(otk_sk=otk_sk, amount_hint=amount, genesis_id=self.ledger.genesis_id)

    @classmethod
    def redeem_invite(
        cls, link: InviteLink, ledger: Ledger, rng: random.Random, external: str = ""
    ) -> "Wallet":
        """Open the link, register a fresh wallet, and auto-respend the note."""
        if link.genesis_id != ledger.genesis_id:
            raise InvalidLink("invite link targets a different pool")
        otk_pk = derive_public_key(link.otk_sk)
        otk_enc = EncKeypair.from_seed(fe_to_bytes(link.otk_sk))
        note = None
        for event in ledger.scan_events(kinds={EventKind.NEW_COMMITMENT}):
            found = cls._try_note(event.payload, otk_enc.enc_sk, otk_pk)
            if found is not None:
                note = found
                break
        if note is None:
            raise InvalidLink("no onboarding note found for this link")
        utxo, commitment = note
        nullifier = derive_nullifier(utxo, utxo.leaf_index, link.otk_sk)
        if ledger.nullifier_present(nullifier):
            raise LinkAlreadyRedeemed("the onboarding note was already spent")
        wallet = cls.create(ledger, rng, external=external)
        wallet.scan()
        path = ledger.commitment_tree.prove_membership(utxo.leaf_index)
        inputs = [
            (utxo, path, link.otk_sk),
            (make_dummy(otk_pk, wallet.params, rng), None, link.otk_sk),
        ]
        override = (inputs, [utxo.chain_state], utxo.amount, wallet.spend.pk, wallet.enc.enc_pk)
        try:
            wallet._spend_to(
                wallet.spend.pk, wallet.enc.enc_pk, utxo.amount, inputs_override=override
            )
        except DoubleSpend as exc:
            raise LinkAlreadyRedeemed(str(exc)) from exc
        return wallet

    # -- remediation --------------------------------------------------------------------------

    def burn_illicit(self, entry: WalletUtxo, destination: str = "burn") -> OpResult:
        """Give up a tainted note: remediation transfer to burn or treasury."""
        if destination == "burn":
            dest_pk, dest_enc = BURN_SPEND_PK, BURN_ENC_PK
        elif destination == "treasury":
            registry = self.ledger.registry(TREASURY_ACCOUNT)
            if registry is None:
                raise UnknownAccount("no treasury account registered")
            dest_pk, dest_enc = registry
        else:
            raise ValueError("destination must be 'burn' or 'treasury'")
        self.scan()
        if entry.spent:
            raise DoubleSpend("note already spent")
        path = self.ledger.commitment_tree.prove_membership(entry.leaf_index)
        inputs = [
            (entry.utxo, path, self.spend.sk),
            (make_dummy(self.spend.pk, self.params, self.rng), None, self.spend.sk),
        ]
        override = (inputs, [entry.utxo.chain_state], entry.amount, self.spend.pk, self.enc.enc_pk)
        return self._spend_to(
            dest_pk, dest_enc, entry.amount, remediation=True, inputs_override=override
        )

    # -- contacts ------------------------------------------------------------------------------

    def post_contact(self, name: str, account: bytes, enc_pk: bytes) -> OpResult:
        """Self-encrypted contact entry posted to the blob channel."""
        from .keys import encrypt

        encoded = name.encode()
        entry = struct.pack(">H", len(encoded)) + encoded + account + enc_pk
        blob = encrypt(self.enc.enc_pk, entry, self.rng)
        return self._submit("insert_encrypted_data", {"blob": blob})

    def sync_contacts(self) -> list[tuple]:
        """Rebuild the contact list from every blob this wallet can open."""
        contacts = []
        for event in self.ledger.scan_events(kinds={EventKind.ENCRYPTED_BLOB}):
            (blob_len,) = struct.unpack(">I", event.payload[32:36])
            blob = event.payload[36:36 + blob_len]
            try:
                entry = decrypt(self.enc.enc_sk, blob)
            except PoolError:
                continue
            try:
                (name_len,) = struct.unpack(">H", entry[:2])
                name = entry[2:2 + name_len].decode()
                account = entry[2 + name_len:34 + name_len]
                enc_pk = entry[34 + name_len:66 + name_len]
                if len(account) != 32 or len(enc_pk) != 32:
                    continue
            except (ValueError, UnicodeDecodeError):
                continue
            contacts.append((name, account, enc_pk))
        self.contacts = contacts
        return contacts
