"""Privacy-preserving UTXO pool with two-tier probabilistic compliance.

The pool keeps notes behind commitments and nullifiers, gates withdrawals on
a parallel status tree, and propagates masked deposit ancestry through bloom
filter chain states checked against a sparse registry of flagged entries.
Everything runs in-process and deterministically under injected seeds.
"""

from .bloom import BloomFilter, BloomParams, RateLimitConfig
from .field import MODULUS, FieldElement
from .hashing import zk_hash, zk_hash_bytes, zk_hash_many
from .keys import EncKeypair, SpendKeypair, decrypt, derive_public_key, encrypt
from .ledger import Ledger, LedgerConfig, PoiStatus
from .trees import AppendTree, MerklePath, SmtProof, SparseTree, smt_verify, verify_path
from .utxo import JoinSplitTx, Utxo, build_joinsplit, commit, derive_nullifier
from .wallet import InviteLink, Wallet

__version__ = "0.1.0"

__all__ = [
    "AppendTree",
    "BloomFilter",
    "BloomParams",
    "EncKeypair",
    "FieldElement",
    "InviteLink",
    "JoinSplitTx",
    "Ledger",
    "LedgerConfig",
    "MODULUS",
    "MerklePath",
    "PoiStatus",
    "RateLimitConfig",
    "SmtProof",
    "SparseTree",
    "SpendKeypair",
    "Utxo",
    "Wallet",
    "build_joinsplit",
    "commit",
    "decrypt",
    "derive_nullifier",
    "derive_public_key",
    "encrypt",
    "smt_verify",
    "verify_path",
    "zk_hash",
    "zk_hash_bytes",
    "zk_hash_many",
]
