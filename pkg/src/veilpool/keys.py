"""Key material: in-field spend keys and the authenticated encryption box.

Spend keys are field elements with ``pk = zk_hash([sk])``. The encryption
side is a sealed-box construction over X25519 + HKDF-SHA256 +
ChaCha20-Poly1305: an ephemeral key pair is derived from caller-supplied
randomness, so every encryption is replayable under a seeded generator and
re-derivable inside statement predicates that witness the ephemeral seed.

Wire layout of a ciphertext: ephemeral public key (32) || AEAD output
(ciphertext + 16-byte tag). Any single-byte change fails authentication.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import DecryptionFailure
from .field import FieldElement, random_bytes, random_field_element
from .hashing import zk_hash

ENC_KEY_BYTES = 32
_AEAD_NONCE = b"\x00" * 12  # fresh key per message, so a fixed nonce is safe


@dataclass(frozen=True)
class SpendKeypair:
    sk: FieldElement
    pk: FieldElement

    @classmethod
    def generate(cls, rng: random.Random) -> "SpendKeypair":
        sk = random_field_element(rng)
        return cls(sk=sk, pk=derive_public_key(sk))


def derive_public_key(sk: FieldElement) -> FieldElement:
    return zk_hash([sk])


@dataclass(frozen=True)
class EncKeypair:
    enc_sk: bytes
    enc_pk: bytes

    @classmethod
    def generate(cls, rng: random.Random) -> "EncKeypair":
        return cls.from_seed(random_bytes(rng, ENC_KEY_BYTES))

    @classmethod
    def from_seed(cls, seed: bytes) -> "EncKeypair":
        if len(seed) != ENC_KEY_BYTES:
            raise ValueError("encryption seed must be 32 bytes")
        private = X25519PrivateKey.from_private_bytes(seed)
        return cls(enc_sk=seed, enc_pk=_raw_public(private))


def _raw_public(private: X25519PrivateKey) -> bytes:
    from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

    return private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def _session_key(shared: bytes, eph_pk: bytes, enc_pk: bytes) -> bytes:
    return HKDF(
        algorithm=SHA256(),
        length=32,
        salt=None,
        info=b"veilpool.box.v1" + eph_pk + enc_pk,
    ).derive(shared)


def encrypt(enc_pk: bytes, plaintext: bytes, rng: random.Random) -> bytes:
    """Seal ``plaintext`` to ``enc_pk``; randomness flows through ``rng``."""
    return encrypt_with_ephemeral(enc_pk, plaintext, random_bytes(rng, ENC_KEY_BYTES))


def encrypt_with_ephemeral(enc_pk: bytes, plaintext: bytes, eph_seed: bytes) -> bytes:
    """Deterministic sealing used when the ephemeral seed is witnessed."""
    eph = X25519PrivateKey.from_private_bytes(eph_seed)
    eph_pk = _raw_public(eph)
    shared = eph.exchange(X25519PublicKey.from_public_bytes(enc_pk))
    key = _session_key(shared, eph_pk, enc_pk)
    return eph_pk + ChaCha20Poly1305(key).encrypt(_AEAD_NONCE, plaintext, eph_pk)


def decrypt(enc_sk: bytes, ciphertext: bytes) -> bytes:
    """Open a sealed box; raises DecryptionFailure on wrong key or tampering."""
    if len(ciphertext) < ENC_KEY_BYTES + 16:
        raise DecryptionFailure("ciphertext too short")
    eph_pk, body = ciphertext[:ENC_KEY_BYTES], ciphertext[ENC_KEY_BYTES:]
    private = X25519PrivateKey.from_private_bytes(enc_sk)
    try:
        shared = private.exchange(X25519PublicKey.from_public_bytes(eph_pk))
        key = _session_key(shared, eph_pk, _raw_public(private))
        return ChaCha20Poly1305(key).decrypt(_AEAD_NONCE, body, eph_pk)
    except (InvalidTag, ValueError) as exc:
        raise DecryptionFailure("authentication failed") from exc
