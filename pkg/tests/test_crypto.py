"""Field, hash and encryption primitives."""

import random

import pytest

from veilpool import keys
from veilpool.errors import DecryptionFailure, InvalidArity, NonCanonicalElement
from veilpool.field import (
    MODULUS,
    fe_from_bytes,
    fe_to_bytes,
    is_canonical,
    random_bytes,
    random_field_element,
    to_field,
)
from veilpool.hashing import zk_hash, zk_hash_bytes, zk_hash_many

# Frozen outputs of the project's fixed hash parameterization. If any of
# these move, the permutation changed and every stored commitment breaks.
GOLDEN = {
    (1,): 0x2200EBC1F9FE66AF59158D92029D586D49DE67A65072CD1EFBDB12BC0E560A55,
    (1, 2): 0x62CE9BB12583ED96A84ADB35E1FF8346A0A6406D6DDC26C0DA38D951973985,
    (1, 2, 3): 0x29047E2643452D9C97745F1DB5C73F8D01C6106E7672E22B9F90C0463C768DA8,
    tuple(range(1, 9)): 0x2FE52E58263B8FCC906553562E2B02D042DBDAC144BECF1654BBD6A4783D5DBD,
    tuple(range(1, 17)): 0x28D96A0B9F5595F79EE3FB534F08F2ABCB1BE94BDCA416AEA51B82F53F822B6C,
}
GOLDEN_MANY = 0x20246AE296593A14336AC4ED44904DFA942B244362B3939E738C25BCD675AA0A
GOLDEN_BYTES = 0x0AD5D73A45D3C8C8CC539CC2E7E3F2F99DDEF39EDF34A3210837701D60DB35CE


def test_golden_vectors():
    for inputs, expected in GOLDEN.items():
        assert zk_hash(list(inputs)) == expected
    assert zk_hash_many(list(range(40))) == GOLDEN_MANY
    assert zk_hash_bytes(b"veilpool golden vector") == GOLDEN_BYTES


def test_hash_deterministic(rng):
    x = random_field_element(rng)
    assert zk_hash([x]) == zk_hash([x])


def test_hash_not_symmetric(rng):
    # no symmetric collision over many random pairs
    for _ in range(10_000):
        a, b = random_field_element(rng), random_field_element(rng)
        if a != b:
            assert zk_hash([a, b]) != zk_hash([b, a])


def test_hash_arity_bounds():
    with pytest.raises(InvalidArity):
        zk_hash([])
    with pytest.raises(InvalidArity):
        zk_hash(list(range(17)))
    with pytest.raises(NonCanonicalElement):
        zk_hash([MODULUS])
    with pytest.raises(NonCanonicalElement):
        zk_hash([-1])


def test_hash_output_canonical(rng):
    for arity in (1, 2, 3, 4, 7, 8, 12, 15, 16):
        value = zk_hash([random_field_element(rng) for _ in range(arity)])
        assert is_canonical(value)


def test_hash_injective_per_arity(rng):
    # collision search, heaviest at the arity every tree node uses
    for arity, trials in ((1, 30_000), (2, 100_000), (3, 10_000), (8, 5_000), (16, 5_000)):
        seen = {}
        for _ in range(trials):
            inputs = tuple(random_field_element(rng) for _ in range(arity))
            digest = zk_hash(list(inputs))
            if digest in seen:
                assert seen[digest] == inputs, f"collision at arity {arity}"
            seen[digest] = inputs


def test_hash_many_prefix_safe():
    assert zk_hash_many([1, 2, 3]) != zk_hash_many([1, 2, 3, 0])
    assert zk_hash_many(list(range(16))) != zk_hash_many(list(range(17)))
    assert zk_hash_bytes(b"") != zk_hash_bytes(b"\x00")
    assert zk_hash_bytes(b"ab") != zk_hash_bytes(b"a")


def test_padding_does_not_alias_arity(rng):
    x = random_field_element(rng)
    assert zk_hash([x]) != zk_hash([x, 0])
    assert zk_hash([x, 0, 0]) != zk_hash([x, 0])


def test_derive_public_key(rng):
    sk = random_field_element(rng)
    assert keys.derive_public_key(sk) == zk_hash([sk])
    assert keys.derive_public_key(0) == zk_hash([0])
    pks = {keys.derive_public_key(random_field_element(rng)) for _ in range(10_000)}
    assert len(pks) == 10_000


def test_spend_keypair_reproducible():
    a = keys.SpendKeypair.generate(random.Random(5))
    b = keys.SpendKeypair.generate(random.Random(5))
    assert a == b
    c = keys.SpendKeypair.generate(random.Random(6))
    assert a.sk != c.sk and a.pk != c.pk


def test_field_serialization_roundtrip(rng):
    for _ in range(100):
        x = random_field_element(rng)
        assert fe_from_bytes(fe_to_bytes(x)) == x
    assert len(fe_to_bytes(0)) == 32
    with pytest.raises(NonCanonicalElement):
        fe_from_bytes(b"\xff" * 32)
    with pytest.raises(NonCanonicalElement):
        fe_from_bytes(b"\x00" * 31)


def test_blinding_reduction_canonical(rng):
    for _ in range(1000):
        raw = int.from_bytes(random_bytes(rng, 32), "big")
        assert is_canonical(to_field(raw))


def test_rng_reproducible():
    a = random.Random(7)
    b = random.Random(7)
    assert [random_field_element(a) for _ in range(50)] == [
        random_field_element(b) for _ in range(50)
    ]
    assert random_bytes(random.Random(7), 16) == random_bytes(random.Random(7), 16)


def test_field_sampling_uniform_low_bits(rng):
    # chi-square over the low 4 bits; 15 dof, 99.9% critical value 37.70
    counts = [0] * 16
    draws = 100_000
    for _ in range(draws):
        counts[random_field_element(rng) & 0xF] += 1
    expected = draws / 16
    chi2 = sum((c - expected) ** 2 / expected for c in counts)
    assert chi2 < 37.70, chi2


def test_encrypt_roundtrip(rng):
    pair = keys.EncKeypair.generate(rng)
    for size in (0, 1, 31, 32, 100, 1000):
        message = random_bytes(rng, size)
        assert keys.decrypt(pair.enc_sk, keys.encrypt(pair.enc_pk, message, rng)) == message


def test_decrypt_wrong_key_fails(rng):
    pair = keys.EncKeypair.generate(rng)
    other = keys.EncKeypair.generate(rng)
    ct = keys.encrypt(pair.enc_pk, b"addressed elsewhere", rng)
    with pytest.raises(DecryptionFailure):
        keys.decrypt(other.enc_sk, ct)


def test_ciphertext_tamper_every_byte(rng):
    pair = keys.EncKeypair.generate(rng)
    ct = keys.encrypt(pair.enc_pk, b"tiny", rng)
    for position in range(len(ct)):
        for flip in (0x01, 0x80):
            mutated = bytearray(ct)
            mutated[position] ^= flip
            with pytest.raises(DecryptionFailure):
                keys.decrypt(pair.enc_sk, bytes(mutated))


def test_encryption_randomized(rng):
    pair = keys.EncKeypair.generate(rng)
    a = keys.encrypt(pair.enc_pk, b"same plaintext", rng)
    b = keys.encrypt(pair.enc_pk, b"same plaintext", rng)
    assert a != b
    assert keys.decrypt(pair.enc_sk, a) == keys.decrypt(pair.enc_sk, b)


def test_deterministic_encryption_witnessable(rng):
    pair = keys.EncKeypair.generate(rng)
    seed = random_bytes(rng, 32)
    a = keys.encrypt_with_ephemeral(pair.enc_pk, b"witnessed", seed)
    b = keys.encrypt_with_ephemeral(pair.enc_pk, b"witnessed", seed)
    assert a == b
    assert keys.decrypt(pair.enc_sk, a) == b"witnessed"
