import hashlib
import random

import pytest
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from hypothesis import given, settings
from hypothesis import strategies as st
from nacl import bindings as sodium

import edwards_ref as ref
from trustfl import crypto
from trustfl.errors import DecryptionError, InvalidSeedError

# RFC 8032 section 7.1, test 1; also reproduced below with the `cryptography` package
RFC_SEED = bytes.fromhex("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60")
RFC_PK = bytes.fromhex("d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a")
RFC_SIG = bytes.fromhex(
    "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
)
SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
# measured once with libsodium's crypto_box_seal: 32-byte ephemeral key + 16-byte MAC
PINNED_SEAL_OVERHEAD = 48


def test_keypair_deterministic_and_distinct():
    assert crypto.generate_keypair(b"\x01" * 32).public_key == crypto.generate_keypair(b"\x01" * 32).public_key
    assert crypto.generate_keypair(b"\x01" * 32).public_key != crypto.generate_keypair(b"\x02" * 32).public_key


def test_known_seed_public_key():
    assert crypto.generate_keypair(RFC_SEED).public_key == RFC_PK


def test_reference_oracle_agrees_with_vector():
    oracle = Ed25519PrivateKey.from_private_bytes(RFC_SEED)
    raw = oracle.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    assert raw == RFC_PK
    assert oracle.sign(b"") == RFC_SIG


@pytest.mark.parametrize("seed", [b"", b"\x00" * 31, b"\x00" * 33])
def test_seed_length_enforced(seed):
    with pytest.raises(InvalidSeedError):
        crypto.generate_keypair(seed)


def test_known_answer_signature():
    kp = crypto.generate_keypair(RFC_SEED)
    assert crypto.sign(kp.secret_key, b"") == RFC_SIG
    assert crypto.verify(RFC_PK, b"", RFC_SIG)


def test_signatures_match_independent_implementation():
    rng = random.Random(7)
    for _ in range(50):
        seed = rng.randbytes(32)
        msg = rng.randbytes(rng.randrange(200))
        oracle = Ed25519PrivateKey.from_private_bytes(seed)
        assert crypto.sign(crypto.generate_keypair(seed).secret_key, msg) == oracle.sign(msg)


def test_empty_message_verifies(rng):
    kp = crypto.random_keypair(rng)
    assert crypto.verify(kp.public_key, b"", crypto.sign(kp.secret_key, b""))


def test_sign_tamper_trials():
    rng = random.Random(11)
    kp = crypto.random_keypair(rng)
    honest = tampered = 0
    for _ in range(1000):
        msg = rng.randbytes(rng.randrange(1, 128))
        sig = crypto.sign(kp.secret_key, msg)
        honest += crypto.verify(kp.public_key, msg, sig)
        bit = rng.randrange(len(msg) * 8)
        bad = bytearray(msg)
        bad[bit // 8] ^= 1 << (bit % 8)
        tampered += not crypto.verify(kp.public_key, bytes(bad), sig)
    assert honest == 1000 and tampered == 1000


def test_verify_rejects_malformed_inputs(rng):
    kp = crypto.random_keypair(rng)
    sig = crypto.sign(kp.secret_key, b"m")
    assert not crypto.verify(kp.public_key[:31], b"m", sig)
    assert not crypto.verify(kp.public_key, b"m", sig[:63])


@pytest.mark.parametrize("size", [0, 1, 1024, 1048576])
def test_seal_round_trip(size):
    rng = random.Random(size)
    kp = crypto.random_keypair(rng)
    pt = rng.randbytes(size)
    ct = crypto.seal(kp.public_key, pt, rng)
    assert len(ct) == size + PINNED_SEAL_OVERHEAD
    assert crypto.open(kp.secret_key, ct) == pt


def test_overhead_matches_libsodium_measurement(rng):
    kp = crypto.random_keypair(rng)
    xpk = sodium.crypto_sign_ed25519_pk_to_curve25519(kp.public_key)
    assert len(sodium.crypto_box_seal(b"x" * 100, xpk)) - 100 == PINNED_SEAL_OVERHEAD
    assert crypto.SEAL_OVERHEAD == PINNED_SEAL_OVERHEAD


def test_sealed_box_interoperates_with_libsodium(rng):
    kp = crypto.random_keypair(rng)
    xpk = sodium.crypto_sign_ed25519_pk_to_curve25519(kp.public_key)
    xsk = sodium.crypto_sign_ed25519_sk_to_curve25519(kp.secret_key)
    assert sodium.crypto_box_seal_open(crypto.seal(kp.public_key, b"hello", rng), xpk, xsk) == b"hello"
    assert crypto.open(kp.secret_key, sodium.crypto_box_seal(b"world", xpk)) == b"world"


def test_seal_is_reproducible_with_seeded_rng():
    kp = crypto.generate_keypair(RFC_SEED)
    assert crypto.seal(kp.public_key, b"m", random.Random(3)) == crypto.seal(kp.public_key, b"m", random.Random(3))


def test_open_with_wrong_key_fails(rng):
    a, b = crypto.random_keypair(rng), crypto.random_keypair(rng)
    with pytest.raises(DecryptionError):
        crypto.open(b.secret_key, crypto.seal(a.public_key, rng.randbytes(1024), rng))


def test_open_truncated_ciphertext_fails(rng):
    kp = crypto.random_keypair(rng)
    with pytest.raises(DecryptionError):
        crypto.open(kp.secret_key, b"short")


def test_digest():
    assert crypto.digest(b"").hex() == SHA256_EMPTY
    assert crypto.digest(b"abc") == crypto.digest(b"abc") == hashlib.sha256(b"abc").digest()
    assert crypto.digest(b"\x00") != crypto.digest(b"\x01")


# --- commitments ----------------------------------------------------------

def test_generators_match_reference_curve():
    assert crypto.G == ref.encode(ref.BASE)
    h = ref.decode(crypto.H)
    assert ref.mul(ref.L, h) == (0, 1)  # H is in the prime-order subgroup
    assert crypto.IDENTITY == ref.encode((0, 1))


def test_commit_matches_reference_arithmetic():
    rng = random.Random(5)
    h = ref.decode(crypto.H)
    for _ in range(5):
        s, r = crypto.random_scalar(rng), crypto.random_scalar(rng)
        expected = ref.encode(ref.add(ref.mul(s, ref.BASE), ref.mul(r, h)))
        assert crypto.commit(s, r).value == expected


def test_commit_zero_is_identity():
    assert crypto.commit(0, 0).value == crypto.IDENTITY


def test_commit_determinism_and_blinding():
    assert crypto.commit(5, 9) == crypto.commit(5, 9)
    assert crypto.commit(5, 9) != crypto.commit(5, 10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, crypto.ORDER - 1), st.integers(0, crypto.ORDER - 1),
       st.integers(0, crypto.ORDER - 1), st.integers(0, crypto.ORDER - 1))
def test_commitment_homomorphism(s1, r1, s2, r2):
    combined = crypto.commit(s1, r1) * crypto.commit(s2, r2)
    assert combined == crypto.commit((s1 + s2) % crypto.ORDER, (r1 + r2) % crypto.ORDER)


def test_commitments_from_different_contexts_do_not_combine():
    with pytest.raises(ValueError):
        crypto.commit(1, 1, "a") * crypto.commit(1, 1, "b")


def test_opening_proof_completeness_and_replay(rng):
    s, r = crypto.random_scalar(rng), crypto.random_scalar(rng)
    c = crypto.commit(s, r, "ctx")
    proof = crypto.prove_opening(s, r, c, b"nonce-1", rng)
    assert crypto.verify_opening(c, proof, b"nonce-1")
    assert crypto.verify_opening(c, proof, b"nonce-1")  # deterministic
    assert not crypto.verify_opening(c, proof, b"nonce-2")


def test_wrong_opening_fails(rng):
    s, r = crypto.random_scalar(rng), crypto.random_scalar(rng)
    c = crypto.commit(s, r)
    assert not crypto.verify_opening(c, crypto.prove_opening(s + 1, r, c, b"n", rng), b"n")
    other = crypto.commit(s, r + 1)
    assert not crypto.verify_opening(other, crypto.prove_opening(s, r, c, b"n", rng), b"n")


def test_challenge_binds_context(rng):
    s, r = crypto.random_scalar(rng), crypto.random_scalar(rng)
    a, b = crypto.commit(s, r, "A"), crypto.commit(s, r, "B")
    proof = crypto.prove_opening(s, r, a, b"n", rng)
    moved = crypto.OpeningProof(b, proof.challenge, proof.responses, proof.bound_nonce)
    assert not crypto.verify_opening(b, moved, b"n")


def test_random_forgeries_rejected():
    rng = random.Random(99)
    c = crypto.commit(crypto.random_scalar(rng), crypto.random_scalar(rng))
    nonce = rng.randbytes(32)
    accepted = 0
    for _ in range(1000):
        forged = crypto.OpeningProof(
            c, crypto.random_scalar(rng), (crypto.random_scalar(rng), crypto.random_scalar(rng)), nonce
        )
        accepted += crypto.verify_opening(c, forged, nonce)
    assert accepted == 0


def test_out_of_range_scalars_rejected(rng):
    s, r = crypto.random_scalar(rng), crypto.random_scalar(rng)
    c = crypto.commit(s, r)
    p = crypto.prove_opening(s, r, c, b"n", rng)
    shifted = crypto.OpeningProof(c, p.challenge, (p.responses[0] + crypto.ORDER, p.responses[1]), b"n")
    assert not crypto.verify_opening(c, shifted, b"n")


def test_invalid_group_element_rejected(rng):
    bogus = crypto.Commitment(b"\xff" * 32)
    proof = crypto.OpeningProof(bogus, 1, (1, 1), b"n")
    assert not crypto.verify_opening(bogus, proof, b"n")
