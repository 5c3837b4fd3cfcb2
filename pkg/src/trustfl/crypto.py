"""Signatures, sealed boxes, hashing and Pedersen commitments.

Ed25519 keys double as encryption keys: the sealed box converts them to
X25519 the same way libsodium does, so one 32-byte public key per DID
covers both signing and encryption.

Commitments live in the prime-order subgroup of edwards25519.  ``G`` is the
standard base point and ``H`` is obtained by hashing to the curve, so nobody
knows log_G(H).
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass

from nacl import bindings as sodium
from nacl.exceptions import BadSignatureError, CryptoError

from .errors import DecryptionError, InvalidSeedError

SEED_BYTES = 32
PUBLIC_KEY_BYTES = 32
SIGNATURE_BYTES = 64
SEAL_OVERHEAD = sodium.crypto_box_SEALBYTES

#: Order of the edwards25519 prime-order subgroup.
ORDER = 2**252 + 27742317777372353535851937790883648493
IDENTITY = b"\x01" + bytes(31)

_system_rng = random.SystemRandom()


def _rng(rng: random.Random | None) -> random.Random:
    return _system_rng if rng is None else rng


@dataclass(frozen=True)
class KeyPair:
    secret_key: bytes  # libsodium layout: seed || public key
    public_key: bytes

    def __repr__(self):
        return f"KeyPair(public_key={self.public_key.hex()})"


def generate_keypair(seed: bytes) -> KeyPair:
    if not isinstance(seed, (bytes, bytearray)) or len(seed) != SEED_BYTES:
        raise InvalidSeedError(f"seed must be exactly {SEED_BYTES} bytes")
    pk, sk = sodium.crypto_sign_seed_keypair(bytes(seed))
    return KeyPair(secret_key=sk, public_key=pk)


def random_keypair(rng: random.Random | None = None) -> KeyPair:
    return generate_keypair(_rng(rng).randbytes(SEED_BYTES))


def sign(secret_key: bytes, message: bytes) -> bytes:
    return sodium.crypto_sign(message, secret_key)[:SIGNATURE_BYTES]


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Return True iff ``signature`` is valid; malformed input gives False."""
    if len(signature) != SIGNATURE_BYTES or len(public_key) != PUBLIC_KEY_BYTES:
        return False
    try:
        sodium.crypto_sign_open(bytes(signature) + bytes(message), public_key)
    except (BadSignatureError, CryptoError, ValueError, TypeError):
        return False
    return True


def _seal_nonce(ephemeral_pk: bytes, recipient_pk: bytes) -> bytes:
    return hashlib.blake2b(ephemeral_pk + recipient_pk, digest_size=sodium.crypto_box_NONCEBYTES).digest()


def seal(recipient_public_key: bytes, plaintext: bytes, rng: random.Random | None = None) -> bytes:
    """Anonymous-sender encryption to an Ed25519 public key.

    Output layout matches libsodium's ``crypto_box_seal`` (ephemeral key,
    then the authenticated box), but the ephemeral key is drawn from ``rng``
    so runs are reproducible.
    """
    try:
        recipient_x = sodium.crypto_sign_ed25519_pk_to_curve25519(recipient_public_key)
    except (CryptoError, ValueError, TypeError) as exc:
        raise DecryptionError(f"recipient key unusable for encryption: {exc}") from exc
    ephemeral_sk = _rng(rng).randbytes(sodium.crypto_box_SECRETKEYBYTES)
    ephemeral_pk = sodium.crypto_scalarmult_base(ephemeral_sk)
    nonce = _seal_nonce(ephemeral_pk, recipient_x)
    return ephemeral_pk + sodium.crypto_box(bytes(plaintext), nonce, recipient_x, ephemeral_sk)


def open_sealed(recipient_secret_key: bytes, ciphertext: bytes) -> bytes:
    if len(ciphertext) < SEAL_OVERHEAD:
        raise DecryptionError("ciphertext shorter than sealed-box overhead")
    try:
        secret_x = sodium.crypto_sign_ed25519_sk_to_curve25519(recipient_secret_key)
        public_x = sodium.crypto_scalarmult_base(secret_x)
        ephemeral_pk = bytes(ciphertext[: sodium.crypto_box_PUBLICKEYBYTES])
        nonce = _seal_nonce(ephemeral_pk, public_x)
        return sodium.crypto_box_open(
            bytes(ciphertext[sodium.crypto_box_PUBLICKEYBYTES :]), nonce, ephemeral_pk, secret_x
        )
    except (CryptoError, ValueError, TypeError) as exc:
        raise DecryptionError("sealed box could not be opened with this key") from exc


# `open` is the natural name next to `seal`; keep the builtin reachable too.
open = open_sealed  # noqa: A001


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# --- prime-order group ----------------------------------------------------

def scalar_to_bytes(k: int) -> bytes:
    return (k % ORDER).to_bytes(32, "little")


def scalar_from_bytes(b: bytes) -> int:
    if len(b) != 32:
        raise ValueError("scalar encoding must be 32 bytes")
    return int.from_bytes(b, "little")


def random_scalar(rng: random.Random | None = None) -> int:
    # 512 bits reduced mod ORDER keeps the bias negligible
    return int.from_bytes(_rng(rng).randbytes(64), "little") % ORDER


def is_group_element(p: bytes) -> bool:
    if not isinstance(p, (bytes, bytearray)) or len(p) != 32:
        return False
    p = bytes(p)
    return p == IDENTITY or bool(sodium.crypto_core_ed25519_is_valid_point(p))


def point_add(p: bytes, q: bytes) -> bytes:
    return sodium.crypto_core_ed25519_add(p, q)


def point_sub(p: bytes, q: bytes) -> bytes:
    return sodium.crypto_core_ed25519_sub(p, q)


def point_mul(k: int, p: bytes) -> bytes:
    k %= ORDER
    if k == 0 or p == IDENTITY:
        return IDENTITY
    if p == G:
        return sodium.crypto_scalarmult_ed25519_base_noclamp(scalar_to_bytes(k))
    return sodium.crypto_scalarmult_ed25519_noclamp(scalar_to_bytes(k), p)


G = sodium.crypto_scalarmult_ed25519_base_noclamp(scalar_to_bytes(1))
H = sodium.crypto_core_ed25519_from_uniform(digest(b"trustfl pedersen generator H v1"))


@dataclass(frozen=True)
class Commitment:
    value: bytes
    context: str = ""

    def __mul__(self, other: "Commitment") -> "Commitment":
        # group law written multiplicatively, as in g^s * h^r
        if self.context != other.context:
            raise ValueError("cannot combine commitments from different contexts")
        return Commitment(point_add(self.value, other.value), self.context)


def commit(secret: int, blinding: int, context: str = "") -> Commitment:
    return Commitment(point_add(point_mul(secret, G), point_mul(blinding, H)), context)


@dataclass(frozen=True)
class OpeningProof:
    commitment_ref: Commitment
    challenge: int
    responses: tuple[int, int]
    bound_nonce: bytes


def _challenge(commitment: Commitment, announcement: bytes, bound_nonce: bytes) -> int:
    data = (
        commitment.value
        + announcement
        + struct.pack("<I", len(bound_nonce))
        + bytes(bound_nonce)
        + commitment.context.encode("utf-8")
    )
    return int.from_bytes(digest(data), "little") % ORDER


def prove_opening(
    secret: int,
    blinding: int,
    commitment: Commitment,
    bound_nonce: bytes,
    rng: random.Random | None = None,
) -> OpeningProof:
    """Non-interactive proof of knowledge of (secret, blinding) opening ``commitment``."""
    k1, k2 = random_scalar(rng), random_scalar(rng)
    announcement = point_add(point_mul(k1, G), point_mul(k2, H))
    c = _challenge(commitment, announcement, bound_nonce)
    return OpeningProof(
        commitment_ref=commitment,
        challenge=c,
        responses=((k1 + c * secret) % ORDER, (k2 + c * blinding) % ORDER),
        bound_nonce=bytes(bound_nonce),
    )


def verify_opening(commitment: Commitment, proof: OpeningProof, bound_nonce: bytes) -> bool:
    if proof.commitment_ref != commitment or proof.bound_nonce != bytes(bound_nonce):
        return False
    if not is_group_element(commitment.value):
        return False
    z1, z2 = proof.responses
    c = proof.challenge
    if not all(isinstance(x, int) and 0 <= x < ORDER for x in (z1, z2, c)):
        return False
    try:
        lhs = point_add(point_mul(z1, G), point_mul(z2, H))
        announcement = point_sub(lhs, point_mul(c, commitment.value))
    except (CryptoError, ValueError, TypeError):
        return False
    return c == _challenge(commitment, announcement, bound_nonce)
