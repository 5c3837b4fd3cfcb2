"""DIDs, DID documents, messages and the encrypt-then-sign envelope."""

from __future__ import annotations

import base64
import binascii
import json
import random
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

import base58

from . import crypto
from .errors import (
    ConfidentialityError,
    CorruptDocumentError,
    DecryptionError,
    EncodingError,
    IntegrityError,
    NotFoundError,
    UnsupportedTypeError,
)

ID_BYTES = 16


class DidMethod(str, Enum):
    PEER = "peer"
    PUB = "pub"


def did_identifier(public_key: bytes) -> str:
    return base58.b58encode(crypto.digest(public_key)[:ID_BYTES]).decode("ascii")


@dataclass(frozen=True)
class Did:
    method: DidMethod
    identifier: str

    def __str__(self):
        return f"did:{self.method.value}:{self.identifier}"

    @classmethod
    def from_key(cls, public_key: bytes, method: DidMethod = DidMethod.PEER) -> "Did":
        return cls(DidMethod(method), did_identifier(public_key))

    @classmethod
    def parse(cls, text: str) -> "Did":
        parts = text.split(":")
        if len(parts) != 3 or parts[0] != "did" or not parts[2]:
            raise EncodingError(f"not a DID: {text!r}")
        try:
            method = DidMethod(parts[1])
        except ValueError:
            raise EncodingError(f"unsupported DID method in {text!r}") from None
        return cls(method, parts[2])


@dataclass(frozen=True)
class DidDocument:
    id: Did
    verification_key: bytes
    endpoint: str

    def check(self) -> "DidDocument":
        """Raise CorruptDocumentError unless the key hashes to the identifier."""
        if len(self.verification_key) != crypto.PUBLIC_KEY_BYTES:
            raise CorruptDocumentError(f"{self.id}: verification key has wrong length")
        if did_identifier(self.verification_key) != self.id.identifier:
            raise CorruptDocumentError(f"{self.id}: verification key does not match identifier")
        return self

    def to_dict(self) -> dict:
        return {
            "id": str(self.id),
            "verkey": base58.b58encode(self.verification_key).decode("ascii"),
            "endpoint": self.endpoint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DidDocument":
        try:
            return cls(
                id=Did.parse(data["id"]),
                verification_key=base58.b58decode(data["verkey"]),
                endpoint=str(data["endpoint"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"malformed DID document: {exc}") from exc


def create_peer_did(keypair: crypto.KeyPair, endpoint: str) -> tuple[Did, DidDocument]:
    return _create_did(keypair, endpoint, DidMethod.PEER)


def create_public_did(keypair: crypto.KeyPair, endpoint: str) -> tuple[Did, DidDocument]:
    return _create_did(keypair, endpoint, DidMethod.PUB)


def _create_did(keypair, endpoint, method):
    if not endpoint:
        raise ValueError("endpoint must be non-empty")
    did = Did.from_key(keypair.public_key, method)
    return did, DidDocument(did, keypair.public_key, endpoint)


# --- messages ---------------------------------------------------------------

class MessageType(str, Enum):
    DID_EXCHANGE_REQUEST = "did_exchange_request"
    DID_EXCHANGE_RESPONSE = "did_exchange_response"
    CREDENTIAL_OFFER = "credential_offer"
    CREDENTIAL_REQUEST = "credential_request"
    CREDENTIAL_ISSUE = "credential_issue"
    PROOF_REQUEST = "proof_request"
    PROOF_PRESENTATION = "proof_presentation"
    TRAIN_REQUEST = "train_request"
    TRAIN_RESULT = "train_result"
    ACK = "ack"
    PROBLEM_REPORT = "problem_report"


class ProblemCode(str, Enum):
    UNTRUSTED_CONNECTION = "untrusted_connection"
    PROOF_REJECTED = "proof_rejected"
    UNSUPPORTED_TYPE = "unsupported_type"
    INTERNAL = "internal"


BODY_FIELDS: dict[MessageType, frozenset[str]] = {
    MessageType.DID_EXCHANGE_REQUEST: frozenset({"token", "did_doc"}),
    MessageType.DID_EXCHANGE_RESPONSE: frozenset({"did_doc"}),
    MessageType.CREDENTIAL_OFFER: frozenset({"schema_id", "issuer_did"}),
    MessageType.CREDENTIAL_REQUEST: frozenset({"schema_id", "commitment"}),
    MessageType.CREDENTIAL_ISSUE: frozenset({"credential"}),
    MessageType.PROOF_REQUEST: frozenset({"request"}),
    MessageType.PROOF_PRESENTATION: frozenset({"presentation"}),
    MessageType.TRAIN_REQUEST: frozenset({"model", "batch"}),
    MessageType.TRAIN_RESULT: frozenset({"model"}),
    MessageType.ACK: frozenset({"status"}),
    MessageType.PROBLEM_REPORT: frozenset({"code", "detail"}),
}

REPLY_TYPES: dict[MessageType, frozenset[MessageType]] = {
    MessageType.DID_EXCHANGE_REQUEST: frozenset({MessageType.DID_EXCHANGE_RESPONSE, MessageType.PROBLEM_REPORT}),
    MessageType.CREDENTIAL_OFFER: frozenset({MessageType.CREDENTIAL_REQUEST, MessageType.ACK}),
    MessageType.CREDENTIAL_REQUEST: frozenset({MessageType.CREDENTIAL_ISSUE, MessageType.PROBLEM_REPORT}),
    MessageType.CREDENTIAL_ISSUE: frozenset({MessageType.ACK, MessageType.PROBLEM_REPORT}),
    MessageType.PROOF_REQUEST: frozenset({MessageType.PROOF_PRESENTATION, MessageType.PROBLEM_REPORT}),
    MessageType.PROOF_PRESENTATION: frozenset({MessageType.ACK, MessageType.PROBLEM_REPORT}),
    MessageType.TRAIN_REQUEST: frozenset({MessageType.TRAIN_RESULT, MessageType.PROBLEM_REPORT}),
}


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass(frozen=True)
class Message:
    type: MessageType
    body: dict
    thread_id: Optional[str] = None

    def __post_init__(self):
        missing = BODY_FIELDS[MessageType(self.type)] - set(self.body)
        if missing:
            raise EncodingError(f"{self.type.value} body missing {sorted(missing)}")

    def canonical_bytes(self) -> bytes:
        try:
            return canonical_json({"type": self.type.value, "thid": self.thread_id, "body": self.body})
        except (TypeError, ValueError) as exc:
            raise EncodingError(f"message body is not JSON-serializable: {exc}") from exc

    def reply(self, type: MessageType, body: dict) -> "Message":
        return Message(MessageType(type), body, self.thread_id)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Message":
        try:
            obj = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise EncodingError(f"message is not UTF-8 JSON: {exc}") from exc
        if not isinstance(obj, dict) or set(obj) != {"type", "thid", "body"} or not isinstance(obj["body"], dict):
            raise EncodingError("message must be an object with exactly type, thid, body")
        try:
            mtype = MessageType(obj["type"])
        except ValueError:
            raise UnsupportedTypeError(f"unsupported message type {obj['type']!r}") from None
        return cls(mtype, obj["body"], obj["thid"])


# --- envelope -------------------------------------------------------------

WIRE_KEYS = frozenset({"to", "from", "mid", "thid", "ct_b64", "sig_b64"})


@dataclass(frozen=True)
class Envelope:
    to: Did
    from_: Did
    ciphertext: bytes
    signature: bytes
    message_id: str
    thread_id: Optional[str] = None

    def to_wire(self) -> bytes:
        return canonical_json(
            {
                "to": str(self.to),
                "from": str(self.from_),
                "mid": self.message_id,
                "thid": self.thread_id,
                "ct_b64": base64.b64encode(self.ciphertext).decode("ascii"),
                "sig_b64": base64.b64encode(self.signature).decode("ascii"),
            }
        )

    @classmethod
    def from_wire(cls, data: bytes) -> "Envelope":
        try:
            obj = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise EncodingError(f"envelope is not UTF-8 JSON: {exc}") from exc
        if not isinstance(obj, dict) or set(obj) != WIRE_KEYS:
            raise EncodingError("envelope keys must be exactly " + ",".join(sorted(WIRE_KEYS)))
        try:
            return cls(
                to=Did.parse(obj["to"]),
                from_=Did.parse(obj["from"]),
                ciphertext=base64.b64decode(obj["ct_b64"], validate=True),
                signature=base64.b64decode(obj["sig_b64"], validate=True),
                message_id=str(obj["mid"]),
                thread_id=obj["thid"],
            )
        except (AttributeError, TypeError, binascii.Error) as exc:
            raise EncodingError(f"malformed envelope field: {exc}") from exc


def new_id(rng: random.Random | None = None) -> str:
    return crypto._rng(rng).randbytes(16).hex()


def pack_bytes(
    plaintext: bytes,
    sender_keypair: crypto.KeyPair,
    sender_did: Did,
    recipient: DidDocument,
    *,
    thread_id: Optional[str] = None,
    message_id: Optional[str] = None,
    rng: random.Random | None = None,
) -> Envelope:
    ciphertext = crypto.seal(recipient.verification_key, plaintext, rng)
    signature = crypto.sign(sender_keypair.secret_key, ciphertext)
    return Envelope(
        to=recipient.id,
        from_=sender_did,
        ciphertext=ciphertext,
        signature=signature,
        message_id=message_id or new_id(rng),
        thread_id=thread_id,
    )


def pack(
    message: Message,
    sender_keypair: crypto.KeyPair,
    sender_did: Did,
    recipient: DidDocument,
    *,
    message_id: Optional[str] = None,
    rng: random.Random | None = None,
) -> Envelope:
    """Encrypt ``message`` to the recipient, then sign the ciphertext."""
    return pack_bytes(
        message.canonical_bytes(),
        sender_keypair,
        sender_did,
        recipient,
        thread_id=message.thread_id,
        message_id=message_id,
        rng=rng,
    )


def verify_envelope(envelope: Envelope, sender_doc: DidDocument) -> None:
    if envelope.from_ != sender_doc.id:
        raise IntegrityError(f"envelope claims sender {envelope.from_}, expected {sender_doc.id}")
    if not crypto.verify(sender_doc.verification_key, envelope.ciphertext, envelope.signature):
        raise IntegrityError("signature does not verify over ciphertext")


def open_envelope(envelope: Envelope, recipient_keypair: crypto.KeyPair) -> Message:
    try:
        plaintext = crypto.open_sealed(recipient_keypair.secret_key, envelope.ciphertext)
    except DecryptionError as exc:
        raise ConfidentialityError(str(exc)) from exc
    message = Message.from_bytes(plaintext)
    if message.thread_id != envelope.thread_id:
        # thid travels in clear; the inner copy is the authenticated one
        raise IntegrityError("envelope thid does not match authenticated thid")
    return message


def unpack(envelope: Envelope, recipient_keypair: crypto.KeyPair, sender_doc: DidDocument) -> Message:
    """Verify the signature first; decrypt only if it holds."""
    verify_envelope(envelope, sender_doc)
    return open_envelope(envelope, recipient_keypair)


# --- resolution -----------------------------------------------------------

class PeerStore:
    """Documents of peers met over connections; never published."""

    def __init__(self):
        self._docs: dict[str, DidDocument] = {}
        self._write_lock = threading.Lock()

    def add(self, doc: DidDocument) -> None:
        doc.check()
        with self._write_lock:
            self._docs = {**self._docs, str(doc.id): doc}

    def get(self, did: Did) -> Optional[DidDocument]:
        return self._docs.get(str(did))

    def __contains__(self, did) -> bool:
        return str(did) in self._docs

    def __len__(self):
        return len(self._docs)


def resolve(did: Did, peer_store: Optional[PeerStore], registry=None) -> DidDocument:
    if did.method is DidMethod.PEER:
        doc = peer_store.get(did) if peer_store is not None else None
    else:
        doc = registry.lookup_did(did) if registry is not None else None
    if doc is None:
        raise NotFoundError(f"cannot resolve {did}")
    if doc.id != did:
        raise CorruptDocumentError(f"document stored under {did} names {doc.id}")
    return doc.check()
