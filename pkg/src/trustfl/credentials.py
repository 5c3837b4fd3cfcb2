"""Issuing, holding, presenting and verifying credentials.

A credential is an Ed25519 signature by the issuer over the attribute set
plus a Pedersen commitment to the holder's link secret.  The holder proves
knowledge of the commitment opening, bound to the verifier's nonce, each
time it presents.  All attributes are disclosed.
"""

from __future__ import annotations

import base64
import binascii
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from . import crypto
from .crypto import Commitment, OpeningProof
from .errors import CannotSatisfyError, CorruptDocumentError, EncodingError, NotFoundError, SchemaViolationError
from .identity import Did, resolve
from .registry import CredentialSchema, Registry

NONCE_BYTES = 32

Constraint = tuple[str, Union[str, tuple[str, ...]]]


def _b64(b: bytes) -> str:
    return base64.b64encode(b).decode("ascii")


def _unb64(s: str) -> bytes:
    try:
        return base64.b64decode(s, validate=True)
    except (binascii.Error, TypeError, ValueError) as exc:
        raise EncodingError(f"bad base64: {exc}") from exc


# --- wire forms of crypto objects -----------------------------------------

def commitment_to_dict(c: Commitment) -> dict:
    return {"value": _b64(c.value), "context": c.context}


def commitment_from_dict(d: dict) -> Commitment:
    try:
        return Commitment(_unb64(d["value"]), str(d["context"]))
    except (KeyError, TypeError) as exc:
        raise EncodingError(f"malformed commitment: {exc}") from exc


def proof_to_dict(p: OpeningProof) -> dict:
    return {
        "commitment": commitment_to_dict(p.commitment_ref),
        "challenge": _b64(crypto.scalar_to_bytes(p.challenge)),
        "responses": [_b64(crypto.scalar_to_bytes(z)) for z in p.responses],
        "nonce": _b64(p.bound_nonce),
    }


def proof_from_dict(d: dict) -> OpeningProof:
    try:
        z1, z2 = (crypto.scalar_from_bytes(_unb64(z)) for z in d["responses"])
        return OpeningProof(
            commitment_ref=commitment_from_dict(d["commitment"]),
            challenge=crypto.scalar_from_bytes(_unb64(d["challenge"])),
            responses=(z1, z2),
            bound_nonce=_unb64(d["nonce"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise EncodingError(f"malformed opening proof: {exc}") from exc


# --- holder secrets -------------------------------------------------------

@dataclass
class LinkSecret:
    """The holder's private scalar plus one blinding per credential commitment."""

    secret: int
    blindings: dict[bytes, int] = field(default_factory=dict, repr=False)

    @classmethod
    def generate(cls, rng: random.Random | None = None) -> "LinkSecret":
        return cls(crypto.random_scalar(rng))

    def __repr__(self):
        return "LinkSecret(<hidden>)"

    def blinding_for(self, commitment: Commitment) -> int:
        try:
            return self.blindings[commitment.value]
        except KeyError:
            raise CannotSatisfyError("no blinding recorded for this commitment") from None


@dataclass(frozen=True)
class CredentialRequest:
    schema_id: str
    commitment: Commitment

    def to_dict(self) -> dict:
        return {"schema_id": self.schema_id, "commitment": commitment_to_dict(self.commitment)}

    @classmethod
    def from_dict(cls, d: dict) -> "CredentialRequest":
        try:
            return cls(str(d["schema_id"]), commitment_from_dict(d["commitment"]))
        except (KeyError, TypeError) as exc:
            raise EncodingError(f"malformed credential request: {exc}") from exc


def request_credential(
    link_secret: LinkSecret,
    schema: CredentialSchema,
    rng: random.Random | None = None,
    registry: Optional[Registry] = None,
) -> CredentialRequest:
    if registry is not None and not registry.has_schema(schema.schema_id):
        raise NotFoundError(f"schema {schema.schema_id} is not registered")
    blinding = crypto.random_scalar(rng)
    commitment = crypto.commit(link_secret.secret, blinding, schema.schema_id)
    link_secret.blindings[commitment.value] = blinding
    return CredentialRequest(schema.schema_id, commitment)


# --- credentials ----------------------------------------------------------

@dataclass(frozen=True)
class Credential:
    schema_id: str
    issuer_did: Did
    attributes: tuple[tuple[str, str], ...]
    link_commitment: Commitment
    issuer_signature: bytes
    credential_hash: bytes

    def canonical_encoding(self) -> bytes:
        return canonical_encoding(self.schema_id, self.issuer_did, self.attributes, self.link_commitment)

    @property
    def attribute_map(self) -> dict[str, str]:
        return dict(self.attributes)

    def to_dict(self) -> dict:
        return {
            "schema_id": self.schema_id,
            "issuer_did": str(self.issuer_did),
            "attributes": [[k, v] for k, v in self.attributes],
            "link_commitment": commitment_to_dict(self.link_commitment),
            "signature": _b64(self.issuer_signature),
            "hash": self.credential_hash.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Credential":
        try:
            return cls(
                schema_id=str(d["schema_id"]),
                issuer_did=Did.parse(d["issuer_did"]),
                attributes=tuple((str(k), str(v)) for k, v in d["attributes"]),
                link_commitment=commitment_from_dict(d["link_commitment"]),
                issuer_signature=_unb64(d["signature"]),
                credential_hash=bytes.fromhex(d["hash"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"malformed credential: {exc}") from exc


def canonical_encoding(
    schema_id: str,
    issuer_did: Did,
    attributes: Iterable[tuple[str, str]],
    link_commitment: Commitment,
) -> bytes:
    lines = [f"{name}={value}" for name, value in sorted(attributes)]
    lines += [
        f"schema={schema_id}",
        f"issuer={issuer_did}",
        f"link={_b64(link_commitment.value)}",
    ]
    return "\n".join(lines).encode("utf-8")


def issue(
    issuer_keypair: crypto.KeyPair,
    issuer_did: Did,
    schema: CredentialSchema,
    attribute_values: Mapping[str, str],
    commitment: Commitment,
) -> Credential:
    """Sign ``attribute_values`` together with the holder's commitment.

    Whether the issuer is authorized for the schema is not checked here;
    verifiers check that at presentation time.
    """
    names = sorted(attribute_values)
    if tuple(names) != schema.attribute_names:
        raise SchemaViolationError(
            f"attributes {names} do not match schema {schema.schema_id} {list(schema.attribute_names)}"
        )
    for name, value in attribute_values.items():
        if not isinstance(value, str) or "\n" in value:
            raise SchemaViolationError(f"attribute {name!r} must be a single-line string")
    if commitment.context != schema.schema_id:
        raise SchemaViolationError("link commitment was made for a different schema")
    attributes = tuple((n, attribute_values[n]) for n in names)
    encoding = canonical_encoding(schema.schema_id, issuer_did, attributes, commitment)
    return Credential(
        schema_id=schema.schema_id,
        issuer_did=issuer_did,
        attributes=attributes,
        link_commitment=commitment,
        issuer_signature=crypto.sign(issuer_keypair.secret_key, encoding),
        credential_hash=crypto.digest(encoding),
    )


def check_issuer_signature(credential: Credential, registry: Registry) -> tuple[bool, str]:
    try:
        doc = resolve(credential.issuer_did, None, registry)
    except NotFoundError:
        return False, f"issuer {credential.issuer_did} does not resolve on the registry"
    except CorruptDocumentError as exc:
        return False, f"issuer document is corrupt: {exc}"
    encoding = credential.canonical_encoding()
    if crypto.digest(encoding) != credential.credential_hash:
        return False, "credential hash does not match its canonical encoding"
    if not crypto.verify(doc.verification_key, encoding, credential.issuer_signature):
        return False, "issuer signature does not verify"
    return True, "issuer resolved and signature verifies"


# --- proofs ---------------------------------------------------------------

@dataclass(frozen=True)
class ProofRequest:
    nonce: bytes
    schema_id: str
    required_issuer: Optional[Did] = None
    disclosed_attributes: tuple[str, ...] = ()
    attribute_constraints: tuple[Constraint, ...] = ()

    @classmethod
    def new(
        cls,
        schema_id: str,
        required_issuer: Optional[Did] = None,
        disclosed_attributes: Sequence[str] = (),
        attribute_constraints: Union[Mapping[str, object], Sequence[Constraint]] = (),
        rng: random.Random | None = None,
    ) -> "ProofRequest":
        if isinstance(attribute_constraints, Mapping):
            attribute_constraints = list(attribute_constraints.items())
        constraints = tuple(
            (name, tuple(v) if isinstance(v, (list, tuple, set, frozenset)) else str(v))
            for name, v in attribute_constraints
        )
        return cls(
            nonce=crypto._rng(rng).randbytes(NONCE_BYTES),
            schema_id=schema_id,
            required_issuer=required_issuer,
            disclosed_attributes=tuple(disclosed_attributes),
            attribute_constraints=constraints,
        )

    def to_dict(self) -> dict:
        return {
            "nonce": _b64(self.nonce),
            "schema_id": self.schema_id,
            "required_issuer": str(self.required_issuer) if self.required_issuer else None,
            "disclosed_attributes": list(self.disclosed_attributes),
            "attribute_constraints": [
                [n, list(v) if isinstance(v, tuple) else v] for n, v in self.attribute_constraints
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProofRequest":
        try:
            issuer = d["required_issuer"]
            return cls(
                nonce=_unb64(d["nonce"]),
                schema_id=str(d["schema_id"]),
                required_issuer=Did.parse(issuer) if issuer else None,
                disclosed_attributes=tuple(d["disclosed_attributes"]),
                attribute_constraints=tuple(
                    (n, tuple(v) if isinstance(v, list) else str(v)) for n, v in d["attribute_constraints"]
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EncodingError(f"malformed proof request: {exc}") from exc


@dataclass(frozen=True)
class Presentation:
    credential: Credential
    opening_proof: OpeningProof

    def to_dict(self) -> dict:
        return {"credential": self.credential.to_dict(), "opening_proof": proof_to_dict(self.opening_proof)}

    @classmethod
    def from_dict(cls, d: dict) -> "Presentation":
        try:
            return cls(Credential.from_dict(d["credential"]), proof_from_dict(d["opening_proof"]))
        except (KeyError, TypeError) as exc:
            raise EncodingError(f"malformed presentation: {exc}") from exc


def present(
    credential: Credential,
    link_secret: LinkSecret,
    proof_request: ProofRequest,
    *,
    blinding: Optional[int] = None,
    rng: random.Random | None = None,
) -> Presentation:
    if credential.schema_id != proof_request.schema_id:
        raise CannotSatisfyError(
            f"credential schema {credential.schema_id} does not match requested {proof_request.schema_id}"
        )
    if blinding is None:
        blinding = link_secret.blinding_for(credential.link_commitment)
    proof = crypto.prove_opening(
        link_secret.secret, blinding, credential.link_commitment, proof_request.nonce, rng
    )
    return Presentation(credential, proof)


CHECK_NAMES = (
    "issuer_resolves_and_signature_valid",
    "holder_knows_link_secret",
    "issuer_authorized",
    "not_revoked",
    "attribute_criteria",
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    reason: str

    def to_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "reason": self.reason}


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple[CheckResult, ...]

    @property
    def accepted(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failed(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.checks if not c.ok)

    def flags(self) -> tuple[bool, ...]:
        return tuple(c.ok for c in self.checks)

    def to_dict(self) -> dict:
        return {"accepted": self.accepted, "checks": [c.to_dict() for c in self.checks]}


def _constraint_holds(expected, actual: Optional[str]) -> bool:
    if actual is None:
        return False
    if isinstance(expected, tuple):
        return actual in expected
    return actual == expected


def verify_presentation(
    presentation: Presentation, proof_request: ProofRequest, registry: Registry
) -> VerificationReport:
    """Run all five checks; none short-circuits the others."""
    cred = presentation.credential

    ok1, why1 = check_issuer_signature(cred, registry)

    ok2 = crypto.verify_opening(cred.link_commitment, presentation.opening_proof, proof_request.nonce)
    why2 = "opening proof verifies against request nonce" if ok2 else "opening proof rejected"

    granted = registry.is_authorized(cred.schema_id, cred.issuer_did)
    pinned = proof_request.required_issuer is None or cred.issuer_did == proof_request.required_issuer
    ok3 = granted and pinned
    if ok3:
        why3 = f"{cred.issuer_did} is authorized for {cred.schema_id}"
    elif not granted:
        why3 = f"{cred.issuer_did} has no authority for {cred.schema_id}"
    else:
        why3 = f"issuer {cred.issuer_did} is not the required issuer {proof_request.required_issuer}"

    try:
        revoked = registry.is_revoked(cred.credential_hash)
    except ValueError:
        revoked = True
    ok4 = not revoked
    why4 = "credential hash not in revocation registry" if ok4 else "credential has been revoked"

    attrs = cred.attribute_map
    problems = []
    if cred.schema_id != proof_request.schema_id:
        problems.append(f"schema {cred.schema_id} != requested {proof_request.schema_id}")
    for name in proof_request.disclosed_attributes:
        if name not in attrs:
            problems.append(f"attribute {name!r} not disclosed")
    for name, expected in proof_request.attribute_constraints:
        if not _constraint_holds(expected, attrs.get(name)):
            problems.append(f"{name}={attrs.get(name)!r} violates constraint {expected!r}")
    ok5 = not problems
    why5 = "all constraints satisfied" if ok5 else "; ".join(problems)

    return VerificationReport(
        tuple(
            CheckResult(n, ok, why)
            for n, ok, why in zip(CHECK_NAMES, (ok1, ok2, ok3, ok4, ok5), (why1, why2, why3, why4, why5))
        )
    )
