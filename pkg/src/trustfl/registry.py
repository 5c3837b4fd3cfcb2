"""In-process verifiable data registry.

Holds issuer DID documents, credential schemas, issuer authorizations and
revoked credential hashes.  Everything is append-only; writes go through a
single lock and readers see immutable snapshots of each table.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .errors import ConflictError, NotFoundError
from .identity import Did, DidDocument, DidMethod

HASH_BYTES = 32


@dataclass(frozen=True)
class CredentialSchema:
    name: str
    version: str
    attribute_names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.attribute_names)
        object.__setattr__(self, "attribute_names", names)
        if not names:
            raise ValueError("schema needs at least one attribute")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate attribute names in {names}")
        if list(names) != sorted(names):
            raise ValueError(f"attribute names must be sorted ascending: {names}")
        if not self.name or not self.version or ":" in self.name:
            raise ValueError("schema name/version must be non-empty and name must not contain ':'")

    @classmethod
    def create(cls, name: str, version: str, attribute_names) -> "CredentialSchema":
        return cls(name, version, tuple(sorted(attribute_names)))

    @property
    def schema_id(self) -> str:
        return f"{self.name}:{self.version}"

    def to_dict(self) -> dict:
        return {
            "schema_id": self.schema_id,
            "name": self.name,
            "version": self.version,
            "attribute_names": list(self.attribute_names),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CredentialSchema":
        schema = cls(data["name"], data["version"], tuple(data["attribute_names"]))
        if "schema_id" in data and data["schema_id"] != schema.schema_id:
            raise ValueError(f"schema_id {data['schema_id']!r} does not match name:version")
        return schema


@dataclass(frozen=True)
class AuthorizationRecord:
    schema_id: str
    authorized_issuers: frozenset[str]


def _check_hash(credential_hash: bytes) -> bytes:
    if len(credential_hash) != HASH_BYTES:
        raise ValueError(f"credential hash must be {HASH_BYTES} bytes")
    return bytes(credential_hash)


class Registry:
    def __init__(self):
        self._write_gate = threading.Lock()
        self._dids: dict[str, DidDocument] = {}
        self._schemas: dict[str, CredentialSchema] = {}
        self._grants: dict[str, frozenset[str]] = {}
        self._revoked: frozenset[bytes] = frozenset()

    # issuers
    def register_issuer(self, doc: DidDocument) -> None:
        if doc.id.method is not DidMethod.PUB:
            raise ValueError(f"only public DIDs are anchored on the registry, got {doc.id}")
        doc.check()
        key = str(doc.id)
        with self._write_gate:
            existing = self._dids.get(key)
            if existing is not None:
                if existing != doc:
                    raise ConflictError(f"{key} already registered with a different document")
                return
            self._dids = {**self._dids, key: doc}

    def lookup_did(self, did: Did) -> Optional[DidDocument]:
        return self._dids.get(str(did))

    # schemas and grants
    def register_schema(self, schema: CredentialSchema) -> str:
        with self._write_gate:
            existing = self._schemas.get(schema.schema_id)
            if existing is not None and existing != schema:
                raise ConflictError(f"schema {schema.schema_id} already registered with other attributes")
            if existing is None:
                self._schemas = {**self._schemas, schema.schema_id: schema}
        return schema.schema_id

    def get_schema(self, schema_id: str) -> CredentialSchema:
        try:
            return self._schemas[schema_id]
        except KeyError:
            raise NotFoundError(f"unknown schema {schema_id!r}") from None

    def has_schema(self, schema_id: str) -> bool:
        return schema_id in self._schemas

    def authorize(self, schema_id: str, issuer_did: Did, *, require_anchored: bool = True) -> None:
        """Grant ``issuer_did`` authority over ``schema_id``.

        A governance body may vouch for a DID before its document is anchored;
        pass ``require_anchored=False`` for that.  Such an issuer is authorized
        but its credentials still fail resolution until the DID is registered.
        """
        self.get_schema(schema_id)
        if require_anchored and self.lookup_did(issuer_did) is None:
            raise NotFoundError(f"issuer {issuer_did} is not registered")
        with self._write_gate:
            current = self._grants.get(schema_id, frozenset())
            self._grants = {**self._grants, schema_id: current | {str(issuer_did)}}

    def is_authorized(self, schema_id: str, issuer_did: Did) -> bool:
        return str(issuer_did) in self._grants.get(schema_id, frozenset())

    def authorization(self, schema_id: str) -> AuthorizationRecord:
        return AuthorizationRecord(schema_id, self._grants.get(schema_id, frozenset()))

    # revocation
    def revoke(self, credential_hash: bytes) -> None:
        h = _check_hash(credential_hash)
        with self._write_gate:
            self._revoked = self._revoked | {h}

    def is_revoked(self, credential_hash: bytes) -> bool:
        return _check_hash(credential_hash) in self._revoked

    # snapshots
    def snapshot(self) -> dict:
        return {
            "dids": [self._dids[k].to_dict() for k in sorted(self._dids)],
            "schemas": [self._schemas[k].to_dict() for k in sorted(self._schemas)],
            "grants": [
                {"schema_id": k, "issuers": sorted(self._grants[k])} for k in sorted(self._grants)
            ],
            "revoked": sorted(h.hex() for h in self._revoked),
        }

    def dump(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.snapshot(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_snapshot(cls, data: dict) -> "Registry":
        reg = cls()
        reg.load_snapshot(data)
        return reg

    def load_snapshot(self, data: dict) -> None:
        """Merge a snapshot into this registry (idempotent for identical content)."""
        for doc in data.get("dids", []):
            self.register_issuer(DidDocument.from_dict(doc))
        for schema in data.get("schemas", []):
            self.register_schema(CredentialSchema.from_dict(schema))
        for grant in data.get("grants", []):
            for issuer in grant["issuers"]:
                self.authorize(grant["schema_id"], Did.parse(issuer), require_anchored=False)
        for h in data.get("revoked", []):
            self.revoke(bytes.fromhex(h))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Registry":
        return cls.from_snapshot(json.loads(Path(path).read_text(encoding="utf-8")))
