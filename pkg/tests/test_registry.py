import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trustfl import crypto
from trustfl.errors import ConflictError, NotFoundError
from trustfl.identity import Did, DidMethod, create_peer_did, create_public_did
from trustfl.registry import CredentialSchema, Registry

from conftest import HOSPITAL


def pub(seed, endpoint="nhs.local:1"):
    return create_public_did(crypto.generate_keypair(bytes([seed]) * 32), endpoint)


def test_register_then_lookup():
    reg = Registry()
    did, doc = pub(1)
    reg.register_issuer(doc)
    assert reg.lookup_did(did) == doc


def test_register_idempotent_and_conflict():
    reg = Registry()
    did, doc = pub(1)
    reg.register_issuer(doc)
    reg.register_issuer(doc)
    with pytest.raises(ConflictError):
        reg.register_issuer(type(doc)(doc.id, doc.verification_key, "elsewhere.local:2"))


def test_peer_dids_not_anchored():
    _, doc = create_peer_did(crypto.generate_keypair(b"\x02" * 32), "h.local:1")
    with pytest.raises(ValueError):
        Registry().register_issuer(doc)


def test_schema_must_be_sorted_and_unique():
    with pytest.raises(ValueError):
        CredentialSchema("S", "1", ("role", "name"))
    with pytest.raises(ValueError):
        CredentialSchema("S", "1", ("a", "a"))
    assert CredentialSchema.create("S", "1", ["role", "name"]).attribute_names == ("name", "role")


def test_schema_conflict():
    reg = Registry()
    reg.register_schema(HOSPITAL)
    with pytest.raises(ConflictError):
        reg.register_schema(CredentialSchema.create("VerifiedHospital", "1.0", ["name"]))


def test_authorization():
    reg = Registry()
    assert reg.register_schema(HOSPITAL) == "VerifiedHospital:1.0"
    nhs, doc = pub(3)
    reg.register_issuer(doc)
    reg.authorize(HOSPITAL.schema_id, nhs)
    reg.authorize(HOSPITAL.schema_id, nhs)
    assert reg.is_authorized(HOSPITAL.schema_id, nhs)
    assert reg.authorization(HOSPITAL.schema_id).authorized_issuers == frozenset({str(nhs)})
    stranger = Did(DidMethod.PUB, "zzz")
    assert not reg.is_authorized(HOSPITAL.schema_id, stranger)


def test_authorize_requires_schema_and_anchored_issuer():
    reg = Registry()
    did, _ = pub(4)
    with pytest.raises(NotFoundError):
        reg.authorize("Nope:1", did)
    reg.register_schema(HOSPITAL)
    with pytest.raises(NotFoundError):
        reg.authorize(HOSPITAL.schema_id, did)
    reg.authorize(HOSPITAL.schema_id, did, require_anchored=False)
    assert reg.is_authorized(HOSPITAL.schema_id, did)


def test_revocation():
    reg = Registry()
    h = crypto.digest(b"cred")
    assert not reg.is_revoked(h)
    reg.revoke(h)
    reg.revoke(h)
    assert reg.is_revoked(h)
    with pytest.raises(ValueError):
        reg.revoke(b"short")


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["did", "schema", "grant", "revoke"]), st.integers(0, 5)), max_size=30))
def test_append_only_and_snapshot_reload(ops):
    reg = Registry()
    seen_dids, seen_schemas, seen_grants, seen_revoked = {}, {}, set(), set()
    for op, k in ops:
        if op == "did":
            did, doc = pub(k + 1)
            reg.register_issuer(doc)
            seen_dids[str(did)] = doc
        elif op == "schema":
            schema = CredentialSchema.create(f"S{k}", "1", ["a"])
            reg.register_schema(schema)
            seen_schemas[schema.schema_id] = schema
        elif op == "grant" and seen_schemas:
            sid = sorted(seen_schemas)[k % len(seen_schemas)]
            did, _ = pub(k + 1)
            reg.authorize(sid, did, require_anchored=False)
            seen_grants.add((sid, str(did)))
        elif op == "revoke":
            h = crypto.digest(bytes([k]))
            reg.revoke(h)
            seen_revoked.add(h)
        # nothing ever disappears
        assert all(reg.lookup_did(Did.parse(d)) == doc for d, doc in seen_dids.items())
        assert all(reg.get_schema(s) == v for s, v in seen_schemas.items())
        assert all(reg.is_authorized(s, Did.parse(d)) for s, d in seen_grants)
        assert all(reg.is_revoked(h) for h in seen_revoked)
    again = Registry.from_snapshot(reg.snapshot())
    assert again.snapshot() == reg.snapshot()


def test_default_deny_random_pairs():
    rng = random.Random(3)
    reg = Registry()
    reg.register_schema(HOSPITAL)
    for _ in range(50):
        did, _ = create_public_did(crypto.random_keypair(rng), "x.local:1")
        assert not reg.is_authorized(HOSPITAL.schema_id, did)


def test_dump_and_load(tmp_path):
    reg = Registry()
    did, doc = pub(5)
    reg.register_issuer(doc)
    reg.register_schema(HOSPITAL)
    reg.authorize(HOSPITAL.schema_id, did)
    reg.revoke(crypto.digest(b"x"))
    path = tmp_path / "reg.json"
    reg.dump(path)
    loaded = Registry.load(path)
    assert loaded.snapshot() == reg.snapshot()
    assert loaded.is_authorized(HOSPITAL.schema_id, did)
    assert loaded.lookup_did(did) == doc
