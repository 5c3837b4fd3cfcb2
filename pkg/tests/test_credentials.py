import base64
import hashlib
import random

import pytest

from trustfl import credentials as vc
from trustfl import crypto
from trustfl.credentials import CHECK_NAMES
from trustfl.errors import CannotSatisfyError, SchemaViolationError

from conftest import HOSPITAL, Issuer
from mutations import five_check_cases


def issue_to(holder_secret, issuer, rng, attrs=None):
    req = vc.request_credential(holder_secret, HOSPITAL, rng)
    attrs = attrs or {"name": "Hospital-1", "role": "hospital"}
    return vc.issue(issuer.keypair, issuer.did, HOSPITAL, attrs, req.commitment)


def proof_request(issuer, rng, constraints=None):
    return vc.ProofRequest.new(HOSPITAL.schema_id, issuer.did, ["name"], constraints or {"role": "hospital"}, rng)


def test_request_blindings_are_fresh(rng):
    secret = vc.LinkSecret.generate(rng)
    a = vc.request_credential(secret, HOSPITAL, rng)
    b = vc.request_credential(secret, HOSPITAL, rng)
    assert a.commitment != b.commitment


def test_request_commitment_opens_later(rng):
    secret = vc.LinkSecret.generate(rng)
    req = vc.request_credential(secret, HOSPITAL, rng)
    blinding = secret.blinding_for(req.commitment)
    proof = crypto.prove_opening(secret.secret, blinding, req.commitment, b"n", rng)
    assert crypto.verify_opening(req.commitment, proof, b"n")


def test_request_wire_round_trip(rng):
    req = vc.request_credential(vc.LinkSecret.generate(rng), HOSPITAL, rng)
    assert vc.CredentialRequest.from_dict(req.to_dict()) == req


def test_nhs_issued_credential_verifies(ledger, rng):
    registry, nhs = ledger
    cred = issue_to(vc.LinkSecret.generate(rng), nhs, rng)
    doc = registry.lookup_did(nhs.did)
    assert crypto.verify(doc.verification_key, cred.canonical_encoding(), cred.issuer_signature)
    assert vc.check_issuer_signature(cred, registry)[0]


def test_missing_attribute_is_schema_violation(ledger, rng):
    _, nhs = ledger
    req = vc.request_credential(vc.LinkSecret.generate(rng), HOSPITAL, rng)
    with pytest.raises(SchemaViolationError):
        vc.issue(nhs.keypair, nhs.did, HOSPITAL, {"name": "x"}, req.commitment)
    with pytest.raises(SchemaViolationError):
        vc.issue(nhs.keypair, nhs.did, HOSPITAL, {"name": "x\ny", "role": "r"}, req.commitment)


def test_credential_hash_recomputed_from_definition(ledger, rng):
    _, nhs = ledger
    cred = issue_to(vc.LinkSecret.generate(rng), nhs, rng)
    link = base64.b64encode(cred.link_commitment.value).decode()
    text = f"name=Hospital-1\nrole=hospital\nschema=VerifiedHospital:1.0\nissuer={nhs.did}\nlink={link}"
    assert cred.credential_hash == hashlib.sha256(text.encode()).digest()


def test_credential_dict_round_trip(ledger, rng):
    _, nhs = ledger
    cred = issue_to(vc.LinkSecret.generate(rng), nhs, rng)
    assert vc.Credential.from_dict(cred.to_dict()) == cred


def test_honest_presentation_accepted(ledger, rng):
    registry, nhs = ledger
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, nhs, rng)
    req = proof_request(nhs, rng)
    report = vc.verify_presentation(vc.present(cred, secret, req, rng=rng), req, registry)
    assert report.accepted and report.flags() == (True,) * 5
    assert [c.name for c in report.checks] == list(CHECK_NAMES)


def test_stolen_credential_fails_binding(ledger):
    registry, nhs = ledger
    rng = random.Random(8)
    rejected = 0
    for _ in range(100):
        secret = vc.LinkSecret.generate(rng)
        cred = issue_to(secret, nhs, rng)
        thief = vc.LinkSecret.generate(rng)
        req = proof_request(nhs, rng)
        pres = vc.present(cred, thief, req, blinding=crypto.random_scalar(rng), rng=rng)
        report = vc.verify_presentation(pres, req, registry)
        rejected += report.failed == ("holder_knows_link_secret",)
    assert rejected == 100


def test_replayed_presentation_fails_check_2(ledger, rng):
    registry, nhs = ledger
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, nhs, rng)
    pres = vc.present(cred, secret, proof_request(nhs, rng), rng=rng)
    report = vc.verify_presentation(pres, proof_request(nhs, rng), registry)
    assert report.failed == ("holder_knows_link_secret",)


def test_self_signed_fails_check_3(ledger, rng):
    registry, _ = ledger
    selfie = Issuer(registry, rng, "mallory.local:6")
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, selfie, rng)
    req = vc.ProofRequest.new(HOSPITAL.schema_id, None, ["name"], {"role": "hospital"}, rng)
    report = vc.verify_presentation(vc.present(cred, secret, req, rng=rng), req, registry)
    assert not report.accepted and report.failed == ("issuer_authorized",)


def test_required_issuer_pin(ledger, rng):
    registry, nhs = ledger
    other = Issuer(registry, rng, "other.local:1")
    registry.authorize(HOSPITAL.schema_id, other.did)
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, other, rng)
    req = proof_request(nhs, rng)
    assert vc.verify_presentation(vc.present(cred, secret, req, rng=rng), req, registry).failed == (
        "issuer_authorized",
    )


def test_revoked_fails_check_4_only(ledger, rng):
    registry, nhs = ledger
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, nhs, rng)
    registry.revoke(cred.credential_hash)
    req = proof_request(nhs, rng)
    assert vc.verify_presentation(vc.present(cred, secret, req, rng=rng), req, registry).failed == ("not_revoked",)


@pytest.mark.parametrize(
    "constraints, ok",
    [({"role": "hospital"}, True), ({"role": "clinic"}, False), ({"role": ("clinic", "hospital")}, True),
     ({"ward": "x"}, False)],
)
def test_constraints(ledger, rng, constraints, ok):
    registry, nhs = ledger
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, nhs, rng)
    req = proof_request(nhs, rng, constraints)
    report = vc.verify_presentation(vc.present(cred, secret, req, rng=rng), req, registry)
    assert report.accepted is ok
    assert report.failed == (() if ok else ("attribute_criteria",))


def test_clinic_attribute_fails_check_5(ledger, rng):
    registry, nhs = ledger
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, nhs, rng, {"name": "c", "role": "clinic"})
    req = proof_request(nhs, rng)
    assert vc.verify_presentation(vc.present(cred, secret, req, rng=rng), req, registry).failed == (
        "attribute_criteria",
    )


def test_schema_mismatch_cannot_present(ledger, rng):
    _, nhs = ledger
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, nhs, rng)
    with pytest.raises(CannotSatisfyError):
        vc.present(cred, secret, vc.ProofRequest.new("AuditedResearcherCoordinator:1.0", rng=rng))


def test_tampered_attribute_fails_check_1(ledger, rng):
    registry, nhs = ledger
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, nhs, rng, {"name": "h", "role": "clinic"})
    forged = vc.Credential(cred.schema_id, cred.issuer_did, (("name", "h"), ("role", "hospital")),
                           cred.link_commitment, cred.issuer_signature, cred.credential_hash)
    req = proof_request(nhs, rng)
    report = vc.verify_presentation(vc.present(forged, secret, req, rng=rng), req, registry)
    assert "issuer_resolves_and_signature_valid" in report.failed


def test_completeness_over_random_flows(ledger):
    registry, nhs = ledger
    rng = random.Random(17)
    for i in range(100):
        secret = vc.LinkSecret.generate(rng)
        cred = issue_to(secret, nhs, rng, {"name": f"h{i}", "role": "hospital"})
        req = proof_request(nhs, rng)
        assert vc.verify_presentation(vc.present(cred, secret, req, rng=rng), req, registry).accepted


def test_presentation_wire_round_trip(ledger, rng):
    registry, nhs = ledger
    secret = vc.LinkSecret.generate(rng)
    cred = issue_to(secret, nhs, rng)
    req = proof_request(nhs, rng, {"role": ("hospital", "clinic")})
    pres = vc.present(cred, secret, req, rng=rng)
    assert vc.ProofRequest.from_dict(req.to_dict()) == req
    assert vc.Presentation.from_dict(pres.to_dict()) == pres


def test_five_check_isolation_matrix(baseline_run):
    _, scenario = baseline_run
    for case, (pres, req, registry, expected) in five_check_cases(scenario).items():
        report = vc.verify_presentation(pres, req, registry)
        assert report.failed == (() if expected is None else (expected,)), case
