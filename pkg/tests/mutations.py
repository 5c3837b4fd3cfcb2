"""Presentations that each break exactly one of the five verifier checks."""

import random

from trustfl import credentials as vc
from trustfl import crypto
from trustfl.identity import create_public_did
from trustfl.registry import Registry

HOSPITAL_SCHEMA = "VerifiedHospital:1.0"


def _copy(registry):
    return Registry.from_snapshot(registry.snapshot())


def _issue_from(issuer_kp, issuer_did, holder, registry, attrs, rng):
    schema = registry.get_schema(HOSPITAL_SCHEMA)
    req = vc.request_credential(holder.wallet.link_secret, schema, rng)
    return vc.issue(issuer_kp, issuer_did, schema, attrs, req.commitment)


def five_check_cases(scenario, seed=0):
    """Return {case: (presentation, request, registry, expected failing check or None)}."""
    rng = random.Random(seed)
    nhs = scenario.agents["nhs_trust"]
    hospital = scenario.agents["hospital_1"]
    cred = hospital.wallet.find_credential(HOSPITAL_SCHEMA, nhs.public_did)
    secret = hospital.wallet.link_secret
    attrs = {"name": "hospital_1", "role": "hospital"}

    def request(issuer=nhs.public_did):
        return vc.ProofRequest.new(HOSPITAL_SCHEMA, issuer, ["name"], {"role": "hospital"}, rng)

    cases = {}
    req = request()
    cases["honest"] = (vc.present(cred, secret, req, rng=rng), req, scenario.registry, None)

    # issuer vouched for by governance but never anchored on the registry
    ghost_kp = crypto.random_keypair(rng)
    ghost_did, _ = create_public_did(ghost_kp, "ghost.local:1")
    reg = _copy(scenario.registry)
    reg.authorize(HOSPITAL_SCHEMA, ghost_did, require_anchored=False)
    ghost_cred = _issue_from(ghost_kp, ghost_did, hospital, reg, attrs, rng)
    req = request(ghost_did)
    cases["unregistered_issuer"] = (vc.present(ghost_cred, secret, req, rng=rng), req, reg,
                                    "issuer_resolves_and_signature_valid")

    thief = vc.LinkSecret.generate(rng)
    req = request()
    cases["wrong_link_secret"] = (
        vc.present(cred, thief, req, blinding=crypto.random_scalar(rng), rng=rng), req, scenario.registry,
        "holder_knows_link_secret",
    )

    rogue_kp = crypto.random_keypair(rng)
    rogue_did, rogue_doc = create_public_did(rogue_kp, "rogue.local:1")
    reg = _copy(scenario.registry)
    reg.register_issuer(rogue_doc)
    rogue_cred = _issue_from(rogue_kp, rogue_did, hospital, reg, attrs, rng)
    req = request(None)
    cases["unauthorized_issuer"] = (vc.present(rogue_cred, secret, req, rng=rng), req, reg, "issuer_authorized")

    reg = _copy(scenario.registry)
    reg.revoke(cred.credential_hash)
    req = request()
    cases["revoked"] = (vc.present(cred, secret, req, rng=rng), req, reg, "not_revoked")

    nhs_kp = nhs.wallet.keys[str(nhs.public_did)]
    clinic = _issue_from(nhs_kp, nhs.public_did, hospital, scenario.registry, {"name": "c", "role": "clinic"}, rng)
    req = request()
    cases["violated_constraint"] = (vc.present(clinic, secret, req, rng=rng), req, scenario.registry,
                                    "attribute_criteria")
    return cases
