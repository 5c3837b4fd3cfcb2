"""Issuing a VerifiedHospital credential and the verifier's five checks.

The NHS Trust is anchored on the registry and authorized for the schema.
A hospital requests a credential bound to its link secret, then presents
it.  We then break each check in turn.
"""

import random

from trustfl import credentials as vc
from trustfl import crypto
from trustfl.identity import create_public_did
from trustfl.registry import CredentialSchema, Registry

rng = random.Random(1)
registry = Registry()
schema = CredentialSchema.create("VerifiedHospital", "1.0", ["name", "role"])
registry.register_schema(schema)

nhs_keys = crypto.random_keypair(rng)
nhs, nhs_doc = create_public_did(nhs_keys, "nhs-trust.local:8020")
registry.register_issuer(nhs_doc)
registry.authorize(schema.schema_id, nhs)

hospital_secret = vc.LinkSecret.generate(rng)
request = vc.request_credential(hospital_secret, schema, rng)
cred = vc.issue(nhs_keys, nhs, schema, {"name": "Hospital-1", "role": "hospital"}, request.commitment)
print("credential hash:", cred.credential_hash.hex())
print(cred.canonical_encoding().decode())


def show(label, presentation, proof_request, reg=registry):
    report = vc.verify_presentation(presentation, proof_request, reg)
    marks = " ".join("ok " if ok else "BAD" for ok in report.flags())
    print(f"{label:<22} {marks}   accepted={report.accepted}")


print("\n" + " " * 23 + "   ".join(str(i) for i in range(1, 6)))
ask = lambda: vc.ProofRequest.new(schema.schema_id, nhs, ["name"], {"role": "hospital"}, rng)

req = ask()
show("honest", vc.present(cred, hospital_secret, req, rng=rng), req)

# a thief holding the credential but not the link secret
req = ask()
thief = vc.LinkSecret.generate(rng)
show("stolen credential", vc.present(cred, thief, req, blinding=crypto.random_scalar(rng), rng=rng), req)

# replaying an old presentation against a fresh nonce
old = vc.present(cred, hospital_secret, ask(), rng=rng)
show("replayed", old, ask())

# a self-signed credential from a DID nobody authorized
rogue_keys = crypto.random_keypair(rng)
rogue, rogue_doc = create_public_did(rogue_keys, "rogue.local:6666")
registry.register_issuer(rogue_doc)
rogue_req = vc.request_credential(hospital_secret, schema, rng)
fake = vc.issue(rogue_keys, rogue, schema, {"name": "Hospital-1", "role": "hospital"}, rogue_req.commitment)
req = vc.ProofRequest.new(schema.schema_id, None, ["name"], {"role": "hospital"}, rng)
show("self-signed", vc.present(fake, hospital_secret, req, rng=rng), req)

# a genuine credential that does not meet the verifier's criteria
clinic_req = vc.request_credential(hospital_secret, schema, rng)
clinic = vc.issue(nhs_keys, nhs, schema, {"name": "Clinic-9", "role": "clinic"}, clinic_req.commitment)
req = ask()
show("role=clinic", vc.present(clinic, hospital_secret, req, rng=rng), req)

# the issuer revokes
registry.revoke(cred.credential_hash)
req = ask()
show("revoked", vc.present(cred, hospital_secret, req, rng=rng), req)
