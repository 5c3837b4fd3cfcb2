"""Agents connecting, collecting credentials and deciding whom to trust.

This runs the credential issuance and trust steps by hand on an in-memory
network so the individual protocol steps are visible.
"""

from trustfl import agents as ag
from trustfl.registry import CredentialSchema, Registry

registry = Registry()
hospital_schema = CredentialSchema.create("VerifiedHospital", "1.0", ["name", "role"])
research_schema = CredentialSchema.create("AuditedResearcherCoordinator", "1.0", ["name", "role"])
registry.register_schema(hospital_schema)
registry.register_schema(research_schema)

network = ag.Network()
people = {}
for i, (name, role) in enumerate([("nhs", "nhs_trust"), ("regulator", "regulator"),
                                  ("researcher", "researcher"), ("hospital_1", "hospital"),
                                  ("outsider", "malicious_no_cred")]):
    people[name] = ag.Agent(name, f"{name}.local:{8100 + i}", registry, seed=3, role=role)
    network.register(people[name])

for issuer, schema in (("nhs", hospital_schema), ("regulator", research_schema)):
    registry.register_issuer(people[issuer].ensure_public_did())
    registry.authorize(schema.schema_id, people[issuer].public_did)

# holders connect to issuers and receive credentials
_, cid = ag.connect(people["researcher"], people["regulator"])
print("regulator -> researcher:",
      ag.issue_over_connection(people["regulator"], cid, research_schema.schema_id,
                               {"name": "researcher", "role": "researcher"}))
_, cid = ag.connect(people["hospital_1"], people["nhs"])
print("nhs -> hospital_1:",
      ag.issue_over_connection(people["nhs"], cid, hospital_schema.schema_id,
                               {"name": "hospital_1", "role": "hospital"}))

wants_hospital = ag.TrustPolicy.build(hospital_schema.schema_id, people["nhs"].public_did, {"role": "hospital"})
wants_researcher = ag.TrustPolicy.build(research_schema.schema_id, people["regulator"].public_did,
                                        {"role": "researcher"})

h_cid, r_cid = ag.connect(people["hospital_1"], people["researcher"])
print("\nresearcher trusts hospital_1:", ag.establish_trust(people["researcher"], r_cid, wants_hospital))
print("hospital_1 trusts researcher:", ag.establish_trust(people["hospital_1"], h_cid, wants_researcher))
print("mutual:", people["researcher"].is_mutually_trusted(r_cid))

o_cid, r2_cid = ag.connect(people["outsider"], people["researcher"])
print("\nresearcher trusts outsider:", ag.establish_trust(people["researcher"], r2_cid, wants_hospital))
print("outsider's answer:", people["researcher"].problems[-1]["code"], "-", people["researcher"].problems[-1]["detail"])

print("\nresearcher's message log:")
for entry in people["researcher"].log:
    print(f"  #{entry.seq:<3} {entry.direction:<8} {entry.type:<22} peer={people['researcher'].peer_label(entry.connection_id)}")
