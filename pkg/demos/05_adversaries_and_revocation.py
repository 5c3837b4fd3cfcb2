"""What happens to agents that should not take part.

mallory holds no credential; trudy registers her own DID and signs herself
a VerifiedHospital credential.  In the revocation scenario the NHS Trust
withdraws hospital_2's credential before trust is established.
"""

from trustfl.harness import load_scenario, run_scenario

report = run_scenario(load_scenario("adversarial"))
for v in report.verifications:
    failed = [c["name"] for c in v["checks"] if not c["ok"]]
    print(f"{v['verifier']:>10} checked {v['prover']:<11} accepted={v['accepted']!s:<5} failed={failed}")
print("rejected train requests:", report.training["rejected"])
print("models trained by:", [s["hospital"] for s in report.lineage])

print("\nrevocation scenario")
report = run_scenario(load_scenario("revocation"))
for v in report.verifications:
    if not v["accepted"]:
        print(f"  {v['prover']} rejected: {[c['reason'] for c in v['checks'] if not c['ok']]}")
print("  models trained by:", [s["hospital"] for s in report.lineage])
print("  final accuracy:", round(report.batches[-1]["accuracy"], 3))
for a in report.assertions:
    print(f"  [{'PASS' if a['passed'] else 'FAIL'}] {a['name']}")
