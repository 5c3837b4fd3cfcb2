"""Sequential federated learning over trusted connections.

Runs the shipped baseline scenario and prints the per-batch confusion
matrices plus how many bytes each agent moved.
"""

from trustfl.harness import emit_report, load_scenario, run_scenario

keep = []
report = run_scenario(load_scenario("baseline"), keep=keep)
print(emit_report(report, "table"))

for b in report.batches:
    print(f"batch {b['batch']}: accuracy {b['accuracy']:.3f}")

print("\nmodel lineage (each hospital starts from the previous hospital's output):")
for step in report.lineage:
    print(f"  batch {step['batch']} {step['hospital']:<11} {step['sent'][:12]} -> {step['returned'][:12]}"
          f"  v{step['sent_version']} -> v{step['returned_version']}")

sent = [s["agents"]["researcher"]["bytes_sent"] for s in report.bandwidth]
print("\nresearcher bytes sent per round:", [b - a for a, b in zip(sent, sent[1:])])
