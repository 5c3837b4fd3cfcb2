import random

import pytest

from trustfl import crypto
from trustfl.harness import load_scenario, run_scenario
from trustfl.identity import create_public_did
from trustfl.registry import CredentialSchema, Registry

HOSPITAL = CredentialSchema.create("VerifiedHospital", "1.0", ["name", "role"])
RESEARCHER = CredentialSchema.create("AuditedResearcherCoordinator", "1.0", ["name", "role"])


@pytest.fixture
def rng():
    return random.Random(1234)


class Issuer:
    def __init__(self, registry, rng, endpoint, *, anchored=True):
        self.keypair = crypto.random_keypair(rng)
        self.did, self.doc = create_public_did(self.keypair, endpoint)
        if anchored:
            registry.register_issuer(self.doc)


@pytest.fixture
def ledger(rng):
    """Registry with the hospital schema and an authorized NHS Trust issuer."""
    registry = Registry()
    registry.register_schema(HOSPITAL)
    registry.register_schema(RESEARCHER)
    nhs = Issuer(registry, rng, "nhs-trust.local:8020")
    registry.authorize(HOSPITAL.schema_id, nhs.did)
    return registry, nhs


@pytest.fixture(scope="session")
def baseline_run():
    keep = []
    report = run_scenario(load_scenario("baseline"), keep=keep)
    return report, keep[0]


@pytest.fixture(scope="session")
def adversarial_run():
    keep = []
    report = run_scenario(load_scenario("adversarial"), keep=keep)
    return report, keep[0]


# criterion number -> (passed, description); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {text}")
