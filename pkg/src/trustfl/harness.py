"""Scenario runner for the healthcare trust model.

A scenario is a JSON document naming the agents, the credential schemas
and who may issue them, what each side must prove before trusting the
other, and the dataset to learn from.  :func:`run_scenario` bootstraps the
registry, issues credentials, establishes trust, runs sequential FL over
the trusted connections only, and returns a :class:`RunReport`.
"""

from __future__ import annotations

import copy
import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from . import agents as ag
from .errors import ConfigError, TrustFLError
from .fedlearn import (
    Dataset,
    TrainConfig,
    flip_labels,
    load_csv,
    partition,
    run_vanilla_fl,
    synthetic_dataset,
)
from .identity import MessageType
from .registry import CredentialSchema, Registry

log = logging.getLogger(__name__)

ROLES = ("nhs_trust", "regulator", "hospital", "researcher", "malicious_no_cred", "malicious_self_signed")
MALICIOUS = ("malicious_no_cred", "malicious_self_signed")
_ENDPOINT = re.compile(r"^[A-Za-z0-9.\-]+:\d{1,5}$")

FOOTER = (
    "CPU and memory usage are not measured; network load is approximated by "
    "counting envelope wire bytes per agent."
)


# --- config ---------------------------------------------------------------

def load_config(path: Union[str, Path]) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc


def shipped_scenarios() -> dict[str, Path]:
    root = resources.files("trustfl") / "scenarios"
    return {p.name[: -len(".json")]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".json")}


def load_scenario(name_or_path: Union[str, Path]) -> dict:
    shipped = shipped_scenarios()
    if str(name_or_path) in shipped:
        return load_config(shipped[str(name_or_path)])
    return load_config(name_or_path)


def validate_config(config: dict) -> list[str]:
    """Return a list of problems; empty means the config is runnable."""
    errors = []
    agents = config.get("agents")
    if not isinstance(agents, list) or not agents:
        return ["'agents' must be a non-empty list"]
    names, endpoints = set(), set()
    by_role: dict[str, list[str]] = {}
    for a in agents:
        name, role, endpoint = a.get("name"), a.get("role"), a.get("endpoint")
        if not name or name in names:
            errors.append(f"agent name {name!r} missing or duplicated")
        names.add(name)
        if role not in ROLES:
            errors.append(f"agent {name!r}: role {role!r} not one of {ROLES}")
        if not isinstance(endpoint, str) or not _ENDPOINT.match(endpoint) or endpoint in endpoints:
            errors.append(f"agent {name!r}: endpoint {endpoint!r} must be a unique host:port")
        endpoints.add(endpoint)
        by_role.setdefault(role, []).append(name)
    if len(by_role.get("researcher", [])) != 1:
        errors.append("exactly one researcher is required")
    if not by_role.get("hospital"):
        errors.append("at least one hospital is required")

    schema_ids = set()
    for s in config.get("schemas", []):
        try:
            schema_ids.add(CredentialSchema.create(s["name"], s["version"], s["attribute_names"]).schema_id)
        except (KeyError, TypeError, ValueError) as exc:
            errors.append(f"bad schema {s!r}: {exc}")
    for g in config.get("grants", []):
        if g.get("schema_id") not in schema_ids:
            errors.append(f"grant names unknown schema {g.get('schema_id')!r}")
        if g.get("issuer") not in names:
            errors.append(f"grant names unknown issuer {g.get('issuer')!r}")
    for rule in config.get("issuance", []):
        if rule.get("issuer") not in names:
            errors.append(f"issuance rule names unknown issuer {rule.get('issuer')!r}")
        if rule.get("holder_role") not in ROLES:
            errors.append(f"issuance rule names unknown role {rule.get('holder_role')!r}")
        if rule.get("schema_id") not in schema_ids:
            errors.append(f"issuance rule names unknown schema {rule.get('schema_id')!r}")
    trust = config.get("trust", {})
    for role in ("researcher", "hospital"):
        pol = trust.get(role)
        if not pol:
            errors.append(f"trust policy for {role!r} missing")
            continue
        if pol.get("schema_id") not in schema_ids:
            errors.append(f"trust policy for {role!r} names unknown schema {pol.get('schema_id')!r}")
        if pol.get("issuer") is not None and pol["issuer"] not in names:
            errors.append(f"trust policy for {role!r} names unknown issuer {pol['issuer']!r}")
    for r in config.get("revocations", []):
        if r.get("issuer") not in names or r.get("holder") not in names:
            errors.append(f"revocation {r!r} names unknown agents")
    if by_role.get("malicious_self_signed") and not config.get("self_signed", {}).get("schema_id") in schema_ids:
        errors.append("malicious_self_signed agents need a 'self_signed' block with a known schema_id")

    ds = config.get("dataset", {})
    kind = ds.get("kind", "synthetic")
    if kind == "csv":
        if not ds.get("path"):
            errors.append("csv dataset needs a path")
    elif kind == "synthetic":
        n, d = ds.get("n", 1000), ds.get("d", 10)
        if not (isinstance(n, int) and isinstance(d, int) and d >= 1 and n >= len(by_role.get("hospital", [])) + 1):
            errors.append("synthetic dataset needs integer d >= 1 and n >= hospitals + 1")
    else:
        errors.append(f"dataset kind {kind!r} must be 'synthetic' or 'csv'")
    noise = ds.get("label_noise", [])
    if noise and len(noise) != len(by_role.get("hospital", [])):
        errors.append("label_noise needs one rate per hospital")
    try:
        TrainConfig(**config.get("train", {}))
    except (TypeError, ValueError) as exc:
        errors.append(f"train config: {exc}")
    if config.get("transport", "mem") not in ("mem", "socket"):
        errors.append("transport must be 'mem' or 'socket'")
    return errors


def _check(config: dict) -> None:
    problems = validate_config(config)
    if problems:
        raise ConfigError("; ".join(problems))


def _fmt(attrs: dict, name: str) -> dict:
    return {k: str(v).replace("{name}", name) for k, v in attrs.items()}


# --- report ---------------------------------------------------------------

@dataclass
class RunReport:
    scenario: str
    seed: Any
    status: str = "ok"
    failed_step: Optional[str] = None
    error: Optional[str] = None
    issuance: list = field(default_factory=list)
    connections: list = field(default_factory=list)
    verifications: list = field(default_factory=list)
    batches: list = field(default_factory=list)
    lineage: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    bandwidth: list = field(default_factory=list)
    training: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    footer: str = FOOTER

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(a["passed"] for a in self.assertions)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls(**json.loads(text))

    def assertion(self, name: str) -> bool:
        for a in self.assertions:
            if a["name"] == name:
                return a["passed"]
        raise KeyError(name)


def snapshot_bandwidth(metrics: dict, round_index: int, snapshots: list) -> None:
    """Append cumulative per-agent byte counters for FL round ``round_index``."""
    snapshots.append(
        {
            "round": round_index,
            "agents": {
                name: {"bytes_sent": m.bytes_sent, "bytes_received": m.bytes_received}
                for name, m in sorted(metrics.items())
            },
        }
    )


def _table(headers: list[str], rows: list[list]) -> str:
    cells = [headers] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    rule = "-" * len(fmt(headers))
    return "\n".join([rule, fmt(headers), rule] + [fmt(r) for r in cells[1:]] + [rule])


def confusion_table(batches: list[dict]) -> str:
    """Per-batch TP/FP/TN/FN with batches as columns."""
    headers = ["Batch"] + [str(b["batch"]) for b in batches]
    rows = [
        ["True Positives"] + [b["tp"] for b in batches],
        ["False Positives"] + [b["fp"] for b in batches],
        ["True Negatives"] + [b["tn"] for b in batches],
        ["False Negatives"] + [b["fn"] for b in batches],
    ]
    return _table(headers, rows)


def emit_report(report: RunReport, format: str = "json") -> str:
    if format == "json":
        return report.to_json()
    if format != "table":
        raise ValueError(f"unknown report format {format!r}")
    out = [f"scenario: {report.scenario}   seed: {report.seed}   status: {report.status}"]
    if report.failed_step:
        out.append(f"failed step: {report.failed_step}: {report.error}")
    out += ["", "Classifier confusion matrix over batches", confusion_table(report.batches)]
    mutual = [c for c in report.connections if c["trusted"] and c["trusted_by_peer"]]
    out += ["", f"mutually trusted links: {len(mutual) // 2}"]
    for c in report.connections:
        out.append(
            f"  {c['agent']:>24} -> {c['peer']:<24} state={c['state']:<9} "
            f"trusted={str(c['trusted']).lower():<5} trusted_by_peer={str(c['trusted_by_peer']).lower()}"
        )
    metric_rows = [
        [name, m["messages_sent"], m["bytes_sent"], m["messages_received"], m["bytes_received"], m["bytes_dropped"]]
        for name, m in sorted(report.metrics.items())
    ]
    metric_rows.append(["total"] + [sum(r[i] for r in metric_rows) for i in range(1, 6)])
    out += [
        "",
        "Network usage per agent (bytes)",
        _table(["Agent", "Msgs out", "Bytes out", "Msgs in", "Bytes in", "Dropped"], metric_rows),
        "",
        "Assertions",
    ]
    out += [f"  [{'PASS' if a['passed'] else 'FAIL'}] {a['name']}" for a in report.assertions]
    out += ["", report.footer]
    return "\n".join(out) + "\n"


# --- scenario -------------------------------------------------------------

@dataclass
class Scenario:
    """Live objects of a scenario run, kept for inspection by tests."""

    config: dict
    registry: Registry
    network: ag.Network
    agents: dict[str, ag.Agent]
    roles: dict[str, str]
    validation: Optional[Dataset] = None
    train_config: TrainConfig = field(default_factory=TrainConfig)
    hospital_connections: dict[str, tuple[str, str]] = field(default_factory=dict)
    fl_result: Any = None

    def by_role(self, role: str) -> list[ag.Agent]:
        return [self.agents[n] for n, r in self.roles.items() if r == role]

    @property
    def researcher(self) -> ag.Agent:
        return self.by_role("researcher")[0]

    def close(self) -> None:
        self.network.close()


def bootstrap_registry(config: dict, registry: Optional[Registry] = None, *, seed=None) -> Registry:
    """Write issuer DIDs, schemas and grants for ``config`` to a registry."""
    _check(config)
    scenario = build_scenario(config, seed=seed, registry=registry, transport=ag.MemoryTransport())
    scenario.close()
    return scenario.registry


def _load_dataset(block: dict, n_hospitals: int) -> tuple[list[Dataset], Dataset]:
    if block.get("kind", "synthetic") == "csv":
        data = load_csv(block["path"])
        default_seed = 0
    else:
        default_seed = block.get("seed", 0)
        data = synthetic_dataset(block.get("n", 1000), block.get("d", 10), block.get("separation", 3.0), default_seed)
    parts = partition(data, n_hospitals + 1, block.get("partition_seed", default_seed))
    train = [p.data for p in parts if p.role == "train"]
    noise = block.get("label_noise") or [0.0] * n_hospitals
    train = [flip_labels(d, rate, seed=default_seed + i) for i, (d, rate) in enumerate(zip(train, noise))]
    return train, parts[-1].data


def build_scenario(
    config: dict, *, seed=None, transport=None, registry: Optional[Registry] = None, interceptors=()
) -> Scenario:
    _check(config)
    seed = config.get("seed", 0) if seed is None else seed
    if transport is None:
        transport = ag.HttpTransport() if config.get("transport", "mem") == "socket" else ag.MemoryTransport()
    registry = registry or Registry()
    network = ag.Network(transport)
    network.interceptors.extend(interceptors)
    train_config = TrainConfig(**config.get("train", {}))
    roles = {a["name"]: a["role"] for a in config["agents"]}
    hospitals = [a["name"] for a in config["agents"] if a["role"] == "hospital"]
    train_sets, validation = _load_dataset(config.get("dataset", {}), len(hospitals))
    data_for = dict(zip(hospitals, train_sets))

    agents = {}
    for a in config["agents"]:
        policy = ag.RolePolicy(training_data=data_for.get(a["name"]), train_config=train_config)
        agent = ag.Agent(a["name"], a["endpoint"], registry, seed=seed, role=a["role"], policy=policy)
        network.register(agent)
        agents[a["name"]] = agent

    for s in config.get("schemas", []):
        registry.register_schema(CredentialSchema.create(s["name"], s["version"], s["attribute_names"]))
    issuers = {g["issuer"] for g in config.get("grants", [])} | {r["issuer"] for r in config.get("issuance", [])}
    issuers |= {n for n, r in roles.items() if r == "malicious_self_signed"}
    for name in sorted(issuers, key=list(agents).index):
        registry.register_issuer(agents[name].ensure_public_did())
    for g in config.get("grants", []):
        registry.authorize(g["schema_id"], agents[g["issuer"]].public_did)

    return Scenario(config, registry, network, agents, roles, validation, train_config)


def _policy(scenario: Scenario, role: str) -> ag.TrustPolicy:
    pol = scenario.config["trust"][role]
    issuer = scenario.agents[pol["issuer"]].public_did if pol.get("issuer") else None
    return ag.TrustPolicy.build(pol["schema_id"], issuer, pol.get("constraints"), pol.get("disclosed", ()))


def run_scenario(
    config: dict,
    *,
    seed=None,
    transport=None,
    registry: Optional[Registry] = None,
    keep: Optional[list] = None,
    interceptors=(),
) -> RunReport:
    """Run issuance, trust establishment and FL; never raises on protocol failure.

    Pass a list as ``keep`` to receive the live :class:`Scenario` for inspection.
    ``interceptors`` are installed on the network and see every envelope in flight.
    """
    config = copy.deepcopy(config)
    _check(config)
    run_seed = config.get("seed", 0) if seed is None else seed
    report = RunReport(scenario=config.get("name", "scenario"), seed=run_seed)
    scenario = build_scenario(
        config, seed=run_seed, transport=transport, registry=registry, interceptors=interceptors
    )
    if keep is not None:
        keep.append(scenario)
    budget = int(config.get("dispatch_budget", 10_000))
    step = "issue_credentials"
    try:
        _issue_credentials(scenario, report, budget)
        step = "revocations"
        _apply_revocations(scenario)
        step = "establish_trust"
        _establish_trust(scenario, budget)
        step = "adversary_probes"
        _probe_adversaries(scenario, budget)
        step = "vanilla_fl"
        _run_fl(scenario, report, budget)
    except TrustFLError as exc:
        log.error("scenario failed at %s: %s", step, exc)
        report.status, report.failed_step, report.error = "failed", step, f"{type(exc).__name__}: {exc}"
    finally:
        scenario.close()
    _collect(scenario, report)
    _assert(scenario, report)
    return report


def _issue_credentials(scenario: Scenario, report: RunReport, budget: int) -> None:
    for rule in scenario.config.get("issuance", []):
        issuer = scenario.agents[rule["issuer"]]
        for holder in scenario.by_role(rule["holder_role"]):
            _, issuer_cid = ag.connect(holder, issuer, budget=budget)
            outcome = ag.issue_over_connection(
                issuer, issuer_cid, rule["schema_id"], _fmt(rule.get("attributes", {}), holder.name), budget=budget
            )
            report.issuance.append(
                {"issuer": issuer.name, "holder": holder.name, "schema_id": rule["schema_id"], "outcome": outcome}
            )
    block = scenario.config.get("self_signed", {})
    for agent in scenario.by_role("malicious_self_signed"):
        agent.self_issue(block["schema_id"], _fmt(block.get("attributes", {}), agent.name))


def revoke_credential(scenario: Scenario, issuer_name: str, holder_name: str) -> list[bytes]:
    """Revoke every credential ``issuer`` gave ``holder``; only the issuer may do this."""
    issuer = scenario.agents[issuer_name]
    holder = scenario.agents[holder_name]
    revoked = []
    for h, cred in holder.wallet.credentials.items():
        if issuer.public_did is not None and cred.issuer_did == issuer.public_did:
            scenario.registry.revoke(h)
            revoked.append(h)
    return revoked


def _apply_revocations(scenario: Scenario) -> None:
    for r in scenario.config.get("revocations", []):
        revoke_credential(scenario, r["issuer"], r["holder"])


def _establish_trust(scenario: Scenario, budget: int) -> None:
    researcher = scenario.researcher
    research_policy = _policy(scenario, "researcher")
    hospital_policy = _policy(scenario, "hospital")
    for hospital in scenario.by_role("hospital"):
        h_cid, r_cid = ag.connect(hospital, researcher, budget=budget)
        scenario.hospital_connections[hospital.name] = (r_cid, h_cid)
        ag.establish_trust(researcher, r_cid, research_policy, budget=budget)
        ag.establish_trust(hospital, h_cid, hospital_policy, budget=budget)


def _probe_adversaries(scenario: Scenario, budget: int) -> None:
    """Malicious agents try to join, then try to train or inject models anyway."""
    researcher = scenario.researcher
    research_policy = _policy(scenario, "researcher")
    hospital_policy = _policy(scenario, "hospital")
    for role in MALICIOUS:
        for bad in scenario.by_role(role):
            m_cid, r_cid = ag.connect(bad, researcher, budget=budget)
            ag.establish_trust(researcher, r_cid, research_policy, budget=budget)
            bad._start(bad.connections[m_cid], MessageType.TRAIN_RESULT, {"model": "d=0\nversion=0\nbias=0.0\nw="})
            scenario.network.run_until_idle(budget)
            for hospital in scenario.by_role("hospital"):
                b_cid, h_cid = ag.connect(bad, hospital, budget=budget)
                ag.establish_trust(hospital, h_cid, hospital_policy, budget=budget)
                bad._start(bad.connections[b_cid], MessageType.TRAIN_REQUEST,
                           {"model": "d=0\nversion=0\nbias=0.0\nw=", "batch": 1})
            scenario.network.run_until_idle(budget)


def _run_fl(scenario: Scenario, report: RunReport, budget: int) -> None:
    researcher = scenario.researcher
    cids = [
        r_cid
        for name, (r_cid, _) in scenario.hospital_connections.items()
        if researcher.is_mutually_trusted(r_cid)
    ]
    metrics = {a.name: a.metrics for a in scenario.agents.values()}
    result = run_vanilla_fl(
        researcher,
        cids,
        scenario.validation,
        scenario.train_config,
        network=scenario.network,
        budget=budget,
        on_round=lambda i: snapshot_bandwidth(metrics, i, report.bandwidth),
    )
    scenario.fl_result = result
    report.batches = [
        {"batch": b, **cm.to_dict(), "total": cm.total, "accuracy": cm.accuracy} for b, cm in result.history
    ]
    report.lineage = [s.to_dict() for s in result.lineage]
    report.training["final_model"] = result.model.fingerprint()
    report.training["final_version"] = result.model.version


def _collect(scenario: Scenario, report: RunReport) -> None:
    for agent in scenario.agents.values():
        for conn in agent.connections.values():
            report.connections.append({"agent": agent.name, **conn.to_dict()})
        report.verifications.extend(agent.verifications)
        report.metrics[agent.name] = agent.metrics.to_dict()
    report.training["processed"] = {
        a.name: a.train_requests_processed for a in scenario.agents.values() if a.train_requests_processed
    }
    report.training["rejected"] = {
        a.name: a.train_requests_rejected for a in scenario.agents.values() if a.train_requests_rejected
    }


def contributors(scenario: Scenario) -> Optional[list[str]]:
    """Agents whose training is on the chain from the initial to the final model.

    Returns None if the chain is broken.
    """
    result = scenario.fl_result
    if result is None:
        return None
    steps = {}
    for agent in scenario.agents.values():
        for entry in agent.train_log:
            steps.setdefault(entry["in"], []).append((entry["out"], agent.name))
    names = []
    for step in result.lineage:
        match = [name for out, name in steps.get(step.sent, []) if out == step.returned]
        if not match:
            return None
        names.append(match[0])
    for prev, nxt in zip(result.lineage, result.lineage[1:]):
        if prev.returned != nxt.sent or nxt.sent_version != prev.returned_version:
            return None
    return names


def _assert(scenario: Scenario, report: RunReport) -> None:
    checks = []
    researcher = scenario.researcher
    bad_names = {n for n, r in scenario.roles.items() if r in MALICIOUS}
    bad_agents = [scenario.agents[n] for n in bad_names]

    train_entries = [e for a in scenario.agents.values() for e in a.train_log]
    checks.append(("train_requests_only_on_trusted_connections", all(e["trusted"] for e in train_entries)))

    sent_models_ok = all(
        researcher.connections[e.connection_id].mutually_trusted
        for e in researcher.log
        if e.direction == "sent" and e.type == MessageType.TRAIN_REQUEST.value
    )
    checks.append(("coordinator_sends_models_only_over_trusted_connections", sent_models_ok))

    bad_dids = {str(c.my_did) for a in bad_agents for c in a.connections.values()}
    trusted_with_bad = [
        c
        for a in scenario.agents.values()
        for c in a.connections.values()
        if (c.trusted or c.trusted_by_peer) and (a.name in bad_names or str(c.their_did) in bad_dids)
    ]
    no_bad_training = all(a.train_requests_processed == 0 for a in bad_agents) and not any(
        e["connection_id"] in {cid for a in scenario.agents.values() for cid, c in a.connections.items()
                               if str(c.their_did) in bad_dids}
        for e in train_entries
    )
    checks.append(("adversaries_never_trusted", not trusted_with_bad))
    checks.append(("no_training_by_or_for_adversaries", no_bad_training))

    expected = scenario.config.get("expect", {})
    mutual = [n for n, (r_cid, _) in scenario.hospital_connections.items() if researcher.is_mutually_trusted(r_cid)]
    if "trusted_hospitals" in expected:
        checks.append(("expected_trusted_hospitals", len(mutual) == expected["trusted_hospitals"]))

    if report.status == "ok":
        checks.append(("one_benchmark_per_hospital_plus_initial", len(report.batches) == len(mutual) + 1))
        totals = {b["total"] for b in report.batches}
        checks.append(("constant_confusion_matrix_total", totals == {scenario.validation.n}))
        chain = contributors(scenario)
        checks.append(("model_lineage_sequential", chain is not None))
        checks.append(("contributors_are_trusted_hospitals", chain is not None and sorted(chain) == sorted(mutual)))

    sent = sum(m["bytes_sent"] for m in report.metrics.values())
    received = sum(m["bytes_received"] for m in report.metrics.values())
    dropped = sum(m["bytes_dropped"] for m in report.metrics.values())
    checks.append(("byte_conservation", sent == received + dropped))

    report.assertions = [{"name": n, "passed": bool(ok)} for n, ok in checks]
