"""Agent runtime: wallets, connections, trust establishment and dispatch.

Agents never talk to each other directly.  They hand wire-encoded envelopes
to a :class:`Network`, which queues them and later feeds each one to the
recipient's :meth:`Agent.receive`.  Processing is serial, so an agent's
state is only ever touched by one message at a time.
"""

from __future__ import annotations

import http.client
import logging
import random
import threading
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Mapping, Optional

from . import credentials as vc
from . import crypto
from .errors import (
    CannotSatisfyError,
    ConfidentialityError,
    DeliveryError,
    EncodingError,
    IntegrityError,
    InvitationError,
    ShapeError,
    TrustFLError,
    UnsupportedTypeError,
    UntrustedConnectionError,
)
from .fedlearn import Dataset, TrainConfig, deserialize_model, serialize_model, train_local
from .identity import (
    Did,
    DidDocument,
    Envelope,
    Message,
    MessageType,
    PeerStore,
    ProblemCode,
    create_peer_did,
    create_public_did,
    new_id,
    open_envelope,
    pack,
    pack_bytes,
    unpack,
    verify_envelope,
)
from .registry import Registry

log = logging.getLogger(__name__)

T = MessageType


# --- transport ------------------------------------------------------------

@dataclass
class MetricsCounters:
    messages_sent: int = 0
    bytes_sent: int = 0
    messages_received: int = 0
    bytes_received: int = 0
    messages_dropped: int = 0
    bytes_dropped: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class MemoryTransport:
    """Hands wire bytes straight to the network queue."""

    mode = "mem"

    def attach(self, network: "Network", endpoint: str) -> None:
        pass

    def deliver(self, network: "Network", endpoint: str, wire: bytes) -> None:
        network.enqueue(endpoint, wire)

    def close(self) -> None:
        pass


class HttpTransport:
    """One HTTP listener per agent on the loopback interface.

    Agents keep their logical ``host:port`` endpoints in DID documents; this
    transport maps each logical endpoint to an ephemeral local port, so
    documents (and thus byte counts) match the in-memory run exactly.
    """

    mode = "socket"

    def __init__(self, bind_host: str = "127.0.0.1", timeout: float = 10.0):
        self.bind_host = bind_host
        self.timeout = timeout
        self._servers: dict[str, ThreadingHTTPServer] = {}
        self._threads: list[threading.Thread] = []

    def attach(self, network: "Network", endpoint: str) -> None:
        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                network.enqueue(endpoint, self.rfile.read(length))
                self.send_response(202)
                self.send_header("Content-Length", "0")
                self.end_headers()

            def log_message(self, *args):
                pass

        server = ThreadingHTTPServer((self.bind_host, 0), Handler)
        server.daemon_threads = True
        thread = threading.Thread(target=server.serve_forever, name=f"http-{endpoint}", daemon=True)
        thread.start()
        self._servers[endpoint] = server
        self._threads.append(thread)

    def address(self, endpoint: str) -> tuple[str, int]:
        server = self._servers.get(endpoint)
        if server is None:
            raise DeliveryError(f"no listener for endpoint {endpoint!r}")
        return server.server_address[:2]

    def deliver(self, network: "Network", endpoint: str, wire: bytes) -> None:
        host, port = self.address(endpoint)
        conn = http.client.HTTPConnection(host, port, timeout=self.timeout)
        try:
            conn.request("POST", "/", body=wire, headers={"Content-Type": "application/json"})
            resp = conn.getresponse()
            resp.read()
        except OSError as exc:
            raise DeliveryError(f"POST to {endpoint} failed: {exc}") from exc
        finally:
            conn.close()
        if resp.status != 202:
            raise DeliveryError(f"{endpoint} answered HTTP {resp.status}")

    def close(self) -> None:
        for server in self._servers.values():
            server.shutdown()
            server.server_close()
        self._servers.clear()


class Network:
    """Routes envelopes between agents and drives their processing.

    Delivery order is FIFO unless ``reorder_rng`` is given, in which case a
    random pending envelope is delivered next (used to shake out ordering
    bugs).  ``interceptors`` may rewrite wire bytes in flight.
    """

    def __init__(self, transport=None, reorder_rng: Optional[random.Random] = None):
        self.transport = transport or MemoryTransport()
        self.reorder_rng = reorder_rng
        self.agents: dict[str, "Agent"] = {}
        self.interceptors: list[Callable[[str, bytes], bytes]] = []
        self._pending: deque[tuple[str, bytes]] = deque()
        self._lock = threading.Lock()
        self.seq = 0
        self.steps = 0

    def register(self, agent: "Agent") -> None:
        if agent.endpoint in self.agents:
            raise ValueError(f"endpoint {agent.endpoint} already taken")
        self.agents[agent.endpoint] = agent
        agent.network = self
        self.transport.attach(self, agent.endpoint)

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def send(self, sender: "Agent", endpoint: str, wire: bytes) -> None:
        if endpoint not in self.agents:
            raise DeliveryError(f"unknown endpoint {endpoint!r}")
        sender.metrics.messages_sent += 1
        sender.metrics.bytes_sent += len(wire)
        for intercept in self.interceptors:
            wire = intercept(endpoint, wire)
        self.transport.deliver(self, endpoint, wire)

    def enqueue(self, endpoint: str, wire: bytes) -> None:
        with self._lock:
            self._pending.append((endpoint, wire))

    @property
    def pending(self) -> int:
        return len(self._pending)

    def step(self) -> bool:
        with self._lock:
            if not self._pending:
                return False
            if self.reorder_rng is not None and len(self._pending) > 1:
                i = self.reorder_rng.randrange(len(self._pending))
                self._pending.rotate(-i)
                item = self._pending.popleft()
                self._pending.rotate(i)
            else:
                item = self._pending.popleft()
        endpoint, wire = item
        self.steps += 1
        self.agents[endpoint].receive(wire)
        return True

    def run_until(self, predicate: Callable[[], bool], budget: int = 10_000) -> bool:
        for _ in range(budget):
            if predicate():
                return True
            if not self.step():
                return predicate()
        return predicate()

    def run_until_idle(self, budget: int = 10_000) -> int:
        n = 0
        while n < budget and self.step():
            n += 1
        return n

    def close(self) -> None:
        self.transport.close()


# --- agent state ----------------------------------------------------------

class ConnectionState(str, Enum):
    INVITED = "invited"
    REQUESTED = "requested"
    COMPLETE = "complete"


_NEXT_STATE = {
    ConnectionState.INVITED: ConnectionState.REQUESTED,
    ConnectionState.REQUESTED: ConnectionState.COMPLETE,
}


@dataclass
class Connection:
    connection_id: str
    my_did: Did
    their_did: Optional[Did] = None
    their_document: Optional[DidDocument] = None
    state: ConnectionState = ConnectionState.INVITED
    trusted: bool = False
    trusted_by_peer: bool = False
    verified_attributes: tuple[tuple[str, str], ...] = ()
    label: str = ""
    history: list[ConnectionState] = field(default_factory=lambda: [ConnectionState.INVITED])
    buffered: list[tuple[Envelope, Message]] = field(default_factory=list, repr=False)

    def advance(self, new: ConnectionState) -> None:
        if _NEXT_STATE.get(self.state) is not new:
            raise ValueError(f"illegal connection transition {self.state.value} -> {new.value}")
        self.state = new
        self.history.append(new)

    @property
    def mutually_trusted(self) -> bool:
        return self.trusted and self.trusted_by_peer

    def mark_trusted(self, attributes) -> None:
        if self.state is not ConnectionState.COMPLETE or not attributes:
            raise ValueError("only complete connections with verified attributes can be trusted")
        self.trusted = True
        self.verified_attributes = tuple(attributes)

    def to_dict(self) -> dict:
        return {
            "connection_id": self.connection_id,
            "peer": self.label,
            "my_did": str(self.my_did),
            "their_did": str(self.their_did) if self.their_did else None,
            "state": self.state.value,
            "trusted": self.trusted,
            "trusted_by_peer": self.trusted_by_peer,
            "verified_attributes": [list(a) for a in self.verified_attributes],
        }


@dataclass(frozen=True)
class Invitation:
    inviter_doc: DidDocument
    token: str
    label: str = ""

    @property
    def inviter_did(self) -> Did:
        return self.inviter_doc.id

    @property
    def endpoint(self) -> str:
        return self.inviter_doc.endpoint


@dataclass(frozen=True)
class TrustPolicy:
    """What a counterparty must prove before a connection is trusted."""

    schema_id: str
    issuer: Optional[Did] = None
    constraints: tuple[tuple[str, object], ...] = ()
    disclosed: tuple[str, ...] = ()

    @classmethod
    def build(cls, schema_id, issuer=None, constraints: Mapping[str, object] | None = None, disclosed=()):
        return cls(schema_id, issuer, tuple(sorted((constraints or {}).items())), tuple(disclosed))


@dataclass
class Wallet:
    link_secret: vc.LinkSecret
    peer_store: PeerStore = field(default_factory=PeerStore)
    keys: dict[str, crypto.KeyPair] = field(default_factory=dict, repr=False)
    credentials: dict[bytes, vc.Credential] = field(default_factory=dict)

    def add_credential(self, credential: vc.Credential) -> bool:
        if credential.credential_hash in self.credentials:
            return False
        self.credentials[credential.credential_hash] = credential
        return True

    def find_credential(self, schema_id: str, issuer: Optional[Did] = None) -> Optional[vc.Credential]:
        matches = [c for c in self.credentials.values() if c.schema_id == schema_id]
        preferred = [c for c in matches if issuer is not None and c.issuer_did == issuer]
        pool = preferred or matches
        return pool[0] if pool else None


@dataclass
class LogEntry:
    seq: int
    direction: str  # "sent" | "received"
    connection_id: str
    type: str
    thread_id: Optional[str]


@dataclass
class RolePolicy:
    """Data-only description of how an agent behaves; no domain logic here."""

    accept_schemas: Optional[frozenset[str]] = None  # None = any registered schema
    training_data: Optional[Dataset] = None
    train_config: TrainConfig = field(default_factory=TrainConfig)


class Agent:
    def __init__(
        self,
        name: str,
        endpoint: str,
        registry: Registry,
        *,
        seed: object = 0,
        role: str = "",
        policy: Optional[RolePolicy] = None,
    ):
        self.name = name
        self.role = role
        self.endpoint = endpoint
        self.registry = registry
        self.rng = random.Random(f"{seed}/{name}")
        self.policy = policy or RolePolicy()
        self.wallet = Wallet(vc.LinkSecret.generate(self.rng))
        self.metrics = MetricsCounters()
        self.network: Optional[Network] = None
        self.connections: dict[str, Connection] = {}
        self._conn_by_did: dict[str, str] = {}
        self._invitations: dict[str, str] = {}  # token -> connection_id
        self._used_tokens: set[str] = set()
        self.public_did: Optional[Did] = None
        self.public_doc: Optional[DidDocument] = None

        self._offers: dict[str, tuple[str, str, dict]] = {}  # thid -> (cid, schema_id, attributes)
        self._credential_requests: dict[str, tuple[str, vc.CredentialRequest]] = {}
        self._proof_requests: dict[str, tuple[str, vc.ProofRequest]] = {}
        self._presentations_sent: dict[str, str] = {}
        self._train_requests: dict[str, str] = {}  # thid -> cid

        self.offer_outcomes: dict[str, str] = {}  # thid -> "issued" | "declined" | "failed"
        self.train_results: dict[str, str] = {}
        self.verifications: list[dict] = []
        self.problems: list[dict] = []
        self.log: list[LogEntry] = []
        self.train_log: list[dict] = []
        self.train_requests_processed = 0
        self.train_requests_rejected = 0

    def __repr__(self):
        return f"Agent({self.name!r}, role={self.role!r})"

    # identities
    def _new_peer_did(self) -> tuple[Did, DidDocument]:
        kp = crypto.random_keypair(self.rng)
        did, doc = create_peer_did(kp, self.endpoint)
        self.wallet.keys[str(did)] = kp
        return did, doc

    def ensure_public_did(self) -> DidDocument:
        if self.public_doc is None:
            kp = crypto.random_keypair(self.rng)
            self.public_did, self.public_doc = create_public_did(kp, self.endpoint)
            self.wallet.keys[str(self.public_did)] = kp
        return self.public_doc

    def _my_doc(self, conn: Connection) -> DidDocument:
        return DidDocument(conn.my_did, self.wallet.keys[str(conn.my_did)].public_key, self.endpoint)

    def _add_connection(self, did: Did, label: str = "") -> Connection:
        conn = Connection(connection_id=new_id(self.rng), my_did=did, label=label)
        self.connections[conn.connection_id] = conn
        self._conn_by_did[str(did)] = conn.connection_id
        return conn

    def connection(self, cid: str) -> Connection:
        return self.connections[cid]

    def peer_label(self, cid: str) -> str:
        conn = self.connections.get(cid)
        return conn.label if conn and conn.label else cid

    def is_mutually_trusted(self, cid: str) -> bool:
        conn = self.connections.get(cid)
        return bool(conn and conn.mutually_trusted)

    # sending
    def _send(self, conn: Connection, message: Message, doc: Optional[DidDocument] = None) -> None:
        doc = doc or conn.their_document
        kp = self.wallet.keys[str(conn.my_did)]
        envelope = pack(message, kp, conn.my_did, doc, message_id=new_id(self.rng), rng=self.rng)
        self._record("sent", conn.connection_id, message)
        self.network.send(self, doc.endpoint, envelope.to_wire())

    def _record(self, direction: str, cid: str, message: Message) -> None:
        seq = self.network.next_seq() if self.network else 0
        self.log.append(LogEntry(seq, direction, cid, message.type.value, message.thread_id))

    def _start(self, conn: Connection, mtype: MessageType, body: dict) -> str:
        thid = new_id(self.rng)
        self._send(conn, Message(mtype, body, thid))
        return thid

    def _problem(self, conn: Connection, thid, code: ProblemCode, detail: str, doc=None) -> None:
        self._send(conn, Message(T.PROBLEM_REPORT, {"code": code.value, "detail": detail}, thid), doc)

    # connection protocol
    def create_invitation(self) -> Invitation:
        did, doc = self._new_peer_did()
        conn = self._add_connection(did)
        token = new_id(self.rng)
        self._invitations[token] = conn.connection_id
        return Invitation(doc, token, self.name)

    def accept_invitation(self, invitation: Invitation) -> str:
        invitation.inviter_doc.check()
        did, doc = self._new_peer_did()
        conn = self._add_connection(did, invitation.label)
        conn.their_did = invitation.inviter_did
        conn.their_document = invitation.inviter_doc
        self.wallet.peer_store.add(invitation.inviter_doc)
        self._send(
            conn,
            Message(T.DID_EXCHANGE_REQUEST, {"token": invitation.token, "did_doc": doc.to_dict(), "label": self.name},
                    new_id(self.rng)),
        )
        conn.advance(ConnectionState.REQUESTED)
        return conn.connection_id

    def offer_credential(self, cid: str, schema_id: str, attributes: Mapping[str, str]) -> str:
        conn = self._complete(cid)
        issuer_doc = self.ensure_public_did()
        thid = self._start(conn, T.CREDENTIAL_OFFER, {"schema_id": schema_id, "issuer_did": str(issuer_doc.id)})
        self._offers[thid] = (cid, schema_id, dict(attributes))
        return thid

    def request_proof(self, cid: str, policy: TrustPolicy) -> str:
        conn = self._complete(cid)
        request = vc.ProofRequest.new(
            policy.schema_id, policy.issuer, policy.disclosed, policy.constraints, rng=self.rng
        )
        thid = self._start(conn, T.PROOF_REQUEST, {"request": request.to_dict()})
        self._proof_requests[thid] = (cid, request)
        return thid

    def send_train_request(self, cid: str, model_text: str, batch: int) -> str:
        conn = self._complete(cid)
        if not conn.mutually_trusted:
            raise UntrustedConnectionError(f"{self.name}: connection {cid} is not mutually trusted")
        thid = self._start(conn, T.TRAIN_REQUEST, {"model": model_text, "batch": batch})
        self._train_requests[thid] = cid
        return thid

    def self_issue(self, schema_id: str, attributes: Mapping[str, str]) -> vc.Credential:
        """Issue a credential to oneself with one's own public DID."""
        doc = self.ensure_public_did()
        schema = self.registry.get_schema(schema_id)
        req = vc.request_credential(self.wallet.link_secret, schema, self.rng)
        cred = vc.issue(self.wallet.keys[str(doc.id)], doc.id, schema, attributes, req.commitment)
        self.wallet.add_credential(cred)
        return cred

    def _complete(self, cid: str) -> Connection:
        conn = self.connections[cid]
        if conn.state is not ConnectionState.COMPLETE:
            raise TrustFLError(f"{self.name}: connection {cid} is {conn.state.value}, not complete")
        return conn

    # receiving
    def receive(self, wire: bytes) -> None:
        try:
            self._receive(wire)
        except (IntegrityError, ConfidentialityError, EncodingError, UnsupportedTypeError) as exc:
            log.info("%s dropped envelope: %s: %s", self.name, type(exc).__name__, exc)
            self.metrics.messages_dropped += 1
            self.metrics.bytes_dropped += len(wire)

    def _receive(self, wire: bytes) -> None:
        envelope = Envelope.from_wire(wire)
        cid = self._conn_by_did.get(str(envelope.to))
        if cid is None:
            raise IntegrityError(f"no connection for recipient {envelope.to}")
        conn = self.connections[cid]
        kp = self.wallet.keys[str(conn.my_did)]

        if conn.their_did is None or envelope.from_ != conn.their_did:
            # unknown sender: only a DID exchange request is acceptable
            message = self._first_contact(envelope, kp)
            doc = DidDocument.from_dict(message.body["did_doc"]).check()
        else:
            try:
                message = unpack(envelope, kp, conn.their_document)
            except UnsupportedTypeError as exc:
                self._accept(wire)
                self._problem(conn, envelope.thread_id, ProblemCode.UNSUPPORTED_TYPE, str(exc))
                return
            doc = None
        self._accept(wire)
        self._record("received", cid, message)
        self._dispatch(conn, message, doc)

    def _accept(self, wire: bytes) -> None:
        self.metrics.messages_received += 1
        self.metrics.bytes_received += len(wire)

    def _first_contact(self, envelope: Envelope, kp: crypto.KeyPair) -> Message:
        # The sender's document only arrives inside the first message, so it
        # must be opened before the signature can be checked.  Nothing in it
        # is acted on until the signature verifies.
        message = open_envelope(envelope, kp)
        if message.type is not T.DID_EXCHANGE_REQUEST:
            raise IntegrityError(f"first contact must be a DID exchange request, got {message.type.value}")
        doc = DidDocument.from_dict(message.body["did_doc"])
        try:
            doc.check()
        except TrustFLError as exc:
            raise IntegrityError(f"sender document invalid: {exc}") from exc
        verify_envelope(envelope, doc)
        return message

    def _dispatch(self, conn: Connection, message: Message, doc: Optional[DidDocument]) -> None:
        handler = self._handlers.get(message.type)
        if message.type not in (T.DID_EXCHANGE_REQUEST, T.DID_EXCHANGE_RESPONSE, T.PROBLEM_REPORT) and (
            conn.state is not ConnectionState.COMPLETE
        ):
            conn.buffered.append((None, message))
            return
        try:
            handler(self, conn, message, doc)
        except (EncodingError, KeyError, TypeError, ValueError) as exc:
            log.warning("%s: malformed %s: %s", self.name, message.type.value, exc)
            if message.type not in (T.ACK, T.PROBLEM_REPORT, T.DID_EXCHANGE_RESPONSE):
                self._problem(conn, message.thread_id, ProblemCode.INTERNAL, f"malformed {message.type.value}")

    def _flush(self, conn: Connection) -> None:
        pending, conn.buffered = conn.buffered, []
        for _, message in pending:
            self._dispatch(conn, message, None)

    # handlers
    def _on_exchange_request(self, conn, message, doc):
        token = message.body["token"]
        target = self._invitations.get(token)
        if target != conn.connection_id or token in self._used_tokens or conn.their_did is not None:
            peer = Connection(connection_id="-", my_did=conn.my_did, label=str(message.body.get("label", "")))
            self._problem(peer, message.thread_id, ProblemCode.UNTRUSTED_CONNECTION, "invitation already used",
                          doc=doc)
            return
        self._used_tokens.add(token)
        self.wallet.peer_store.add(doc)
        conn.their_did, conn.their_document = doc.id, doc
        conn.label = str(message.body.get("label", ""))
        conn.advance(ConnectionState.REQUESTED)
        self._send(conn, message.reply(T.DID_EXCHANGE_RESPONSE, {"did_doc": self._my_doc(conn).to_dict()}))
        conn.advance(ConnectionState.COMPLETE)
        self._flush(conn)

    def _on_exchange_response(self, conn, message, doc):
        their = DidDocument.from_dict(message.body["did_doc"]).check()
        if conn.state is not ConnectionState.REQUESTED or their != conn.their_document:
            log.info("%s: ignoring stray exchange response on %s", self.name, conn.connection_id)
            return
        conn.advance(ConnectionState.COMPLETE)
        self._flush(conn)

    def _on_offer(self, conn, message, doc):
        schema_id = message.body["schema_id"]
        accept = self.policy.accept_schemas
        if not self.registry.has_schema(schema_id) or (accept is not None and schema_id not in accept):
            self._send(conn, message.reply(T.ACK, {"status": "declined"}))
            return
        schema = self.registry.get_schema(schema_id)
        req = vc.request_credential(self.wallet.link_secret, schema, self.rng)
        self._credential_requests[message.thread_id] = (conn.connection_id, req)
        self._send(conn, message.reply(T.CREDENTIAL_REQUEST, req.to_dict()))

    def _on_credential_request(self, conn, message, doc):
        offer = self._offers.get(message.thread_id)
        if offer is None or offer[0] != conn.connection_id:
            self._problem(conn, message.thread_id, ProblemCode.INTERNAL, "no matching offer")
            return
        _, schema_id, attributes = offer
        req = vc.CredentialRequest.from_dict(message.body)
        schema = self.registry.get_schema(schema_id)
        if req.schema_id != schema_id:
            self._problem(conn, message.thread_id, ProblemCode.INTERNAL, "request names a different schema")
            return
        cred = vc.issue(self.wallet.keys[str(self.public_did)], self.public_did, schema, attributes, req.commitment)
        self._send(conn, message.reply(T.CREDENTIAL_ISSUE, {"credential": cred.to_dict()}))

    def _on_credential_issue(self, conn, message, doc):
        pending = self._credential_requests.pop(message.thread_id, None)
        cred = vc.Credential.from_dict(message.body["credential"])
        ok, why = vc.check_issuer_signature(cred, self.registry)
        if pending is None or cred.link_commitment != pending[1].commitment:
            ok, why = False, "credential does not answer one of our requests"
        if not ok:
            self._problem(conn, message.thread_id, ProblemCode.INTERNAL, f"credential discarded: {why}")
            return
        self.wallet.add_credential(cred)
        self._send(conn, message.reply(T.ACK, {"status": "stored"}))

    def _on_proof_request(self, conn, message, doc):
        request = vc.ProofRequest.from_dict(message.body["request"])
        cred = self.wallet.find_credential(request.schema_id, request.required_issuer)
        try:
            if cred is None:
                raise CannotSatisfyError(f"no credential for {request.schema_id}")
            presentation = vc.present(cred, self.wallet.link_secret, request, rng=self.rng)
        except CannotSatisfyError as exc:
            self._problem(conn, message.thread_id, ProblemCode.PROOF_REJECTED, str(exc))
            return
        self._presentations_sent[message.thread_id] = conn.connection_id
        self._send(conn, message.reply(T.PROOF_PRESENTATION, {"presentation": presentation.to_dict()}))

    def _on_presentation(self, conn, message, doc):
        pending = self._proof_requests.pop(message.thread_id, None)
        if pending is None or pending[0] != conn.connection_id:
            self._problem(conn, message.thread_id, ProblemCode.PROOF_REJECTED, "no matching proof request")
            return
        request = pending[1]
        try:
            presentation = vc.Presentation.from_dict(message.body["presentation"])
        except EncodingError as exc:
            self._problem(conn, message.thread_id, ProblemCode.PROOF_REJECTED, str(exc))
            return
        report = vc.verify_presentation(presentation, request, self.registry)
        self.verifications.append(
            {"verifier": self.name, "prover": conn.label, "connection_id": conn.connection_id, **report.to_dict()}
        )
        if report.accepted:
            attrs = presentation.credential.attributes
            if request.disclosed_attributes:
                attrs = tuple((n, v) for n, v in attrs if n in request.disclosed_attributes)
            conn.mark_trusted(attrs)
            self._send(conn, message.reply(T.ACK, {"status": "trusted"}))
        else:
            self._problem(conn, message.thread_id, ProblemCode.PROOF_REJECTED,
                          "failed checks: " + ",".join(report.failed))

    def _on_ack(self, conn, message, doc):
        thid = message.thread_id
        status = message.body["status"]
        if thid in self._offers:
            self.offer_outcomes[thid] = "issued" if status == "stored" else "declined"
        elif self._presentations_sent.pop(thid, None) == conn.connection_id and status == "trusted":
            conn.trusted_by_peer = True

    def _on_problem(self, conn, message, doc):
        thid = message.thread_id
        self.problems.append({"from": conn.label, "connection_id": conn.connection_id, "thread_id": thid, **message.body})
        if thid in self._offers:
            self.offer_outcomes[thid] = "failed"
        self._presentations_sent.pop(thid, None)
        self._proof_requests.pop(thid, None)
        self._credential_requests.pop(thid, None)
        if self._train_requests.pop(thid, None) is not None:
            self.train_results.pop(thid, None)

    def _on_train_request(self, conn, message, doc):
        if not conn.trusted:
            self.train_requests_rejected += 1
            self._problem(conn, message.thread_id, ProblemCode.UNTRUSTED_CONNECTION,
                          "training is only offered over trusted connections")
            return
        data = self.policy.training_data
        if data is None:
            self._problem(conn, message.thread_id, ProblemCode.INTERNAL, "no training data")
            return
        try:
            model = deserialize_model(message.body["model"], expected_d=data.d)
        except (ShapeError, ValueError) as exc:
            self._problem(conn, message.thread_id, ProblemCode.INTERNAL, f"bad model: {exc}")
            return
        trained = train_local(model, data, self.policy.train_config)
        self.train_requests_processed += 1
        self.train_log.append(
            {
                "agent": self.name,
                "connection_id": conn.connection_id,
                "trusted": conn.trusted,
                "in": model.fingerprint(),
                "out": trained.fingerprint(),
            }
        )
        self._send(conn, message.reply(T.TRAIN_RESULT, {"model": serialize_model(trained)}))

    def _on_train_result(self, conn, message, doc):
        thid = message.thread_id
        if self._train_requests.get(thid) != conn.connection_id or not conn.mutually_trusted:
            self._problem(conn, thid, ProblemCode.UNTRUSTED_CONNECTION, "unsolicited or untrusted train_result")
            return
        self.train_results[thid] = message.body["model"]

    _handlers = {
        T.DID_EXCHANGE_REQUEST: _on_exchange_request,
        T.DID_EXCHANGE_RESPONSE: _on_exchange_response,
        T.CREDENTIAL_OFFER: _on_offer,
        T.CREDENTIAL_REQUEST: _on_credential_request,
        T.CREDENTIAL_ISSUE: _on_credential_issue,
        T.PROOF_REQUEST: _on_proof_request,
        T.PROOF_PRESENTATION: _on_presentation,
        T.TRAIN_REQUEST: _on_train_request,
        T.TRAIN_RESULT: _on_train_result,
        T.ACK: _on_ack,
        T.PROBLEM_REPORT: _on_problem,
    }


# --- flows ----------------------------------------------------------------

def connect(initiator: Agent, inviter: Agent, *, invitation: Optional[Invitation] = None,
            budget: int = 10_000) -> tuple[str, str]:
    """Run the DID exchange; returns (initiator connection id, inviter connection id)."""
    network = initiator.network
    invitation = invitation or inviter.create_invitation()
    cid = initiator.accept_invitation(invitation)
    conn = initiator.connections[cid]
    problems = lambda: [p for p in initiator.problems if p["connection_id"] == cid]
    network.run_until(lambda: conn.state is ConnectionState.COMPLETE or problems(), budget)
    if conn.state is not ConnectionState.COMPLETE:
        detail = problems()[-1]["detail"] if problems() else "no response"
        raise InvitationError(f"{initiator.name} could not connect to {inviter.name}: {detail}")
    peer_cid = inviter._conn_by_did[str(conn.their_did)]
    return cid, peer_cid


def issue_over_connection(issuer: Agent, cid: str, schema_id: str, attributes: Mapping[str, str],
                          *, budget: int = 10_000) -> str:
    """Offer -> request -> issue -> ack.  Returns the outcome string."""
    thid = issuer.offer_credential(cid, schema_id, attributes)
    issuer.network.run_until(lambda: thid in issuer.offer_outcomes, budget)
    return issuer.offer_outcomes.get(thid, "timeout")


def establish_trust(verifier: Agent, cid: str, policy: TrustPolicy, *, budget: int = 10_000) -> bool:
    """Ask the peer for a presentation and trust the connection if it verifies."""
    thid = verifier.request_proof(cid, policy)
    verifier.network.run_until(lambda: thid not in verifier._proof_requests, budget)
    verifier.network.run_until_idle(budget)
    return verifier.connections[cid].trusted


def send_unpackable(agent: Agent, cid: str, payload: bytes, thread_id: Optional[str] = None) -> None:
    """Send raw plaintext bytes over a connection (for protocol tests)."""
    conn = agent.connections[cid]
    kp = agent.wallet.keys[str(conn.my_did)]
    env = pack_bytes(payload, kp, conn.my_did, conn.their_document, thread_id=thread_id, rng=agent.rng)
    agent.network.send(agent, conn.their_document.endpoint, env.to_wire())
