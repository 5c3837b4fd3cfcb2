"""Peer DIDs and the encrypt-then-sign envelope.

Two parties make peer DIDs, one sends the other a message, and we look at
what a tampered or misdirected envelope does.
"""

import random

from trustfl import crypto
from trustfl.errors import ConfidentialityError, IntegrityError
from trustfl.identity import Envelope, Message, MessageType, create_peer_did, pack, unpack

rng = random.Random(0)

alice_keys = crypto.random_keypair(rng)
bob_keys = crypto.random_keypair(rng)
alice, alice_doc = create_peer_did(alice_keys, "alice.local:9001")
bob, bob_doc = create_peer_did(bob_keys, "bob.local:9002")
print("alice:", alice)
print("bob:  ", bob)

# The identifier is the first 16 bytes of sha256(public key), base58 encoded.
msg = Message(MessageType.ACK, {"status": "hello bob"}, thread_id="t-1")
env = pack(msg, alice_keys, alice, bob_doc, rng=rng)
wire = env.to_wire()
print(f"\nenvelope is {len(wire)} bytes on the wire:")
print(wire[:160].decode(), "...")

print("\nbob opens it:", unpack(Envelope.from_wire(wire), bob_keys, alice_doc))

# Flip one bit of the ciphertext: the signature no longer matches.
ct = bytearray(env.ciphertext)
ct[0] ^= 1
try:
    unpack(Envelope(env.to, env.from_, bytes(ct), env.signature, env.message_id, env.thread_id), bob_keys, alice_doc)
except IntegrityError as exc:
    print("tampered:", type(exc).__name__, "-", exc)

# Someone else can check the signature but cannot read the contents.
eve_keys = crypto.random_keypair(rng)
try:
    unpack(env, eve_keys, alice_doc)
except ConfidentialityError as exc:
    print("eve:", type(exc).__name__, "-", exc)
