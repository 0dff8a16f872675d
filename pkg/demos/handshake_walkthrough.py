"""
One handshake, step by step
===========================

Provision a server and a tag, run a single session by hand and look at what
crosses the air. Then replay the recording and watch it bounce.
"""
import numpy as np

from rfidsim import crypto, protocol as proto
from rfidsim.radio import tx_duration

rng = np.random.default_rng(1)

# The server owns a curve key pair; tags only ever see the public point.
keys = crypto.kem_keygen(rng)
db = proto.AuthServerDb(keys.private_scalar, rng)
tag = proto.make_tag(db, rng, label=0)
reader = proto.ReaderAgent()
print(f"curve {crypto.CURVE_NAME}, public point {keys.public_point.hex()[:16]}...")

# %%
# Query -> RN16 -> ACK carrying the reader's nonce Cr
proto.tag_start_session(tag, proto.query_message(0), rng)
rn16 = proto.tag_rn16(tag)
ack = proto.reader_ack(reader, rn16, rng)
proto.tag_receive_ack(tag, ack)
print("Cr =", ack.payload[2:].hex())

# %%
# The tag answers with R1 = AES_k(ID | Cr) and R2 = KEM_pk(k | Ct).
# Both are fresh every session: new k, new IV, new ephemeral point.
auth = proto.tag_build_auth(tag.session, tag.identity, rng).to_message()
resp = proto.server_authenticate(db, proto.reader_forward(reader, auth, time_estimate=0.35))
sleep_for = proto.tag_finalize(tag.session, resp)
print(f"accepted; tag told to sleep {sleep_for} s; server did {db.decrypt_ops} decryptions")

# %%
# Message sizes and what they cost on the air
p = proto.DEFAULT_PARAMS
for kind in proto.MessageKind:
    if kind is proto.MessageKind.SERVER_REQUEST:
        continue
    bits = p.message_bits(kind)
    print(f"{kind.value:16s} {bits:5d} bits  {1e3 * tx_duration(bits, 1e6):.3f} ms at 1 Mbit/s")
print(f"{'handshake':16s} {p.handshake_bits:5d} bits")

# %%
# Replaying the recorded AuthRequest into a later session fails: the new Cr
# is not the one sealed inside R1.
proto.reader_ack(reader, rn16, rng)
try:
    proto.server_authenticate(db, proto.reader_forward(reader, auth, 0.0))
except proto.Rejected as exc:
    print("replay rejected:", exc.reason.value)
