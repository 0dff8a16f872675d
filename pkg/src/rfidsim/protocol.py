"""Tag, reader and server state machines for the hybrid mutual-authentication handshake.

Message flow for one session::

    reader  -- Query(Q) ------------------------------>  tag
    reader  <------------------------------ RN16 ------  tag
    reader  -- ACK + Cr ------------------------------>  tag
    reader  <------------- R1 = AES_k(ID|Cr), R2 = KEM(k|Ct)
    server  <-- R1, R2, Cr, Time --  reader
    server  -- B = AES_k(Cr|Ct|Time) -->  reader  -->  tag
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable

import numpy as np

from . import crypto
from .crypto import IntegrityFailure, KemCiphertext, SymCiphertext, SymKey

QUERY_BITS = 22
RN16_BITS = 16
ACK_BITS = 18
_QUERY_CMD = "1000"
_ACK_CMD = "01"


class MalformedMessage(ValueError):
    pass


class RejectReason(str, Enum):
    KEM_FAILURE = "kem_failure"
    SYM_FAILURE = "sym_failure"
    UNKNOWN_ID = "unknown_id"
    CHALLENGE_MISMATCH = "challenge_mismatch"
    BAD_RESPONSE = "bad_response"
    NONCE_MISMATCH = "nonce_mismatch"
    OUT_OF_PHASE = "out_of_phase"


class Rejected(Exception):
    def __init__(self, reason: RejectReason):
        super().__init__(reason.value)
        self.reason = reason


@dataclass(frozen=True)
class ProtocolParams:
    id_bits: int = 96
    nonce_bits: int = 32

    def __post_init__(self):
        if self.id_bits % 8 or self.nonce_bits % 8 or self.id_bits <= 0 or self.nonce_bits <= 0:
            raise ValueError("id_bits and nonce_bits must be positive multiples of 8")

    @property
    def id_bytes(self) -> int:
        return self.id_bits // 8

    @property
    def nonce_bytes(self) -> int:
        return self.nonce_bits // 8

    @property
    def r1_bits(self) -> int:
        return crypto.sym_ciphertext_bits(self.id_bytes + self.nonce_bytes)

    @property
    def r2_bits(self) -> int:
        return crypto.kem_ciphertext_bits(crypto.KEY_BYTES + self.nonce_bytes)

    @property
    def b_bits(self) -> int:
        return crypto.sym_ciphertext_bits(2 * self.nonce_bytes + 8)

    def message_bits(self, kind: "MessageKind") -> int:
        return {
            MessageKind.QUERY: QUERY_BITS,
            MessageKind.RN16: RN16_BITS,
            MessageKind.ACK_CHALLENGE: ACK_BITS + self.nonce_bits,
            MessageKind.AUTH_REQUEST: self.r1_bits + self.r2_bits,
            MessageKind.SERVER_REQUEST: self.r1_bits + self.r2_bits + self.nonce_bits + 64,
            MessageKind.SERVER_RESPONSE: self.b_bits,
        }[kind]

    @property
    def handshake_bits(self) -> int:
        """Air bits of one complete session, Query included."""
        return sum(
            self.message_bits(k)
            for k in (MessageKind.QUERY, MessageKind.RN16, MessageKind.ACK_CHALLENGE,
                      MessageKind.AUTH_REQUEST, MessageKind.SERVER_RESPONSE)
        )


DEFAULT_PARAMS = ProtocolParams()


class MessageKind(str, Enum):
    QUERY = "query"
    RN16 = "rn16"
    ACK_CHALLENGE = "ack_challenge"
    AUTH_REQUEST = "auth_request"
    SERVER_REQUEST = "server_request"
    SERVER_RESPONSE = "server_response"


@dataclass(frozen=True)
class WireMessage:
    kind: MessageKind
    payload: bytes
    bit_length: int

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "payload": self.payload.hex(), "bits": self.bit_length}

    @classmethod
    def from_json(cls, d: dict) -> "WireMessage":
        return cls(MessageKind(d["kind"]), bytes.fromhex(d["payload"]), int(d["bits"]))


def _bits(data: bytes, n: int | None = None) -> str:
    s = "".join(f"{b:08b}" for b in data)
    return s if n is None else s[-n:].rjust(n, "0")


def _bytes(bits: str) -> bytes:
    return int(bits, 2).to_bytes(len(bits) // 8, "big") if bits else b""


def query_message(q: int) -> WireMessage:
    if not 0 <= q <= 15:
        raise ValueError("Q must lie in 0..15")
    return WireMessage(MessageKind.QUERY, bytes([q]), QUERY_BITS)


def encode_message(msg: WireMessage) -> str:
    """Bit string as sent on air; its length equals ``msg.bit_length``."""
    if msg.kind is MessageKind.QUERY:
        # command code, 9 zeroed session/flag bits, Q, 5 reserved CRC bits
        bits = _QUERY_CMD + "0" * 9 + f"{msg.payload[0]:04b}" + "0" * 5
    elif msg.kind is MessageKind.ACK_CHALLENGE:
        bits = _ACK_CMD + _bits(msg.payload)
    else:
        bits = _bits(msg.payload)
    if len(bits) != msg.bit_length:
        raise MalformedMessage(f"{msg.kind.value}: encoded {len(bits)} bits, declared {msg.bit_length}")
    return bits


def decode_message(bits: str, kind: MessageKind, params: ProtocolParams = DEFAULT_PARAMS) -> WireMessage:
    """Parse ``bits`` as the message ``kind`` the receiver is expecting."""
    kind = MessageKind(kind)
    expected = params.message_bits(kind)
    if len(bits) != expected or set(bits) - {"0", "1"}:
        raise MalformedMessage(f"{kind.value}: expected {expected} bits, got {len(bits)}")
    if kind is MessageKind.QUERY:
        if bits[:4] != _QUERY_CMD or bits[4:13] != "0" * 9 or bits[17:] != "0" * 5:
            raise MalformedMessage("not a Query command")
        return query_message(int(bits[13:17], 2))
    if kind is MessageKind.ACK_CHALLENGE:
        if bits[:2] != _ACK_CMD:
            raise MalformedMessage("not an ACK command")
        return WireMessage(kind, _bytes(bits[2:]), expected)
    return WireMessage(kind, _bytes(bits), expected)


def bytes_to_bits(data: bytes) -> str:
    return _bits(data)


class Phase(str, Enum):
    IDLE = "idle"
    ARBITRATING = "arbitrating"
    ACKNOWLEDGED = "acknowledged"
    AWAITING_FINAL = "awaiting_final"
    SLEEPING = "sleeping"


@dataclass(frozen=True)
class TagIdentity:
    id: bytes
    server_pk: bytes


@dataclass
class SessionState:
    phase: Phase = Phase.IDLE
    k: SymKey | None = None
    cr: bytes | None = None
    ct: bytes | None = None
    slot: int = 0
    rn16: bytes = b""


@dataclass
class TagAgent:
    identity: TagIdentity
    params: ProtocolParams = DEFAULT_PARAMS
    session: SessionState = field(default_factory=SessionState)
    label: int = -1

    @property
    def phase(self) -> Phase:
        return self.session.phase

    def wake(self) -> None:
        if self.session.phase is Phase.SLEEPING:
            self.session = SessionState()

    def reset(self) -> None:
        self.session = SessionState()


@dataclass(frozen=True)
class AuthRequest:
    r1: SymCiphertext
    r2: KemCiphertext

    def to_message(self) -> WireMessage:
        payload = self.r1.raw() + self.r2.raw()
        return WireMessage(MessageKind.AUTH_REQUEST, payload, 8 * len(payload))

    @classmethod
    def from_message(cls, msg: WireMessage, params: ProtocolParams = DEFAULT_PARAMS) -> "AuthRequest":
        n1 = params.r1_bits // 8
        if len(msg.payload) != n1 + params.r2_bits // 8:
            raise MalformedMessage("auth request has the wrong length")
        return cls(SymCiphertext.from_raw(msg.payload[:n1]), KemCiphertext.from_raw(msg.payload[n1:]))


@dataclass(frozen=True)
class ServerRequest:
    r1: SymCiphertext
    r2: KemCiphertext
    cr_reader: bytes
    time_estimate: float


@dataclass(frozen=True)
class ServerResponse:
    b: SymCiphertext

    def to_message(self) -> WireMessage:
        payload = self.b.raw()
        return WireMessage(MessageKind.SERVER_RESPONSE, payload, 8 * len(payload))

    @classmethod
    def from_message(cls, msg: WireMessage) -> "ServerResponse":
        return cls(SymCiphertext.from_raw(msg.payload))


def tag_start_session(tag: TagAgent, query: WireMessage, rng: np.random.Generator) -> SessionState:
    """Answer a Query: pick a slot and fresh session secrets. Sleeping tags stay silent."""
    if tag.session.phase is Phase.SLEEPING:
        return tag.session
    q = query.payload[0]
    n = tag.params.nonce_bytes
    fresh = rng.bytes(crypto.KEY_BYTES + n + 2)
    tag.session = SessionState(
        phase=Phase.ARBITRATING,
        k=SymKey(fresh[: crypto.KEY_BYTES]),
        ct=fresh[crypto.KEY_BYTES : crypto.KEY_BYTES + n],
        slot=int(rng.integers(0, 1 << q)),
        rn16=fresh[-2:],
    )
    return tag.session


def tag_rn16(tag: TagAgent) -> WireMessage | None:
    if tag.session.phase is not Phase.ARBITRATING:
        return None
    return WireMessage(MessageKind.RN16, tag.session.rn16, RN16_BITS)


@dataclass
class TagObservation:
    tag_key: int
    time: float


SleepStrategy = Callable[[TagObservation], float]


def geometry_strategy(remaining_in_range: Callable[[int, float], float]) -> SleepStrategy:
    def strategy(obs: TagObservation) -> float:
        return max(0.0, remaining_in_range(obs.tag_key, obs.time))

    return strategy


def fixed_strategy(seconds: float) -> SleepStrategy:
    if seconds < 0:
        raise ValueError("sleep time must be non-negative")
    return lambda obs: seconds


@dataclass
class ReaderAgent:
    params: ProtocolParams = DEFAULT_PARAMS
    sleep_strategy: SleepStrategy = field(default_factory=lambda: fixed_strategy(0.0))
    challenges: dict = field(default_factory=dict)
    current_session: int | None = None
    _next_session: int = 0

    def new_session(self) -> int:
        self._next_session += 1
        self.current_session = self._next_session
        return self.current_session


def reader_ack(reader: ReaderAgent, rn16: WireMessage, rng: np.random.Generator) -> WireMessage:
    if rn16.kind is not MessageKind.RN16:
        raise MalformedMessage("ACK must answer an RN16")
    session = reader.new_session()
    cr = rng.bytes(reader.params.nonce_bytes)
    reader.challenges[session] = cr
    return WireMessage(MessageKind.ACK_CHALLENGE, rn16.payload + cr, ACK_BITS + reader.params.nonce_bits)


def tag_receive_ack(tag: TagAgent, ack: WireMessage) -> None:
    if tag.session.phase is not Phase.ARBITRATING:
        raise Rejected(RejectReason.OUT_OF_PHASE)
    tag.session.cr = ack.payload[2:]
    tag.session.phase = Phase.ACKNOWLEDGED


def tag_build_auth(session: SessionState, identity: TagIdentity, rng: np.random.Generator) -> AuthRequest:
    if session.phase is not Phase.ACKNOWLEDGED or session.cr is None:
        raise Rejected(RejectReason.OUT_OF_PHASE)
    r1 = crypto.sym_encrypt(session.k, identity.id + session.cr, rng)
    r2 = crypto.kem_encapsulate(identity.server_pk, session.k.key + session.ct, rng)
    session.phase = Phase.AWAITING_FINAL
    return AuthRequest(r1, r2)


def estimate_sleep_time(reader: ReaderAgent, tag_obs: TagObservation) -> float:
    return reader.sleep_strategy(tag_obs)


def reader_forward(reader: ReaderAgent, auth: WireMessage, time_estimate: float) -> ServerRequest:
    req = AuthRequest.from_message(auth, reader.params)
    cr = reader.challenges.pop(reader.current_session)
    return ServerRequest(req.r1, req.r2, cr, time_estimate)


@dataclass
class TagRecord:
    id: bytes
    label: int = -1


@dataclass
class AuthServerDb:
    """Hash-indexed tag database plus the server's curve key."""

    curve_sk: int
    rng: np.random.Generator
    params: ProtocolParams = DEFAULT_PARAMS
    entries: dict = field(default_factory=dict)
    kem_ops: int = 0
    sym_decrypts: int = 0

    @property
    def public_key(self) -> bytes:
        return crypto.public_point(self.curve_sk)

    def register(self, tag_id: bytes, label: int = -1) -> None:
        if len(tag_id) != self.params.id_bytes:
            raise ValueError("tag id has the wrong width")
        self.entries[tag_id] = TagRecord(tag_id, label)

    def remove(self, tag_id: bytes) -> None:
        self.entries.pop(tag_id, None)

    @property
    def decrypt_ops(self) -> int:
        return self.kem_ops + self.sym_decrypts


def server_authenticate(db: AuthServerDb, req: ServerRequest) -> ServerResponse:
    """One decapsulation, one symmetric decryption, one dictionary lookup."""
    p = db.params
    db.kem_ops += 1
    try:
        secret = crypto.kem_decapsulate(db.curve_sk, req.r2)
    except IntegrityFailure:
        raise Rejected(RejectReason.KEM_FAILURE) from None
    if len(secret) != crypto.KEY_BYTES + p.nonce_bytes:
        raise Rejected(RejectReason.KEM_FAILURE)
    k, ct = SymKey(secret[: crypto.KEY_BYTES]), secret[crypto.KEY_BYTES:]
    db.sym_decrypts += 1
    try:
        body = crypto.sym_decrypt(k, req.r1)
    except IntegrityFailure:
        raise Rejected(RejectReason.SYM_FAILURE) from None
    if len(body) != p.id_bytes + p.nonce_bytes:
        raise Rejected(RejectReason.SYM_FAILURE)
    tag_id, cr = body[: p.id_bytes], body[p.id_bytes:]
    if tag_id not in db.entries:
        raise Rejected(RejectReason.UNKNOWN_ID)
    if cr != req.cr_reader:
        raise Rejected(RejectReason.CHALLENGE_MISMATCH)
    b = crypto.sym_encrypt(k, cr + ct + struct.pack(">d", req.time_estimate), db.rng)
    return ServerResponse(b)


def tag_finalize(session: SessionState, resp: ServerResponse) -> float:
    """Check the server's echo of (Cr, Ct); on success the tag sleeps for the returned time."""
    if session.phase is not Phase.AWAITING_FINAL:
        raise Rejected(RejectReason.OUT_OF_PHASE)
    try:
        body = crypto.sym_decrypt(session.k, resp.b)
    except IntegrityFailure:
        raise Rejected(RejectReason.BAD_RESPONSE) from None
    n = len(session.cr)
    if len(body) != 2 * n + 8:
        raise Rejected(RejectReason.BAD_RESPONSE)
    if body[:n] != session.cr or body[n : 2 * n] != session.ct:
        raise Rejected(RejectReason.NONCE_MISMATCH)
    (sleep_for,) = struct.unpack(">d", body[2 * n :])
    session.phase = Phase.SLEEPING
    return sleep_for


@dataclass
class Transcript:
    """On-air record of one session; ``tag_label`` is simulator ground truth, never sent."""

    session_id: int
    messages: list = field(default_factory=list)  # (direction, WireMessage, time)
    outcome: str = "in_progress"
    tag_label: int = -1

    def add(self, direction: str, msg: WireMessage, time: float) -> None:
        self.messages.append((direction, msg, time))

    def find(self, kind: MessageKind) -> WireMessage | None:
        for _, msg, _ in self.messages:
            if msg.kind is kind:
                return msg
        return None

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "tag_label": self.tag_label,
            "outcome": self.outcome,
            "messages": [{"dir": d, "t": t, **m.to_json()} for d, m, t in self.messages],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Transcript":
        msgs = [(m["dir"], WireMessage.from_json(m), m["t"]) for m in d["messages"]]
        return cls(d["session_id"], msgs, d["outcome"], d.get("tag_label", -1))


def dump_transcripts(transcripts: Iterable[Transcript], fp) -> None:
    for t in transcripts:
        fp.write(json.dumps(t.to_json(), sort_keys=True) + "\n")


def load_transcripts(fp) -> list[Transcript]:
    return [Transcript.from_json(json.loads(line)) for line in fp if line.strip()]


def make_tag(db: AuthServerDb, rng: np.random.Generator, label: int = -1, register: bool = True) -> TagAgent:
    """Provision a tag with a fresh unique ID and the server's public key."""
    while True:
        tag_id = rng.bytes(db.params.id_bytes)
        if tag_id not in db.entries:
            break
    if register:
        db.register(tag_id, label)
    return TagAgent(TagIdentity(tag_id, db.public_key), db.params, label=label)


def run_honest_session(
    tag: TagAgent,
    reader: ReaderAgent,
    db: AuthServerDb,
    rng: np.random.Generator,
    q: int = 0,
    time_estimate: float = 0.0,
    transcript: Transcript | None = None,
) -> float:
    """Drive one interference-free session end to end; returns the tag's sleep time."""
    tag.reset()
    query = query_message(q)
    tag_start_session(tag, query, rng)
    rn16 = tag_rn16(tag)
    ack = reader_ack(reader, rn16, rng)
    tag_receive_ack(tag, ack)
    auth = tag_build_auth(tag.session, tag.identity, rng).to_message()
    resp = server_authenticate(db, reader_forward(reader, auth, time_estimate))
    b = resp.to_message()
    if transcript is not None:
        transcript.session_id = reader.current_session
        transcript.tag_label = tag.label
        for direction, msg in (("r2t", query), ("t2r", rn16), ("r2t", ack), ("t2r", auth), ("r2t", b)):
            transcript.add(direction, msg, 0.0)
    sleep_for = tag_finalize(tag.session, ServerResponse.from_message(b))
    if transcript is not None:
        transcript.outcome = "accepted"
    return sleep_for
