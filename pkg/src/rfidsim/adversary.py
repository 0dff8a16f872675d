"""Attack harnesses against the handshake: replay, resend, impersonation, tracking, DoS load.

Each harness returns an :class:`AttackVerdict`; ``successes`` counts accepts
the adversary managed to obtain from the server or a tag.
"""
from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from . import crypto, protocol as proto
from .protocol import MessageKind, Rejected, Transcript, WireMessage


class AttackKind(str, Enum):
    REPLAY = "replay"
    RESEND = "resend"
    IMPERSONATE_TAG = "impersonate_tag"
    IMPERSONATE_READER = "impersonate_reader"
    TRACKING = "tracking"


class InsufficientData(ValueError):
    pass


@dataclass
class AttackVerdict:
    attack: AttackKind
    attempts: int = 0
    successes: int = 0
    rejects: dict = field(default_factory=dict)
    accuracy: float | None = None
    distinct_fraction: float | None = None
    linkable: bool | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attack"] = self.attack.value
        return d


class LiveSystem:
    """A server, one honest reader and a population of registered tags, driven step by step."""

    def __init__(self, seed: int = 0, n_tags: int = 2, params: proto.ProtocolParams = proto.DEFAULT_PARAMS):
        self.rng = np.random.default_rng(seed)
        keys = crypto.kem_keygen(self.rng)
        self.db = proto.AuthServerDb(keys.private_scalar, np.random.default_rng(seed + 1), params)
        self.reader = proto.ReaderAgent(params)
        self.params = params
        self.tags = [proto.make_tag(self.db, self.rng, label=i) for i in range(n_tags)]

    def honest_transcript(self, tag: proto.TagAgent, time_estimate: float = 1.0) -> Transcript:
        t = Transcript(0)
        proto.run_honest_session(tag, self.reader, self.db, self.rng, time_estimate=time_estimate, transcript=t)
        return t

    def open_reader_session(self) -> WireMessage:
        """The honest reader answers an RN16 (sent by whoever holds the slot) with ACK + fresh Cr."""
        rn16 = WireMessage(MessageKind.RN16, self.rng.bytes(2), proto.RN16_BITS)
        return proto.reader_ack(self.reader, rn16, self.rng)

    def submit(self, auth: WireMessage, time_estimate: float = 1.0) -> proto.ServerResponse:
        return proto.server_authenticate(self.db, proto.reader_forward(self.reader, auth, time_estimate))

    def tag_session_until_auth(self, tag: proto.TagAgent, ack: WireMessage) -> WireMessage:
        """Run a tag up to its AuthRequest against an arbitrary (possibly rogue) ACK."""
        tag.reset()
        proto.tag_start_session(tag, proto.query_message(0), self.rng)
        proto.tag_receive_ack(tag, ack)
        return proto.tag_build_auth(tag.session, tag.identity, self.rng).to_message()

    def tag_by_label(self, label: int) -> proto.TagAgent:
        return next(t for t in self.tags if t.label == label)


def _rogue_ack(rng: np.random.Generator, cr: bytes) -> WireMessage:
    return WireMessage(MessageKind.ACK_CHALLENGE, rng.bytes(2) + cr, proto.ACK_BITS + 8 * len(cr))


def _server_try(live: LiveSystem, auth: WireMessage, verdict: AttackVerdict, rejects: Counter) -> None:
    verdict.attempts += 1
    try:
        live.submit(auth)
    except Rejected as exc:
        rejects[exc.reason.value] += 1
    else:
        verdict.successes += 1


def _tag_try(tag: proto.TagAgent, b: WireMessage, verdict: AttackVerdict, rejects: Counter) -> None:
    verdict.attempts += 1
    try:
        proto.tag_finalize(tag.session, proto.ServerResponse.from_message(b))
    except Rejected as exc:
        rejects[exc.reason.value] += 1
    else:
        verdict.successes += 1


def replay_attack(t: Transcript, live: LiveSystem, trials: int = 1000) -> AttackVerdict:
    """Replay a recorded session later: its AuthRequest to the server, its response B to the tag."""
    auth = t.find(MessageKind.AUTH_REQUEST)
    b = t.find(MessageKind.SERVER_RESPONSE)
    old_ack = t.find(MessageKind.ACK_CHALLENGE)
    verdict, rejects = AttackVerdict(AttackKind.REPLAY), Counter()
    tag = live.tag_by_label(t.tag_label) if t.tag_label >= 0 else None
    for _ in range(trials):
        live.open_reader_session()
        _server_try(live, auth, verdict, rejects)
        if tag is not None and b is not None:
            # the adversary plays reader, even reusing the recorded Cr
            live.tag_session_until_auth(tag, old_ack)
            _tag_try(tag, b, verdict, rejects)
    verdict.rejects = dict(sorted(rejects.items()))
    return verdict


def resend_attack(t: Transcript, live: LiveSystem, trials: int = 1000, remove_from_db: bool = False) -> AttackVerdict:
    """An unauthorised tag resends an overheard R1|R2 in a later frame.

    Also covers a rogue reader that spoofs the original Cr towards the real tag:
    lacking server access it can only echo the old B, which the tag rejects.
    """
    auth = t.find(MessageKind.AUTH_REQUEST)
    old_ack = t.find(MessageKind.ACK_CHALLENGE)
    old_b = t.find(MessageKind.SERVER_RESPONSE)
    verdict, rejects = AttackVerdict(AttackKind.RESEND), Counter()
    tag = live.tag_by_label(t.tag_label) if t.tag_label >= 0 else None
    if remove_from_db and tag is not None:
        live.db.remove(tag.identity.id)
    for _ in range(trials):
        live.open_reader_session()
        _server_try(live, auth, verdict, rejects)
        if tag is not None and old_b is not None and not remove_from_db:
            live.tag_session_until_auth(tag, old_ack)
            _tag_try(tag, old_b, verdict, rejects)
    verdict.rejects = dict(sorted(rejects.items()))
    return verdict


def impersonation_attack(mode: AttackKind, live: LiveSystem, trials: int = 1000, rng: np.random.Generator | None = None) -> AttackVerdict:
    """Fake tag (random ID, correct formats) or fake reader (no server key, no tag IDs)."""
    rng = rng if rng is not None else np.random.default_rng(12345)
    mode = AttackKind(mode)
    verdict, rejects = AttackVerdict(mode), Counter()
    if mode is AttackKind.IMPERSONATE_TAG:
        pk = live.db.public_key
        for _ in range(trials):
            fake = proto.TagAgent(proto.TagIdentity(rng.bytes(live.params.id_bytes), pk), live.params)
            proto.tag_start_session(fake, proto.query_message(0), rng)
            ack = live.open_reader_session()
            proto.tag_receive_ack(fake, ack)
            auth = proto.tag_build_auth(fake.session, fake.identity, rng).to_message()
            _server_try(live, auth, verdict, rejects)
    elif mode is AttackKind.IMPERSONATE_READER:
        b_len = live.params.b_bits // 8
        for i in range(trials):
            tag = live.tags[i % len(live.tags)]
            old = live.honest_transcript(tag).find(MessageKind.SERVER_RESPONSE)
            for forged in (
                WireMessage(MessageKind.SERVER_RESPONSE, rng.bytes(b_len), 8 * b_len),
                old,
            ):
                live.tag_session_until_auth(tag, _rogue_ack(rng, rng.bytes(live.params.nonce_bytes)))
                _tag_try(tag, forged, verdict, rejects)
    else:
        raise ValueError(f"not an impersonation mode: {mode}")
    verdict.rejects = dict(sorted(rejects.items()))
    return verdict


def air_features(t: Transcript) -> np.ndarray:
    """Bit vector of everything the tag sent or received over the air after the Query."""
    parts = [m.payload for d, m, _ in t.messages if m.kind in (MessageKind.AUTH_REQUEST, MessageKind.SERVER_RESPONSE)]
    return np.unpackbits(np.frombuffer(b"".join(parts), dtype=np.uint8))


def nearest_neighbour_accuracy(features: np.ndarray, labels: np.ndarray) -> float:
    """Leave-one-out 1-NN accuracy under Hamming distance."""
    x = features.astype(np.int32)
    # Hamming distance between 0/1 rows: |a| + |b| - 2 a.b
    ones = x.sum(axis=1)
    dist = ones[:, None] + ones[None, :] - 2 * (x @ x.T)
    np.fill_diagonal(dist, np.iinfo(np.int32).max)
    nearest = dist.argmin(axis=1)
    return float(np.mean(labels[nearest] == labels))


def tracking_distinguisher(
    transcripts_a: list[Transcript],
    transcripts_b: list[Transcript],
    min_sessions: int = 100,
    params: proto.ProtocolParams = proto.DEFAULT_PARAMS,
) -> AttackVerdict:
    """Can an eavesdropper tell two tags apart from their ciphertexts alone?"""
    if len(transcripts_a) < min_sessions or len(transcripts_b) < min_sessions:
        raise InsufficientData(f"need at least {min_sessions} sessions per tag")
    all_t = list(transcripts_a) + list(transcripts_b)
    r1_len = params.r1_bits // 8
    r1s, r2s = [], []
    for t in all_t:
        auth = t.find(MessageKind.AUTH_REQUEST)
        r1s.append(auth.payload[:r1_len])
        r2s.append(auth.payload[r1_len:])
    n = len(all_t)
    distinct = (len(set(r1s)) + len(set(r2s))) / (2 * n)
    feats = np.stack([air_features(t) for t in all_t])
    labels = np.array([0] * len(transcripts_a) + [1] * len(transcripts_b))
    acc = nearest_neighbour_accuracy(feats, labels)
    sigma = math.sqrt(0.25 / n)
    linkable = distinct < 1.0 or abs(acc - 0.5) > 3 * sigma
    return AttackVerdict(AttackKind.TRACKING, attempts=n, successes=int(round(acc * n)),
                         accuracy=acc, distinct_fraction=distinct, linkable=linkable)


def weak_transcripts(live: LiveSystem, tag: proto.TagAgent, n: int) -> list[Transcript]:
    """Deliberately broken tag: one static key, constant IV and the ID alone in the first block.

    Used to check that :func:`tracking_distinguisher` is not vacuous.
    """
    static_k = crypto.SymKey(hashlib.sha256(tag.identity.id).digest()[: crypto.KEY_BYTES])
    iv = bytes(crypto.BLOCK_BYTES)
    out = []
    for _ in range(n):
        ack = live.open_reader_session()
        cr = ack.payload[2:]
        pad = bytes(crypto.BLOCK_BYTES - live.params.id_bytes % crypto.BLOCK_BYTES)
        r1 = crypto.sym_encrypt(static_k, tag.identity.id + pad + cr, live.rng, iv=iv)
        ct = live.rng.bytes(live.params.nonce_bytes)
        r2 = crypto.kem_encapsulate(live.db.public_key, static_k.key + ct, live.rng)
        # keep the on-air length identical to the honest message
        r1 = crypto.SymCiphertext(r1.iv, r1.blocks[: live.params.r1_bits // 8 - crypto.BLOCK_BYTES])
        auth = proto.AuthRequest(r1, r2).to_message()
        live.reader.challenges.pop(live.reader.current_session, None)
        t = Transcript(live.reader.current_session, tag_label=tag.label)
        t.add("r2t", ack, 0.0)
        t.add("t2r", auth, 0.0)
        out.append(t)
    return out


def dos_load_test(scenario, jammers: int) -> dict:
    """Compare read ratio with and without ``jammers`` always-answering adversarial responders."""
    from .simcore import run

    clean = run(replace(scenario, jammers=0))
    attacked = run(replace(scenario, jammers=jammers))
    return {
        "jammers": jammers,
        "read_ratio_clean": clean.read_ratio,
        "read_ratio_attacked": attacked.read_ratio,
        "false_accepts": attacked.false_accepts,
        "server_rejects": attacked.server_rejects,
    }


def run_attack_suite(seed: int = 0, attempts: int = 1000, tracking_sessions: int = 500) -> list[AttackVerdict]:
    live = LiveSystem(seed=seed, n_tags=2)
    a, b = live.tags
    rng = np.random.default_rng(seed + 2)
    verdicts = [
        replay_attack(live.honest_transcript(a), live, trials=attempts // 2),
        resend_attack(live.honest_transcript(b), live, trials=attempts // 2),
        impersonation_attack(AttackKind.IMPERSONATE_TAG, live, trials=attempts, rng=rng),
        impersonation_attack(AttackKind.IMPERSONATE_READER, live, trials=attempts // 2, rng=rng),
    ]
    ta = [live.honest_transcript(a) for _ in range(tracking_sessions)]
    tb = [live.honest_transcript(b) for _ in range(tracking_sessions)]
    verdicts.append(tracking_distinguisher(ta, tb))
    return verdicts
