import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfidsim import crypto, protocol as proto
from rfidsim.protocol import MessageKind, Phase, RejectReason, Rejected


def make_system(seed=0, n_tags=1, db_size=0):
    rng = np.random.default_rng(seed)
    kp = crypto.kem_keygen(rng)
    db = proto.AuthServerDb(kp.private_scalar, np.random.default_rng(seed + 1))
    for _ in range(db_size):
        db.register(rng.bytes(12))
    tags = [proto.make_tag(db, rng, label=i) for i in range(n_tags)]
    return rng, db, proto.ReaderAgent(), tags


def up_to_auth(tag, reader, rng, q=0):
    tag.reset()
    proto.tag_start_session(tag, proto.query_message(q), rng)
    ack = proto.reader_ack(reader, proto.tag_rn16(tag), rng)
    proto.tag_receive_ack(tag, ack)
    return ack, proto.tag_build_auth(tag.session, tag.identity, rng).to_message()


def sym_bits_oracle(n_bytes):
    return 128 * (1 + math.ceil((8 * n_bytes + 40) / 128))


@given(st.sampled_from([64, 96, 128]), st.sampled_from([16, 32, 64]))
def test_message_sizes_follow_field_widths(id_bits, nonce_bits):
    p = proto.ProtocolParams(id_bits, nonce_bits)
    assert p.r1_bits == sym_bits_oracle((id_bits + nonce_bits) // 8)
    assert p.r2_bits == 8 * 33 + 128 + nonce_bits + 64
    assert p.b_bits == sym_bits_oracle(2 * nonce_bits // 8 + 8)
    assert p.handshake_bits == 22 + 16 + 18 + nonce_bits + p.r1_bits + p.r2_bits + p.b_bits


def test_default_handshake_size():
    p = proto.DEFAULT_PARAMS
    assert (p.r1_bits, p.r2_bits, p.b_bits) == (384, 488, 384)
    assert p.handshake_bits == 1344


def test_bad_params():
    with pytest.raises(ValueError):
        proto.ProtocolParams(id_bits=95)


def test_honest_session_accepts_and_sleeps():
    rng, db, reader, (tag,) = make_system()
    t = proto.Transcript(0)
    assert proto.run_honest_session(tag, reader, db, rng, time_estimate=0.5, transcript=t) == 0.5
    assert tag.phase is Phase.SLEEPING
    assert t.outcome == "accepted"
    assert [m.kind for _, m, _ in t.messages] == [
        MessageKind.QUERY, MessageKind.RN16, MessageKind.ACK_CHALLENGE,
        MessageKind.AUTH_REQUEST, MessageKind.SERVER_RESPONSE,
    ]
    for _, m, _ in t.messages:
        assert m.bit_length == proto.DEFAULT_PARAMS.message_bits(m.kind)


@given(st.floats(min_value=0, max_value=1e4, allow_nan=False))
def test_time_roundtrips_exactly(time_estimate):
    rng, db, reader, (tag,) = make_system()
    assert proto.run_honest_session(tag, reader, db, rng, time_estimate=time_estimate) == time_estimate


def test_sleeping_tag_ignores_query():
    rng, db, reader, (tag,) = make_system()
    proto.run_honest_session(tag, reader, db, rng)
    before = tag.session
    assert proto.tag_start_session(tag, proto.query_message(4), rng) is before
    assert proto.tag_rn16(tag) is None
    tag.wake()
    proto.tag_start_session(tag, proto.query_message(4), rng)
    assert tag.phase is Phase.ARBITRATING


@given(st.integers(0, 15), st.integers(0, 100))
def test_slot_within_frame(q, seed):
    rng, db, reader, (tag,) = make_system(seed % 3)
    s = proto.tag_start_session(tag, proto.query_message(q), np.random.default_rng(seed))
    assert 0 <= s.slot < 2**q


@pytest.mark.parametrize("db_size", [10, 100_000])
def test_server_work_is_two_decrypts(db_size):
    rng, db, reader, tags = make_system(db_size=db_size, n_tags=3)
    for tag in tags:
        before = db.decrypt_ops
        proto.run_honest_session(tag, reader, db, rng)
        assert db.decrypt_ops - before == 2
        assert len(db.entries) == db_size + 3


def test_check_order_and_reasons():
    rng, db, reader, (tag,) = make_system()
    ack, auth = up_to_auth(tag, reader, rng)
    req = proto.AuthRequest.from_message(auth)

    bad_kem = crypto.KemCiphertext(req.r2.ephemeral_point, req.r2.wrapped_payload, bytes(8))
    bad_sym = crypto.SymCiphertext(req.r1.iv, bytes(len(req.r1.blocks)))
    cases = [
        (proto.ServerRequest(req.r1, bad_kem, ack.payload[2:], 0.0), RejectReason.KEM_FAILURE),
        (proto.ServerRequest(bad_sym, req.r2, ack.payload[2:], 0.0), RejectReason.SYM_FAILURE),
        (proto.ServerRequest(req.r1, req.r2, b"\0\0\0\0", 0.0), RejectReason.CHALLENGE_MISMATCH),
    ]
    for request, reason in cases:
        with pytest.raises(Rejected) as exc:
            proto.server_authenticate(db, request)
        assert exc.value.reason is reason

    db.remove(tag.identity.id)
    with pytest.raises(Rejected) as exc:
        proto.server_authenticate(db, proto.ServerRequest(req.r1, req.r2, b"\0\0\0\0", 0.0))
    assert exc.value.reason is RejectReason.UNKNOWN_ID  # identity is checked before the challenge


def test_duplicate_response_not_accepted_twice():
    rng, db, reader, (tag,) = make_system()
    t = proto.Transcript(0)
    proto.run_honest_session(tag, reader, db, rng, transcript=t)
    b = proto.ServerResponse.from_message(t.find(MessageKind.SERVER_RESPONSE))
    with pytest.raises(Rejected) as exc:
        proto.tag_finalize(tag.session, b)
    assert exc.value.reason is RejectReason.OUT_OF_PHASE


def test_old_response_fails_in_new_session():
    rng, db, reader, (tag,) = make_system()
    t = proto.Transcript(0)
    proto.run_honest_session(tag, reader, db, rng, transcript=t)
    old_ack = t.find(MessageKind.ACK_CHALLENGE)
    b = proto.ServerResponse.from_message(t.find(MessageKind.SERVER_RESPONSE))
    tag.reset()
    proto.tag_start_session(tag, proto.query_message(0), rng)
    proto.tag_receive_ack(tag, old_ack)  # same Cr as before, but k and Ct are fresh
    proto.tag_build_auth(tag.session, tag.identity, rng)
    with pytest.raises(Rejected) as exc:
        proto.tag_finalize(tag.session, b)
    assert exc.value.reason is RejectReason.BAD_RESPONSE


def test_challenge_binding_over_a_run():
    """Every recorded honest AuthRequest is rejected in every later session."""
    rng, db, reader, tags = make_system(n_tags=4)
    recorded = []
    for i in range(12):
        t = proto.Transcript(0)
        proto.run_honest_session(tags[i % 4], reader, db, rng, transcript=t)
        for old in recorded:
            proto.reader_ack(reader, proto.WireMessage(MessageKind.RN16, b"ab", 16), rng)
            with pytest.raises(Rejected) as exc:
                proto.server_authenticate(db, proto.reader_forward(reader, old.find(MessageKind.AUTH_REQUEST), 0.0))
            assert exc.value.reason is RejectReason.CHALLENGE_MISMATCH
        recorded.append(t)


def test_out_of_phase_steps():
    rng, db, reader, (tag,) = make_system()
    ack = proto.WireMessage(MessageKind.ACK_CHALLENGE, b"ab" + b"cdef", 50)
    with pytest.raises(Rejected):
        proto.tag_receive_ack(tag, ack)
    with pytest.raises(Rejected):
        proto.tag_build_auth(tag.session, tag.identity, rng)


@given(st.integers(0, 15))
def test_query_encoding(q):
    msg = proto.query_message(q)
    bits = proto.encode_message(msg)
    assert len(bits) == 22 and bits.startswith("1000")
    assert proto.decode_message(bits, MessageKind.QUERY) == msg


def test_wire_roundtrip_all_kinds():
    rng, db, reader, (tag,) = make_system()
    t = proto.Transcript(0)
    proto.run_honest_session(tag, reader, db, rng, transcript=t)
    for _, m, _ in t.messages:
        assert proto.decode_message(proto.encode_message(m), m.kind) == m


@pytest.mark.parametrize("bits", ["", "1" * 22, "0" * 21, "1000" + "0" * 9 + "0101" + "00001"])
def test_malformed_query(bits):
    with pytest.raises(proto.MalformedMessage):
        proto.decode_message(bits, MessageKind.QUERY)


def test_malformed_ack_and_lengths():
    with pytest.raises(proto.MalformedMessage):
        proto.decode_message("11" + "0" * 48, MessageKind.ACK_CHALLENGE)
    with pytest.raises(proto.MalformedMessage):
        proto.decode_message("0" * 383, MessageKind.SERVER_RESPONSE)
    with pytest.raises(proto.MalformedMessage):
        proto.encode_message(proto.WireMessage(MessageKind.RN16, b"abc", 16))
    with pytest.raises(ValueError):
        proto.query_message(16)


def test_transcripts_roundtrip_jsonl():
    rng, db, reader, tags = make_system(n_tags=2)
    ts = []
    for tag in tags:
        t = proto.Transcript(0)
        proto.run_honest_session(tag, reader, db, rng, transcript=t)
        ts.append(t)
    buf = io.StringIO()
    proto.dump_transcripts(ts, buf)
    buf.seek(0)
    assert proto.load_transcripts(buf) == ts


def test_sleep_strategies():
    assert proto.fixed_strategy(0.24)(proto.TagObservation(1, 3.0)) == 0.24
    geo = proto.geometry_strategy(lambda key, t: 3.5 - t)
    assert geo(proto.TagObservation(0, 3.0)) == 0.5
    assert geo(proto.TagObservation(0, 4.0)) == 0.0
    with pytest.raises(ValueError):
        proto.fixed_strategy(-1)


def test_reader_pops_challenge():
    rng, db, reader, (tag,) = make_system()
    ack, auth = up_to_auth(tag, reader, rng)
    proto.reader_forward(reader, auth, 0.0)
    with pytest.raises(KeyError):
        proto.reader_forward(reader, auth, 0.0)
