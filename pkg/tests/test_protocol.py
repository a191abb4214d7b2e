import hashlib
import socket
import threading

import numpy as np
import pytest

from intersketch.ids import IdArray
from intersketch.matrix import MatrixSpec
from intersketch.protocol import (
    MsgType,
    PingPongPeer,
    ProtocolError,
    SessionConfig,
    choose_initiator,
    decode_frame,
    decode_stream_digest,
    encode_frame,
    run_bidirectional,
    run_unidirectional,
    rows_for,
)
from intersketch.sketch import Sketch, encode_set, update
from intersketch.transport import run_peer

from conftest import make_pair, same_set


def uni_config(n_b, d, seed=0, **kw):
    return SessionConfig(d_total=d, n_larger=n_b, m=7, seed=seed,
                         d_split=(0, d), **kw)


def bi_config(n_larger, d_a, d_b, seed=0, **kw):
    kw.setdefault("m", 5)
    kw.setdefault("resolve_round", 2)
    return SessionConfig(d_total=d_a + d_b, n_larger=n_larger, seed=seed,
                         d_split=(d_a, d_b), **kw)


def test_choose_initiator_prefers_smaller_unique_side():
    assert choose_initiator(10_000, 100_000) == "alice"
    assert choose_initiator(100_000, 10_000) == "bob"
    assert choose_initiator(5, 5) == "alice"  # lexicographic tie break
    assert choose_initiator(5, 5, ("zoe", "bob")) == "bob"


def test_frame_roundtrip_and_validation():
    frame = encode_frame(MsgType.DONE, b"payload")
    assert decode_frame(frame) == (MsgType.DONE, b"payload")
    with pytest.raises(ProtocolError):
        decode_frame(b"XXXX" + frame[4:])
    with pytest.raises(ProtocolError):
        decode_frame(frame[:-1])
    bad_type = encode_frame(99, b"")
    with pytest.raises(ProtocolError):
        decode_frame(bad_type)


def test_unidirectional_identical_sets():
    a, b, _ = make_pair(3000, 0, 0, seed=1)
    res = run_unidirectional(a, b, uni_config(len(b), 1, seed=1))
    assert res.transcript.outcome == "ok"
    assert res.intersection.set_equal(a)
    assert res.transcript.decoder_stats[0]["iterations"] == 0
    assert res.transcript.rounds == 1


def test_unidirectional_contained_exact():
    for seed in range(6):
        a, b, _ = make_pair(4000, 0, 48, seed=100 + seed)
        res = run_unidirectional(a, b, uni_config(len(b), 48, seed=seed))
        assert res.transcript.outcome == "ok"
        assert same_set(res.intersection, a.words)
        # single message on the wire
        assert len(res.transcript.messages) == 1
        assert res.transcript.messages[0].msg_type == MsgType.SKETCH


def test_unidirectional_failure_withholds_result():
    a, b, _ = make_pair(4000, 0, 64, seed=7)
    cfg = uni_config(len(b), 64, seed=7, rows_override=40)  # far too small
    res = run_unidirectional(a, b, cfg)
    assert res.transcript.outcome == "failure"
    assert res.intersection is None


def test_bidirectional_small_exact_and_invariant():
    # drive the pump by hand so the disjoint-claims invariant is observable
    # after every message
    a, b, common = make_pair(4000, 24, 24, seed=3)
    cfg = bi_config(len(b), 24, 24, seed=3)
    alice = PingPongPeer("alice", a, cfg, initiator=True)
    bob = PingPongPeer("bob", b, cfg, initiator=False)
    peers = {"alice": alice, "bob": bob}
    queue = [("alice", f) for f in alice.start()]
    while queue:
        sender, frame = queue.pop(0)
        receiver = peers["bob" if sender == "alice" else "alice"]
        for reply in receiver.handle(frame):
            queue.append((receiver.name, reply))
        if alice.state is not None and bob.state is not None:
            claimed_a = set(alice.state.recovered_ids().packed().tolist())
            claimed_b = set(bob.state.recovered_ids().packed().tolist())
            assert not (claimed_a & claimed_b), "both sides claimed one element"
    assert alice.finished and bob.finished
    assert alice.outcome_ok() and bob.outcome_ok()
    assert same_set(alice.intersection, common)
    assert same_set(bob.intersection, common)


def test_bidirectional_runner_exact():
    oks = 0
    for seed in range(8):
        a, b, common = make_pair(4000, 24, 24, seed=40 + seed)
        res = run_bidirectional(a, b, bi_config(len(b), 24, 24, seed=seed))
        t = res.transcript
        assert t.rounds <= 10
        if t.outcome == "ok" and same_set(res.alice_intersection, common) \
                and same_set(res.bob_intersection, common):
            oks += 1
    assert oks == 8


def test_bidirectional_contained_case_within_twice_unidirectional():
    a, b, _ = make_pair(4000, 0, 48, seed=9)
    uni = run_unidirectional(a, b, uni_config(len(b), 48, seed=9, alpha=1.5))
    bi = run_bidirectional(a, b, bi_config(len(b), 0, 48, seed=9, m=7, alpha=1.5))
    assert bi.transcript.outcome == "ok"
    assert same_set(bi.bob_intersection, a.words)
    assert same_set(bi.alice_intersection, a.words)
    assert bi.transcript.total_bytes() <= 2 * uni.transcript.total_bytes()


def test_bidirectional_gives_up_at_round_cap():
    a, b, _ = make_pair(3000, 32, 32, seed=11)
    cfg = bi_config(len(b), 32, 32, seed=11, rows_override=48, max_rounds=4)
    res = run_bidirectional(a, b, cfg)
    assert res.transcript.outcome == "failure"
    assert res.alice_intersection is None


def test_signature_collision_detected():
    a, b, _ = make_pair(600, 80, 80, seed=13)
    cfg = bi_config(len(b), 80, 80, seed=13, signature_bits=8)
    with pytest.raises(ProtocolError):
        run_bidirectional(a, b, cfg)


def test_smf_cost_recorded_in_transcript():
    a, b, _ = make_pair(4000, 24, 24, seed=15)
    res = run_bidirectional(a, b, bi_config(len(b), 24, 24, seed=15))
    assert res.transcript.smf_bytes() > 0
    assert res.transcript.total_bytes() == sum(m.size for m in res.transcript.messages)


def test_golden_transcript_is_deterministic():
    a, b, _ = make_pair(2000, 16, 16, seed=21)
    cfg = bi_config(len(b), 16, 16, seed=21)
    digests = []
    for _ in range(2):
        alice = PingPongPeer("alice", a, cfg, initiator=True)
        bob = PingPongPeer("bob", b, cfg, initiator=False)
        peers = {"alice": alice, "bob": bob}
        queue = [("alice", f) for f in alice.start()]
        blob = hashlib.sha256()
        while queue:
            sender, frame = queue.pop(0)
            blob.update(frame)
            receiver = peers["bob" if sender == "alice" else "alice"]
            queue.extend((receiver.name, r) for r in receiver.handle(frame))
        digests.append(blob.hexdigest())
    assert digests[0] == digests[1]


def test_tcp_transport_matches_loopback():
    a, b, common = make_pair(2000, 16, 16, seed=23)
    cfg = bi_config(len(b), 16, 16, seed=23)
    left, right = socket.socketpair()
    alice = PingPongPeer("alice", a, cfg, initiator=True)
    bob = PingPongPeer("bob", b, cfg, initiator=False)
    errors = []

    def drive(peer, sock):
        try:
            run_peer(peer, sock)
        except Exception as exc:  # surfaced after join
            errors.append(exc)
        finally:
            sock.close()

    t1 = threading.Thread(target=drive, args=(alice, left))
    t2 = threading.Thread(target=drive, args=(bob, right))
    t1.start(); t2.start(); t1.join(10); t2.join(10)
    assert not errors
    assert alice.outcome_ok() and bob.outcome_ok()
    assert same_set(alice.intersection, common)
    assert same_set(bob.intersection, common)


def test_stream_digest_identical_is_empty():
    spec = MatrixSpec(rows=128, ones_per_column=5, seed=1, universe_bits=64)
    a, _, _ = make_pair(500, 0, 0, seed=25)
    sk = encode_set(spec, a)
    out = decode_stream_digest(sk, sk.copy(), a)
    assert len(out) == 0


def test_stream_digest_recovers_drop_set():
    # loss-detection shape: all packets flow through one digest, a few are
    # dropped before the second; the superset is the full packet list
    rng = np.random.default_rng(27)
    packets, _, _ = make_pair(10_000, 0, 0, seed=27)
    dropped = np.sort(rng.choice(10_000, 50, replace=False))
    keep = np.setdiff1d(np.arange(10_000), dropped)
    spec = MatrixSpec(rows_for(50, 10_000, 1.0, 7), 7, 3, 64)
    up = encode_set(spec, packets)
    down = encode_set(spec, packets.take(keep))
    got = decode_stream_digest(down, up, packets, d_estimate=50)
    assert same_set(got, packets.words[dropped])


def test_stream_digest_superset_ten_times_larger():
    rng = np.random.default_rng(29)
    superset, _, _ = make_pair(5_000, 0, 0, seed=29)
    members = np.sort(rng.choice(5_000, 500, replace=False))
    dropped = members[:20]
    spec = MatrixSpec(rows_for(20, 5_000, 1.0, 7), 7, 5, 64)
    bob = encode_set(spec, superset.take(members))
    alice = encode_set(spec, superset.take(members[20:]))
    got = decode_stream_digest(alice, bob, superset, d_estimate=20)
    assert same_set(got, superset.words[dropped])


def test_stream_digest_failure_raises():
    from intersketch.protocol import DecodeFailure

    spec = MatrixSpec(rows=16, ones_per_column=5, seed=1, universe_bits=64)
    big, _, _ = make_pair(2000, 0, 0, seed=31)
    small = big.take(np.arange(1000))
    with pytest.raises(DecodeFailure):
        decode_stream_digest(encode_set(spec, small), encode_set(spec, big), big)


def test_streaming_updates_feed_digest():
    spec = MatrixSpec(rows=256, ones_per_column=5, seed=2, universe_bits=64)
    ids, _, _ = make_pair(300, 0, 0, seed=33)
    values = ids.to_ints()
    sk = Sketch.zero(spec)
    for v in values:
        update(sk, v, +1)
    for v in values[:50]:
        update(sk, v, -1)
    assert sk == encode_set(spec, ids.take(np.arange(50, 300)))
