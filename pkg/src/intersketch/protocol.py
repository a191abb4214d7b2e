"""Two-party session state machines.

One-round flow (subset case, initiator's set contained in responder's): the
initiator ships its compressed sketch; the responder subtracts it from its
own sketch and pursues the difference over its own candidates.

General flow (ping-pong): the initiator's sketch seeds the responder's
residue; each side then alternately pursues its own unique elements out of
the residue and returns what is left, so one side's recovered signal is
removed noise for the other.  Each RESIDUE message carries a membership
filter of the sender's currently claimed elements; the receiver will not
claim a filter-positive candidate (collision avoidance) until the resolve
round, after which any filter-positive candidate showing positive pull is
checked against the peer with a hashed signature (collision resolution): a
confirmed signature exposes the peer's hallucination of a shared element,
which both sides then bar for good, while a denied one un-masks a filter
false positive for normal claiming.  Claimed sets therefore stay disjoint,
so a zero residue certifies exactness at both ends.

Wire format: frames are magic "CSX1" | version u8 | type u8 | payload_len
u32 LE | payload.  The SKETCH payload embeds the matrix parameters
(rows u32, ones/column u8, seed u64, id bits u16) and the sender's element
count i64 ahead of the codec payload; RESIDUE is the coded residue followed
by the raw membership filter; DONE carries an order-independent checksum of
the sender's computed intersection for end-to-end sanity.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import codec, hashing
from .decoder import DecoderState, Outcome, mp_decode, resolve_residual, revert, ssmp_decode
from .ids import IdArray
from .matrix import MatrixSpec, batch_supports
from .sketch import Sketch, encode_set, residue_between
from .smf import BloomFilter, bf_build

MAGIC = b"CSX1"
VERSION = 1

_FRAME = struct.Struct("<4sBBI")
_SPEC_HDR = struct.Struct("<IBQHq")  # rows, m, seed, universe bits, element count
_DONE_HDR = struct.Struct("<QQB")  # checksum, intersection size, status

_SALT_SMF = 0x534D465F53454544
_SALT_SIG = 0x5349475F53454544
_SALT_SUM = 0x53554D5F53454544


class MsgType(enum.IntEnum):
    SKETCH = 1
    RESIDUE = 2
    LAST_INQUIRY = 3
    INQUIRY_REPLY = 4
    DONE = 5


class ProtocolError(RuntimeError):
    pass


class DecodeFailure(RuntimeError):
    """A digest or session could not be driven to a zero residue."""


def encode_frame(msg_type: int, payload: bytes) -> bytes:
    return _FRAME.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def decode_frame(frame: bytes) -> tuple[int, bytes]:
    if len(frame) < _FRAME.size:
        raise ProtocolError("short frame")
    magic, version, msg_type, n = _FRAME.unpack_from(frame, 0)
    if magic != MAGIC:
        raise ProtocolError("bad magic")
    if version != VERSION:
        raise ProtocolError(f"unsupported version {version}")
    if msg_type not in MsgType._value2member_map_:
        raise ProtocolError(f"unknown message type {msg_type}")
    if len(frame) != _FRAME.size + n:
        raise ProtocolError("frame length mismatch")
    return msg_type, frame[_FRAME.size :]


@dataclass(frozen=True)
class SessionConfig:
    """Protocol knobs; the difference cardinality is an input, not estimated."""

    d_total: int
    n_larger: int
    universe_bits: int = 64
    m: int = 7
    alpha: float = 1.0
    rows_override: int | None = None
    seed: int = 0
    d_split: tuple[int, int] | None = None  # (initiator-only, responder-only)
    smf_fpp: float = 0.01
    max_rounds: int = 10
    resolve_round: int = 4
    signature_bits: int = 64
    p_trunc: float = codec.DEFAULT_P_TRUNC
    parity_levels: int = 1
    max_iter_factor: int = 4

    def rows(self) -> int:
        if self.rows_override is not None:
            return self.rows_override
        return rows_for(self.d_total, self.n_larger, self.alpha, self.m)

    def matrix_spec(self) -> MatrixSpec:
        return MatrixSpec(self.rows(), self.m, self.seed, self.universe_bits)

    def split(self) -> tuple[int, int]:
        if self.d_split is not None:
            return self.d_split
        return (0, self.d_total)

    def max_iterations(self) -> int:
        return max(64, self.max_iter_factor * max(self.d_total, 1))

    def signature_nbytes(self) -> int:
        return (self.signature_bits + 7) // 8


def rows_for(d_total: int, n_larger: int, alpha: float, m: int) -> int:
    """Sketch length: alpha * d * log2(e * n / d), with an injectivity floor.

    The floor keeps the number of possible column supports so far above n^2
    that no two candidate elements share a column; without it, tiny
    difference cardinalities would make the recovered set ambiguous no
    matter how good the decoder is.
    """
    d = max(d_total, 1)
    n = max(n_larger, d)
    raw = int(math.ceil(alpha * d * math.log2(math.e * n / d)))
    floor = 2 * m
    while math.comb(floor, m) < 100_000 * n * n:
        floor += 1
    return max(raw, floor, 16)


def choose_initiator(est_a_only: int, est_b_only: int,
                     peer_ids: tuple[str, str] = ("alice", "bob")) -> str:
    """The side with fewer unique elements sends the first sketch."""
    if est_a_only < est_b_only:
        return peer_ids[0]
    if est_b_only < est_a_only:
        return peer_ids[1]
    return min(peer_ids)


@dataclass
class MessageRecord:
    sender: str
    msg_type: int
    size: int
    detail: dict = field(default_factory=dict)


@dataclass
class SessionTranscript:
    messages: list[MessageRecord] = field(default_factory=list)
    rounds: int = 0
    outcome: str = "ok"
    intersection_size: int = -1
    decoder_stats: list[dict] = field(default_factory=list)

    def total_bytes(self) -> int:
        return sum(m.size for m in self.messages)

    def bytes_by_type(self) -> dict:
        out: dict = {}
        for m in self.messages:
            out[MsgType(m.msg_type).name] = out.get(MsgType(m.msg_type).name, 0) + m.size
        return out

    def smf_bytes(self) -> int:
        return sum(m.detail.get("smf_bytes", 0) for m in self.messages)


def _pack_spec_header(spec: MatrixSpec, element_count: int) -> bytes:
    return _SPEC_HDR.pack(spec.rows, spec.ones_per_column, spec.seed,
                          spec.universe_bits, element_count)


def _unpack_spec_header(payload: bytes) -> tuple[MatrixSpec, int, int]:
    rows, m, seed, bits, count = _SPEC_HDR.unpack_from(payload, 0)
    return MatrixSpec(rows, m, seed, bits), count, _SPEC_HDR.size


def _signatures(elements: IdArray, seed: int, nbytes: int) -> list[bytes]:
    base = hashing.domain_base(seed ^ _SALT_SIG, hashing.DOMAIN_SIGNATURE)
    k0, k1 = elements.keys(seed ^ _SALT_SIG)
    state = hashing.element_state_vec(base, k0, k1)
    return [int(s).to_bytes(8, "little")[:nbytes] for s in state]


def intersection_checksum(elements: IdArray, seed: int) -> int:
    """Order-independent 64-bit checksum of a computed intersection."""
    base = hashing.domain_base(seed ^ _SALT_SUM, hashing.DOMAIN_CHECKSUM)
    acc = hashing.mix64(base ^ len(elements))
    if len(elements):
        k0, k1 = elements.keys(seed ^ _SALT_SUM)
        sigs = hashing.element_state_vec(base, k0, k1)
        acc ^= int(np.bitwise_xor.reduce(sigs))
    return acc


class PingPongPeer:
    """One endpoint of a general two-set session."""

    def __init__(self, name: str, elements: IdArray, config: SessionConfig,
                 initiator: bool):
        self.name = name
        self.elements = elements
        self.config = config
        self.initiator = initiator
        self.spec: MatrixSpec | None = None
        self.sketch: Sketch | None = None
        self.supports: np.ndarray | None = None
        self.state: DecoderState | None = None
        # position in the sketch/residue message chain: every SKETCH or
        # RESIDUE sent or received by this peer advances it by one
        self.chain_pos = 0
        self.resolution_sticky = False
        self.last_incoming_l1: int | None = None
        self.permanent_exclusions: np.ndarray | None = None
        self.pending_reverts: list[int] = []
        self.pending_queries: list[int] = []
        self._trunc: codec.TruncationParams | None = None
        self.finished = False
        self.gave_up = False
        self.peer_status: int | None = None
        self.peer_checksum: int | None = None
        self.sent_done = False
        self.intersection: IdArray | None = None
        self.stats: list[dict] = []

    # -- lifecycle --------------------------------------------------------------

    def start(self) -> list[bytes]:
        if not self.initiator:
            return []
        self._setup(self.config.matrix_spec())
        self.chain_pos = 1
        d_self, d_peer = self.config.split()
        mu1, mu2 = codec.difference_rates(
            self.spec, codec.SketchPrior(peer_only=d_peer, self_only=d_self)
        )
        # ping-pong sessions absorb whole-modulus recovery glitches via the
        # congruence wrap, so a couple per session are acceptable
        self._trunc = codec.derive_truncation(mu1, mu2, self.spec.rows, self.config.p_trunc,
                                              self.config.parity_levels, risk_budget=2.0)
        payload = codec.compress_sketch(
            self.sketch,
            codec.SketchPrior(peer_only=d_peer, self_only=d_self),
            params=self._trunc,
        )
        body = _pack_spec_header(self.spec, len(self.elements)) + payload
        return [encode_frame(MsgType.SKETCH, body)]

    def _setup(self, spec: MatrixSpec):
        self.spec = spec
        self.sketch = encode_set(spec, self.elements)
        self.supports = batch_supports(spec, self.elements)
        self.permanent_exclusions = np.zeros(len(self.elements), dtype=np.uint8)
        self._smf_mask = np.zeros(len(self.elements), dtype=np.uint8)
        self._verified_unique = np.zeros(len(self.elements), dtype=np.uint8)
        self._sig_lookup: dict[bytes, int] | None = None

    def handle(self, frame: bytes) -> list[bytes]:
        msg_type, payload = decode_frame(frame)
        if msg_type == MsgType.SKETCH:
            return self._on_sketch(payload)
        if msg_type == MsgType.RESIDUE:
            return self._on_residue(payload)
        if msg_type == MsgType.LAST_INQUIRY:
            return self._on_inquiry(payload)
        if msg_type == MsgType.INQUIRY_REPLY:
            return self._on_reply(payload)
        if msg_type == MsgType.DONE:
            return self._on_done(payload)
        raise ProtocolError(f"unexpected message type {msg_type}")

    # -- message handlers --------------------------------------------------------

    def _on_sketch(self, payload: bytes) -> list[bytes]:
        spec, peer_count, off = _unpack_spec_header(payload)
        if spec.universe_bits != self.elements.bits:
            raise ProtocolError("peer uses a different id width")
        self._setup(spec)
        self.chain_pos = 1
        self._trunc = codec.sketch_truncation(payload[off:])
        recovered, info = codec.recover_sketch(self.sketch, payload[off:], peer_count)
        working = self.sketch.values - recovered.values
        self.state = DecoderState(
            working, self.supports, candidates=self.elements, spec=spec
        )
        self._recovery_info = info
        return self._decode_turn()

    def _on_residue(self, payload: bytes) -> list[bytes]:
        values, smf = _parse_residue(payload, self.spec.rows)
        self.chain_pos += 1
        incoming = -values  # wire carries the sender's orientation
        l1 = int(np.abs(incoming).sum())
        if self.last_incoming_l1 is not None and l1 >= self.last_incoming_l1:
            self.resolution_sticky = True
        self.last_incoming_l1 = l1
        if self.state is None:
            self.state = DecoderState(
                incoming, self.supports, candidates=self.elements, spec=self.spec
            )
        else:
            self.state.reset_residue(incoming)
        if self.pending_reverts:
            revert(self.state, self.pending_reverts)
            self.pending_reverts.clear()
        self._smf_mask = bf_query_mask(smf, self.elements)
        return self._decode_turn()

    def _signature_lookup(self) -> dict[bytes, int]:
        # signatures of the full local set, built once per session
        if self._sig_lookup is None:
            nbytes = self.config.signature_nbytes()
            sigs = _signatures(self.elements, self.config.seed, nbytes)
            lookup = {s: i for i, s in enumerate(sigs)}
            if len(lookup) != len(self.elements):
                raise ProtocolError("local signature collision; widen signature_bits")
            self._sig_lookup = lookup
        return self._sig_lookup

    def _on_inquiry(self, payload: bytes) -> list[bytes]:
        nbytes = self.config.signature_nbytes()
        (count,) = struct.unpack_from("<I", payload, 0)
        raw = payload[4:]
        if len(raw) != count * nbytes:
            raise ProtocolError("inquiry length mismatch")
        sigs = [raw[i * nbytes : (i + 1) * nbytes] for i in range(count)]
        if len(set(sigs)) != count:
            raise ProtocolError("inquiry signature collision; widen signature_bits")
        lookup = self._signature_lookup()
        claimed_map = bytearray((count + 7) // 8)
        member_map = bytearray((count + 7) // 8)
        confirmed = 0
        for i, s in enumerate(sigs):
            hit = lookup.get(s)
            if hit is None:
                continue
            member_map[i // 8] |= 1 << (i % 8)
            if self.state is not None and self.state.x[hit] == 1:
                claimed_map[i // 8] |= 1 << (i % 8)
                # the peer proved this element is shared; shed and bar it
                self.pending_reverts.append(hit)
                confirmed += 1
            # either way the peer holds it too, so it is off limits for us
            self.permanent_exclusions[hit] = 1
        self.stats.append({"round": self.chain_pos, "peer": self.name,
                           "event": "inquiry_answered", "count": count,
                           "confirmed": confirmed})
        body = struct.pack("<I", count) + bytes(claimed_map) + bytes(member_map)
        return [encode_frame(MsgType.INQUIRY_REPLY, body)]

    def _on_reply(self, payload: bytes) -> list[bytes]:
        (count,) = struct.unpack_from("<I", payload, 0)
        if count != len(self.pending_queries):
            raise ProtocolError("inquiry reply count mismatch")
        nmap = (count + 7) // 8
        claimed_map = payload[4 : 4 + nmap]
        member_map = payload[4 + nmap : 4 + 2 * nmap]
        state = self.state
        shared = claimed_back = unique = 0
        for i, idx in enumerate(self.pending_queries):
            member = member_map[i // 8] >> (i % 8) & 1
            claimed = claimed_map[i // 8] >> (i % 8) & 1
            if member:
                # the peer holds this element, so it is common; neither side
                # may claim it (the peer reverts its own claim if it had one)
                self.permanent_exclusions[idx] = 1
                if state.x[idx] == 1:
                    revert(state, [idx])
                shared += 1
                claimed_back += claimed
            else:
                # provably unique to us: the filter hit was a false positive
                self._smf_mask[idx] = 0
                self._verified_unique[idx] = 1
                if state.x[idx] == 0:
                    state.apply_flip(idx)
                unique += 1
        self.stats.append({"round": self.chain_pos, "peer": self.name,
                           "event": "inquiry_resolved", "asked": count,
                           "shared": shared, "peer_claimed": claimed_back,
                           "confirmed_unique": unique})
        self.pending_queries = []
        if count:
            self._run_decoders(resolution=True)
        return self._finish_turn()

    def _on_done(self, payload: bytes) -> list[bytes]:
        checksum, size, status = _DONE_HDR.unpack_from(payload, 0)
        self.peer_checksum = checksum
        self.peer_status = status
        out: list[bytes] = []
        if not self.sent_done:
            self._finalize()
            out.append(self._done_frame())
        self.finished = True
        return out

    # -- turn machinery -----------------------------------------------------------

    def _run_decoders(self, resolution: bool) -> None:
        state = self.state
        mask = self._smf_mask | self.permanent_exclusions
        state.set_exclusions(mask)
        max_iter = self.config.max_iterations()
        l1_before = state.residue_l1()
        log_start = len(state.update_log)
        outcome = mp_decode(state, max_iter)
        path = "mp"
        if outcome is not Outcome.ZERO_RESIDUE and state.residue_l1() > l1_before:
            # near the end the L2 rule can overshoot into noise; better to
            # hold position and let the L1 rule or the peer take over
            _rollback(state, log_start)
            path = "mp_rolled_back"
        if outcome is not Outcome.ZERO_RESIDUE:
            outcome = ssmp_decode(state, max_iter)
            path += "+ssmp"
        if outcome is not Outcome.ZERO_RESIDUE and resolution:
            # the peer's noise may be gone by now; try finishing the leftover
            # system exactly before burning another round on it
            solved = resolve_residual(state, node_budget=100_000)
            if solved is Outcome.ZERO_RESIDUE:
                outcome, path = solved, path + "+resolve"
        if (
            outcome is not Outcome.ZERO_RESIDUE
            and resolution
            and state.residue_l1() >= l1_before
            and 0 < state.residue_l1() <= 64 * self.config.m
            and self._trunc is not None
            and self._trunc.modulus > 1
            and state.wrap_range is None
        ):
            # a drained residue that nothing explains is the footprint of
            # first-message recovery glitches, which are whole multiples of
            # the truncation modulus; snapping into the congruence window
            # clears them (and is kept up for the rest of the session)
            state.enable_wrap(self._trunc.v, self._trunc.w)
            outcome = ssmp_decode(state, max_iter)
            path += "+wrap"
            if outcome is not Outcome.ZERO_RESIDUE:
                solved = resolve_residual(state, node_budget=100_000)
                if solved is Outcome.ZERO_RESIDUE:
                    outcome, path = solved, path + "+resolve"
        self.stats.append({
            "round": self.chain_pos + 1, "peer": self.name, "event": "decode",
            "path": path, "outcome": outcome.value,
            "iterations": len(state.update_log) - log_start,
            "l1_before": l1_before, "l1_after": state.residue_l1(),
            "resolution": resolution,
        })

    def _decode_turn(self) -> list[bytes]:
        # the message this decode will produce sits at chain_pos + 1
        resolution = self.resolution_sticky or self.chain_pos + 1 >= self.config.resolve_round
        self._run_decoders(resolution)
        state = self.state
        if resolution:
            # verify suspects with the peer before deciding: a filter-positive
            # candidate with positive pull (the peer's hallucination vs a
            # filter false positive), a filter hit on our own claim (possible
            # mutual hallucination), and, once the residue is nearly drained,
            # any candidate with leftover pull (mutually camouflaged
            # sub-threshold elements that no greedy rule can separate)
            eligible = (self.permanent_exclusions == 0) & (self._verified_unique == 0)
            suspect = (self._smf_mask != 0) & (
                ((state.dot >= 2) & (state.x == 0))
                | ((state.dot <= -1) & (state.x == 1))
            )
            l1 = state.residue_l1()
            if 0 < l1 <= 64 * self.config.m:
                # endgame: whatever pins the leftover mass down is worth a
                # signature check, filter hit or not
                touched = (state.residue != 0)[state.supports].any(axis=1)
                suspect |= (state.x == 0) & (state.dot >= 0) & touched
            candidates = np.nonzero(eligible & suspect)[0]
            if candidates.size > 2048:
                order = np.lexsort((candidates, -state.dot[candidates]))
                candidates = candidates[order[:2048]]
            self.pending_queries = sorted(int(i) for i in candidates)
        if self.pending_queries:
            nbytes = self.config.signature_nbytes()
            sigs = _signatures(
                self.elements.take(np.array(self.pending_queries, dtype=np.int64)),
                self.config.seed, nbytes,
            )
            body = struct.pack("<I", len(sigs)) + b"".join(sigs)
            return [encode_frame(MsgType.LAST_INQUIRY, body)]
        return self._finish_turn()

    def _finish_turn(self) -> list[bytes]:
        state = self.state
        if state.residue_l1() == 0:
            self._finalize()
            self.finished = self.sent_done = True
            return [self._done_frame()]
        if self.chain_pos >= self.config.max_rounds:
            self.gave_up = True
            self._finalize()
            self.finished = self.sent_done = True
            return [self._done_frame()]
        self.chain_pos += 1
        recovered = state.recovered_ids()
        smf = bf_build(recovered, self.config.smf_fpp,
                       seed=hashing.mix64(self.config.seed ^ _SALT_SMF ^ self.chain_pos))
        residue_blob = codec.compress_residue(state.residue)
        smf_blob = smf.to_bytes()
        self._last_residue_detail = {
            "residue_bytes": len(residue_blob), "smf_bytes": len(smf_blob)
        }
        return [encode_frame(MsgType.RESIDUE, residue_blob + smf_blob)]

    def _finalize(self):
        if self.intersection is not None:
            return
        if self.state is None:
            claimed = self.elements.take(np.zeros(0, dtype=np.int64))
        else:
            claimed = self.state.recovered_ids()
        # my intersection view: everything I hold that I did not claim unique
        mask = np.ones(len(self.elements), dtype=bool)
        if self.state is not None:
            mask[self.state.recovered_indices()] = False
        self.intersection = self.elements.take(np.nonzero(mask)[0])
        self.checksum = intersection_checksum(self.intersection, self.config.seed)

    def _done_frame(self) -> bytes:
        status = 1 if self.gave_up else 0
        return encode_frame(
            MsgType.DONE, _DONE_HDR.pack(self.checksum, len(self.intersection), status)
        )

    def outcome_ok(self) -> bool:
        if self.gave_up or self.peer_status != 0:
            return False
        return self.peer_checksum == self.checksum


def _rollback(state: DecoderState, log_start: int) -> None:
    """Invert every signal flip made after log_start, newest first."""
    tail = state.update_log[log_start:]
    for idx, _direction in reversed(tail):
        state.apply_flip(idx)


def bf_query_mask(smf: BloomFilter | None, elements: IdArray) -> np.ndarray:
    # a fresh-off-the-wire filter has no insert count; emptiness = no set bits
    if smf is None or not smf.bits.any():
        return np.zeros(len(elements), dtype=np.uint8)
    return smf.query_many(elements).astype(np.uint8)


def _parse_residue(payload: bytes, rows: int) -> tuple[np.ndarray, BloomFilter]:
    mu_size = struct.calcsize("<dd")
    (n,) = struct.unpack_from("<I", payload, mu_size)
    residue_end = mu_size + 4 + n
    values = codec.decompress_residue(payload[:residue_end], rows)
    smf = BloomFilter.from_bytes(payload[residue_end:])
    return values, smf


# -- session drivers ----------------------------------------------------------------


def _pump(peer_a: PingPongPeer, peer_b: PingPongPeer,
          transcript: SessionTranscript) -> None:
    """Deliver frames in order until both peers are finished."""
    peers = {peer_a.name: peer_a, peer_b.name: peer_b}
    other = {peer_a.name: peer_b.name, peer_b.name: peer_a.name}
    queue: list[tuple[str, bytes]] = [(peer_a.name, f) for f in peer_a.start()]
    queue += [(peer_b.name, f) for f in peer_b.start()]
    steps = 0
    while queue:
        sender, frame = queue.pop(0)
        msg_type, _ = decode_frame(frame)
        detail = {}
        if msg_type == MsgType.RESIDUE:
            detail = getattr(peers[sender], "_last_residue_detail", {})
        transcript.messages.append(MessageRecord(sender, msg_type, len(frame), detail))
        receiver = peers[other[sender]]
        for reply in receiver.handle(frame):
            queue.append((receiver.name, reply))
        steps += 1
        if steps > 10_000:
            raise ProtocolError("session did not terminate")
    for p in (peer_a, peer_b):
        if not p.finished:
            raise ProtocolError(f"peer {p.name} never finished")


@dataclass
class UniResult:
    intersection: IdArray | None
    transcript: SessionTranscript


def run_unidirectional(alice: IdArray, bob: IdArray,
                       config: SessionConfig) -> UniResult:
    """One-message flow for the contained case; the responder (holder of the
    superset) learns the intersection.  Both decoders failing to reach a zero
    residue yields outcome "failure" and no result."""
    spec = config.matrix_spec()
    transcript = SessionTranscript()
    ska = encode_set(spec, alice)
    d_self, d_peer = config.split()
    prior = codec.SketchPrior(peer_only=d_peer, self_only=d_self)
    mu1, mu2 = codec.difference_rates(spec, prior)
    params = codec.derive_truncation(mu1, mu2, spec.rows, config.p_trunc,
                                     config.parity_levels)  # one-shot: strict risk
    payload = codec.compress_sketch(ska, prior, params=params)
    frame = encode_frame(MsgType.SKETCH, _pack_spec_header(spec, len(alice)) + payload)
    transcript.messages.append(MessageRecord("alice", MsgType.SKETCH, len(frame)))
    transcript.rounds = 1

    # responder side
    msg_type, body = decode_frame(frame)
    rspec, peer_count, off = _unpack_spec_header(body)
    skb = encode_set(rspec, bob)
    recovered, info = codec.recover_sketch(skb, body[off:], peer_count)
    state = DecoderState(skb.values - recovered.values, batch_supports(rspec, bob),
                         candidates=bob, spec=rspec)
    max_iter = config.max_iterations()
    flex = (params.v, params.w) if params.modulus > 1 else None
    outcome = mp_decode(state, max_iter)
    path = "mp"
    if outcome is not Outcome.ZERO_RESIDUE:
        # finish exactly; rows that may hide a recovery glitch are allowed
        # to end at whole multiples of the truncation modulus
        outcome = resolve_residual(state, node_budget=500_000, flex_window=flex)
        path = "mp+resolve"
    if outcome is not Outcome.ZERO_RESIDUE:
        outcome = ssmp_decode(state, max_iter)
        path = "ssmp"
        if outcome is not Outcome.ZERO_RESIDUE:
            outcome = resolve_residual(state, node_budget=500_000, flex_window=flex)
            path = "ssmp+resolve"
    transcript.decoder_stats.append({
        "path": path, "outcome": outcome.value, "iterations": state.iteration_count,
        "parity_ok": info.parity_ok, "parity_corrections": info.parity_corrections,
    })
    if outcome is not Outcome.ZERO_RESIDUE:
        transcript.outcome = "failure"
        return UniResult(None, transcript)
    unique = state.recovered_indices()
    mask = np.ones(len(bob), dtype=bool)
    mask[unique] = False
    intersection = bob.take(np.nonzero(mask)[0])
    transcript.intersection_size = len(intersection)
    return UniResult(intersection, transcript)


@dataclass
class BiResult:
    alice_intersection: IdArray | None
    bob_intersection: IdArray | None
    transcript: SessionTranscript


def run_bidirectional(alice: IdArray, bob: IdArray, config: SessionConfig,
                      initiator: str = "auto") -> BiResult:
    """General two-set flow over an in-memory loopback.

    ``initiator`` is "alice", "bob", or "auto" (the side with the smaller
    configured unique-count estimate opens, per choose_initiator).
    """
    if config.d_split is None:
        half = config.d_total // 2
        config = replace(config, d_split=(half, config.d_total - half))
    if initiator == "auto":
        initiator = choose_initiator(config.d_split[0], config.d_split[1])
    if initiator not in ("alice", "bob"):
        raise ValueError("initiator must be alice, bob, or auto")
    split = config.d_split
    if initiator == "bob":
        split = (split[1], split[0])
    cfg = replace(config, d_split=split)
    peer_alice = PingPongPeer("alice", alice, cfg, initiator == "alice")
    peer_bob = PingPongPeer("bob", bob, cfg, initiator == "bob")
    transcript = SessionTranscript()
    first, second = (peer_alice, peer_bob) if initiator == "alice" else (peer_bob, peer_alice)
    _pump(first, second, transcript)
    transcript.rounds = sum(
        1 for m in transcript.messages if m.msg_type in (MsgType.SKETCH, MsgType.RESIDUE)
    )
    transcript.decoder_stats = first.stats + second.stats
    ok = first.outcome_ok() and second.outcome_ok()
    transcript.outcome = "ok" if ok else "failure"
    if ok:
        transcript.intersection_size = len(peer_alice.intersection)
        return BiResult(peer_alice.intersection, peer_bob.intersection, transcript)
    return BiResult(None, None, transcript)


def decode_stream_digest(alice_digest: Sketch, bob_digest: Sketch,
                         superset: IdArray, d_estimate: int | None = None) -> IdArray:
    """Recover the set difference of two streaming digests over a superset.

    The digests must share a spec and the true difference must be contained
    in ``superset``; raises DecodeFailure on a nonzero final residue.
    """
    res = residue_between(bob_digest, alice_digest)
    state = DecoderState.create(res, superset)
    d = d_estimate if d_estimate is not None else res.spec.rows
    max_iter = max(64, 4 * d)
    outcome = mp_decode(state, max_iter)
    if outcome is not Outcome.ZERO_RESIDUE:
        outcome = ssmp_decode(state, max_iter)
    if outcome is not Outcome.ZERO_RESIDUE:
        raise DecodeFailure(f"digest decoding ended {outcome.value}")
    return state.recovered_ids()
