"""Deterministic discrete-event simulation of one roadside reader and passing tagged vehicles."""
from __future__ import annotations

import heapq
import json
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from . import crypto, protocol as proto
from .anticollision import FrameState, SlotKind, classify_slot
from .metrics import MetricsReport, Stat
from .radio import RadioParams, link_success, tx_duration
from .traffic import MODELS, TrafficModel, Vehicle, position_at, range_interval, spawn_stream


class ConfigError(ValueError):
    pass


class EventKind(str, Enum):
    VEHICLE_ENTER = "VehicleEnter"
    VEHICLE_EXIT = "VehicleExit"
    FRAME_START = "FrameStart"
    SLOT_BOUNDARY = "SlotBoundary"
    MESSAGE_DELIVERY = "MessageDelivery"
    SERVER_REPLY = "ServerReply"
    TAG_WAKE = "TagWake"
    READER_SCAN = "ReaderScan"
    SIM_END = "SimEnd"


@dataclass
class Scenario:
    traffic: TrafficModel = field(default_factory=lambda: MODELS["medium"])
    radio: RadioParams = field(default_factory=RadioParams)
    server_delay: float = 0.0  # one-way reader <-> server, s
    duration: float = 120.0
    seed: int = 42
    protocol_profile: str = "hybrid"  # or "baseline"
    sleep_enabled: bool = True
    sleep_strategy: str = "geometry"  # or "fixed"
    fixed_sleep_time: float = 0.24
    reader_scan_period: float = 0.1
    q_initial: int = 4
    q_step: float = 0.3
    turnaround: float = 62.5e-6
    lane_width: float = 0.0
    warmup: float = 5.0
    id_bits: int = 96
    nonce_bits: int = 32
    baseline_read_bits: int = 1700  # 1.7 ms at 1 Mbit/s
    jammers: int = 0

    def validate(self) -> None:
        try:
            self.traffic.validate()
            self.radio.validate()
            proto.ProtocolParams(self.id_bits, self.nonce_bits)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.server_delay >= 0, "server_delay must be >= 0"),
            (self.duration > 0, "duration must be > 0"),
            (0 <= self.seed < 2**64, "seed must fit in 64 bits"),
            (self.protocol_profile in ("hybrid", "baseline"), "protocol_profile must be hybrid or baseline"),
            (self.sleep_strategy in ("geometry", "fixed"), "sleep_strategy must be geometry or fixed"),
            (self.fixed_sleep_time >= 0, "fixed_sleep_time must be >= 0"),
            (self.reader_scan_period > 0, "reader_scan_period must be > 0"),
            (0 <= self.q_initial <= 15, "q_initial must lie in 0..15"),
            (0.1 <= self.q_step <= 0.5, "q_step must lie in [0.1, 0.5]"),
            (self.turnaround >= 0, "turnaround must be >= 0"),
            (self.lane_width >= 0, "lane_width must be >= 0"),
            (self.warmup >= 0, "warmup must be >= 0"),
            (self.baseline_read_bits > 0, "baseline_read_bits must be > 0"),
            (self.jammers >= 0, "jammers must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def summary(self) -> dict:
        return {
            "model": self.traffic.name,
            "bandwidth": self.radio.bandwidth,
            "server_delay": self.server_delay,
            "seed": self.seed,
            "sleep_enabled": self.sleep_enabled,
            "sleep_strategy": self.sleep_strategy,
            "protocol_profile": self.protocol_profile,
            "duration": self.duration,
        }

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EnergyLedger:
    tag_power: float = 0.040
    in_range: tuple = (0.0, 0.0)
    sleeps: list = field(default_factory=list)  # closed [start, end) intervals

    @property
    def in_range_seconds(self) -> float:
        return max(0.0, self.in_range[1] - self.in_range[0])

    @property
    def awake_seconds(self) -> float:
        lo, hi = self.in_range
        asleep = sum(max(0.0, min(b, hi) - max(a, lo)) for a, b in self.sleeps)
        return max(0.0, hi - lo - asleep)

    @property
    def energy_mJ(self) -> float:
        return 1e3 * self.tag_power * self.awake_seconds


@dataclass
class _TagSlot:
    agent: proto.TagAgent
    vehicle: Vehicle | None
    t_in: float
    t_out: float
    jammer: bool = False
    present: bool = False
    sleep_start: float | None = None
    sleeps: list = field(default_factory=list)
    first_accept: float | None = None
    first_latency: float | None = None
    first_air_latency: float | None = None
    accepts: int = 0


@dataclass
class _Pending:
    tag: int
    slot_start: float
    transcript: proto.Transcript | None
    delay_total: float = 0.0
    response: proto.ServerResponse | None = None
    reject: proto.RejectReason | None = None


class Simulation:
    """One run of a :class:`Scenario`. Call :meth:`run` once."""

    def __init__(self, scenario: Scenario, trace: bool = False, record_transcripts: bool = False):
        scenario.validate()
        self.sc = scenario
        self.params = proto.ProtocolParams(scenario.id_bits, scenario.nonce_bits)
        seeds = np.random.SeedSequence(scenario.seed).spawn(5)
        self.traffic_rng, self.proto_rng, self.server_rng, self.radio_rng, self.key_rng = (
            np.random.default_rng(s) for s in seeds
        )
        self.trace_enabled = trace
        self.trace: list[dict] = []
        self.record_transcripts = record_transcripts
        self.transcripts: list[proto.Transcript] = []
        self._heap: list = []
        self._seq = 0
        self.now = 0.0

        keys = crypto.kem_keygen(self.key_rng)
        self.db = proto.AuthServerDb(keys.private_scalar, self.server_rng, self.params)
        if scenario.sleep_strategy == "geometry":
            strategy = proto.geometry_strategy(self._remaining_in_range)
        else:
            strategy = proto.fixed_strategy(scenario.fixed_sleep_time)
        self.reader = proto.ReaderAgent(self.params, strategy)
        self.frame = FrameState(q_fp=float(scenario.q_initial), c=scenario.q_step)

        radius = scenario.radio.coverage_radius
        vehicles = spawn_stream(scenario.traffic, scenario.duration, self.traffic_rng,
                                lane_width=scenario.lane_width, approach_offset=radius + 1.0)
        self.tags: list[_TagSlot] = []
        for v in vehicles:
            agent = proto.make_tag(self.db, self.key_rng, label=v.id)
            v.tag = agent
            span = range_interval(v, radius) or (float("inf"), float("inf"))
            self.tags.append(_TagSlot(agent, v, span[0], span[1]))
        for j in range(scenario.jammers):
            agent = proto.make_tag(self.db, self.key_rng, label=-1 - j, register=False)
            self.tags.append(_TagSlot(agent, None, 0.0, float("inf"), jammer=True, present=True))

        bw = scenario.radio.bandwidth
        self._slot_time = tx_duration(proto.RN16_BITS, bw) + scenario.turnaround
        self._idle_time = self._slot_time / 2.0
        scale = 1.0
        if scenario.protocol_profile == "baseline":
            scale = scenario.baseline_read_bits / self.params.handshake_bits
        self._air = {k: scale * tx_duration(self.params.message_bits(k), bw) for k in proto.MessageKind}
        self._air[proto.MessageKind.QUERY] = tx_duration(proto.QUERY_BITS, bw)

        self.slot_counts = {k.value: 0 for k in SlotKind}
        self.rejects: dict[str, int] = {}
        self.false_accepts = 0
        self.reader_awake = 0.0
        self._reader_wake_at: float | None = None
        self._by_slot: dict[int, list[int]] = {}
        self._present_set = {i for i, t in enumerate(self.tags) if t.jammer}
        self._query: proto.WireMessage | None = None
        self._pending: _Pending | None = None

    # -- event plumbing ---------------------------------------------------

    def schedule(self, time: float, kind: EventKind, arg=None) -> None:
        if time < self.now:
            raise RuntimeError(f"event {kind} scheduled in the past")
        self._seq += 1
        heapq.heappush(self._heap, (time, self._seq, kind, arg))

    def deliver_with_delay(self, kind: EventKind, arg, delay: float) -> None:
        if delay < 0:
            raise ValueError("delay must be >= 0")
        self.schedule(self.now + delay, kind, arg)

    def run(self) -> MetricsReport:
        for i, t in enumerate(self.tags):
            if t.jammer or t.t_in > self.sc.duration:
                continue
            self.schedule(t.t_in, EventKind.VEHICLE_ENTER, i)
            if t.t_out <= self.sc.duration:
                self.schedule(t.t_out, EventKind.VEHICLE_EXIT, i)
        self.schedule(0.0, EventKind.READER_SCAN)
        self.schedule(self.sc.duration, EventKind.SIM_END)
        handlers = {
            EventKind.VEHICLE_ENTER: self._on_enter,
            EventKind.VEHICLE_EXIT: self._on_exit,
            EventKind.READER_SCAN: self._on_scan,
            EventKind.FRAME_START: self._on_frame_start,
            EventKind.SLOT_BOUNDARY: self._on_slot,
            EventKind.MESSAGE_DELIVERY: self._on_delivery,
            EventKind.SERVER_REPLY: self._on_server_reply,
            EventKind.TAG_WAKE: self._on_wake,
        }
        while self._heap:
            time, seq, kind, arg = heapq.heappop(self._heap)
            self.now = time
            if self.trace_enabled:
                self.trace.append({"t": time, "seq": seq, "kind": kind.value, "arg": _trace_arg(arg)})
            if kind is EventKind.SIM_END:
                break
            handlers[kind](arg)
        if self._reader_wake_at is not None:
            self.reader_awake += self.sc.duration - self._reader_wake_at
            self._reader_wake_at = None
        return self._report()

    # -- geometry oracle --------------------------------------------------

    def _remaining_in_range(self, tag_index: int, t: float) -> float:
        return self.tags[tag_index].t_out - t

    def _present(self, i: int, t: float) -> bool:
        tag = self.tags[i]
        if tag.jammer:
            return True
        return tag.t_in <= t <= tag.t_out

    # -- handlers ---------------------------------------------------------

    def _on_enter(self, i):
        self.tags[i].present = True
        self._present_set.add(i)

    def _on_exit(self, i):
        self.tags[i].present = False
        self._present_set.discard(i)

    def _on_wake(self, i):
        tag = self.tags[i]
        if tag.agent.phase is proto.Phase.SLEEPING and tag.sleep_start is not None:
            tag.sleeps.append((tag.sleep_start, self.now))
            tag.sleep_start = None
            tag.agent.wake()

    def _on_scan(self, _):
        if self._reader_wake_at is None:
            self._reader_wake_at = self.now
        self.schedule(self.now, EventKind.FRAME_START)

    def _on_frame_start(self, adjust):
        size = self.frame.start_frame(adjust=bool(adjust))
        self._query = proto.query_message(self.frame.q)
        self._by_slot = {}
        for i in sorted(self._present_set):
            agent = self.tags[i].agent
            if agent.phase is proto.Phase.SLEEPING:
                continue
            proto.tag_start_session(agent, self._query, self.proto_rng)
            self._by_slot.setdefault(agent.session.slot, []).append(i)
        self.schedule(self.now + self._air[proto.MessageKind.QUERY], EventKind.SLOT_BOUNDARY, 0)

    def _on_slot(self, index):
        if self.frame.frame_done:
            self._end_frame()
            return
        responders = []
        for i in self._by_slot.get(index, ()):
            tag = self.tags[i]
            if tag.agent.phase is not proto.Phase.ARBITRATING or tag.agent.session.slot != index:
                continue
            if not tag.present:
                continue
            if self.sc.radio.shadowing and not tag.jammer:
                x, y = position_at(tag.vehicle, self.now)
                if not link_success(float(np.hypot(x, y)), self.sc.radio, self.radio_rng):
                    continue
            responders.append(i)
        outcome = classify_slot(len(responders))
        self.frame.record(outcome)
        self.slot_counts[outcome.kind.value] += 1
        if outcome.kind is SlotKind.IDLE:
            self.schedule(self.now + self._idle_time, EventKind.SLOT_BOUNDARY, index + 1)
        elif outcome.kind is SlotKind.COLLISION:
            for i in responders:
                self.tags[i].agent.reset()
            self.schedule(self.now + self._slot_time, EventKind.SLOT_BOUNDARY, index + 1)
        else:
            self._start_handshake(responders[0], index)

    def _start_handshake(self, i: int, index: int) -> None:
        K = proto.MessageKind
        tag = self.tags[i]
        agent = tag.agent
        slot_start = self.now
        transcript = None
        if self.record_transcripts:
            transcript = proto.Transcript(0, tag_label=agent.label)
            transcript.add("r2t", self._query, slot_start)
        rn16 = proto.tag_rn16(agent)
        t = slot_start + self._air[K.RN16] + self.sc.turnaround
        ack = proto.reader_ack(self.reader, rn16, self.proto_rng)
        proto.tag_receive_ack(agent, ack)
        t += self._air[K.ACK_CHALLENGE]
        if tag.jammer:
            payload = self.proto_rng.bytes(self.params.message_bits(K.AUTH_REQUEST) // 8)
            auth = proto.WireMessage(K.AUTH_REQUEST, payload, 8 * len(payload))
        else:
            auth = proto.tag_build_auth(agent.session, agent.identity, self.proto_rng).to_message()
        t += self._air[K.AUTH_REQUEST]
        if transcript is not None:
            transcript.session_id = self.reader.current_session
            transcript.add("t2r", rn16, slot_start)
            transcript.add("r2t", ack, slot_start + self._air[K.RN16] + self.sc.turnaround)
            transcript.add("t2r", auth, t - self._air[K.AUTH_REQUEST])
        time_est = proto.estimate_sleep_time(self.reader, proto.TagObservation(i, t))
        request = proto.reader_forward(self.reader, auth, time_est)
        self._pending = _Pending(i, slot_start, transcript)
        self._pending_index = index
        self.schedule(t + self.sc.server_delay, EventKind.MESSAGE_DELIVERY, ("server", request))

    def _on_delivery(self, arg):
        target, payload = arg
        pending = self._pending
        if target == "server":
            try:
                pending.response = proto.server_authenticate(self.db, payload)
                if self.tags[pending.tag].jammer:
                    self.false_accepts += 1
            except proto.Rejected as exc:
                pending.reject = exc.reason
                self.rejects[exc.reason.value] = self.rejects.get(exc.reason.value, 0) + 1
            self.deliver_with_delay(EventKind.SERVER_REPLY, None, self.sc.server_delay)
            return
        self._finish_session(pending, payload)

    def _on_server_reply(self, _):
        pending = self._pending
        if pending.response is None:
            self.tags[pending.tag].agent.reset()
            if pending.transcript is not None:
                pending.transcript.outcome = f"rejected:{pending.reject.value}"
                self.transcripts.append(pending.transcript)
            self._pending = None
            self.schedule(self.now, EventKind.SLOT_BOUNDARY, self._pending_index + 1)
            return
        msg = pending.response.to_message()
        if pending.transcript is not None:
            pending.transcript.add("r2t", msg, self.now)
        self.deliver_with_delay(EventKind.MESSAGE_DELIVERY, ("tag", msg), self._air[proto.MessageKind.SERVER_RESPONSE])

    def _finish_session(self, pending: _Pending, msg: proto.WireMessage) -> None:
        tag = self.tags[pending.tag]
        outcome = "lost"
        if self._present(pending.tag, self.now) and not tag.jammer:
            try:
                sleep_for = proto.tag_finalize(tag.agent.session, proto.ServerResponse.from_message(msg))
            except proto.Rejected as exc:
                outcome = f"tag_rejected:{exc.reason.value}"
                tag.agent.reset()
            else:
                outcome = "accepted"
                self._accept(pending.tag, pending, sleep_for)
        else:
            tag.agent.reset()
        if pending.transcript is not None:
            pending.transcript.outcome = outcome
            self.transcripts.append(pending.transcript)
        self._pending = None
        self.schedule(self.now, EventKind.SLOT_BOUNDARY, self._pending_index + 1)

    def _accept(self, i: int, pending: _Pending, sleep_for: float) -> None:
        tag = self.tags[i]
        tag.accepts += 1
        if tag.first_accept is None:
            latency = self.now - pending.slot_start
            tag.first_accept = self.now
            tag.first_latency = latency
            tag.first_air_latency = latency - 2.0 * self.sc.server_delay
        self.tag_sleep_controller(i, sleep_for)

    def tag_sleep_controller(self, i: int, sleep_for: float) -> None:
        """Put an accepted tag to sleep and schedule its wake-up; without sleep it keeps answering."""
        tag = self.tags[i]
        if not self.sc.sleep_enabled:
            tag.agent.reset()
            return
        tag.sleep_start = self.now
        self.schedule(self.now + sleep_for, EventKind.TAG_WAKE, i)

    def _end_frame(self) -> None:
        if self.frame.adjust_due:
            self.schedule(self.now, EventKind.FRAME_START, True)
            return
        if self.frame.round_heard:
            self.schedule(self.now, EventKind.FRAME_START)
            return
        self.reader_duty_cycle()

    def reader_duty_cycle(self) -> None:
        """Idle frame: the reader sleeps until the next scan tick."""
        period = self.sc.reader_scan_period
        if self._reader_wake_at is not None:
            self.reader_awake += self.now - self._reader_wake_at
            self._reader_wake_at = None
        next_tick = period * (np.floor(self.now / period + 1e-9) + 1.0)
        self.schedule(float(next_tick), EventKind.READER_SCAN)

    # -- accounting -------------------------------------------------------

    def ledger(self, i: int) -> EnergyLedger:
        tag = self.tags[i]
        sleeps = list(tag.sleeps)
        if tag.sleep_start is not None:
            sleeps.append((tag.sleep_start, float("inf")))
        end = min(tag.t_out, self.sc.duration)
        return EnergyLedger(self.sc.radio.tag_power, (tag.t_in, end), sleeps)

    def _report(self) -> MetricsReport:
        sc = self.sc
        report = MetricsReport(scenario=sc.summary())
        latencies, air, fractions, dwell, awake, energy = [], [], [], [], [], []
        for i, tag in enumerate(self.tags):
            if tag.jammer:
                continue
            report.n_spawned += 1
            if tag.first_accept is not None:
                report.n_authenticated += 1
            elif tag.t_out <= sc.duration:
                report.n_missed += 1
            else:
                report.n_in_progress += 1
            if not (tag.t_in >= sc.warmup and tag.t_out <= sc.duration):
                continue
            report.n_completed += 1
            ledger = self.ledger(i)
            dwell.append(ledger.in_range_seconds)
            if ledger.in_range_seconds > 0:
                fractions.append(ledger.awake_seconds / ledger.in_range_seconds)
            awake.append(ledger.awake_seconds)
            energy.append(ledger.energy_mJ)
            if tag.first_accept is not None:
                report.n_read += 1
                latencies.append(tag.first_latency)
                air.append(tag.first_air_latency)
        report.read_ratio = report.n_read / report.n_completed if report.n_completed else None
        report.latency = Stat.of(latencies)
        report.air_latency = Stat.of(air)
        report.awake_fraction = Stat.of(fractions)
        report.dwell = Stat.of(dwell)
        report.awake_seconds = Stat.of(awake)
        report.energy_mJ = Stat.of(energy)
        report.slot_counts = dict(self.slot_counts)
        report.reader_awake_fraction = self.reader_awake / sc.duration
        report.server_rejects = dict(sorted(self.rejects.items()))
        report.false_accepts = self.false_accepts
        report.metadata = {
            "curve": crypto.CURVE_NAME,
            "cipher": crypto.CIPHER_MODE,
            "kem": crypto.KEM_SCHEME,
            "handshake_bits": self.params.handshake_bits,
            "r1_bits": self.params.r1_bits,
            "r2_bits": self.params.r2_bits,
            "b_bits": self.params.b_bits,
            "jammers": sc.jammers,
        }
        return report


def _trace_arg(arg):
    if arg is None or isinstance(arg, (int, float, str)):
        return arg
    if isinstance(arg, tuple):
        return arg[0]
    return repr(arg)


def run(scenario: Scenario, trace: bool = False, record_transcripts: bool = False) -> MetricsReport:
    return Simulation(scenario, trace=trace, record_transcripts=record_transcripts).run()


def dump_trace(trace: list[dict], fp) -> None:
    for event in trace:
        fp.write(json.dumps(event, sort_keys=True) + "\n")
