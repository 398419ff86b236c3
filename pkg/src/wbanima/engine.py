"""Deterministic discrete-event core.

Time is kept as integer nanoseconds. Every random quantity is drawn from a
named stream (see :func:`rng_stream`), so adding or removing a node never
perturbs the draws of the others.
"""
from __future__ import annotations

import hashlib
import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .channel import Position, dbm_to_mw, meets_threshold, path_loss_db
from .energy import Battery, drain, rx_energy, tx_energy
from .ima import CtsEntry, CtsQueue, ImaState, NodeId, cts_wait_time, enqueue_cts, select_winner
from .mac import BackoffState, Frame, FrameKind, backoff_delay, make_frame
from .metrics import MetricsRecorder, MetricsReport
from .scenario import Scenario

NS_PER_MS = 1_000_000
NS_PER_US = 1_000
NS_PER_S = 1_000_000_000


def ms_to_ns(ms: float) -> int:
    return int(round(ms * NS_PER_MS))


# ------------------------------------------------------------------ events

@dataclass
class Event:
    time: int
    seq: int
    kind: str
    fn: Optional[Callable] = None
    args: tuple = ()
    cancelled: bool = False

    def cancel(self) -> None:
        self.cancelled = True


class EventQueue:
    """Min-heap on (time, seq); the clock never runs backwards."""

    def __init__(self):
        self._heap: list = []
        self._seq = 0
        self.now = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, time: int, kind: str, fn: Optional[Callable] = None, *args) -> Event:
        if time < self.now:
            raise RuntimeError(f"event {kind!r} scheduled in the past ({time} < {self.now})")
        ev = Event(int(time), self._seq, kind, fn, args)
        self._seq += 1
        heapq.heappush(self._heap, (ev.time, ev.seq, ev))
        return ev

    def pop_next(self) -> Optional[Event]:
        while self._heap:
            _, _, ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            self.now = ev.time
            return ev
        return None

    def peek_time(self) -> Optional[int]:
        while self._heap and self._heap[0][2].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``label`` under ``seed``."""
    words = np.frombuffer(hashlib.sha256(label.encode()).digest(), dtype="<u4")
    entropy = [int(seed) & 0xFFFFFFFF, (int(seed) >> 32) & 0xFFFFFFFF, *map(int, words)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


# ---------------------------------------------------------------- topology

def draw_body_position(rng: np.random.Generator, centre: Position, radius: float,
                       space) -> Position:
    """Uniform point in a ball around ``centre``, clamped to the space."""
    while True:
        v = rng.uniform(-1.0, 1.0, size=3)
        if float(v @ v) <= 1.0:
            break
    p = [min(max(c + radius * float(d), 0.0), ext)
         for c, d, ext in zip(centre.as_list(), v, space)]
    return Position(*p)


def build_topology(scenario: Scenario) -> dict[NodeId, Position]:
    placements: dict[NodeId, Position] = {}
    for w, wban in enumerate(scenario.wbans):
        placements[NodeId(w, 0)] = wban.coordinator_position
        for s, sensor in enumerate(wban.sensors, start=1):
            nid = NodeId(w, s)
            if sensor.position is not None:
                placements[nid] = sensor.position
            else:
                rng = rng_stream(scenario.seed, f"topology/{nid.label()}")
                placements[nid] = draw_body_position(rng, wban.coordinator_position,
                                                     scenario.body_radius, scenario.space)
    for nid, pos in placements.items():
        if not pos.within(scenario.space):
            raise ValueError(f"{nid.label()} at {pos} lies outside the space")
    return placements


# ------------------------------------------------------------ runtime state

class Transmission:
    __slots__ = ("uid", "frame", "src", "start", "end", "rx_mw", "rx_dbm", "overlaps", "on_end")

    def __init__(self, uid, frame, src, start, end, rx_mw, rx_dbm, on_end):
        self.uid = uid
        self.frame = frame
        self.src = src
        self.start = start
        self.end = end
        self.rx_mw = rx_mw
        self.rx_dbm = rx_dbm
        self.overlaps: list[Transmission] = []
        self.on_end = on_end


@dataclass
class Packet:
    origin: NodeId
    seq: int
    created: int
    attempts: int = 0


class Node:
    def __init__(self, idx: int, nid: NodeId, position: Position, placed: bool,
                 battery: Battery, seed: int):
        self.idx = idx
        self.id = nid
        self.position = position
        self.placed = placed
        self.battery = battery
        self.alive = True
        self.agent: Optional[WbanAgent] = None
        self.tx: Optional[Transmission] = None
        self.lock: Optional[Transmission] = None
        self.packets: deque[Packet] = deque()
        self.forwards: deque[Packet] = deque()
        self.activity: Any = None
        self.synced = -1
        self.beacon_ms = 0.0
        self.next_seq = 0
        self.death_time: Optional[int] = None
        label = nid.label()
        self.rng_backoff = rng_stream(seed, f"backoff/{label}")
        self.rng_timer = rng_stream(seed, f"timer/{label}")

    @property
    def is_coordinator(self) -> bool:
        return self.id.is_coordinator


class RxInfo:
    __slots__ = ("rx_dbm", "interferers_dbm", "sinr", "time_ms")

    def __init__(self, rx_dbm, interferers_dbm, sinr, time_ms):
        self.rx_dbm = rx_dbm
        self.interferers_dbm = interferers_dbm
        self.sinr = sinr
        self.time_ms = time_ms


# ------------------------------------------------------------- simulation

class Simulator:
    """One scenario, one event loop."""

    def __init__(self, scenario: Scenario, trace: bool = False):
        self.sc = scenario
        self.events = EventQueue()
        self.trace: Optional[list] = [] if trace else None
        self.channel = scenario.channel
        self.mac = scenario.mac
        self.params = scenario.protocol
        self.noise_dbm = scenario.channel.noise_floor_dbm
        self.noise_mw = dbm_to_mw(self.noise_dbm)
        self.sens_dbm = scenario.mac.sensitivity_dbm
        self.cca_mw = dbm_to_mw(scenario.mac.cca_threshold_dbm)
        self.tx_power = scenario.energy.tx_power_dbm
        self.slot_ns = int(round(scenario.mac.slot_duration * NS_PER_US))
        self.turnaround_ns = int(round(scenario.mac.turnaround * NS_PER_US))
        self.end_ns = int(round(scenario.duration * NS_PER_S))

        self.airtime_ns = {}
        self.tx_cost = {}
        self.rx_cost = {}
        for kind in FrameKind:
            probe = make_frame(kind, None, None, self.mac)
            self.airtime_ns[kind] = ms_to_ns(probe.airtime_ms(self.mac))
            self.tx_cost[kind] = tx_energy(probe, self.mac, scenario.energy)
            self.rx_cost[kind] = rx_energy(probe, self.mac, scenario.energy)

        placements = build_topology(scenario)
        self.nodes: list[Node] = []
        self.by_id: dict[NodeId, Node] = {}
        for nid in sorted(placements):
            wcfg = scenario.wbans[nid.wban]
            placed = nid.is_coordinator or wcfg.sensors[nid.index - 1].position is not None
            battery = Battery(scenario.initial_energy, exempt=nid.is_coordinator)
            node = Node(len(self.nodes), nid, placements[nid], placed, battery, scenario.seed)
            self.nodes.append(node)
            self.by_id[nid] = node
        self._update_geometry()
        n = len(self.nodes)
        self._shadow = [[0.0] * n for _ in range(n)]
        self._shadow_t = [[-1] * n for _ in range(n)]
        self._shadow_rng: dict[tuple[int, int], np.random.Generator] = {}
        self.coherence_ns = ms_to_ns(self.channel.coherence_time)

        self.active: list[Transmission] = []
        self._tx_count = 0
        self.drain_log: dict[NodeId, list[float]] = {nd.id: [] for nd in self.nodes}
        self.frames_sent: dict[int, dict[str, int]] = {}
        self.agents = []
        for w, wcfg in enumerate(scenario.wbans):
            scheme = "ima" if wcfg.uses_ima else scenario.baseline
            members = [nd for nd in self.nodes if nd.id.wban == w]
            agent = WbanAgent(self, w, scheme, members)
            for nd in members:
                nd.agent = agent
            self.agents.append(agent)
            self.frames_sent[w] = {k.value: 0 for k in FrameKind}
        self.recorder = MetricsRecorder(scenario, [nd.id for nd in self.nodes])

    # ----------------------------------------------------------- geometry
    def _update_geometry(self) -> None:
        n = len(self.nodes)
        self.path_loss = [[0.0] * n for _ in range(n)]
        for a in range(n):
            for b in range(a + 1, n):
                d = self.nodes[a].position.distance_to(self.nodes[b].position)
                pl = path_loss_db(d, self.channel)
                self.path_loss[a][b] = self.path_loss[b][a] = pl

    def shadowing(self, a: int, b: int) -> float:
        if self.channel.shadowing_sigma_db == 0:
            return 0.0
        i, j = (a, b) if a < b else (b, a)
        now = self.events.now
        t = self._shadow_t[i][j]
        if t < 0 or now - t >= self.coherence_ns:
            rng = self._shadow_rng.get((i, j))
            if rng is None:
                rng = rng_stream(self.sc.seed,
                                 f"shadowing/{self.nodes[i].id.label()}/{self.nodes[j].id.label()}")
                self._shadow_rng[(i, j)] = rng
            self._shadow[i][j] = float(rng.normal(0.0, self.channel.shadowing_sigma_db))
            self._shadow_t[i][j] = now
        return self._shadow[i][j]

    # ------------------------------------------------------------ helpers
    @property
    def now(self) -> int:
        return self.events.now

    def at(self, delay_ns: int, kind: str, fn: Callable, *args) -> Event:
        return self.events.schedule(self.events.now + int(delay_ns), kind, fn, *args)

    def log(self, event: str, **info) -> None:
        if self.trace is not None:
            self.trace.append((self.events.now, event, info))

    def charge(self, node: Node, amount: float) -> None:
        if node.battery.exempt or not node.alive or amount <= 0:
            return
        before = node.battery.residual
        drain(node.battery, amount)
        self.drain_log[node.id].append(before - node.battery.residual
                                       if not node.battery.alive else amount)
        if not node.battery.alive:
            self._kill(node)

    def _kill(self, node: Node) -> None:
        node.alive = False
        node.death_time = self.now
        node.activity = None
        node.packets.clear()
        node.forwards.clear()
        node.lock = None
        self.log("death", node=node.id)

    def channel_busy(self, node: Node) -> bool:
        total = 0.0
        idx = node.idx
        now = self.events.now
        for t in self.active:
            if t.src is not node and t.end > now:
                total += t.rx_mw[idx]
        return total >= self.cca_mw

    # ----------------------------------------------------- transmissions
    def transmit(self, node: Node, frame: Frame, on_end: Optional[Callable] = None) -> None:
        """Put ``frame`` on the air now (or right after the node's current
        transmission)."""
        if not node.alive:
            return
        if node.tx is not None:
            self.events.schedule(node.tx.end, "tx-deferred", self.transmit, node, frame, on_end)
            return
        now = self.now
        kind = frame.kind
        end = now + self.airtime_ns[kind]
        n = len(self.nodes)
        src_idx = node.idx
        rx_dbm = [-math.inf] * n
        rx_mw = [0.0] * n
        pl_row = self.path_loss[src_idx]
        for other in self.nodes:
            j = other.idx
            if j == src_idx:
                continue
            p = self.tx_power - pl_row[j] + self.shadowing(src_idx, j)
            rx_dbm[j] = p
            rx_mw[j] = 10.0 ** (p / 10.0)
        tx = Transmission(self._tx_count, frame, node, now, end, rx_mw, rx_dbm, on_end)
        self._tx_count += 1
        for other_tx in self.active:
            if other_tx.end <= now:
                continue
            other_tx.overlaps.append(tx)
            tx.overlaps.append(other_tx)
        self.active.append(tx)
        node.tx = tx
        if node.lock is not None:              # half duplex: drop what it was hearing
            self._abort_reception(node)
        for other in self.nodes:
            if other is node or not other.alive or other.tx is not None:
                continue
            p = rx_dbm[other.idx]
            if p < self.sens_dbm:
                continue
            cur = other.lock
            if cur is None:
                other.lock = tx
            elif cur.start == now and p > cur.rx_dbm[other.idx]:
                other.lock = tx
        self.frames_sent[node.id.wban][kind.value] += 1
        self.log("tx-start", tx=tx.uid, src=node.id, kind=kind.value, dst=frame.dst,
                 start=now, end=end)
        self.events.schedule(end, "tx-end", self._end_tx, tx)
        self.charge(node, self.tx_cost[kind])

    def _abort_reception(self, node: Node) -> None:
        tx = node.lock
        node.lock = None
        if self._relevant(node, tx.frame):
            elapsed = (self.now - tx.start) / NS_PER_S
            self.charge(node, self.sc.energy.p_rx_circuit * elapsed)

    @staticmethod
    def _relevant(node: Node, frame: Frame) -> bool:
        return (frame.src.wban == node.id.wban
                and (frame.dst is None or frame.dst == node.id))

    def _end_tx(self, tx: Transmission) -> None:
        self.active.remove(tx)
        src = tx.src
        if src.tx is tx:
            src.tx = None
        frame = tx.frame
        self.log("tx-end", tx=tx.uid, src=src.id, kind=frame.kind.value, dst=frame.dst)
        now_ms = self.now / NS_PER_MS
        deliveries = []
        busy = {o.src.idx for o in tx.overlaps}
        for node in self.nodes:
            if node is src or not node.alive:
                continue
            locked = node.lock is tx
            if locked:
                node.lock = None
            relevant = self._relevant(node, frame)
            if not (locked or relevant) or node.idx in busy:
                continue
            idx = node.idx
            p_dbm = tx.rx_dbm[idx]
            interf = [o.rx_dbm[idx] for o in tx.overlaps if o.src is not node]
            total = self.noise_mw + sum(o.rx_mw[idx] for o in tx.overlaps if o.src is not node)
            sinr = 10.0 * math.log10(tx.rx_mw[idx] / total)
            if relevant:
                self.recorder.log_sinr(node.id, self.now, sinr)
                if locked:
                    self.charge(node, self.rx_cost[frame.kind])
            if locked and node.alive and p_dbm >= self.sens_dbm and meets_threshold(sinr, self.params.sinr_thr):
                deliveries.append((node, RxInfo(p_dbm, interf, sinr, now_ms)))
        for node, info in deliveries:
            self.log("rx", tx=tx.uid, node=node.id, src=src.id, kind=frame.kind.value,
                     sinr=info.sinr, rx_dbm=info.rx_dbm,
                     interferers=sorted(o.uid for o in tx.overlaps if o.src is not node))
            if node.alive and frame.src.wban == node.id.wban:
                node.agent.on_frame(node, frame, info)
        if tx.on_end is not None and src.alive:
            tx.on_end()

    def csma_send(self, node: Node, frame: Frame, on_end: Callable, on_fail: Callable,
                  initial_backoff: bool = True, guard: Callable[[], bool] = lambda: True,
                  on_start: Optional[Callable] = None,
                  recheck: Optional[Callable[[], bool]] = None) -> None:
        """Carrier-sense then transmit, backing off while the medium is busy.

        ``guard`` is re-checked before each attempt; a false result abandons
        the send silently (the owning activity was superseded). A false
        ``recheck`` abandons it through ``on_fail``."""
        state = BackoffState(self.mac.min_be)

        def draw_delay() -> int:
            upper = 2 ** state.backoff_exponent - 1
            draw = int(node.rng_backoff.integers(0, upper + 1))
            us = backoff_delay(state, draw, self.mac, self.params.max_retries)
            return int(round(us * NS_PER_US))

        def attempt() -> None:
            if not node.alive or not guard():
                return
            if recheck is not None and not recheck():
                on_fail()
                return
            if node.tx is not None or self.channel_busy(node):
                state.register_busy(self.mac)
                if state.attempt_count >= self.params.max_retries:
                    self.log("csma-giveup", node=node.id, kind=frame.kind.value)
                    on_fail()
                    return
                self.at(draw_delay(), "backoff", attempt)
                return
            if on_start is not None:
                on_start()
            self.transmit(node, frame, on_end)

        if initial_backoff:
            self.at(draw_delay(), "backoff", attempt)
        else:
            self.at(self.turnaround_ns, "cca", attempt)

    def send_after_turnaround(self, node: Node, frame: Frame,
                              on_end: Optional[Callable] = None) -> None:
        self.at(self.turnaround_ns, "reply", self.transmit, node, frame, on_end)

    # ------------------------------------------------------------- traffic
    def _generate(self, node: Node, period_ns: int) -> None:
        if not node.alive:
            return
        node.packets.append(Packet(node.id, node.next_seq, self.now))
        node.next_seq += 1
        self.recorder.generated[node.id.wban] += 1
        node.agent.try_start(node)
        self.at(period_ns, "traffic", self._generate, node, period_ns)

    def _sample(self, final: bool = False) -> None:
        idle = self.sc.energy.idle_power
        period_ns = int(round(self.sc.metric_sample_period * NS_PER_S))
        if idle > 0 and self.now > 0:
            dt = min(period_ns, self.now - self.recorder.last_sample_ns) / NS_PER_S
            for nd in self.nodes:
                if nd.alive and not nd.is_coordinator:
                    self.charge(nd, idle * dt)
        self.recorder.sample(self.now, self.nodes)
        nxt = self.now + period_ns
        if not final and nxt < self.end_ns:
            self.events.schedule(nxt, "metric-sample", self._sample)

    # ----------------------------------------------------------------- run
    def run(self) -> MetricsReport:
        sc = self.sc
        self.events.schedule(0, "metric-sample", self._sample)
        beacon_ns = ms_to_ns(self.params.beacon_period)
        for agent in self.agents:
            offset = int(rng_stream(sc.seed, f"beacon/wban{agent.index}").integers(0, beacon_ns))
            self.events.schedule(offset, "beacon-due", agent.beacon_due)
        for node in self.nodes:
            if node.is_coordinator:
                continue
            period = sc.wbans[node.id.wban].sensors[node.id.index - 1].sampling_period
            if math.isinf(period):
                continue
            period_ns = int(round(period * NS_PER_S))
            phase = int(rng_stream(sc.seed, f"traffic/{node.id.label()}").integers(0, period_ns))
            self.events.schedule(phase, "traffic", self._generate, node, period_ns)
        while True:
            t = self.events.peek_time()
            if t is None or t >= self.end_ns:
                break
            ev = self.events.pop_next()
            if ev.fn is not None:
                ev.fn(*ev.args)
        self.events.now = self.end_ns
        if self.end_ns > 0:
            self._sample(final=True)
        return self.recorder.finish(self)


def run_scenario(scenario: Scenario, trace: bool = False) -> MetricsReport:
    sim = Simulator(scenario, trace=trace)
    report = sim.run()
    if trace:
        report.trace = sim.trace
    return report


# ------------------------------------------------------------- protocol

class SourceExchange:
    """Source-side state of one packet: RTS, CTS collection, winner, DATA, ACK."""

    def __init__(self, node: Node, packet: Packet):
        self.node = node
        self.packet = packet
        self.stage = "rts"
        self.queue = CtsQueue()
        self.first_cts: Optional[NodeId] = None
        self.target: Optional[NodeId] = None
        self.timeout: Optional[Event] = None


class CandidateJob:
    def __init__(self, source: NodeId, audit: Optional[dict]):
        self.source = source
        self.audit = audit
        self.stage = "timer"
        self.timeout: Optional[Event] = None


class ForwardJob:
    def __init__(self, packet: Packet, prev_hop: Optional[NodeId]):
        self.packet = packet
        self.prev_hop = prev_hop
        self.attempts = 0
        self.stage = "await-data" if packet is None else "send"
        self.timeout: Optional[Event] = None


class WbanAgent:
    """Runs the superframe of one WBAN under scheme ``ima``, ``cooperative``
    (every RTS decoder answers, first CTS wins) or ``direct`` (single hop)."""

    def __init__(self, sim: Simulator, index: int, scheme: str, members: list[Node]):
        self.sim = sim
        self.index = index
        self.scheme = scheme
        self.coordinator = next(nd for nd in members if nd.is_coordinator)
        self.sensors = [nd for nd in members if not nd.is_coordinator]
        self.ima = ImaState(sim.params, sim.noise_dbm)
        self.superframe = -1
        self.beacon_ns = 0
        self.delivered: set[tuple[NodeId, int]] = set()
        self.cts_audit: list[dict] = []
        self.pool_sizes: list[int] = []
        self._last_pool: Optional[tuple] = None
        self.stats = {"superframes": 0, "cts_sent": 0, "relayed": 0, "direct": 0,
                      "dropped": 0, "winners": 0, "fallbacks": 0}
        p = sim.params
        mac = sim.mac
        self.window_ns = (ms_to_ns(p.cts_window) + sim.airtime_ns[FrameKind.CTS]
                          + (2 ** mac.min_be) * sim.slot_ns)
        self.ack_wait_ns = sim.turnaround_ns + sim.airtime_ns[FrameKind.ACK] + sim.slot_ns
        self.cts_wait_ns = (sim.turnaround_ns + sim.airtime_ns[FrameKind.CTS]
                            + p.max_retries * (2 ** mac.max_be) * sim.slot_ns)
        self.data_wait_ns = (sim.airtime_ns[FrameKind.WINNER] + sim.airtime_ns[FrameKind.DATA]
                             + sim.turnaround_ns + p.max_retries * (2 ** mac.max_be) * sim.slot_ns)

    # -------------------------------------------------------- superframe
    def beacon_due(self) -> None:
        sim = self.sim
        self.run_superframe_phase_sequence(sim.now)
        sim.at(ms_to_ns(sim.params.beacon_period), "beacon-due", self.beacon_due)

    def run_superframe_phase_sequence(self, time: int) -> None:
        """Open a new superframe: clear the candidate sets and broadcast the
        beacon. The RTS, CTS and CTS-reception phases then unfold from the
        frame handlers below."""
        sim = self.sim
        self.superframe += 1
        self.stats["superframes"] += 1
        self.beacon_ns = time
        self.ima.new_superframe(self.superframe)
        if sim.sc.mobility:
            self._move_sensors()
        beacon = make_frame(FrameKind.BEACON, self.coordinator.id, None, sim.mac,
                            superframe=self.superframe)
        sim.log("beacon", wban=self.index, superframe=self.superframe)
        sim.transmit(self.coordinator, beacon)

    def _move_sensors(self) -> None:
        sim = self.sim
        for nd in self.sensors:
            if nd.placed:
                continue
            rng = rng_stream(sim.sc.seed, f"mobility/{nd.id.label()}/{self.superframe}")
            nd.position = draw_body_position(rng, self.coordinator.position,
                                             sim.sc.body_radius, sim.sc.space)
        sim._update_geometry()

    # ----------------------------------------------------------- sources
    def try_start(self, node: Node) -> None:
        if (not node.alive or node.is_coordinator or node.activity is not None
                or node.synced != self.superframe):
            return
        if node.forwards:
            job = ForwardJob(node.forwards.popleft(), None)
            node.activity = job
            self._forward_send(node, job)
            return
        if not node.packets:
            return
        ex = SourceExchange(node, node.packets[0])
        node.activity = ex
        sim = self.sim
        if self.scheme == "direct":
            rts = make_frame(FrameKind.RTS, node.id, self.coordinator.id, sim.mac,
                             seq=ex.packet.seq)
        else:
            rts = make_frame(FrameKind.RTS, node.id, None, sim.mac, seq=ex.packet.seq)
        sim.csma_send(node, rts, lambda: self._rts_done(ex), lambda: self._exchange_failed(ex),
                      guard=lambda: node.activity is ex)

    def _rts_done(self, ex: SourceExchange) -> None:
        node = ex.node
        if node.activity is not ex:
            return
        self.ima.on_rts_sent(node.id)
        ex.stage = "cts"
        wait = self.cts_wait_ns if self.scheme == "direct" else self.window_ns
        ex.timeout = self.sim.at(wait, "cts-window-close", self._cts_window_closed, ex)

    def _cts_window_closed(self, ex: SourceExchange) -> None:
        node = ex.node
        if node.activity is not ex or ex.stage != "cts":
            return
        sim = self.sim
        if self.scheme == "direct":
            self._exchange_failed(ex)
            return
        winner = select_winner(ex.queue) if self.scheme == "ima" else ex.first_cts
        ex.stage = "winner"
        if winner is not None:
            self.stats["winners"] += 1
            ex.target = winner
            frame = make_frame(FrameKind.WINNER, node.id, None, sim.mac, relay=winner)
            sim.log("winner", source=node.id, relay=winner)
            sim.transmit(node, frame, lambda: self._send_data(ex))
        else:
            self.stats["fallbacks"] += 1
            ex.target = self.coordinator.id
            self._send_data(ex)

    def _send_data(self, ex: SourceExchange) -> None:
        node = ex.node
        if node.activity is not ex:
            return
        sim = self.sim
        ex.stage = "data"
        data = make_frame(FrameKind.DATA, node.id, ex.target, sim.mac,
                          origin=ex.packet.origin, seq=ex.packet.seq)
        sim.csma_send(node, data, lambda: self._data_done(ex), lambda: self._exchange_failed(ex),
                      initial_backoff=False, guard=lambda: node.activity is ex)

    def _data_done(self, ex: SourceExchange) -> None:
        if ex.node.activity is not ex:
            return
        ex.stage = "ack"
        ex.timeout = self.sim.at(self.ack_wait_ns, "timer-expiry", self._ack_timeout, ex)

    def _ack_timeout(self, ex: SourceExchange) -> None:
        if ex.node.activity is ex and ex.stage == "ack":
            self._exchange_failed(ex)

    def _exchange_failed(self, ex: SourceExchange) -> None:
        node = ex.node
        if node.activity is not ex:
            return
        if ex.timeout is not None:
            ex.timeout.cancel()
        ex.packet.attempts += 1
        node.activity = None
        if ex.packet.attempts >= self.sim.params.max_retries:
            node.packets.popleft()
            self.stats["dropped"] += 1
            self.sim.log("drop", node=node.id, seq=ex.packet.seq)
        self.try_start(node)

    def _exchange_succeeded(self, ex: SourceExchange) -> None:
        node = ex.node
        if ex.timeout is not None:
            ex.timeout.cancel()
        node.packets.popleft()
        node.activity = None
        if ex.target == self.coordinator.id:
            self.stats["direct"] += 1
        else:
            self.stats["relayed"] += 1
        self.try_start(node)

    # ------------------------------------------------------------ relays
    def _consider_candidate(self, node: Node, frame: Frame, info: RxInfo) -> None:
        sim = self.sim
        source = frame.src
        if self.scheme == "ima":
            self.ima.on_rts_received(node.id, source, info.rx_dbm, info.interferers_dbm,
                                     info.time_ms)
        else:
            self.ima.sets.N.setdefault(source, set()).add(node.id)
        if node.activity is not None or node.id == source:
            return
        p = sim.params
        if self.scheme == "ima":
            audit = self.ima.evaluate(node.id, source, node.battery.residual)
            if not audit["eligible"]:
                return
            rand = float(node.rng_timer.uniform(0.0, p.timer_rand_max))
            wait_ms = cts_wait_time(audit["diff"], p, rand)
        else:
            audit = None
            wait_ms = float(node.rng_timer.uniform(0.0, p.cts_window))
        self._pool_count(source)
        job = CandidateJob(source, audit)
        node.activity = job
        job.timeout = sim.at(ms_to_ns(wait_ms), "timer-expiry", self._cts_timer, node, job)

    def _pool_count(self, source: NodeId) -> None:
        key = (self.superframe, source)
        if self._last_pool == key:
            self.pool_sizes[-1] += 1
        else:
            self.pool_sizes.append(1)
            self._last_pool = key

    def _cts_timer(self, node: Node, job: CandidateJob) -> None:
        if node.activity is not job:
            return
        sim = self.sim
        cts = make_frame(FrameKind.CTS, node.id, job.source, sim.mac,
                         residual_energy=node.battery.residual)

        def sent():
            if node.activity is not job:
                return
            job.stage = "await-winner"
            job.timeout = sim.at(self.window_ns + sim.airtime_ns[FrameKind.WINNER]
                                 + 2 * sim.slot_ns, "timer-expiry", self._release, node, job)

        def still_eligible():
            # backoff may have carried us past the next beacon
            if self.scheme != "ima":
                return True
            audit = self.ima.evaluate(node.id, job.source, node.battery.residual)
            if not audit["eligible"] or audit["superframe"] != job.audit["superframe"]:
                return False
            job.audit = audit
            return True

        def started():
            self.stats["cts_sent"] += 1
            if job.audit is not None:
                self.cts_audit.append(dict(job.audit, time=sim.now))

        sim.csma_send(node, cts, sent, lambda: self._release(node, job), initial_backoff=False,
                      guard=lambda: node.activity is job, on_start=started,
                      recheck=still_eligible)

    def _count_cts(self) -> None:
        self.stats["cts_sent"] += 1

    def _release(self, node: Node, job) -> None:
        if node.activity is job:
            if job.timeout is not None:
                job.timeout.cancel()
            node.activity = None
            self.try_start(node)

    # ------------------------------------------------------------- frames
    def on_frame(self, node: Node, frame: Frame, info: RxInfo) -> None:
        kind = frame.kind
        sim = self.sim
        if kind is FrameKind.BEACON:
            if node.is_coordinator:
                return
            node.synced = frame.payload["superframe"]
            node.beacon_ms = info.time_ms
            self.ima.on_beacon_received(node.id, info.rx_dbm, info.interferers_dbm, info.time_ms)
            self.try_start(node)
        elif kind is FrameKind.RTS:
            if node.is_coordinator:
                if frame.dst == node.id:
                    cts = make_frame(FrameKind.CTS, node.id, frame.src, sim.mac)
                    sim.csma_send(node, cts, lambda: None, lambda: None, initial_backoff=False,
                                  on_start=self._count_cts)
            elif frame.dst is None:
                self._consider_candidate(node, frame, info)
        elif kind is FrameKind.CTS:
            ex = node.activity
            if frame.dst != node.id or not isinstance(ex, SourceExchange) or ex.stage != "cts":
                return
            if self.scheme == "direct":
                ex.timeout.cancel()
                ex.target = self.coordinator.id
                self._send_data(ex)
                return
            self.ima.on_cts_decoded(node.id)
            if ex.first_cts is None:
                ex.first_cts = frame.src
            enqueue_cts(ex.queue, CtsEntry(frame.src, frame.payload["residual_energy"],
                                           info.sinr, info.time_ms))
        elif kind is FrameKind.WINNER:
            job = node.activity
            if not isinstance(job, CandidateJob) or job.source != frame.src:
                return
            if frame.payload["relay"] == node.id:
                job.timeout.cancel()
                fwd = ForwardJob(None, frame.src)
                node.activity = fwd
                fwd.timeout = sim.at(self.data_wait_ns, "timer-expiry", self._release, node, fwd)
            else:
                self._release(node, job)
        elif kind is FrameKind.DATA:
            if frame.dst != node.id:
                return
            ack = make_frame(FrameKind.ACK, node.id, frame.src, sim.mac, seq=frame.payload["seq"])
            packet = Packet(frame.payload["origin"], frame.payload["seq"], sim.now)
            if node.is_coordinator:
                sim.send_after_turnaround(node, ack)
                key = (packet.origin, packet.seq)
                if key not in self.delivered:
                    self.delivered.add(key)
                    sim.recorder.record_delivery(self.index, sim.now)
                    sim.log("delivery", wban=self.index, origin=packet.origin, seq=packet.seq)
                return
            job = node.activity
            if isinstance(job, ForwardJob) and job.stage == "await-data" and job.prev_hop == frame.src:
                job.timeout.cancel()
                job.packet = packet
                job.stage = "send"
                sim.send_after_turnaround(node, ack,
                                          lambda: self._forward_send(node, job))
            else:
                # duplicate after a lost ACK: acknowledge, forward later
                sim.send_after_turnaround(node, ack)
                if not any(p.origin == packet.origin and p.seq == packet.seq for p in node.forwards):
                    node.forwards.append(packet)
        elif kind is FrameKind.ACK:
            act = node.activity
            if frame.dst != node.id:
                return
            if isinstance(act, SourceExchange) and act.stage == "ack":
                self._exchange_succeeded(act)
            elif isinstance(act, ForwardJob) and act.stage == "ack":
                act.timeout.cancel()
                node.activity = None
                self.try_start(node)

    # ---------------------------------------------------------- forwarding
    def _forward_send(self, node: Node, job: ForwardJob) -> None:
        if node.activity is not job:
            return
        sim = self.sim
        job.stage = "send"
        data = make_frame(FrameKind.DATA, node.id, self.coordinator.id, sim.mac,
                          origin=job.packet.origin, seq=job.packet.seq)

        def sent():
            if node.activity is not job:
                return
            job.stage = "ack"
            job.timeout = sim.at(self.ack_wait_ns, "timer-expiry", self._forward_failed, node, job)

        sim.csma_send(node, data, sent, lambda: self._forward_failed(node, job),
                      guard=lambda: node.activity is job)

    def _forward_failed(self, node: Node, job: ForwardJob) -> None:
        if node.activity is not job or job.stage not in ("send", "ack"):
            return
        job.attempts += 1
        if job.attempts >= self.sim.params.max_retries:
            self.stats["dropped"] += 1
            node.activity = None
            self.try_start(node)
            return
        self._forward_send(node, job)
