"""IMA relay selection: candidate sets, Diff filtering, CTS timers and the
two-entry CTS queue.

Everything here is a deterministic state machine or a pure function. The
event loop in :mod:`wbanima.engine` drives it once per superframe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .channel import meets_threshold, sample_is_valid, sinr_db, snr_db


class NodeId(NamedTuple):
    """(wban_index, node_index); node_index 0 is the coordinator."""

    wban: int
    index: int

    @property
    def is_coordinator(self) -> bool:
        return self.index == 0

    def label(self) -> str:
        return f"wban{self.wban}/node{self.index}"


def coordinator_of(node: NodeId) -> NodeId:
    return NodeId(node.wban, 0)


@dataclass(frozen=True)
class ProtocolParams:
    sinr_thr: float = 17.3        # dB
    diff_margin: float = 10.0     # dB
    timer_constant: float = 10.0  # ms
    timer_rand_max: float = 2.0   # ms
    timer_epsilon: float = 0.1    # dB
    cts_window: float = 8.0       # ms
    max_retries: int = 3
    beacon_period: float = 500.0  # ms

    def __post_init__(self):
        for name in ("sinr_thr", "diff_margin", "timer_constant", "timer_rand_max",
                     "timer_epsilon", "cts_window", "max_retries", "beacon_period"):
            value = getattr(self, name)
            if math.isnan(value) or value <= 0:
                raise ValueError(f"{name} must be > 0, got {value!r}")
        if self.cts_window < self.timer_rand_max:
            raise ValueError("cts_window must be >= timer_rand_max")


@dataclass
class RelayCandidateState:
    candidate: NodeId
    snr_to_coordinator: float
    sinr_to_source: float
    residual_energy: float
    beacon_rx_time: float
    rts_rx_time: float

    def __post_init__(self):
        if self.residual_energy < 0:
            raise ValueError("residual_energy must be >= 0")

    @property
    def diff(self) -> float:
        return abs(self.snr_to_coordinator - self.sinr_to_source)


class CtsEntry(NamedTuple):
    relay: NodeId
    residual_energy: float
    sinr: float
    rx_time: float


@dataclass
class CtsQueue:
    """Keeps the CTS of the last two distinct relays heard, oldest first."""

    capacity: int = 2
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def relays(self) -> list[NodeId]:
        return [e.relay for e in self.entries]


def enqueue_cts(queue: CtsQueue, entry: CtsEntry) -> CtsQueue:
    queue.entries = [e for e in queue.entries if e.relay != entry.relay]
    queue.entries.append(entry)
    queue.entries.sort(key=lambda e: e.rx_time)
    while len(queue.entries) > queue.capacity:
        queue.entries.pop(0)
    return queue


def select_winner(queue: CtsQueue) -> Optional[NodeId]:
    """Highest residual energy wins; ties go to higher SINR, then the smaller id."""
    if not queue.entries:
        return None
    best = min(queue.entries, key=lambda e: (-e.residual_energy, -e.sinr, e.relay))
    return best.relay


def build_candidate_set(r: Iterable[NodeId], n_i: Iterable[NodeId],
                        source: Optional[NodeId] = None) -> set[NodeId]:
    q = set(r) & set(n_i)
    return {n for n in q if n != source and not n.is_coordinator}


def check_beacon_validity(state: RelayCandidateState, params: ProtocolParams) -> bool:
    return sample_is_valid(state.beacon_rx_time, state.rts_rx_time, params.beacon_period)


def filter_by_diff(states: dict[NodeId, RelayCandidateState],
                   params: ProtocolParams) -> set[NodeId]:
    return {n for n, st in states.items() if st.diff <= params.diff_margin}


def cts_wait_time(diff: float, params: ProtocolParams, rand_draw: float) -> float:
    """CTS back-off in ms: a random part plus ``timer_constant / (diff + eps)``,
    capped at the CTS window. Smaller Diff waits longer."""
    if diff < 0 or math.isnan(diff):
        raise ValueError(f"diff must be >= 0, got {diff!r}")
    if math.isinf(diff):
        return min(params.cts_window, rand_draw)
    return min(params.cts_window, rand_draw + params.timer_constant / (diff + params.timer_epsilon))


@dataclass
class CandidateSets:
    """Per-superframe sets R, S, N_i and M. Q_i is always derived."""

    R: set = field(default_factory=set)
    S: set = field(default_factory=set)
    N: dict = field(default_factory=dict)
    M: set = field(default_factory=set)

    def clear(self) -> None:
        self.R.clear()
        self.S.clear()
        self.N.clear()
        self.M.clear()

    def Q(self, source: NodeId) -> set[NodeId]:
        return build_candidate_set(self.R, self.N.get(source, ()), source)


@dataclass
class _BeaconInfo:
    snr: float
    sinr: float
    time: float


class ImaState:
    """Protocol bookkeeping for one WBAN.

    Stores the beacon and RTS measurements each node made during the current
    superframe and answers the question "should this node send a CTS to that
    source, and when?".
    """

    def __init__(self, params: ProtocolParams, noise_dbm: float):
        self.params = params
        self.noise_dbm = noise_dbm
        self.sets = CandidateSets()
        self.superframe = -1
        self._beacon: dict[NodeId, _BeaconInfo] = {}
        self._rts: dict[tuple[NodeId, NodeId], tuple[float, float]] = {}

    def new_superframe(self, index: int) -> None:
        self.superframe = index
        self.sets.clear()
        self._beacon.clear()
        self._rts.clear()

    def on_beacon_received(self, node: NodeId, beacon_rx_power: float,
                           interferer_powers: Iterable[float], time: float) -> bool:
        sinr = sinr_db(beacon_rx_power, interferer_powers, self.noise_dbm)
        self._beacon[node] = _BeaconInfo(snr_db(beacon_rx_power, self.noise_dbm), sinr, time)
        if meets_threshold(sinr, self.params.sinr_thr):
            self.sets.R.add(node)
            return True
        self.sets.R.discard(node)
        return False

    def on_rts_sent(self, source: NodeId) -> None:
        self.sets.S.add(source)

    def on_rts_received(self, node: NodeId, source: NodeId, rts_rx_power: float,
                        interferer_powers: Iterable[float], time: float) -> bool:
        sinr = sinr_db(rts_rx_power, interferer_powers, self.noise_dbm)
        self._rts[(node, source)] = (sinr, time)
        members = self.sets.N.setdefault(source, set())
        if meets_threshold(sinr, self.params.sinr_thr):
            members.add(node)
            return True
        members.discard(node)
        return False

    def on_cts_decoded(self, node: NodeId) -> None:
        self.sets.M.add(node)

    def candidate_state(self, node: NodeId, source: NodeId,
                        residual_energy: float) -> Optional[RelayCandidateState]:
        beacon = self._beacon.get(node)
        rts = self._rts.get((node, source))
        if beacon is None or rts is None:
            return None
        return RelayCandidateState(node, beacon.snr, rts[0], residual_energy,
                                   beacon.time, rts[1])

    def evaluate(self, node: NodeId, source: NodeId, residual_energy: float) -> dict:
        """Run the candidate pipeline for ``node`` answering ``source``.

        Returns a record with the individual checks and the overall verdict
        under key ``eligible``; the record doubles as an audit entry.
        """
        in_q = node in self.sets.Q(source)
        state = self.candidate_state(node, source, residual_energy)
        valid = state is not None and check_beacon_validity(state, self.params)
        diff = state.diff if state is not None else math.inf
        passes_diff = diff <= self.params.diff_margin
        return {
            "node": node,
            "source": source,
            "superframe": self.superframe,
            "in_R": node in self.sets.R,
            "in_N": node in self.sets.N.get(source, ()),
            "in_Q": in_q,
            "valid": valid,
            "diff": diff,
            "passes_diff": passes_diff,
            "eligible": in_q and valid and passes_diff,
        }
