"""CSMA/CA building blocks: frames, MAC parameters, backoff and reception.

The event-driven parts (carrier sensing against live transmissions, the
retry loop) live in :mod:`wbanima.engine`; this module keeps the decisions
as pure functions so they can be checked in isolation.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, NamedTuple, Optional

from .channel import dbm_to_mw, meets_threshold, sinr_db


class FrameKind(str, enum.Enum):
    BEACON = "BEACON"
    RTS = "RTS"
    CTS = "CTS"
    DATA = "DATA"
    ACK = "ACK"
    WINNER = "WINNER"


# frames sent without carrier sensing
IMMEDIATE_KINDS = frozenset({FrameKind.BEACON, FrameKind.ACK, FrameKind.WINNER})

DEFAULT_SIZES = {
    "BEACON": 152,
    "RTS": 160,
    "CTS": 176,
    "DATA": 1024,
    "ACK": 88,
    "WINNER": 120,
}


@dataclass(frozen=True)
class MacParams:
    bit_rate: float = 250_000.0          # bit/s
    slot_duration: float = 320.0         # µs
    min_be: int = 3
    max_be: int = 5
    cca_threshold_dbm: float = -84.7
    sensitivity_dbm: float = -84.7
    turnaround: float = 192.0            # µs between a reception and the reply
    sizes_bits: dict = field(default_factory=lambda: dict(DEFAULT_SIZES))

    def __post_init__(self):
        if self.bit_rate <= 0:
            raise ValueError("bit_rate must be > 0")
        if self.slot_duration <= 0:
            raise ValueError("slot_duration must be > 0")
        if not 0 <= self.min_be <= self.max_be:
            raise ValueError("need 0 <= min_be <= max_be")
        missing = set(DEFAULT_SIZES) - set(self.sizes_bits)
        if missing:
            raise ValueError(f"sizes_bits missing {sorted(missing)}")
        unknown = set(self.sizes_bits) - set(DEFAULT_SIZES)
        if unknown:
            raise ValueError(f"unknown frame kinds in sizes_bits: {sorted(unknown)}")
        for kind, bits in self.sizes_bits.items():
            if not bits > 0:
                raise ValueError(f"size of {kind} must be > 0")

    def size_of(self, kind: FrameKind) -> int:
        return int(self.sizes_bits[FrameKind(kind).value])

    def airtime_ms(self, size_bits: int) -> float:
        return size_bits / self.bit_rate * 1000.0


@dataclass
class Frame:
    kind: FrameKind
    src: Any
    dst: Optional[Any]           # None means broadcast
    size_bits: int
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = FrameKind(self.kind)
        if not self.size_bits > 0:
            raise ValueError("size_bits must be > 0")

    @property
    def broadcast(self) -> bool:
        return self.dst is None

    def airtime_ms(self, mac: MacParams) -> float:
        return mac.airtime_ms(self.size_bits)


def make_frame(kind: FrameKind, src, dst, mac: MacParams, **payload) -> Frame:
    return Frame(FrameKind(kind), src, dst, mac.size_of(kind), payload)


@dataclass
class BackoffState:
    backoff_exponent: int
    attempt_count: int = 0

    def register_busy(self, mac: MacParams) -> None:
        self.attempt_count += 1
        self.backoff_exponent = min(self.backoff_exponent + 1, mac.max_be)


def backoff_delay(state: BackoffState, rand_draw: int, mac: MacParams,
                  max_retries: int) -> Optional[float]:
    """Backoff duration in µs, or ``None`` once the retry budget is spent."""
    if state.attempt_count >= max_retries:
        return None
    upper = 2 ** state.backoff_exponent - 1
    if not 0 <= rand_draw <= upper:
        raise ValueError(f"draw {rand_draw} outside [0, {upper}]")
    return rand_draw * mac.slot_duration


def carrier_sense(received_powers_dbm: Iterable[float], cca_threshold_dbm: float) -> bool:
    """True (busy) when the summed power of ongoing transmissions reaches the
    CCA threshold."""
    total = sum(dbm_to_mw(p) for p in received_powers_dbm)
    return total > 0 and total >= dbm_to_mw(cca_threshold_dbm)


class Reception(NamedTuple):
    decoded: bool
    sinr_db: float


def resolve_reception(rx_power_dbm: float, interferer_powers_dbm: Iterable[float],
                      noise_dbm: float, mac: MacParams, sinr_thr: float) -> Reception:
    """Decide whether a frame received at ``rx_power_dbm`` survives the
    interferers that overlapped it."""
    sinr = sinr_db(rx_power_dbm, interferer_powers_dbm, noise_dbm)
    ok = rx_power_dbm >= mac.sensitivity_dbm and meets_threshold(sinr, sinr_thr)
    return Reception(ok, sinr)


def capture(candidates_dbm: dict, noise_dbm: float, mac: MacParams,
            sinr_thr: float) -> Optional[Any]:
    """Among frames overlapping at one receiver, return the key of the one that
    decodes (the strongest, if it clears the threshold against the rest)."""
    if not candidates_dbm:
        return None
    best = max(candidates_dbm, key=lambda k: candidates_dbm[k])
    others = [p for k, p in candidates_dbm.items() if k != best]
    res = resolve_reception(candidates_dbm[best], others, noise_dbm, mac, sinr_thr)
    return best if res.decoded else None


def slots_to_ms(n_slots: int, mac: MacParams) -> float:
    return n_slots * mac.slot_duration / 1000.0
