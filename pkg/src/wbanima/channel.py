"""Radio propagation, power bookkeeping and SINR/outage computations.

Powers are carried as plain floats in dBm at the interfaces; every sum of
powers is done in linear milliwatts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

# Distance floor for the log-distance model (co-located nodes).
MIN_DISTANCE_M = 0.1
# dB slack for threshold tests; the dBm -> mW -> dB round trip loses ~1e-14
THRESHOLD_SLACK_DB = 1e-9


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if not mw > 0.0:
        raise ValueError(f"power must be strictly positive, got {mw!r} mW")
    return 10.0 * math.log10(mw)


def _check_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            _check_finite(name, getattr(self, name))

    def distance_to(self, other: "Position") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))

    def within(self, space: Sequence[float]) -> bool:
        return all(0.0 <= c <= extent for c, extent in zip((self.x, self.y, self.z), space))

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.z]


@dataclass(frozen=True)
class ChannelModel:
    """Log-distance path loss with log-normal shadowing.

    ``reference_loss_db`` is the loss at 1 m (free space at 2.4 GHz by
    default). ``coherence_time`` is in milliseconds and governs how long a
    drawn shadowing value stays valid for a link.
    """

    path_loss_exponent: float = 4.22
    reference_loss_db: float = 40.05
    shadowing_sigma_db: float = 6.81
    noise_floor_dbm: float = -102.0
    coherence_time: float = 500.0

    def __post_init__(self):
        for name in ("path_loss_exponent", "reference_loss_db", "shadowing_sigma_db",
                     "noise_floor_dbm", "coherence_time"):
            _check_finite(name, getattr(self, name))
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be > 0")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")
        if self.coherence_time <= 0:
            raise ValueError("coherence_time must be > 0")


@dataclass(frozen=True)
class LinkSample:
    tx_node: object
    rx_node: object
    rx_power_dbm: float
    timestamp: float

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")


def path_loss_db(distance: float, model: ChannelModel) -> float:
    """Loss in dB at ``distance`` meters; distances below 0.1 m are clamped."""
    if not math.isfinite(distance) or distance < 0:
        raise ValueError(f"distance must be finite and non-negative, got {distance!r}")
    d = max(distance, MIN_DISTANCE_M)
    return model.reference_loss_db + 10.0 * model.path_loss_exponent * math.log10(d)


def received_power_dbm(tx_power: float, distance: float, shadowing_sample: float,
                       model: ChannelModel) -> float:
    _check_finite("tx_power", tx_power)
    _check_finite("shadowing_sample", shadowing_sample)
    return tx_power - path_loss_db(distance, model) + shadowing_sample


def sinr_db(desired: float, interferers: Iterable[float], noise: float) -> float:
    """Ratio of desired power to the summed interference plus noise, in dB."""
    _check_finite("desired", desired)
    _check_finite("noise", noise)
    total = dbm_to_mw(noise)
    for i in interferers:
        _check_finite("interferer", i)
        total += dbm_to_mw(i)
    return 10.0 * math.log10(dbm_to_mw(desired) / total)


def meets_threshold(sinr: float, threshold: float) -> bool:
    """Inclusive ``sinr >= threshold`` that tolerates round-off."""
    return sinr >= threshold - THRESHOLD_SLACK_DB


def snr_db(desired: float, noise: float) -> float:
    return sinr_db(desired, (), noise)


def sample_is_valid(sample_time: float, rts_time: float, window: float) -> bool:
    """True while a measurement taken at ``sample_time`` may be paired with an
    RTS received at ``rts_time`` (strictly less than ``window`` apart)."""
    if rts_time < sample_time:
        raise ValueError(f"rts_time {rts_time} precedes sample_time {sample_time}")
    return (rts_time - sample_time) < window


def outage_probability(sinr_samples: Sequence[float], threshold: float) -> float:
    if len(sinr_samples) == 0:
        raise ValueError("outage probability needs at least one SINR sample")
    hits = sum(1 for s in sinr_samples if s <= threshold)
    return hits / len(sinr_samples)
