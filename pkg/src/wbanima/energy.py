"""Battery state and per-frame energy accounting (millijoules throughout)."""
from __future__ import annotations

from dataclasses import dataclass, field

from .channel import dbm_to_mw


@dataclass(frozen=True)
class EnergyParams:
    p_tx_circuit: float = 30.0   # mW
    p_rx_circuit: float = 25.0   # mW
    tx_power_dbm: float = -10.0  # radiated power, also the node transmit power
    idle_power: float = 0.0      # mW, charged while alive and not tx/rx

    def __post_init__(self):
        for name in ("p_tx_circuit", "p_rx_circuit", "idle_power"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def tx_radiated(self) -> float:
        return dbm_to_mw(self.tx_power_dbm)


def tx_energy(frame, mac, e: EnergyParams) -> float:
    """Energy to send ``frame`` (anything with ``size_bits``) at ``mac.bit_rate``."""
    return (e.p_tx_circuit + e.tx_radiated) * (frame.size_bits / mac.bit_rate)


def rx_energy(frame, mac, e: EnergyParams) -> float:
    return e.p_rx_circuit * (frame.size_bits / mac.bit_rate)


@dataclass
class Battery:
    """Residual energy store.

    ``exempt`` batteries (coordinators) never drain. Drains are accumulated
    with Neumaier compensation so ``initial - residual`` tracks the exact sum
    of the recorded drains.
    """

    initial: float = 150.0
    exempt: bool = False
    drained: float = 0.0
    _comp: float = field(default=0.0, repr=False)
    entries: int = 0

    def __post_init__(self):
        if self.initial < 0:
            raise ValueError("initial energy must be >= 0")

    @property
    def residual(self) -> float:
        total = self.drained + self._comp
        return max(0.0, self.initial - total)

    @property
    def alive(self) -> bool:
        return self.exempt or self.residual > 0.0

    @property
    def ledger_total(self) -> float:
        return self.drained + self._comp

    def _accumulate(self, x: float) -> None:
        t = self.drained + x
        if abs(self.drained) >= abs(x):
            self._comp += (self.drained - t) + x
        else:
            self._comp += (x - t) + self.drained
        self.drained = t
        self.entries += 1


def drain(battery: Battery, amount: float) -> tuple[Battery, bool]:
    """Remove ``amount`` mJ (clamped at empty). Returns the battery and whether
    it is still alive."""
    if not amount >= 0:
        raise ValueError(f"drain amount must be non-negative, got {amount!r}")
    if battery.exempt or amount == 0:
        return battery, battery.alive
    taken = min(amount, battery.residual)
    if taken > 0:
        battery._accumulate(taken)
        if taken < amount:
            # clamp exactly at zero regardless of rounding in the ledger
            battery._comp = battery.initial - battery.drained
    return battery, battery.alive


def wban_lifetime(batteries: list[Battery]) -> float:
    if not batteries:
        raise ValueError("wban_lifetime needs at least one battery")
    return sum(b.residual for b in batteries)
