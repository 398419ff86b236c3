"""Scenario description and its JSON configuration format.

A configuration document mirrors :class:`Scenario` field for field; unknown
keys are rejected with the line they appear on.
"""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .channel import ChannelModel, Position
from .energy import EnergyParams
from .ima import ProtocolParams
from .mac import MacParams

BASELINES = ("direct", "cooperative")


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class SensorConfig:
    position: Optional[Position] = None   # None: drawn around the coordinator
    sampling_period: float = 5.0          # seconds between generated packets

    def __post_init__(self):
        if not self.sampling_period > 0:
            raise ValueError("sampling_period must be > 0")


@dataclass(frozen=True)
class WbanConfig:
    coordinator_position: Position
    sensors: tuple = ()
    uses_ima: bool = False
    max_sensors: int = 8

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        if not 1 <= len(self.sensors) <= self.max_sensors:
            raise ValueError(f"a WBAN needs 1..{self.max_sensors} sensors, got {len(self.sensors)}")


@dataclass(frozen=True)
class Scenario:
    wbans: tuple
    space: tuple = (3.0, 3.0, 3.0)
    duration: float = 3000.0              # s
    seed: int = 0
    channel: ChannelModel = field(default_factory=ChannelModel)
    mac: MacParams = field(default_factory=MacParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    metric_sample_period: float = 10.0    # s
    initial_energy: float = 150.0         # mJ per sensor
    baseline: str = "direct"              # scheme run by WBANs with uses_ima = False
    body_radius: float = 1.0              # m, volume for unplaced sensors
    mobility: bool = False                # redraw unplaced sensors every superframe
    outage_thresholds: tuple = (10.0, 17.3, 25.0)
    subject: int = 0                      # WBAN cloned by compare/sweep

    def __post_init__(self):
        object.__setattr__(self, "wbans", tuple(self.wbans))
        object.__setattr__(self, "space", tuple(float(s) for s in self.space))
        object.__setattr__(self, "outage_thresholds", tuple(self.outage_thresholds))
        if not self.wbans:
            raise ValueError("a scenario needs at least one WBAN")
        if len(self.space) != 3 or any(not s > 0 for s in self.space):
            raise ValueError("space must be three positive extents")
        if not self.duration >= 0 or not math.isfinite(self.duration):
            raise ValueError("duration must be finite and >= 0")
        if not self.metric_sample_period > 0:
            raise ValueError("metric_sample_period must be > 0")
        if self.baseline not in BASELINES:
            raise ValueError(f"baseline must be one of {BASELINES}")
        if not 0 <= self.subject < len(self.wbans):
            raise ValueError("subject must index an existing WBAN")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        for w, wban in enumerate(self.wbans):
            if not wban.coordinator_position.within(self.space):
                raise ValueError(f"wban {w}: coordinator outside the space")
            for s, sensor in enumerate(wban.sensors):
                if sensor.position is not None and not sensor.position.within(self.space):
                    raise ValueError(f"wban {w} sensor {s + 1}: position outside the space")

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def with_subject_ima(self, uses_ima: bool) -> "Scenario":
        wbans = list(self.wbans)
        wbans[self.subject] = dataclasses.replace(wbans[self.subject], uses_ima=uses_ima)
        return self.replace(wbans=tuple(wbans))

    def digest(self) -> str:
        text = json.dumps(scenario_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------- conversion

_SECTIONS = {
    "channel": ChannelModel,
    "mac": MacParams,
    "energy": EnergyParams,
    "protocol": ProtocolParams,
}
_SCENARIO_KEYS = {f.name for f in dataclasses.fields(Scenario)}
_WBAN_KEYS = {"coordinator_position", "sensors", "uses_ima", "max_sensors"}
_SENSOR_KEYS = {"position", "sampling_period"}


def _line_of(text: Optional[str], key: str) -> Optional[int]:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _position(value, where: str) -> Optional[Position]:
    if value is None:
        return None
    if not (isinstance(value, (list, tuple)) and len(value) == 3):
        raise ValueError(f"{where}: position must be [x, y, z]")
    return Position(*(float(v) for v in value))


def _check_keys(obj: dict, allowed: set, where: str, text: Optional[str]) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}", _line_of(text, key))


def scenario_from_dict(data: dict, text: Optional[str] = None) -> Scenario:
    _check_keys(data, _SCENARIO_KEYS, "scenario", text)
    if "wbans" not in data:
        raise ConfigError("missing required key 'wbans'")
    kwargs: dict[str, Any] = {}
    try:
        for name, cls in _SECTIONS.items():
            if name in data:
                allowed = {f.name for f in dataclasses.fields(cls)}
                _check_keys(data[name], allowed, name, text)
                kwargs[name] = cls(**data[name])
        wbans = []
        for w, wd in enumerate(data["wbans"]):
            _check_keys(wd, _WBAN_KEYS, f"wbans[{w}]", text)
            sensors = []
            for s, sd in enumerate(wd.get("sensors", [])):
                _check_keys(sd, _SENSOR_KEYS, f"wbans[{w}].sensors[{s}]", text)
                sensors.append(SensorConfig(
                    position=_position(sd.get("position"), f"wbans[{w}].sensors[{s}]"),
                    sampling_period=float(sd.get("sampling_period", 5.0))))
            wbans.append(WbanConfig(
                coordinator_position=_position(wd["coordinator_position"], f"wbans[{w}]"),
                sensors=tuple(sensors),
                uses_ima=bool(wd.get("uses_ima", False)),
                max_sensors=int(wd.get("max_sensors", 8))))
        for key in _SCENARIO_KEYS - set(_SECTIONS) - {"wbans"}:
            if key in data:
                kwargs[key] = data[key]
        if "space" in kwargs:
            kwargs["space"] = tuple(kwargs["space"])
        if "seed" in kwargs:
            kwargs["seed"] = int(kwargs["seed"])
        return Scenario(wbans=tuple(wbans), **kwargs)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def scenario_to_dict(sc: Scenario) -> dict:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(Scenario):
        value = getattr(sc, f.name)
        if f.name == "wbans":
            value = [{
                "coordinator_position": w.coordinator_position.as_list(),
                "sensors": [{"position": s.position.as_list() if s.position else None,
                             "sampling_period": s.sampling_period} for s in w.sensors],
                "uses_ima": w.uses_ima,
                "max_sensors": w.max_sensors,
            } for w in value]
        elif f.name in _SECTIONS:
            value = copy.deepcopy(dataclasses.asdict(value))
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def load_scenario(path) -> Scenario:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    return scenario_from_dict(data, text)


def default_scenario(sensors_per_wban: int = 8, n_wbans: int = 2, **overrides) -> Scenario:
    """Two WBANs whose coordinators sit 2 m apart in the 3x3x3 m room, sensors
    drawn around each coordinator."""
    centres = [(0.5, 1.5, 1.0), (2.5, 1.5, 1.0), (1.5, 0.5, 1.0), (1.5, 2.5, 1.0)]
    wbans = tuple(
        WbanConfig(Position(*centres[w % len(centres)]),
                   tuple(SensorConfig() for _ in range(sensors_per_wban)),
                   uses_ima=(w == 0))
        for w in range(n_wbans))
    return Scenario(wbans=wbans, **overrides)


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package (``hall``, ``demo``)."""
    return Path(__file__).with_name("configs") / f"{name}.json"


def hall_scenario(**overrides) -> Scenario:
    """Subject WBAN (8 sensors, IMA) next to one baseline WBAN, 3000 s."""
    sc = load_scenario(bundled_config("hall"))
    return sc.replace(**overrides) if overrides else sc
