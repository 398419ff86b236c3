"""Small hand-placed scenarios and trace readers shared by the tests."""
import math

from wbanima.channel import ChannelModel, Position
from wbanima.ima import ProtocolParams
from wbanima.scenario import Scenario, SensorConfig, WbanConfig

COORD = Position(1.0, 1.0, 1.0)
SOURCE = Position(2.5, 1.0, 1.0)
# Diff 5.06 dB and 6.41 dB towards SOURCE, both well above sensitivity
CAND_A = Position(1.6, 1.0, 1.5)
CAND_B = Position(2.0, 1.0, 0.3)
SILENT = math.inf


def fixture(sensors, uses_ima=True, duration=1.0, seed=1, margin=10.0, baseline="direct"):
    """One WBAN around COORD without shadowing. ``sensors`` holds
    (position, sampling_period) pairs."""
    wban = WbanConfig(COORD, tuple(SensorConfig(p, s) for p, s in sensors), uses_ima=uses_ima)
    return Scenario(wbans=(wban,), duration=duration, seed=seed, baseline=baseline,
                    channel=ChannelModel(shadowing_sigma_db=0.0),
                    protocol=ProtocolParams(diff_margin=margin))


def tx_table(trace):
    """uid -> tx-start info for every transmission in a trace."""
    return {info["tx"]: info for _, ev, info in trace if ev == "tx-start"}


def events(trace, name):
    return [(t, info) for t, ev, info in trace if ev == name]
