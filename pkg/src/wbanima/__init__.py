"""Discrete-event simulator of relay-assisted body-area networks running the
IMA relay-selection protocol over CSMA/CA."""
from .channel import (ChannelModel, Position, dbm_to_mw, mw_to_dbm, outage_probability,
                      path_loss_db, received_power_dbm, sample_is_valid, sinr_db, snr_db)
from .engine import EventQueue, Simulator, build_topology, rng_stream, run_scenario
from .energy import Battery, EnergyParams, drain, rx_energy, tx_energy, wban_lifetime
from .ima import (CandidateSets, CtsEntry, CtsQueue, ImaState, NodeId, ProtocolParams,
                  RelayCandidateState, build_candidate_set, check_beacon_validity,
                  cts_wait_time, enqueue_cts, filter_by_diff, select_winner)
from .mac import (BackoffState, Frame, FrameKind, MacParams, backoff_delay, carrier_sense,
                  make_frame, resolve_reception)
from .metrics import (MetricsReport, TimeSeries, average_residual_energy, compute_outage,
                      export)
from .scenario import (ConfigError, Scenario, SensorConfig, WbanConfig, default_scenario,
                       load_scenario, scenario_from_dict, scenario_to_dict)

__version__ = "0.1.0"
