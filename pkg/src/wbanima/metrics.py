"""Metric collection and export: residual energy, WBAN lifetime, cumulative
delivered packets (SoP) and outage probability."""
from __future__ import annotations

import bisect
import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .channel import outage_probability


@dataclass
class TimeSeries:
    metric_name: str
    unit: str
    samples: list = field(default_factory=list)   # (time_s, value)

    def append(self, t: float, value: float) -> None:
        if self.samples and t <= self.samples[-1][0]:
            raise ValueError(f"{self.metric_name}: sample time {t} not increasing")
        self.samples.append((t, value))

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.samples]

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.samples]

    def at(self, t: float) -> float:
        """Value at the sample nearest to ``t`` (earlier one on a tie); NaN
        for an empty series."""
        if not self.samples:
            return math.nan
        times = self.times
        i = bisect.bisect_left(times, t)
        if i == 0:
            return self.samples[0][1]
        if i == len(times):
            return self.samples[-1][1]
        before, after = times[i - 1], times[i]
        return self.samples[i - 1][1] if t - before <= after - t else self.samples[i][1]


def wban_label(w: int) -> str:
    return f"wban{w}"


@dataclass
class MetricsReport:
    seed: int
    scenario_digest: str
    duration: float
    metric_sample_period: float
    residual_energy: dict = field(default_factory=dict)   # node label -> TimeSeries
    lifetime: dict = field(default_factory=dict)          # wban label -> TimeSeries
    sop: dict = field(default_factory=dict)               # wban label -> TimeSeries
    sinr_log: dict = field(default_factory=dict)          # node label -> [(t, sinr)]
    outage: dict = field(default_factory=dict)            # subject -> {thr: p | None}
    wban_stats: dict = field(default_factory=dict)
    energy_ledger: dict = field(default_factory=dict)     # node label -> {...}
    sensors: dict = field(default_factory=dict)           # wban label -> [node labels]
    trace: Optional[list] = None

    def final_sop(self, w: int) -> int:
        samples = self.sop[wban_label(w)].samples
        return int(samples[-1][1]) if samples else 0

    def avgre_series(self, w: int) -> TimeSeries:
        labels = self.sensors[wban_label(w)]
        out = TimeSeries("avg_residual_energy", "mJ")
        for i, (t, _) in enumerate(self.residual_energy[labels[0]].samples):
            out.append(t, sum(self.residual_energy[n].samples[i][1] for n in labels) / len(labels))
        return out

    def to_dict(self) -> dict:
        def ts(d):
            return {k: {"metric_name": v.metric_name, "unit": v.unit,
                        "samples": [list(s) for s in v.samples]} for k, v in sorted(d.items())}
        return {
            "seed": self.seed,
            "scenario_digest": self.scenario_digest,
            "duration": self.duration,
            "metric_sample_period": self.metric_sample_period,
            "residual_energy": ts(self.residual_energy),
            "lifetime": ts(self.lifetime),
            "sop": ts(self.sop),
            "sinr_log": {k: [list(s) for s in v] for k, v in sorted(self.sinr_log.items())},
            "outage": {k: {_thr_key(t): p for t, p in sorted(v.items())}
                       for k, v in sorted(self.outage.items())},
            "wban_stats": self.wban_stats,
            "energy_ledger": self.energy_ledger,
            "sensors": self.sensors,
        }


def _thr_key(t: float) -> str:
    return format(t, ".9g")


class MetricsRecorder:
    """Written by the event loop while a run is in progress."""

    def __init__(self, scenario, node_ids):
        self.sc = scenario
        self.node_ids = list(node_ids)
        n_w = len(scenario.wbans)
        self.generated = {w: 0 for w in range(n_w)}
        self.sop_count = {w: 0 for w in range(n_w)}
        self.residual = {nid.label(): TimeSeries("residual_energy", "mJ") for nid in self.node_ids}
        self.lifetime = {wban_label(w): TimeSeries("lifetime", "mJ") for w in range(n_w)}
        self.sop = {wban_label(w): TimeSeries("sop", "packets") for w in range(n_w)}
        self.sinr_log = {nid.label(): [] for nid in self.node_ids}
        self.last_sample_ns = 0

    def record_delivery(self, wban: int, time_ns: int) -> int:
        self.sop_count[wban] += 1
        return self.sop_count[wban]

    def log_sinr(self, nid, time_ns: int, sinr: float) -> None:
        self.sinr_log[nid.label()].append((time_ns / 1e9, sinr))

    def sample(self, time_ns: int, nodes) -> None:
        t = time_ns / 1e9
        lifetimes = {w: 0.0 for w in self.sop_count}
        for nd in nodes:
            r = nd.battery.residual
            self.residual[nd.id.label()].append(t, r)
            if not nd.is_coordinator:
                lifetimes[nd.id.wban] += r
        for w, total in lifetimes.items():
            self.lifetime[wban_label(w)].append(t, total)
            self.sop[wban_label(w)].append(t, self.sop_count[w])
        self.last_sample_ns = time_ns

    def finish(self, sim) -> MetricsReport:
        sc = self.sc
        report = MetricsReport(sc.seed, sc.digest(), sc.duration, sc.metric_sample_period,
                               self.residual, self.lifetime, self.sop, self.sinr_log)
        for w in range(len(sc.wbans)):
            report.sensors[wban_label(w)] = [nd.id.label() for nd in sim.nodes
                                             if nd.id.wban == w and not nd.is_coordinator]
        subjects = list(self.sinr_log) + list(report.sensors)
        for subject in subjects:
            report.outage[subject] = {thr: compute_outage(report, subject, thr)
                                      for thr in sc.outage_thresholds}
        for agent in sim.agents:
            pools = agent.pool_sizes
            report.wban_stats[wban_label(agent.index)] = {
                "scheme": agent.scheme,
                "generated": self.generated[agent.index],
                "delivered": self.sop_count[agent.index],
                "frames_sent": dict(sim.frames_sent[agent.index]),
                "mean_candidate_pool": (sum(pools) / len(pools)) if pools else 0.0,
                **agent.stats,
            }
        for nd in sim.nodes:
            log = sim.drain_log[nd.id]
            report.energy_ledger[nd.id.label()] = {
                "initial": nd.battery.initial,
                "final": nd.battery.residual,
                "ledger_sum": math.fsum(log),
                "drains": len(log),
                "death_time_s": None if nd.death_time is None else nd.death_time / 1e9,
            }
        return report


# ------------------------------------------------------------ operations

def record_delivery(recorder: MetricsRecorder, wban: int, time_ns: int) -> int:
    return recorder.record_delivery(wban, time_ns)


def average_residual_energy(report: MetricsReport, wban: int, time: float) -> float:
    labels = report.sensors[wban_label(wban)]
    return sum(report.residual_energy[n].at(time) for n in labels) / len(labels)


def compute_outage(report: MetricsReport, subject: str, threshold: float) -> Optional[float]:
    """Outage over every logged reception SINR of a node (``wbanW/nodeN``) or
    of all sensors and the coordinator of a WBAN (``wbanW``). ``None`` when no
    sample was logged."""
    if subject in report.sinr_log:
        samples = [s for _, s in report.sinr_log[subject]]
    else:
        prefix = subject + "/"
        samples = [s for k, log in sorted(report.sinr_log.items()) if k.startswith(prefix)
                   for _, s in log]
    if not samples:
        return None
    return outage_probability(samples, threshold)


def fmt(value) -> str:
    if value is None:
        return "nan"
    return format(value, ".9g")


def _csv_text(header: tuple, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in sorted(rows, key=lambda r: (r[0], r[1])):
        w.writerow([fmt(row[0]), row[1], fmt(row[2])])
    return buf.getvalue()


def render_csv(report: MetricsReport) -> dict[str, str]:
    """File name -> CSV text for every metric and WBAN."""
    files = {}
    for wlabel, nodes in sorted(report.sensors.items()):
        w = int(wlabel[4:])
        members = [f"{wlabel}/node0"] + nodes
        rows = []
        for n in members:
            rows += [(t, n, v) for t, v in report.residual_energy[n].samples]
        files[f"residual_energy_{wlabel}.csv"] = _csv_text(("time_s", "node", "value"), rows)
        files[f"lifetime_{wlabel}.csv"] = _csv_text(
            ("time_s", "wban", "value"), [(t, wlabel, v) for t, v in report.lifetime[wlabel].samples])
        files[f"sop_{wlabel}.csv"] = _csv_text(
            ("time_s", "wban", "value"), [(t, wlabel, v) for t, v in report.sop[wlabel].samples])
        avg = report.avgre_series(w) if nodes else TimeSeries("avg_residual_energy", "mJ")
        files[f"avg_residual_energy_{wlabel}.csv"] = _csv_text(
            ("time_s", "wban", "value"), [(t, wlabel, v) for t, v in avg.samples])
        rows = []
        for n in members:
            rows += [(t, n, v) for t, v in report.sinr_log[n]]
        files[f"sinr_{wlabel}.csv"] = _csv_text(("time_s", "node", "value"), rows)
        rows = []
        for subject in [wlabel] + members:
            rows += [(thr, subject, p) for thr, p in report.outage[subject].items()
                     if p is not None]
        files[f"outage_{wlabel}.csv"] = _csv_text(("threshold_db", "subject", "value"), rows)
    return files


def render_json(report: MetricsReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n"


def export(report: MetricsReport, format: str, destination) -> list[Path]:
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
        written = []
        if format == "csv":
            for name, text in render_csv(report).items():
                path = dest / name
                path.write_bytes(text.encode())
                written.append(path)
        elif format == "json":
            path = dest / "report.json"
            path.write_bytes(render_json(report).encode())
            written.append(path)
        else:
            raise ValueError(f"unknown export format {format!r}")
        return written
    except OSError as exc:
        raise OSError(f"cannot write metrics to {dest}: {exc.strerror or exc}") from exc


def parse_csv(text: str) -> list[tuple[float, str, float]]:
    rows = list(csv.reader(io.StringIO(text)))
    return [(float(t), s, float(v)) for t, s, v in rows[1:]]
