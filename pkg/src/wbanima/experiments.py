"""With/without-IMA comparisons and parameter sweeps over scenarios."""
from __future__ import annotations

import copy
import itertools
from concurrent.futures import ProcessPoolExecutor
from statistics import fmean
from typing import Any, Iterable, Optional

from .engine import run_scenario
from .metrics import MetricsReport, average_residual_energy, compute_outage, wban_label
from .scenario import ConfigError, Scenario, scenario_from_dict, scenario_to_dict


def summarize(report: MetricsReport, wban: int, thresholds: Iterable[float]) -> dict:
    label = wban_label(wban)
    stats = report.wban_stats[label]
    out = {
        "sop": report.final_sop(wban),
        "avgre": average_residual_energy(report, wban, report.duration),
        "cts_per_superframe": stats["cts_sent"] / max(stats["superframes"], 1),
        "mean_candidate_pool": stats["mean_candidate_pool"],
    }
    for thr in thresholds:
        out[f"op@{thr:g}"] = compute_outage(report, label, thr)
    return out


def _run_pair(args) -> dict:
    scenario, seed = args
    sc = scenario.replace(seed=seed)
    with_ima = run_scenario(sc.with_subject_ima(True))
    without = run_scenario(sc.with_subject_ima(False))
    th = sc.outage_thresholds
    return {"seed": seed,
            "with": summarize(with_ima, sc.subject, th),
            "without": summarize(without, sc.subject, th)}


def compare(scenario: Scenario, seeds_count: int = 10, base_seed: Optional[int] = None,
            jobs: int = 1) -> list[dict]:
    """Run the subject WBAN with and without IMA on seeds ``base_seed + i``.

    Everything except the subject's ``uses_ima`` flag is identical between
    the two variants of a seed."""
    base = scenario.seed if base_seed is None else base_seed
    work = [(scenario, base + i) for i in range(seeds_count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_pair, work))
    return [_run_pair(w) for w in work]


def _ratio(a, b):
    if a is None or b is None or b == 0:
        return None
    return a / b


def comparison_means(rows: list[dict]) -> dict:
    keys = rows[0]["with"].keys()
    out = {}
    for variant in ("with", "without"):
        for k in keys:
            vals = [r[variant][k] for r in rows if r[variant][k] is not None]
            out[f"{k}_{variant}"] = fmean(vals) if vals else None
    out["sop_ratio"] = _ratio(out["sop_with"], out["sop_without"])
    out["avgre_ratio"] = _ratio(out["avgre_with"], out["avgre_without"])
    return out


def comparison_table(rows: list[dict]) -> tuple[list[str], list[list[Any]]]:
    keys = list(rows[0]["with"].keys())
    header = ["seed"] + [f"{k}_{v}" for v in ("with", "without") for k in keys] + ["sop_ratio"]
    table = []
    for r in rows:
        table.append([r["seed"]] + [r[v][k] for v in ("with", "without") for k in keys]
                     + [_ratio(r["with"]["sop"], r["without"]["sop"])])
    if len(rows) > 1:
        means = comparison_means(rows)
        table.append(["mean"] + [means[h] for h in header[1:]])
    return header, table


# ------------------------------------------------------------------ sweeps

def _set_path(doc: dict, path: str, value) -> None:
    parts = path.split(".")
    node: Any = doc
    for i, part in enumerate(parts[:-1]):
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise ConfigError(f"unknown field path {path!r}")
            node = node[int(part)]
        elif isinstance(node, dict) and part in node:
            node = node[part]
        else:
            raise ConfigError(f"unknown field path {path!r}")
    last = parts[-1]
    if isinstance(node, dict) and last == "sensor_count" and "sensors" in node:
        n = int(value)
        sensors = node["sensors"]
        template = sensors[-1] if sensors else {"position": None, "sampling_period": 5.0}
        node["sensors"] = (sensors + [dict(template, position=None)
                                      for _ in range(max(0, n - len(sensors)))])[:n]
        return
    if isinstance(node, dict) and last in node:
        node[last] = value
    elif isinstance(node, list) and last.isdigit() and int(last) < len(node):
        node[int(last)] = value
    else:
        raise ConfigError(f"unknown field path {path!r}")


def apply_overrides(scenario: Scenario, overrides: dict) -> Scenario:
    doc = scenario_to_dict(scenario)
    for path, value in overrides.items():
        _set_path(doc, path, copy.deepcopy(value))
    return scenario_from_dict(doc)


def sweep(scenario: Scenario, grid: dict[str, list], seeds_count: int = 10,
          base_seed: Optional[int] = None, jobs: int = 1) -> list[dict]:
    """One comparison per point of the cartesian product of ``grid``."""
    keys = list(grid)
    points = list(itertools.product(*(grid[k] for k in keys))) if keys else [()]
    # validate every path before spending time on runs
    for point in points:
        apply_overrides(scenario, dict(zip(keys, point)))
    results = []
    for point in points:
        overrides = dict(zip(keys, point))
        rows = compare(apply_overrides(scenario, overrides), seeds_count, base_seed, jobs)
        results.append({"point": overrides, "rows": rows, "means": comparison_means(rows)})
    return results
