"""Command-line front end: ``run``, ``compare`` and ``sweep``.

Exit status: 0 on success, 2 for configuration errors, 3 for I/O failures.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import experiments
from .engine import run_scenario
from .metrics import average_residual_energy, export, fmt, wban_label
from .scenario import ConfigError, Scenario, load_scenario

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def _load(args) -> Scenario:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        sc = load_scenario(path)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.duration is not None:
        changes["duration"] = args.duration
    try:
        return sc.replace(**changes) if changes else sc
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _summary_text(sc: Scenario, report) -> str:
    lines = [f"seed {sc.seed}  duration {sc.duration:g} s  scenario {report.scenario_digest[:12]}", ""]
    lines.append(f"{'wban':<8}{'scheme':<13}{'SoP':>8}{'AVGRE mJ':>12}")
    for w in range(len(sc.wbans)):
        stats = report.wban_stats[wban_label(w)]
        lines.append(f"{wban_label(w):<8}{stats['scheme']:<13}{report.final_sop(w):>8}"
                     f"{average_residual_energy(report, w, sc.duration):>12.3f}")
    lines += ["", "outage probability"]
    lines.append(f"{'subject':<8}" + "".join(f"{'thr ' + format(t, 'g'):>12}"
                                              for t in sc.outage_thresholds))
    for w in range(len(sc.wbans)):
        op = report.outage[wban_label(w)]
        lines.append(f"{wban_label(w):<8}" + "".join(
            f"{('n/a' if op[t] is None else format(op[t], '.4f')):>12}" for t in sc.outage_thresholds))
    return "\n".join(lines) + "\n"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, float) or v is None else v for v in row])


def cmd_run(args) -> int:
    sc = _load(args)
    report = run_scenario(sc)
    out = Path(args.out)
    export(report, "csv", out)
    export(report, "json", out)
    text = _summary_text(sc, report)
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def _comparison_text(rows, header, table) -> str:
    means = experiments.comparison_means(rows)
    lines = [f"{'seed':>6}{'SoP with':>10}{'SoP w/o':>10}{'ratio':>8}{'AVGRE with':>12}{'AVGRE w/o':>12}"]
    for r in rows:
        ratio = r["with"]["sop"] / r["without"]["sop"] if r["without"]["sop"] else float("nan")
        lines.append(f"{r['seed']:>6}{r['with']['sop']:>10}{r['without']['sop']:>10}{ratio:>8.3f}"
                     f"{r['with']['avgre']:>12.3f}{r['without']['avgre']:>12.3f}")
    ratio = means["sop_ratio"]
    lines.append(f"{'mean':>6}{means['sop_with']:>10.1f}{means['sop_without']:>10.1f}"
                 f"{(ratio if ratio is not None else float('nan')):>8.3f}"
                 f"{means['avgre_with']:>12.3f}{means['avgre_without']:>12.3f}")
    return "\n".join(lines) + "\n"


def cmd_compare(args) -> int:
    sc = _load(args)
    rows = experiments.compare(sc, args.seeds, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header, table = experiments.comparison_table(rows)
    _write_csv(out / "comparison.csv", header, table)
    text = _comparison_text(rows, header, table)
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        low = text.strip().lower()
        if low in ("inf", "+inf", "infinity"):
            return float("inf")
        return text


def _parse_grid(params) -> dict:
    grid = {}
    for item in params or []:
        if "=" not in item:
            raise ConfigError(f"--param expects key=value[,value...], got {item!r}")
        key, values = item.split("=", 1)
        grid[key.strip()] = [_parse_value(v) for v in values.split(",")]
    return grid


def cmd_sweep(args) -> int:
    sc = _load(args)
    grid = _parse_grid(args.param)
    results = experiments.sweep(sc, grid, args.seeds, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(grid)
    mean_keys = list(results[0]["means"])
    rows = [[r["point"][k] for k in keys] + [r["means"][m] for m in mean_keys] for r in results]
    _write_csv(out / "sweep.csv", keys + mean_keys, rows)
    lines = []
    for r in results:
        point = ", ".join(f"{k}={v}" for k, v in r["point"].items()) or "(base)"
        m = r["means"]
        lines.append(f"{point}: SoP {m['sop_with']:.1f} vs {m['sop_without']:.1f}, "
                     f"CTS/superframe {m['cts_per_superframe_with']:.3f}, "
                     f"candidate pool {m['mean_candidate_pool_with']:.3f}")
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wbanima", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("compare", cmd_compare), ("sweep", cmd_sweep)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--duration", type=float, help="simulated seconds")
        p.add_argument("--out", required=True)
        if name != "run":
            p.add_argument("--seeds", type=int, default=10)
            p.add_argument("--jobs", type=int, default=1)
        if name == "sweep":
            p.add_argument("--param", action="append", help="key=value[,value...]")
        p.set_defaults(func=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
