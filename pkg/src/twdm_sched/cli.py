"""Command-line front end: ``run``, ``figure`` and ``verify``."""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
import time
from pathlib import Path

from .core import (
    DEFAULT_CHANNEL_CONFIGS,
    DEFAULT_TUNING_TIMES,
    ConfigError,
    ScenarioConfig,
    format_channel_config,
    parse_channel_config,
)
from .oracle import enumerate_optimum, heuristic_gap, random_instances, solve_exact
from .runner import (
    DEFAULT_LOADS,
    DEFAULT_SLA_SHARES,
    ScenarioResult,
    SweepGrid,
    run_scenario,
    run_sweep,
    summarize_seeds,
)

log = logging.getLogger("twdm_sched")

OUT_DIR_ENV = "TWDM_SCHED_OUT_DIR"
CSV_COLUMNS = (
    "num_channels",
    "channel_rate_gbps",
    "tuning_time_ns",
    "load_pct",
    "sla_share_pct",
    "seed",
    "compliance_pct",
    "breach_events",
    "mean_delay_ns",
    "p99_delay_ns",
    "retunes",
)
SUMMARY_COLUMNS = (
    "num_channels",
    "channel_rate_gbps",
    "tuning_time_ns",
    "load_pct",
    "sla_share_pct",
    "seeds",
    "mean_compliance_pct",
    "min_compliance_pct",
    "max_compliance_pct",
    "stdev_compliance_pct",
)
# config-file keys that map straight onto ScenarioConfig fields
SCENARIO_KEYS = {
    "frames": ("num_frames", int),
    "num_vnos": ("num_vnos", int),
    "onus_per_vno": ("onus_per_vno", int),
    "flows_per_onu": ("flows_per_onu", int),
    "transceivers_per_onu": ("transceivers_per_onu", int),
    "guard_time": ("guard_time", int),
    "frame_duration": ("frame_duration", int),
    "window_frames": ("window_frames", int),
    "window_mode": ("window_mode", str),
    "virtual_timeline": ("virtual_timeline", str),
    "placement": ("placement", str),
    "sort_mode": ("sort_mode", str),
    "warmup_frames": ("warmup_frames", int),
    "burst_spread": ("burst_spread", float),
}


class UsageError(Exception):
    pass


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def _resolve_out(path: str | None, default_name: str) -> Path:
    if path is None:
        return default_out_dir() / default_name
    p = Path(path)
    return p if p.is_absolute() or p.parent != Path(".") else default_out_dir() / p


def parse_int_list(text: str) -> list[int]:
    """``1..5`` or ``1,2,7`` or a mix such as ``1..3,9``."""
    out: list[int] = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            a, b = int(lo), int(hi)
            if b < a:
                raise UsageError(f"empty range {part!r}")
            out.extend(range(a, b + 1))
        else:
            out.append(int(part))
    if not out:
        raise UsageError(f"no values in {text!r}")
    return out


def parse_pct_list(text: str) -> list[float]:
    """Percentages such as ``20,50,80`` or ``10..100:10`` as fractions."""
    out: list[float] = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if ".." in part:
            rng, _, step = part.partition(":")
            lo, hi = (float(x) for x in rng.split(".."))
            k = float(step) if step else 10.0
            count = int(round((hi - lo) / k)) + 1
            out.extend((lo + i * k) / 100 for i in range(count))
        else:
            out.append(float(part) / 100)
    if not out:
        raise UsageError(f"no values in {text!r}")
    return [round(x, 9) for x in out]


def _split(text: str) -> list[str]:
    return [p for p in text.replace(" ", "").split(",") if p]


def load_config_file(path: str) -> tuple[dict, dict]:
    """Read a sweep file; returns (grid values, scenario overrides).

    Sections are ``[scenario]`` for single-valued settings and one section
    per sweep dimension (``[channels]``, ``[tuning]``, ``[load]``,
    ``[sla_share]``, ``[seeds]``), each with a ``values`` key.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    except configparser.Error as exc:
        raise UsageError(f"bad config file {path}: {exc}") from None
    known = {"scenario", "channels", "tuning", "load", "sla_share", "seeds"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise UsageError(f"unknown section(s) in {path}: {', '.join(sorted(unknown))}")
    grid: dict = {}
    try:
        if parser.has_section("channels"):
            grid["channels"] = [parse_channel_config(x) for x in _split(parser["channels"]["values"])]
        if parser.has_section("tuning"):
            grid["tuning"] = parse_int_list(parser["tuning"]["values"])
        if parser.has_section("load"):
            grid["load"] = parse_pct_list(parser["load"]["values"])
        if parser.has_section("sla_share"):
            grid["sla_share"] = parse_pct_list(parser["sla_share"]["values"])
        if parser.has_section("seeds"):
            grid["seeds"] = parse_int_list(parser["seeds"]["values"])
    except KeyError as exc:
        raise UsageError(f"section without {exc} key in {path}") from None
    except ValueError as exc:
        raise UsageError(f"bad value in {path}: {exc}") from None
    scenario: dict = {}
    if parser.has_section("scenario"):
        for key, value in parser["scenario"].items():
            if key == "seed":
                grid.setdefault("seeds", [int(value)])
                continue
            if key not in SCENARIO_KEYS:
                raise UsageError(f"unknown scenario key {key!r} in {path}")
            name, conv = SCENARIO_KEYS[key]
            try:
                scenario[name] = conv(value)
            except ValueError:
                raise UsageError(f"bad value for {key!r} in {path}: {value!r}") from None
    return grid, scenario


def build_grid(args: argparse.Namespace) -> SweepGrid:
    grid_values: dict = {}
    scenario: dict = {}
    if args.config:
        grid_values, scenario = load_config_file(args.config)
    if args.sweep == "full":
        grid_values = {
            "channels": list(DEFAULT_CHANNEL_CONFIGS),
            "tuning": list(DEFAULT_TUNING_TIMES),
            "load": list(DEFAULT_LOADS),
            "sla_share": list(DEFAULT_SLA_SHARES),
            **{k: v for k, v in grid_values.items() if k == "seeds"},
        }
    if args.channels:
        grid_values["channels"] = [parse_channel_config(x) for x in args.channels for x in _split(x)]
    if args.tuning:
        grid_values["tuning"] = [t for x in args.tuning for t in parse_int_list(x)]
    if args.load:
        grid_values["load"] = [v for x in args.load for v in parse_pct_list(x)]
    if args.sla_share:
        grid_values["sla_share"] = [v for x in args.sla_share for v in parse_pct_list(x)]
    if args.seeds:
        grid_values["seeds"] = parse_int_list(args.seeds)
    elif args.seed is not None:
        grid_values["seeds"] = [args.seed]
    if args.frames is not None:
        scenario["num_frames"] = args.frames
    if args.onus_per_vno is not None:
        scenario["onus_per_vno"] = args.onus_per_vno
    if args.placement is not None:
        scenario["placement"] = args.placement

    base = ScenarioConfig(**scenario)
    grid = SweepGrid(
        channel_configs=grid_values.get("channels", [(8, 25 * 10**9)]),
        tuning_times=grid_values.get("tuning", [0]),
        loads=grid_values.get("load", [0.5]),
        sla_shares=grid_values.get("sla_share", [0.5]),
        seeds=grid_values.get("seeds", [0]),
        base=base,
    )
    # reject invalid points up front; only runtime failures reach the sweep
    for _, changes in grid.scenarios():
        base.replace(**changes)
    return grid


def write_csv(path: Path, columns: tuple[str, ...], rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def summary_rows(results: list[ScenarioResult]) -> list[dict]:
    rows = []
    for s in summarize_seeds(results):
        rows.append({
            "num_channels": s.num_channels,
            "channel_rate_gbps": f"{s.channel_rate / 10**9:g}",
            "tuning_time_ns": s.tuning_time,
            "load_pct": f"{s.load_fraction * 100:g}",
            "sla_share_pct": f"{s.sla_share * 100:g}",
            "seeds": s.seeds,
            "mean_compliance_pct": f"{s.mean_compliance:.2f}",
            "min_compliance_pct": f"{s.min_compliance:.2f}",
            "max_compliance_pct": f"{s.max_compliance:.2f}",
            "stdev_compliance_pct": f"{s.stdev_compliance:.2f}",
        })
    return rows


def cmd_run(args: argparse.Namespace) -> int:
    grid = build_grid(args)
    out = _resolve_out(args.out, "results.csv")
    log.info("running %d scenario(s) with %d job(s)", len(grid), args.jobs)
    start = time.perf_counter()
    results = run_sweep(grid, args.jobs)
    log.info("finished in %.1f s", time.perf_counter() - start)
    try:
        write_csv(out, CSV_COLUMNS, [r.row() for r in results])
        if args.summary:
            write_csv(_resolve_out(args.summary, "summary.csv"), SUMMARY_COLUMNS, summary_rows(results))
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 1
    failed = [r for r in results if r.failed]
    for r in failed:
        c = r.config
        print(
            f"error: scenario {format_channel_config(c.num_channels, c.channel_rate)} "
            f"tuning={c.tuning_time} load={c.load_fraction * 100:g}% "
            f"sla_share={c.sla_share * 100:g}% seed={r.base_seed} failed: {r.error}",
            file=sys.stderr,
        )
    if len(results) == 1 and not failed:
        r = results[0]
        print(f"compliance {r.compliance_pct:.2f}% over {r.frames} frames, {r.breach_events} breach events")
    print(f"wrote {len(results)} row(s) to {out}")
    return 1 if failed else 0


def _read_sweep(path: Path) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read sweep file {path}: {exc}") from None
    if rows and not set(CSV_COLUMNS) <= set(rows[0]):
        raise UsageError(f"{path} is not a sweep CSV (missing columns)")
    return rows


def figure_series(rows: list[dict], tuning: int) -> dict[tuple[str, str], list[tuple[float, float, int]]]:
    """Seed-averaged compliance per (channel config, load), keyed in first-seen order."""
    acc: dict[tuple[str, str], dict[float, list[float]]] = {}
    for row in rows:
        if int(row["tuning_time_ns"]) != tuning or row["compliance_pct"] == "":
            continue
        key = (f"{row['num_channels']}x{row['channel_rate_gbps']}", row["load_pct"])
        acc.setdefault(key, {}).setdefault(float(row["sla_share_pct"]), []).append(float(row["compliance_pct"]))
    return {
        key: [(x, sum(v) / len(v), len(v)) for x, v in sorted(points.items())]
        for key, points in acc.items()
    }


def cmd_figure(args: argparse.Namespace) -> int:
    src = Path(args.input)
    rows = _read_sweep(src)
    series = figure_series(rows, args.tuning)
    if not series:
        available = sorted({int(r["tuning_time_ns"]) for r in rows})
        print(
            f"error: {src} has no results for tuning time {args.tuning} ns "
            f"(available: {', '.join(map(str, available)) or 'none'})",
            file=sys.stderr,
        )
        return 1
    out_dir = Path(args.out_dir) if args.out_dir else default_out_dir()
    stem = out_dir / f"figure_tuning_{args.tuning}ns"
    table = [
        {
            "channel_config": cfg,
            "load_pct": load,
            "sla_share_pct": f"{x:g}",
            "compliance_pct": f"{y:.2f}",
            "seeds": n,
        }
        for (cfg, load), pts in series.items()
        for x, y, n in pts
    ]
    lines = [f"# compliance vs SLA share, tuning time {args.tuning} ns"]
    for index, ((cfg, load), pts) in enumerate(series.items()):
        if index:
            lines += ["", ""]
        lines.append(f"# series {index}: {cfg} load {load}%")
        lines.append("# sla_share_pct compliance_pct")
        lines += [f"{x:g} {y:.2f}" for x, y, _ in pts]
    try:
        write_csv(stem.with_suffix(".csv"), ("channel_config", "load_pct", "sla_share_pct", "compliance_pct", "seeds"), table)
        stem.with_suffix(".dat").write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(series)} series to {stem}.csv and {stem}.dat")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    report: list[tuple[str, bool, str]] = []
    instances = random_instances(args.instances, args.seed)

    gaps = []
    admissible = True
    for inst in instances:
        try:
            gaps.append(heuristic_gap(inst).gap)
        except AssertionError as exc:
            admissible = False
            gaps.append(-1)
            log.error("%s", exc)
    zero = sum(g == 0 for g in gaps)
    report.append((
        "heuristic never beats the exact optimum", admissible,
        f"{len(instances)} instances, mean gap {sum(gaps) / max(len(gaps), 1):.3f} flow breaches",
    ))
    report.append((
        "heuristic optimal on at least half the instances", 2 * zero >= len(instances),
        f"gap 0 on {zero}/{len(instances)}",
    ))
    small = [inst for inst in instances if len(inst.allocations) <= 4]
    mismatches = sum(solve_exact(inst) != enumerate_optimum(inst) for inst in small)
    report.append((
        "exact search agrees with exhaustive enumeration", mismatches == 0,
        f"{len(small) - mismatches}/{len(small)} instances with at most 4 allocations",
    ))

    fault = args.inject_fault == "overlap"
    problems: list[str] = []
    scenarios = [
        ScenarioConfig(num_channels=n, channel_rate=rate, tuning_time=tuning, load_fraction=0.8,
                       sla_share=0.7, num_frames=args.frames, seed=args.seed)
        for n, rate in DEFAULT_CHANNEL_CONFIGS
        for tuning in (0, 15_000)
    ]
    for config in scenarios:
        result = run_scenario(config, audit=True, fault=fault)
        label = f"{format_channel_config(config.num_channels, config.channel_rate)} tuning {config.tuning_time} ns"
        problems += [f"{label}: {v}" for v in result.violations]
    report.append((
        "schedule invariants hold on every frame", not problems,
        problems[0] if problems else f"{len(scenarios)} scenarios x {args.frames} frames audited",
    ))

    for name, ok, detail in report:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    failed = [name for name, ok, _ in report if not ok]
    if failed:
        print(f"verification failed: {'; '.join(failed)}")
        return 1
    print("all checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twdm-sched", description="Multi-tenant TWDM-PON bandwidth map merging simulator")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario or a sweep and write a CSV")
    run.add_argument("--config", help="sweep file (INI sections: scenario, channels, tuning, load, sla_share, seeds)")
    run.add_argument("--sweep", choices=("full",), help="run the full default grid")
    run.add_argument("--channels", action="append", help="channel config NxR in Gb/s, e.g. 8x25 (repeatable)")
    run.add_argument("--tuning", action="append", help="tuning time(s) in ns")
    run.add_argument("--load", action="append", help="offered load in percent of capacity")
    run.add_argument("--sla-share", action="append", help="SLA share of the load in percent")
    run.add_argument("--frames", type=int, help="frames per scenario (default 5000)")
    run.add_argument("--seed", type=int, help="base seed")
    run.add_argument("--seeds", help="base seeds, e.g. 1..5")
    run.add_argument("--onus-per-vno", type=int)
    run.add_argument("--placement", choices=("uniform", "stratified"))
    run.add_argument("--jobs", type=int, default=1, help="worker processes")
    run.add_argument("--out", help=f"output CSV (default results.csv in ${OUT_DIR_ENV} or .)")
    run.add_argument("--summary", help="also write per-point seed mean and spread to this CSV")
    run.set_defaults(func=cmd_run)

    fig = sub.add_parser("figure", help="extract compliance vs SLA share series from a sweep CSV")
    fig.add_argument("--tuning", type=int, required=True, help="tuning time in ns")
    fig.add_argument("--in", dest="input", default=None, help="sweep CSV (default results.csv in the output dir)")
    fig.add_argument("--out-dir", help=f"directory for the .csv and .dat files (default ${OUT_DIR_ENV} or .)")
    fig.set_defaults(func=cmd_figure)

    ver = sub.add_parser("verify", help="oracle gap suite and schedule invariant checks")
    ver.add_argument("--instances", type=int, default=100)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--frames", type=int, default=200, help="frames per audited scenario")
    ver.add_argument("--inject-fault", choices=("overlap",), help="corrupt the engine to test the checks")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "input", "") is None:
        args.input = str(default_out_dir() / "results.csv")
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
