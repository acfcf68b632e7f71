"""Frame loop and parameter sweeps."""
from __future__ import annotations

import hashlib
import itertools
import logging
from array import array
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DEFAULT_CHANNEL_CONFIGS,
    DEFAULT_TUNING_TIMES,
    GBPS,
    ScenarioConfig,
)
from .fastsim import S_BREACHES, S_DELAYED, S_FRAMES, S_GRANTS, S_RETUNES, VIOLATION_NAMES, run_compiled
from .merging import FreeTimeTables, ScheduleAuditor, merge_frame
from .sla import BreachTable
from .traffic import build_flow_population, generate_frame, vno_flow_tables

log = logging.getLogger(__name__)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    frames: int
    sla_flows: int
    breach_events: int
    compliance_pct: float
    mean_delay_ns: float
    p99_delay_ns: float
    delay_by_class: dict[int, tuple[float, float]]
    retunes: int
    grants: int
    delayed_slots: int
    violations: list[str] = field(default_factory=list)
    series: list[int] | None = None
    error: str | None = None
    base_seed: int | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def row(self) -> dict:
        cfg = self.config
        return {
            "num_channels": cfg.num_channels,
            "channel_rate_gbps": f"{cfg.channel_rate / GBPS:g}",
            "tuning_time_ns": cfg.tuning_time,
            "load_pct": f"{cfg.load_fraction * 100:g}",
            "sla_share_pct": f"{cfg.sla_share * 100:g}",
            "seed": cfg.seed if self.base_seed is None else self.base_seed,
            "compliance_pct": "" if self.failed else f"{self.compliance_pct:.2f}",
            "breach_events": "" if self.failed else self.breach_events,
            "mean_delay_ns": "" if self.failed else round(self.mean_delay_ns),
            "p99_delay_ns": "" if self.failed else round(self.p99_delay_ns),
            "retunes": "" if self.failed else self.retunes,
        }


def _delay_stats(values: array) -> tuple[float, float]:
    if not len(values):
        return 0.0, 0.0
    arr = np.frombuffer(values, dtype=np.int64)
    return float(arr.mean()), float(np.percentile(arr, 99))


ENGINES = ("compiled", "reference")


def run_scenario(
    config: ScenarioConfig,
    *,
    audit: bool = False,
    keep_series: bool = False,
    engine: str = "compiled",
    fault: bool = False,
) -> ScenarioResult:
    """Simulate ``config.num_frames`` frames and aggregate SLA statistics.

    Breach statistics skip the first ``config.warmup`` frames. Both engines
    give identical results; ``"reference"`` runs the object-level merge
    frame by frame and is much slower. ``fault`` deliberately corrupts the
    compiled engine's channel booking so the auditor can be exercised.
    """
    if engine == "compiled":
        return _run_compiled(config, audit=audit, keep_series=keep_series, fault=fault)
    if engine != "reference":
        raise ValueError(f"unknown engine {engine!r}; choose from {ENGINES}")
    if fault:
        raise ValueError("fault injection is only available in the compiled engine")
    return _run_reference(config, audit=audit, keep_series=keep_series)


def _run_compiled(config: ScenarioConfig, *, audit: bool, keep_series: bool, fault: bool) -> ScenarioResult:
    stats, violations, series, delays, delay_cls, n_sla = run_compiled(config, audit=audit, fault=fault)
    frames = int(stats[S_FRAMES])
    breaches = int(stats[S_BREACHES])
    denom = n_sla * frames
    by_class = {}
    parts = []
    for k in dict.fromkeys({sla: k for k, sla in enumerate(config.sla_classes)}.values()):
        part = array("q", delays[delay_cls == k].tolist())
        by_class[k] = _delay_stats(part)
        parts.append(part)
    merged = array("q")
    for part in parts:
        merged.extend(part)
    mean, p99 = _delay_stats(merged)
    return ScenarioResult(
        config=config,
        frames=frames,
        sla_flows=int(n_sla),
        breach_events=breaches,
        compliance_pct=100.0 * (1 - breaches / denom) if denom else 100.0,
        mean_delay_ns=mean,
        p99_delay_ns=p99,
        delay_by_class=by_class,
        retunes=int(stats[S_RETUNES]),
        grants=int(stats[S_GRANTS]),
        delayed_slots=int(stats[S_DELAYED]),
        violations=[f"{VIOLATION_NAMES[k]}: {int(c)} occurrence(s)" for k, c in enumerate(violations) if c],
        series=series[config.warmup:].tolist() if keep_series else None,
    )


def _run_reference(config: ScenarioConfig, *, audit: bool, keep_series: bool) -> ScenarioResult:
    flows = build_flow_population(config)
    table = BreachTable(flows, config.window_frames, config.window_mode)
    tables = FreeTimeTables.for_config(config)
    auditor = ScheduleAuditor(config) if audit else None
    classes = {sla: k for k, sla in enumerate(config.sla_classes)}
    class_delays = {k: array("q") for k in classes.values()}
    warmup = config.warmup
    breach_events = frames_counted = retunes = grants = delayed_slots = 0
    series: list[int] | None = [] if keep_series else None
    states = table.states
    vno_tables = vno_flow_tables(flows, config)

    for f in range(config.num_frames):
        vbmaps = generate_frame(flows, f, config, tables=vno_tables)
        outcome = merge_frame(vbmaps, states, tables, config)
        if auditor is not None:
            auditor.check_frame(f, outcome)
        counted = f >= warmup
        allocs = outcome.allocations
        for g in outcome.physical_bmap:
            a = allocs[g.alloc_id]
            if a.sla is None:
                continue
            delay = g.scheduled_start - g.requested_start
            table.record(a.flow_id, delay, f)
            if counted:
                class_delays[classes[a.sla]].append(delay)
                delayed_slots += delay > a.sla.latency_target
        breached = table.end_frame(f)
        if counted:
            frames_counted += 1
            breach_events += breached
            retunes += outcome.retunes
            grants += len(outcome.physical_bmap)
            if series is not None:
                series.append(breached)

    denom = len(table) * frames_counted
    compliance = 100.0 * (1 - breach_events / denom) if denom else 100.0
    merged = array("q")
    for v in class_delays.values():
        merged.extend(v)
    mean, p99 = _delay_stats(merged)
    return ScenarioResult(
        config=config,
        frames=frames_counted,
        sla_flows=len(table),
        breach_events=breach_events,
        compliance_pct=compliance,
        mean_delay_ns=mean,
        p99_delay_ns=p99,
        delay_by_class={k: _delay_stats(v) for k, v in class_delays.items()},
        retunes=retunes,
        grants=grants,
        delayed_slots=delayed_slots,
        violations=list(auditor.violations) if auditor else [],
        series=series,
    )


DEFAULT_LOADS = (0.2, 0.5, 0.8)
DEFAULT_SLA_SHARES = tuple(k / 10 for k in range(1, 11))


def scenario_seed(base_seed: int, load_fraction: float, sla_share: float) -> int:
    """Derive a scenario's RNG seed from the base seed and its workload point.

    Channel configuration and tuning time are left out on purpose so that
    every system is compared on the same traffic.
    """
    text = f"{base_seed}:{load_fraction:.9g}:{sla_share:.9g}"
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


@dataclass
class SweepGrid:
    channel_configs: list[tuple[int, int]] = field(default_factory=lambda: list(DEFAULT_CHANNEL_CONFIGS))
    tuning_times: list[int] = field(default_factory=lambda: list(DEFAULT_TUNING_TIMES))
    loads: list[float] = field(default_factory=lambda: list(DEFAULT_LOADS))
    sla_shares: list[float] = field(default_factory=lambda: list(DEFAULT_SLA_SHARES))
    seeds: list[int] = field(default_factory=lambda: [0])
    base: ScenarioConfig = field(default_factory=ScenarioConfig)

    def __len__(self) -> int:
        return (
            len(self.channel_configs) * len(self.tuning_times) * len(self.loads)
            * len(self.sla_shares) * len(self.seeds)
        )

    def points(self) -> list[tuple[tuple[int, int], int, float, float, int]]:
        return list(itertools.product(
            self.channel_configs, self.tuning_times, self.loads, self.sla_shares, self.seeds,
        ))

    def scenarios(self) -> list[tuple[int, dict]]:
        """(base seed, config overrides) for every grid point in enumeration order."""
        out = []
        for (n, rate), tuning, load, share, seed in self.points():
            changes = dict(
                num_channels=n, channel_rate=rate, tuning_time=tuning, load_fraction=load,
                sla_share=share, seed=scenario_seed(seed, load, share),
            )
            out.append((seed, changes))
        return out


def _failed(config: ScenarioConfig | None, changes: dict, base_seed: int, error: str) -> ScenarioResult:
    if config is None:
        # the grid point itself is invalid; echo it on a config that skips validation
        config = object.__new__(ScenarioConfig)
        config.__dict__.update(ScenarioConfig().__dict__)
        config.__dict__.update(changes)
    return ScenarioResult(
        config=config, frames=0, sla_flows=0, breach_events=0, compliance_pct=float("nan"),
        mean_delay_ns=float("nan"), p99_delay_ns=float("nan"), delay_by_class={}, retunes=0,
        grants=0, delayed_slots=0, error=error, base_seed=base_seed,
    )


def _sweep_task(task: tuple[ScenarioConfig, int, dict, bool, bool]) -> ScenarioResult:
    base, base_seed, changes, audit, keep_series = task
    config = None
    try:
        config = base.replace(**changes)
        result = run_scenario(config, audit=audit, keep_series=keep_series)
    except Exception as exc:  # a failed point must not abort the sweep
        return _failed(config, changes, base_seed, f"{type(exc).__name__}: {exc}")
    result.base_seed = base_seed
    return result


def run_sweep(
    grid: SweepGrid, parallelism: int = 1, *, audit: bool = False, keep_series: bool = False
) -> list[ScenarioResult]:
    """Run every grid point; results follow grid order whatever the parallelism."""
    tasks = [(grid.base, seed, changes, audit, keep_series) for seed, changes in grid.scenarios()]
    if not tasks:
        raise ValueError("sweep grid is empty")
    if parallelism <= 1 or len(tasks) == 1:
        results = [_sweep_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(_sweep_task, tasks, chunksize=max(1, len(tasks) // (8 * parallelism))))
    for r in results:
        if r.failed:
            log.warning("scenario failed: %s", r.error)
    return results


@dataclass
class SeedSummary:
    num_channels: int
    channel_rate: int
    tuning_time: int
    load_fraction: float
    sla_share: float
    seeds: int
    mean_compliance: float
    min_compliance: float
    max_compliance: float
    stdev_compliance: float


def summarize_seeds(results: list[ScenarioResult]) -> list[SeedSummary]:
    """Average compliance over seeds per grid point and report the spread."""
    groups: dict[tuple, list[float]] = {}
    for r in results:
        if r.failed:
            continue
        c = r.config
        key = (c.num_channels, c.channel_rate, c.tuning_time, c.load_fraction, c.sla_share)
        groups.setdefault(key, []).append(r.compliance_pct)
    out = []
    for key, vals in groups.items():
        arr = np.asarray(vals)
        out.append(SeedSummary(
            *key, seeds=len(vals), mean_compliance=float(arr.mean()), min_compliance=float(arr.min()),
            max_compliance=float(arr.max()), stdev_compliance=float(arr.std(ddof=1)) if len(vals) > 1 else 0.0,
        ))
    return out
