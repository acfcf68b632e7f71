"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The scenario sweeps behind criteria 1, 2, 3 and 5 are run once per ONU
population and shared through a session cache.
"""
import random
import time

from twdm_sched.cli import main as cli_main
from twdm_sched.core import DEFAULT_CHANNEL_CONFIGS, DEFAULT_TUNING_TIMES, GBPS, ScenarioConfig, format_channel_config
from twdm_sched.oracle import enumerate_optimum, heuristic_gap, random_instances, solve_exact
from twdm_sched.runner import SweepGrid, run_sweep, summarize_seeds

from sla_streams import random_stream, recount, replay

SEEDS = [1, 2, 3, 4, 5]
FRAMES = 5000
ONU_COUNTS = (2, 4, 8)
MULTI = [(8, 25 * GBPS), (4, 50 * GBPS)]
SINGLE = (1, 200 * GBPS)
SHARES = [k / 10 for k in range(1, 11)]
HIGH_SHARES = [0.7, 0.8, 0.9, 1.0]

_cache: dict = {}


def report(capsys, criterion, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {criterion} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def _grid(onus, **dims):
    return SweepGrid(channel_configs=list(DEFAULT_CHANNEL_CONFIGS), seeds=SEEDS,
                     base=ScenarioConfig(onus_per_vno=onus, num_frames=FRAMES), **dims)


def sweep(name, onus):
    """Seed-averaged compliance keyed by (channels, rate, tuning, load, share), plus raw results."""
    key = (name, onus)
    if key not in _cache:
        dims = {
            "moderate": dict(tuning_times=[0], loads=[0.2, 0.5], sla_shares=SHARES),
            "knee": dict(tuning_times=[0], loads=[0.8], sla_shares=SHARES),
            "tuning": dict(tuning_times=[t for t in DEFAULT_TUNING_TIMES if t], loads=[0.8], sla_shares=HIGH_SHARES),
        }[name]
        start = time.perf_counter()
        results = run_sweep(_grid(onus, **dims), audit=True)
        elapsed = time.perf_counter() - start
        means = {
            (s.num_channels, s.channel_rate, s.tuning_time, s.load_fraction, s.sla_share): s.mean_compliance
            for s in summarize_seeds(results)
        }
        _cache[key] = (means, results, elapsed)
    return _cache[key]


def label(ch):
    return format_channel_config(*ch)


def test_criterion_1_full_compliance_at_moderate_load(capsys):
    problems = []
    times = {}
    for onus in ONU_COUNTS:
        means, results, elapsed = sweep("moderate", onus)
        times[onus] = elapsed
        problems += [f"{onus} ONUs: {r.error}" for r in results if r.failed]
        for ch in DEFAULT_CHANNEL_CONFIGS:
            for load in (0.2, 0.5):
                # a drop is tolerated only above 90% SLA share
                for share in [s for s in SHARES if s <= 0.9]:
                    c = means[(*ch, 0, load, share)]
                    if c != 100.0:
                        problems.append(f"{onus} ONUs {label(ch)} load {load:.0%} share {share:.0%}: {c:.4f}")
    within = times[4] < 300
    if not within:
        problems.append(f"sweep took {times[4]:.0f} s at the default population (limit 300 s)")
    timing = ", ".join(f"{o} ONUs {t:.0f} s" for o, t in times.items())
    report(capsys, 1, not problems, "; ".join(problems[:5]) or f"all points at 100.00% ({timing})")


def _knee(means, ch, tuning=0, load=0.8):
    for share in SHARES:
        if means[(*ch, tuning, load, share)] < 100.0:
            return share
    return None


def test_criterion_2_knee_ordering_at_high_load(capsys):
    problems = []
    found = []
    for onus in ONU_COUNTS:
        means, _, _ = sweep("knee", onus)
        knees = {ch: _knee(means, ch) for ch in [*MULTI, SINGLE]}
        found.append(f"{onus} ONUs " + " ".join(
            f"{label(ch)}={'none' if k is None else f'{k:.0%}'}" for ch, k in knees.items()))
        # +-10 percentage points around 60% (multi) and [50%, 60%) (single)
        for ch in MULTI:
            if knees[ch] is not None and knees[ch] < 0.5 - 1e-9:
                problems.append(f"{onus} ONUs {label(ch)} knee {knees[ch]:.0%} < 50%")
        k1 = knees[SINGLE]
        if k1 is None or not 0.4 - 1e-9 <= k1 < 0.7 - 1e-9:
            problems.append(f"{onus} ONUs 1x200 knee {'none' if k1 is None else f'{k1:.0%}'} outside [40%, 70%)")
        for ch in MULTI:
            for share in SHARES:
                m, s = means[(*ch, 0, 0.8, share)], means[(*SINGLE, 0, 0.8, share)]
                if m < s:
                    problems.append(f"{onus} ONUs share {share:.0%}: {label(ch)} {m:.3f} < 1x200 {s:.3f}")
    report(capsys, 2, not problems, "; ".join(problems[:6]) or "knees " + " | ".join(found))


def test_criterion_3_tuning_time_crossover(capsys):
    problems = []
    summary = []
    for onus in ONU_COUNTS:
        means = dict(sweep("knee", onus)[0])
        means.update(sweep("tuning", onus)[0])
        for ch in MULTI:
            for share in HIGH_SHARES:
                series = [means[(*ch, t, 0.8, share)] for t in DEFAULT_TUNING_TIMES]
                if any(b > a for a, b in zip(series, series[1:])):
                    problems.append(f"{onus} ONUs {label(ch)} share {share:.0%} rises with tuning: "
                                    + "/".join(f"{v:.3f}" for v in series))
        for share in HIGH_SHARES:
            single = means[(*SINGLE, 15_000, 0.8, share)]
            for ch in MULTI:
                multi = means[(*ch, 15_000, 0.8, share)]
                if single < multi:
                    problems.append(f"{onus} ONUs share {share:.0%} at 15 us: 1x200 {single:.2f} < {label(ch)} {multi:.2f}")
        summary.append(f"{onus} ONUs at 15 us, share 100%: " + " ".join(
            f"{label(ch)} {means[(*ch, 15_000, 0.8, 1.0)]:.2f}" for ch in [*MULTI, SINGLE]))
    report(capsys, 3, not problems,
           (f"{len(problems)} failing comparisons, e.g. " + "; ".join(problems[:4])) if problems else "; ".join(summary))


def test_criterion_4_oracle_admissibility(capsys):
    start = time.perf_counter()
    instances = random_instances(200, seed=2024)
    gaps = [heuristic_gap(inst) for inst in instances]
    admissible = all(g.heuristic[1] >= g.exact[1] for g in gaps)
    zero = sum(g.gap == 0 for g in gaps)
    small = [inst for inst in instances if len(inst.allocations) <= 4]
    small += [inst for inst in random_instances(300, seed=99, max_allocations=4)]
    agree = sum(solve_exact(inst) == enumerate_optimum(inst) for inst in small)
    elapsed = time.perf_counter() - start
    ok = admissible and 2 * zero >= len(instances) and agree == len(small) and elapsed < 120
    report(capsys, 4, ok, (
        f"heuristic >= optimum on {'all' if admissible else 'NOT all'} {len(instances)} instances, "
        f"gap 0 on {zero}/{len(instances)}, exact == enumeration on {agree}/{len(small)}, {elapsed:.1f} s"
    ))


def test_criterion_5_feasibility_invariants(capsys):
    checked = 0
    problems = []
    for name in ("moderate", "knee", "tuning"):
        for onus in ONU_COUNTS:
            for r in sweep(name, onus)[1]:
                checked += 1
                problems += [f"{label((r.config.num_channels, r.config.channel_rate))}: {v}" for v in r.violations]
    report(capsys, 5, not problems and checked > 0,
           "; ".join(problems[:5]) or f"zero violations over {checked} audited runs of {FRAMES} frames")


def test_criterion_6_sla_accounting(capsys):
    rng = random.Random(6)
    mismatched = 0
    for _ in range(1000):
        stream = random_stream(rng)
        mismatched += replay(*stream) != recount(*stream)
    report(capsys, 6, mismatched == 0, f"{1000 - mismatched}/1000 grant streams match the brute-force recount")


def test_criterion_7_determinism(capsys, tmp_path):
    single = ["run", "--channels", "1x200", "--tuning", "0", "--load", "80", "--sla-share", "90",
              "--frames", "600", "--seed", "5"]
    grid = ["run", "--channels", "8x25,4x50,1x200", "--tuning", "0,15000", "--load", "50,80",
            "--sla-share", "60,100", "--frames", "300", "--seeds", "1..2"]
    runs = {
        "single-a": single, "single-b": single,
        "grid-serial": grid, "grid-jobs3": grid + ["--jobs", "3"], "grid-jobs2": grid + ["--jobs", "2"],
    }
    blobs = {}
    for name, args in runs.items():
        out = tmp_path / f"{name}.csv"
        assert cli_main(args + ["--out", str(out)]) == 0
        blobs[name] = out.read_bytes()
    ok = blobs["single-a"] == blobs["single-b"] and blobs["grid-serial"] == blobs["grid-jobs3"] == blobs["grid-jobs2"]
    report(capsys, 7, ok, "byte-identical CSVs for repeated runs and for --jobs 1/2/3" if ok else "CSV bytes differ")
