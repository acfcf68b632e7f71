"""Exact optimum of the merge problem on small slotted instances.

Time is cut into slots of one width; an allocation occupies ``length``
consecutive slots of one channel (guard included) and may not start
before its requested slot. A packet breach is a start later than the
allocation's maxtime slot; a flow breaches when its fraction of packet
breaches exceeds the flow's threshold. :func:`solve_exact` minimises
(flow breaches, packet breaches) and returns the lexicographically
smallest optimal assignment, so its output is fully deterministic.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .core import GBPS, Allocation, ScenarioConfig, SlaClass, VirtualBmap, duration_ns
from .merging import FreeTimeTables, merge_frame
from .sla import FlowState

MAX_CHANNELS = 3
MAX_SLOTS = 16
MAX_ALLOCATIONS = 8


class InstanceError(ValueError):
    """Instance too large for exact search or impossible to schedule."""


class ConversionError(RuntimeError):
    """Heuristic output does not map back onto the slot grid."""


@dataclass(frozen=True, slots=True)
class SlotAllocation:
    vno_id: int
    flow_id: int
    requested_slot: int
    length: int
    maxtime_slot: int


@dataclass(frozen=True)
class DiscreteInstance:
    num_channels: int
    num_slots: int
    vbmaps: tuple[tuple[SlotAllocation, ...], ...]
    thresholds: Mapping[int, Fraction]

    def __post_init__(self) -> None:
        allocs = self.allocations
        if self.num_channels < 1 or self.num_slots < 1:
            raise InstanceError("need at least one channel and one slot")
        if self.num_channels * self.num_slots < sum(a.length for a in allocs):
            raise InstanceError("infeasible: total allocation length exceeds channels x slots")
        for a in allocs:
            if a.length < 1 or a.requested_slot < 0 or a.requested_slot + a.length > self.num_slots:
                raise InstanceError(f"allocation {a} does not fit in {self.num_slots} slots")
            if a.flow_id not in self.thresholds:
                raise InstanceError(f"no threshold for flow {a.flow_id}")

    @property
    def allocations(self) -> list[SlotAllocation]:
        return [a for vb in self.vbmaps for a in vb]

    @property
    def flows(self) -> list[int]:
        return sorted({a.flow_id for a in self.allocations})


Assignment = tuple[tuple[int, int], ...]


def check_assignment(instance: DiscreteInstance, assignment: Sequence[tuple[int, int]]) -> None:
    """Raise ValueError unless every allocation holds one free (channel, start) pair."""
    allocs = instance.allocations
    if len(assignment) != len(allocs):
        raise ValueError("conservation violated: one (channel, slot) pair per allocation required")
    busy = np.zeros((instance.num_channels, instance.num_slots), dtype=np.int64)
    for a, (c, t) in zip(allocs, assignment):
        if not 0 <= c < instance.num_channels:
            raise ValueError(f"channel {c} out of range")
        if t < a.requested_slot or t + a.length > instance.num_slots:
            raise ValueError(f"start slot {t} outside [{a.requested_slot}, {instance.num_slots - a.length}]")
        busy[c, t:t + a.length] += 1
    if busy.max(initial=0) > 1:
        raise ValueError("channel exclusivity violated: a (channel, slot) pair holds two allocations")


def objective(instance: DiscreteInstance, assignment: Sequence[tuple[int, int]]) -> tuple[int, int]:
    """(packet_breaches, flow_breaches) of a feasible assignment."""
    check_assignment(instance, assignment)
    late: dict[int, int] = {}
    count: dict[int, int] = {}
    for a, (_, t) in zip(instance.allocations, assignment):
        count[a.flow_id] = count.get(a.flow_id, 0) + 1
        late[a.flow_id] = late.get(a.flow_id, 0) + (t > a.maxtime_slot)
    packets = sum(late.values())
    flows = sum(Fraction(late[f], count[f]) > instance.thresholds[f] for f in count)
    return packets, flows


def _flow_limits(instance: DiscreteInstance) -> dict[int, int]:
    """Largest number of late packets each flow tolerates without breaching."""
    count: dict[int, int] = {}
    for a in instance.allocations:
        count[a.flow_id] = count.get(a.flow_id, 0) + 1
    # breach iff late / n > thr  <=>  late > floor(thr * n)
    return {f: int(instance.thresholds[f] * n) for f, n in count.items()}


def _greedy(instance: DiscreteInstance) -> Assignment:
    """Earliest feasible slot in allocation order; only used as an upper bound."""
    busy = np.zeros((instance.num_channels, instance.num_slots), dtype=bool)
    out = []
    for a in instance.allocations:
        placed = None
        for t in range(a.requested_slot, instance.num_slots - a.length + 1):
            for c in range(instance.num_channels):
                if not busy[c, t:t + a.length].any():
                    placed = (c, t)
                    break
            if placed:
                break
        if placed is None:
            return ()
        busy[placed[0], placed[1]:placed[1] + a.length] = True
        out.append(placed)
    return tuple(out)


def solve_exact(instance: DiscreteInstance) -> tuple[Assignment, tuple[int, int]]:
    """Optimal assignment and its (packet_breaches, flow_breaches).

    Depth-first search over allocations in order, trying (channel, slot)
    pairs in lexicographic order and pruning on a lower bound that counts
    allocations with no on-time position left. Channels are
    interchangeable, so a new channel is only ever opened at the lowest
    unused index; the lexicographically smallest optimum always has that
    form, which keeps the result unique.
    """
    allocs = instance.allocations
    n, C, T = len(allocs), instance.num_channels, instance.num_slots
    if n > MAX_ALLOCATIONS or C > MAX_CHANNELS or T > MAX_SLOTS:
        raise InstanceError(
            f"instance too large for exact search (at most {MAX_ALLOCATIONS} allocations, "
            f"{MAX_CHANNELS} channels, {MAX_SLOTS} slots)"
        )
    flows = instance.flows
    fidx = {f: k for k, f in enumerate(flows)}
    limits = [_flow_limits(instance)[f] for f in flows]
    a_flow = [fidx[a.flow_id] for a in allocs]
    a_req = [a.requested_slot for a in allocs]
    a_len = [a.length for a in allocs]
    a_max = [a.maxtime_slot for a in allocs]
    masks = [[((1 << a_len[i]) - 1) << t for t in range(T)] for i in range(n)]

    greedy = _greedy(instance)
    if not greedy:
        raise InstanceError("infeasible: no schedule fits within the slot horizon")
    g_packets, g_flows = objective(instance, greedy)
    best_val = [(g_flows, g_packets + 1)]
    best: list[Assignment | None] = [None]
    busy = [0] * C
    late = [0] * len(flows)
    choice: list[tuple[int, int]] = []

    def bound(i: int) -> tuple[int, int]:
        forced = list(late)
        for j in range(i, n):
            lo, hi = a_req[j], min(a_max[j], T - a_len[j])
            if not any(not (busy[c] & masks[j][t]) for t in range(lo, hi + 1) for c in range(C)):
                forced[a_flow[j]] += 1
        return sum(x > lim for x, lim in zip(forced, limits)), sum(forced)

    def dfs(i: int, used: int) -> None:
        if i == n:
            val = (sum(x > lim for x, lim in zip(late, limits)), sum(late))
            if val < best_val[0]:
                best_val[0] = val
                best[0] = tuple(choice)
            return
        if bound(i) >= best_val[0]:
            return
        f = a_flow[i]
        for c in range(min(used + 1, C)):
            for t in range(a_req[i], T - a_len[i] + 1):
                m = masks[i][t]
                if busy[c] & m:
                    continue
                is_late = t > a_max[i]
                busy[c] |= m
                late[f] += is_late
                choice.append((c, t))
                dfs(i + 1, max(used, c + 1))
                choice.pop()
                late[f] -= is_late
                busy[c] ^= m

    dfs(0, 0)
    assignment = best[0]
    if assignment is None:  # greedy itself is optimal and lexicographically first
        assignment = greedy
    check_assignment(instance, assignment)
    return assignment, objective(instance, assignment)


def enumerate_optimum(instance: DiscreteInstance) -> tuple[Assignment, tuple[int, int]]:
    """Brute-force optimum over every feasible assignment (small instances only).

    Shares nothing with :func:`solve_exact` beyond the instance: all
    placements are enumerated as numpy rows and filtered for overlaps.
    """
    allocs = instance.allocations
    C, T = instance.num_channels, instance.num_slots
    options = [
        np.array([(c, t) for c in range(C) for t in range(a.requested_slot, T - a.length + 1)], dtype=np.int16)
        for a in allocs
    ]
    rows = np.zeros((1, 0), dtype=np.int16)
    for i, (a, opts) in enumerate(zip(allocs, options)):
        k = len(opts)
        rows = np.repeat(rows, k, axis=0)
        new = np.tile(opts, (len(rows) // k, 1))
        ok = np.ones(len(rows), dtype=bool)
        for j in range(i):
            cj, tj = rows[:, 2 * j], rows[:, 2 * j + 1]
            overlap = (new[:, 1] < tj + allocs[j].length) & (tj < new[:, 1] + a.length)
            ok &= ~((cj == new[:, 0]) & overlap)
        rows = np.hstack([rows, new])[ok]
    if not len(rows):
        raise InstanceError("infeasible: no schedule fits within the slot horizon")
    starts = rows[:, 1::2]
    late = starts > np.array([a.maxtime_slot for a in allocs])
    packets = late.sum(axis=1)
    flow_ids = np.array([a.flow_id for a in allocs])
    flows = np.zeros(len(rows), dtype=np.int64)
    for fid in np.unique(flow_ids):
        members = flow_ids == fid
        thr = instance.thresholds[int(fid)]
        # late / n > p / q  <=>  late * q > p * n
        flows += late[:, members].sum(axis=1) * thr.denominator > thr.numerator * members.sum()
    order = np.lexsort(tuple(rows[:, k] for k in range(rows.shape[1] - 1, -1, -1)) + (packets, flows))
    top = rows[order[0]]
    assignment = tuple((int(top[2 * i]), int(top[2 * i + 1])) for i in range(len(allocs)))
    return assignment, (int(packets[order[0]]), int(flows[order[0]]))


def slot_width(config: ScenarioConfig) -> int:
    """Mean burst duration at the channel rate with guard folded in."""
    return duration_ns(config.mean_burst_bits, config.channel_rate) + config.guard_time


def to_vbmaps(instance: DiscreteInstance, config: ScenarioConfig) -> tuple[list[VirtualBmap], int]:
    """Continuous-time virtual maps for ``instance`` and the slot width used."""
    width = slot_width(config)
    rate = config.channel_rate
    vbmaps = []
    aid = 0
    for v, vb in enumerate(instance.vbmaps):
        allocs = []
        for a in vb:
            target = a.length * width - config.guard_time
            bits = target * rate // 1_000_000_000
            if duration_ns(bits, rate) != target:
                raise ConversionError(f"no payload gives a {target} ns burst at {rate} bit/s")
            thr = instance.thresholds[a.flow_id]
            sla = SlaClass(
                latency_target=(a.maxtime_slot - a.requested_slot) * width,
                compliance_pct=float(100 - 100 * thr),
            )
            if sla.threshold_fraction != thr:
                raise ConversionError(f"threshold {thr} is not representable as a compliance percentage")
            allocs.append(
                Allocation(
                    alloc_id=aid, vno_id=v, onu_id=a.flow_id, flow_id=a.flow_id,
                    requested_start=a.requested_slot * width, payload_bits=bits, sla=sla,
                )
            )
            aid += 1
        vbmaps.append(VirtualBmap(v, 0, tuple(allocs), rate))
    return vbmaps, width


def heuristic_assignment(instance: DiscreteInstance, config: ScenarioConfig | None = None) -> Assignment:
    """Run the merging engine on ``instance`` and read its grants back as slots."""
    config = instance_config(instance, config)
    vbmaps, width = to_vbmaps(instance, config)
    flow_states = {}
    for vb in vbmaps:
        for a in vb.allocations:
            flow_states.setdefault(a.flow_id, FlowState(a.flow_id, a.sla, config.window_frames))
    outcome = merge_frame(vbmaps, flow_states, FreeTimeTables.for_config(config), config)
    if outcome.pending:
        raise ConversionError(f"{len(outcome.pending)} allocations left unscheduled inside the instance horizon")
    by_id = {g.alloc_id: g for g in outcome.physical_bmap}
    out = []
    for aid in range(len(instance.allocations)):
        g = by_id[aid]
        slot, rem = divmod(g.scheduled_start, width)
        if rem:
            raise ConversionError(f"allocation {aid} starts at {g.scheduled_start} ns, off the {width} ns grid")
        out.append((g.channel, slot))
    return tuple(out)


def instance_config(instance: DiscreteInstance, config: ScenarioConfig | None = None) -> ScenarioConfig:
    base = config or ScenarioConfig(channel_rate=200 * GBPS, num_frames=1)
    width = slot_width(base)
    return base.replace(
        num_channels=instance.num_channels,
        tuning_time=0,
        frame_duration=instance.num_slots * width,
    )


@dataclass(frozen=True)
class GapResult:
    heuristic: tuple[int, int]
    exact: tuple[int, int]
    heuristic_assignment: Assignment
    exact_assignment: Assignment

    @property
    def gap(self) -> int:
        """Extra flow breaches of the heuristic over the optimum."""
        return self.heuristic[1] - self.exact[1]


def heuristic_gap(instance: DiscreteInstance, config: ScenarioConfig | None = None) -> GapResult:
    h_assign = heuristic_assignment(instance, config)
    h_obj = objective(instance, h_assign)
    e_assign, e_obj = solve_exact(instance)
    if h_obj[1] < e_obj[1]:
        raise AssertionError(f"heuristic beat the exact optimum: {h_obj} < {e_obj}")
    return GapResult(h_obj, e_obj, h_assign, e_assign)


THRESHOLD_CHOICES = (Fraction(0), Fraction(1, 10), Fraction(1, 4), Fraction(1, 2))


def random_instance(
    rng: random.Random,
    max_allocations: int = MAX_ALLOCATIONS,
    max_channels: int = MAX_CHANNELS,
    max_slots: int = MAX_SLOTS,
) -> DiscreteInstance:
    """A random small instance on which any work-conserving schedule fits.

    Requested slots are kept low enough that even a fully serial schedule
    ends inside the horizon, so the heuristic never runs out of frame.
    """
    C = rng.randint(1, max_channels)
    n = rng.randint(1, max_allocations)
    lengths = [rng.choice((1, 1, 2)) for _ in range(n)]
    while sum(lengths) > max_slots - 1:
        lengths[lengths.index(max(lengths))] -= 1
    T = rng.randint(sum(lengths) + 1, max_slots)
    latest = T - sum(lengths)
    num_vnos = rng.randint(1, min(3, n))
    num_flows = rng.randint(1, n)
    thresholds = {f: rng.choice(THRESHOLD_CHOICES) for f in range(num_flows)}
    per_vno: list[list[SlotAllocation]] = [[] for _ in range(num_vnos)]
    for length in lengths:
        req = rng.randint(0, latest)
        slack = rng.randint(0, 3)
        per_vno[rng.randrange(num_vnos)].append(
            SlotAllocation(rng.randrange(0, num_vnos), rng.randrange(num_flows), req, length, req + slack)
        )
    vbmaps = tuple(tuple(v) for v in per_vno if v)
    # renumber the vno ids to match their map
    vbmaps = tuple(
        tuple(SlotAllocation(k, a.flow_id, a.requested_slot, a.length, a.maxtime_slot) for a in vb)
        for k, vb in enumerate(vbmaps)
    )
    used = {a.flow_id for vb in vbmaps for a in vb}
    return DiscreteInstance(C, T, vbmaps, {f: thresholds[f] for f in sorted(used)})


def random_instances(count: int, seed: int, **limits) -> list[DiscreteInstance]:
    rng = random.Random(seed)
    return [random_instance(rng, **limits) for _ in range(count)]


__all__ = [
    "ConversionError",
    "DiscreteInstance",
    "GapResult",
    "InstanceError",
    "SlotAllocation",
    "check_assignment",
    "enumerate_optimum",
    "heuristic_assignment",
    "heuristic_gap",
    "objective",
    "random_instance",
    "random_instances",
    "solve_exact",
    "slot_width",
]
