"""Synthetic virtual bandwidth maps: one per VNO per frame."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import (
    NS_PER_S,
    Allocation,
    ConfigError,
    ScenarioConfig,
    SlaClass,
    VirtualBmap,
    duration_ns,
)

_MASK64 = (1 << 64) - 1
# alloc_id layout: frame | vno | index-within-vbmap
_ALLOC_INDEX_BITS = 16
_VNO_BITS = 12


class InfeasibleLoadError(ConfigError):
    """Requested load does not fit on a VNO's virtual timeline."""


@dataclass(frozen=True, slots=True)
class FlowProfile:
    flow_id: int
    vno_id: int
    onu_id: int
    sla: SlaClass | None
    weight: float


def _split_counts(total: int, fractions: tuple[float, ...]) -> list[int]:
    """Largest-remainder apportionment of ``total`` items."""
    norm = sum(fractions)
    raw = [total * f / norm for f in fractions]
    counts = [int(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def build_flow_population(config: ScenarioConfig) -> list[FlowProfile]:
    """Create every flow of the scenario with its SLA class and load weight.

    Within each VNO the SLA flows jointly carry ``sla_share`` of the VNO's
    load and the best-effort flows carry the rest. SLA flows are spread over
    ONUs before any ONU gets a second one.
    """
    share = config.sla_share
    if not 0 <= share <= 1:
        raise ConfigError(f"sla_share must lie in [0, 1], got {share}")
    per_vno = config.onus_per_vno * config.flows_per_onu
    n_sla = round(share * per_vno)
    if share > 0:
        n_sla = max(n_sla, 1)
    if share < 1 and per_vno > 1:
        n_sla = min(n_sla, per_vno - 1)
    n_be = per_vno - n_sla
    class_counts = _split_counts(n_sla, config.sla_class_split) if n_sla else []
    class_of_rank: list[SlaClass] = []
    # interleave classes so each ONU sees a mix
    remaining = list(class_counts)
    while len(class_of_rank) < n_sla:
        for idx, left in enumerate(remaining):
            if left:
                class_of_rank.append(config.sla_classes[idx])
                remaining[idx] -= 1

    flows: list[FlowProfile] = []
    for vno in range(config.num_vnos):
        slots = sorted(
            ((o, j) for o in range(config.onus_per_vno) for j in range(config.flows_per_onu)),
            key=lambda oj: (oj[1], oj[0]),
        )
        sla_of = {slot: class_of_rank[rank] for rank, slot in enumerate(slots[:n_sla])}
        for o in range(config.onus_per_vno):
            onu_id = vno * config.onus_per_vno + o
            for j in range(config.flows_per_onu):
                flow_id = onu_id * config.flows_per_onu + j
                sla = sla_of.get((o, j))
                if sla is not None:
                    weight = share / n_sla
                else:
                    weight = (1 - share) / n_be if n_be else 0.0
                flows.append(FlowProfile(flow_id, vno, onu_id, sla, weight))
    return flows


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MAX_PLACEMENT_ATTEMPTS = 16


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_key(seed, vno_id, frame_index):
    """Counter-based stream key for one (VNO, frame) pair."""
    k = _mix64(np.uint64(seed) + _GOLDEN)
    k = _mix64(k ^ (np.uint64(vno_id) + _GOLDEN))
    return _mix64(k ^ (np.uint64(frame_index) * _GOLDEN + np.uint64(1)))


@njit(cache=True)
def _uniform(key, counter):
    x = _mix64(key + np.uint64(counter) * _GOLDEN)
    return float(x >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def vbmap_arrays(
    key, target_bits, lo, hi, ref_rate, lanes, channel_rate, guard, frame,
    weights, flow_onu, n_onus, stratified=False,
):
    """Draw one virtual map as arrays (starts, sizes, flow index, status).

    status is 0 on success and -1 when the load does not fit the virtual
    timeline. Burst sizes are uniform on [lo, hi] bits; the burst crossing
    ``target_bits`` is kept with probability (target - sum_before) / size so
    the expected payload is exactly the target. Bursts sit on ``lanes``
    virtual timelines at ``ref_rate`` with uniform random idle gaps. Each
    burst then goes to a flow whose ONU transmitter is idle at that time
    (at ``channel_rate``); if none is, the burst waits for the first ONU to
    free up.
    """
    ctr = 0
    cap = target_bits // lo + 2
    sizes = np.empty(cap, np.int64)
    n = 0
    cum = 0
    while cum < target_bits and target_bits > 0:
        s = lo + int(_uniform(key, ctr) * (hi - lo + 1))
        ctr += 1
        if cum + s >= target_bits:
            if _uniform(key, ctr) * s < target_bits - cum:
                sizes[n] = s
                n += 1
            ctr += 1
            break
        sizes[n] = s
        n += 1
        cum += s
    sizes = sizes[:n]
    starts = np.empty(n, np.int64)
    flows = np.empty(n, np.int64)
    if n == 0:
        return starts, sizes, flows, 0

    ref = np.empty(n, np.int64)
    phys = np.empty(n, np.int64)
    for i in range(n):
        ref[i] = -(-sizes[i] * 1000000000 // ref_rate)
        phys[i] = -(-sizes[i] * 1000000000 // channel_rate)
    lane = np.zeros(n, np.int64)
    lane_busy = np.zeros(lanes, np.int64)
    for i in range(n):
        best = 0
        for k in range(1, lanes):
            if lane_busy[k] < lane_busy[best]:
                best = k
        lane[i] = best
        lane_busy[best] += ref[i] + guard
    for k in range(lanes):
        if lane_busy[k] > frame:
            return starts, sizes, flows, -1

    active = np.zeros(n_onus, np.bool_)
    for j in range(len(weights)):
        if weights[j] > 0:
            active[flow_onu[j]] = True
    nominal = np.empty(n, np.int64)
    onu_free = np.empty(n_onus, np.int64)
    lane_free = np.empty(lanes, np.int64)
    for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
        for k in range(lanes):
            slack = frame - lane_busy[k]
            m = 0
            for i in range(n):
                if lane[i] == k:
                    m += 1
            cuts = np.empty(m, np.int64)
            for j in range(m):
                if stratified:
                    cuts[j] = int((j + _uniform(key, ctr)) * (slack + 1) / m)
                else:
                    cuts[j] = int(_uniform(key, ctr) * (slack + 1))
                ctr += 1
            cuts.sort()
            offset = 0
            j = 0
            for i in range(n):
                if lane[i] == k:
                    nominal[i] = offset + cuts[j]
                    offset += ref[i] + guard
                    j += 1
        order = np.argsort(nominal, kind="mergesort")
        onu_free[:] = -(1 << 62)
        lane_free[:] = 0
        ok = True
        for i in order:
            t = nominal[i]
            if lane_free[lane[i]] > t:
                t = lane_free[lane[i]]
            earliest = 1 << 62
            for o in range(n_onus):
                if active[o] and onu_free[o] < earliest:
                    earliest = onu_free[o]
            if earliest > t:
                t = earliest
            if t >= frame:
                ok = False
                break
            avail_w = 0.0
            for j in range(len(weights)):
                if onu_free[flow_onu[j]] <= t:
                    avail_w += weights[j]
            u = _uniform(key, ctr) * avail_w
            ctr += 1
            pick = -1
            acc = 0.0
            for j in range(len(weights)):
                if weights[j] > 0 and onu_free[flow_onu[j]] <= t:
                    pick = j
                    acc += weights[j]
                    if u < acc:
                        break
            starts[i] = t
            flows[i] = pick
            onu_free[flow_onu[pick]] = t + phys[i] + guard
            lane_free[lane[i]] = t + ref[i] + guard
        if ok:
            order = np.argsort(starts, kind="mergesort")
            return starts[order], sizes[order], flows[order], 0
    return starts, sizes, flows, -1


def frame_rng(seed: int, vno_id: int, frame_index: int) -> np.uint64:
    return np.uint64(stream_key(np.uint64(seed & _MASK64), vno_id, frame_index))


def vno_payload_targets(config: ScenarioConfig) -> list[int]:
    """Payload bits each VNO requests per frame."""
    weights = config.vno_weights or (1.0,) * config.num_vnos
    total = sum(weights)
    frame_bits = config.load_fraction * config.capacity * config.frame_duration / NS_PER_S
    return [round(frame_bits * w / total) for w in weights]


def burst_bounds(config: ScenarioConfig) -> tuple[int, int]:
    mean = config.mean_burst_bits
    lo = max(1, round(mean * (1 - config.burst_spread)))
    hi = max(lo, round(mean * (1 + config.burst_spread)))
    return lo, hi


def timeline_geometry(config: ScenarioConfig) -> tuple[int, int]:
    """(reference_rate, lanes) of every virtual map."""
    if config.virtual_timeline == "single":
        return config.capacity, 1
    return config.channel_rate, config.num_channels


@dataclass(frozen=True)
class VnoFlows:
    """Flow table of one VNO in the array layout the generator consumes."""

    flows: tuple[FlowProfile, ...]
    weights: np.ndarray
    onu_index: np.ndarray
    n_onus: int


def vno_flow_tables(flows: list[FlowProfile], config: ScenarioConfig) -> list[VnoFlows]:
    tables = []
    for vno in range(config.num_vnos):
        own = tuple(f for f in flows if f.vno_id == vno)
        onus = sorted({f.onu_id for f in own})
        local = {o: k for k, o in enumerate(onus)}
        tables.append(
            VnoFlows(
                flows=own,
                weights=np.array([f.weight for f in own], dtype=np.float64),
                onu_index=np.array([local[f.onu_id] for f in own], dtype=np.int64),
                n_onus=max(1, len(onus)),
            )
        )
    return tables


def alloc_id_base(frame_index: int, vno_id: int) -> int:
    return ((frame_index << _VNO_BITS) | vno_id) << _ALLOC_INDEX_BITS


def generate_vbmap(
    table: VnoFlows,
    vno_id: int,
    frame_index: int,
    config: ScenarioConfig,
    target_bits: int,
    seed: int,
) -> VirtualBmap:
    ref_rate, lanes = timeline_geometry(config)
    lo, hi = burst_bounds(config)
    starts, sizes, picks, status = vbmap_arrays(
        frame_rng(seed, vno_id, frame_index), target_bits, lo, hi, ref_rate, lanes,
        config.channel_rate, config.guard_time, config.frame_duration,
        table.weights, table.onu_index, table.n_onus, config.placement == "stratified",
    )
    if status != 0:
        raise InfeasibleLoadError(
            f"load exceeds capacity of VNO {vno_id}'s virtual timeline in frame {frame_index}"
        )
    base = alloc_id_base(frame_index, vno_id)
    allocs = []
    for k, (start, size, pick) in enumerate(zip(starts.tolist(), sizes.tolist(), picks.tolist())):
        flow = table.flows[pick]
        allocs.append(
            Allocation(
                alloc_id=base | k,
                vno_id=vno_id,
                onu_id=flow.onu_id,
                flow_id=flow.flow_id,
                requested_start=start,
                payload_bits=size,
                sla=flow.sla,
            )
        )
    return VirtualBmap(vno_id, frame_index, tuple(allocs), ref_rate, lanes)


def generate_frame(
    flows: list[FlowProfile],
    frame_index: int,
    config: ScenarioConfig,
    seed: int | None = None,
    tables: list[VnoFlows] | None = None,
) -> list[VirtualBmap]:
    """All virtual maps of one frame; a pure function of (config, seed, frame_index)."""
    seed = config.seed if seed is None else seed
    tables = tables or vno_flow_tables(flows, config)
    targets = vno_payload_targets(config)
    return [
        generate_vbmap(tables[vno], vno, frame_index, config, targets[vno], seed)
        for vno in range(config.num_vnos)
    ]


def payload_time(vbmaps: list[VirtualBmap], rate: int) -> int:
    return sum(duration_ns(a.payload_bits, rate) for vb in vbmaps for a in vb.allocations)
