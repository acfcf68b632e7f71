"""Stateful multi-wavelength merging of virtual bandwidth maps.

Every frame the engine takes the virtual maps of all VNOs and produces
one physical map: a channel, a start time, a transceiver and a receiver
for each allocation. Allocations that fit at their requested time keep
it. Where requests contend for more channels than exist, the contenders
are ordered by how close their flow is to breaching its SLA, then by
maxtime, then by size; best-effort traffic goes last.
"""
from __future__ import annotations

import heapq
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .core import Allocation, PhysicalGrant, ScenarioConfig, VirtualBmap, compute_maxtime, duration_ns
from .sla import FlowState


class TransceiverState:
    __slots__ = ("onu_id", "transceiver_id", "current_channel", "earliest_free")

    def __init__(self, onu_id: int, transceiver_id: int, current_channel: int | None = None, earliest_free: int = 0):
        self.onu_id = onu_id
        self.transceiver_id = transceiver_id
        self.current_channel = current_channel
        self.earliest_free = earliest_free

    def __repr__(self) -> str:
        return (
            f"TransceiverState(onu={self.onu_id}, id={self.transceiver_id}, "
            f"channel={self.current_channel}, free={self.earliest_free})"
        )


class FreeTimeTables:
    """Earliest-free times of channels, OLT receivers and ONU transceivers.

    Times are relative to the start of ``frame_index``; :meth:`align`
    rebases them when the engine moves on to a later frame, so residual
    occupancy past a frame boundary carries over.
    """

    def __init__(self, num_channels: int, transceivers_per_onu: int = 1):
        self.num_channels = num_channels
        self.transceivers_per_onu = transceivers_per_onu
        self.channel_free = [0] * num_channels
        # one burst-mode receiver per wavelength; receiver id == channel index
        self.receiver_free = [0] * num_channels
        self.transceivers: dict[int, list[TransceiverState]] = {}
        # allocations that could not start in their frame, with their origin frame
        self.backlog: list[tuple[Allocation, int]] = []
        self.frame_index: int | None = None

    @classmethod
    def for_config(cls, config: ScenarioConfig) -> "FreeTimeTables":
        return cls(config.num_channels, config.transceivers_per_onu)

    def onu(self, onu_id: int) -> list[TransceiverState]:
        xcvrs = self.transceivers.get(onu_id)
        if xcvrs is None:
            xcvrs = [TransceiverState(onu_id, k) for k in range(self.transceivers_per_onu)]
            self.transceivers[onu_id] = xcvrs
        return xcvrs

    def align(self, frame_index: int, frame_duration: int) -> None:
        if self.frame_index is None:
            self.frame_index = frame_index
            return
        steps = frame_index - self.frame_index
        if steps < 0:
            raise ValueError(f"frame {frame_index} arrives after frame {self.frame_index}")
        if steps:
            shift = steps * frame_duration
            self.channel_free = [t - shift for t in self.channel_free]
            self.receiver_free = [t - shift for t in self.receiver_free]
            for xcvrs in self.transceivers.values():
                for x in xcvrs:
                    x.earliest_free -= shift
            self.frame_index = frame_index


@dataclass
class MergeOutcome:
    physical_bmap: list[PhysicalGrant]
    allocations: dict[int, Allocation]
    delays: dict[int, int]
    retunes: int
    deferred: int
    clear_ids: frozenset[int] = field(default_factory=frozenset)
    pending: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.physical_bmap)


def _intervals(allocs: Sequence[Allocation], config: ScenarioConfig) -> list[tuple[int, int]]:
    rate, guard = config.channel_rate, config.guard_time
    return [(a.requested_start, a.requested_start + duration_ns(a.payload_bits, rate) + guard) for a in allocs]


def detect_collisions(
    vbmaps: Sequence[VirtualBmap], config: ScenarioConfig
) -> tuple[list[Allocation], list[Allocation]]:
    """Split allocations by whether they fit at their requested times.

    Each allocation occupies [start, start + duration + guard) at its
    requested time. Wherever more than ``num_channels`` of these intervals
    overlap, every allocation touching that stretch is colliding.
    """
    allocs = [a for vb in vbmaps for a in vb.allocations]
    spans = _intervals(allocs, config)
    # ends sort before starts at equal times: touching intervals do not overlap
    events = sorted([(s, 1) for s, _ in spans] + [(e, -1) for _, e in spans])
    cap = config.num_channels
    seg_starts: list[int] = []
    seg_ends: list[int] = []
    active = 0
    for t, step in events:
        active += step
        if step == 1 and active == cap + 1:
            seg_starts.append(t)
        elif step == -1 and active == cap:
            seg_ends.append(t)
    clear, colliding = [], []
    for a, (s, e) in zip(allocs, spans):
        k = bisect_left(seg_starts, e) - 1
        if k >= 0 and seg_ends[k] > s:
            colliding.append(a)
        else:
            clear.append(a)
    return clear, colliding


def collision_sort_key(alloc: Allocation, flow_state: FlowState | None = None, mode: str = "margin") -> tuple:
    """Order in which contending allocations are served.

    SLA allocations come first, flows closest to breaching their SLA
    (smallest margin) ahead of the rest; then earlier maxtime, smaller
    payload, lower id. ``mode="literal-rate-ascending"`` ranks SLA flows by
    ascending non-compliance rate instead of ascending margin.
    """
    maxtime = alloc.maxtime if alloc.maxtime is not None else compute_maxtime(alloc, 0)
    if alloc.sla is None:
        return (1, 0.0, maxtime, alloc.payload_bits, alloc.alloc_id)
    if mode == "margin":
        prio = flow_state.margin if flow_state is not None else alloc.sla.non_compliance_threshold
    else:
        prio = flow_state.non_compliance_rate if flow_state is not None else 0.0
    return (0, prio, maxtime, alloc.payload_bits, alloc.alloc_id)


def _choose(onu_id: int, req: int, tables: FreeTimeTables, tuning_time: int) -> tuple[TransceiverState, int, int, bool]:
    """Transceiver, channel, start time and retune flag ``assign`` would pick."""
    xcvrs = tables.onu(onu_id)
    xcvr = xcvrs[0]
    for x in xcvrs[1:]:
        if x.earliest_free < xcvr.earliest_free:
            xcvr = x
    chan_free, recv_free = tables.channel_free, tables.receiver_free
    current = xcvr.current_channel
    best, best_at = -1, 0
    for c in range(tables.num_channels):
        at = chan_free[c]
        if recv_free[c] > at:
            at = recv_free[c]
        if at < req:
            at = req
        if best < 0 or at < best_at or (at == best_at and c == current):
            best, best_at = c, at
    tuned = current is not None and current != best
    ready = xcvr.earliest_free + tuning_time if tuned else xcvr.earliest_free
    return xcvr, best, (best_at if best_at > ready else ready), tuned


def _book(
    alloc: Allocation, req: int, tables: FreeTimeTables, config: ScenarioConfig,
    xcvr: TransceiverState, channel: int, start: int, tuned: bool,
) -> PhysicalGrant:
    duration = duration_ns(alloc.payload_bits, config.channel_rate)
    free_at = start + duration + config.guard_time
    tables.channel_free[channel] = free_at
    tables.receiver_free[channel] = free_at
    xcvr.earliest_free = free_at
    xcvr.current_channel = channel
    return PhysicalGrant(
        alloc_id=alloc.alloc_id,
        channel=channel,
        scheduled_start=start,
        duration=duration,
        transceiver_id=(alloc.onu_id, xcvr.transceiver_id),
        receiver_id=channel,
        tuned=tuned,
        requested_start=req,
    )


def assign(alloc: Allocation, tables: FreeTimeTables, config: ScenarioConfig) -> PhysicalGrant:
    """Give ``alloc`` a transceiver, a channel and a start time, and book them.

    The ONU's earliest-free transceiver is used. The channel is the one
    free earliest (no earlier than the requested start); ties go to the
    channel the transceiver is already tuned to, then to the lowest index.
    The start waits for the channel, its receiver and the transceiver,
    plus the tuning time if the transceiver has to change wavelength.
    """
    xcvr, channel, start, tuned = _choose(alloc.onu_id, alloc.requested_start, tables, config.tuning_time)
    return _book(alloc, alloc.requested_start, tables, config, xcvr, channel, start, tuned)


def merge_frame(
    vbmaps: Sequence[VirtualBmap],
    flow_states: Mapping[int, FlowState],
    tables: FreeTimeTables,
    config: ScenarioConfig,
) -> MergeOutcome:
    """Merge one frame's virtual maps into a physical map.

    Allocations are released at their requested times. Whenever a channel
    frees up, the pending allocation that ranks first among those able to
    start is assigned: clear allocations (no contention at their requested
    time) in time order, then colliding ones by :func:`collision_sort_key`.
    Allocations that cannot start before the frame ends stay in
    ``tables.backlog`` and compete again, as late colliding allocations, in
    the next frame. Bursts that start inside the frame may run past its end.
    """
    if not vbmaps:
        raise ValueError("merge_frame needs at least one virtual map")
    frame_index = vbmaps[0].frame_index
    if any(vb.frame_index != frame_index for vb in vbmaps):
        raise ValueError("all virtual maps must belong to the same frame")
    tables.align(frame_index, config.frame_duration)
    frame, horizon, mode = config.frame_duration, config.frame_horizon, config.sort_mode

    allocs: dict[int, Allocation] = {}
    req: dict[int, int] = {}
    keys: dict[int, tuple] = {}
    carried: dict[int, tuple[Allocation, int]] = {}
    for original, origin in tables.backlog:
        shift = (frame_index - origin) * frame
        aid = original.alloc_id
        carried[aid] = (original, origin)
        allocs[aid] = replace(original, maxtime=compute_maxtime(original, horizon) - shift)
        req[aid] = original.requested_start - shift
    _, colliding = detect_collisions(vbmaps, config)
    colliding_ids = {a.alloc_id for a in colliding} | carried.keys()
    for vb in vbmaps:
        for a in vb.allocations:
            if a.maxtime is None:
                a = replace(a, maxtime=compute_maxtime(a, horizon))
            allocs[a.alloc_id] = a
            req[a.alloc_id] = a.requested_start
    for aid, a in allocs.items():
        if aid in colliding_ids:
            keys[aid] = (1,) + collision_sort_key(a, flow_states.get(a.flow_id), mode)
        else:
            # clear allocations take precedence, in requested-time order
            keys[aid] = (0, 0, 0.0, req[aid], 0, aid)
    arrivals = sorted(allocs, key=lambda aid: (req[aid], aid))

    chan_free, recv_free = tables.channel_free, tables.receiver_free
    tuning = config.tuning_time
    grants: list[PhysicalGrant] = []
    delays: dict[int, int] = {}
    ready: list = []
    n, i = len(arrivals), 0
    retunes = deferred = 0
    t = None
    while i < n or ready:
        free_now = min(max(cf, rf) for cf, rf in zip(chan_free, recv_free))
        if t is None or t < free_now:
            t = free_now
        if not ready and req[arrivals[i]] > t:
            t = req[arrivals[i]]
        if t >= frame:
            break
        while i < n and req[arrivals[i]] <= t:
            heapq.heappush(ready, keys[arrivals[i]])
            i += 1
        # serve the best-ranked allocation able to start at t; ones whose
        # transceiver is still busy stay queued and do not hold a channel
        blocked = []
        chosen = None
        while ready:
            key = heapq.heappop(ready)
            aid = key[-1]
            pick = _choose(allocs[aid].onu_id, req[aid], tables, tuning)
            if pick[2] <= t:
                chosen = aid, pick
                break
            blocked.append((pick[2], key))
        for _, key in blocked:
            heapq.heappush(ready, key)
        if chosen is None:
            t = min(s for s, _ in blocked)
            if i < n and req[arrivals[i]] < t:
                t = req[arrivals[i]]
            continue
        aid, (xcvr, channel, start, tuned) = chosen
        alloc = allocs[aid]
        grants.append(_book(alloc, req[aid], tables, config, xcvr, channel, start, tuned))
        delays[aid] = start - req[aid]
        retunes += tuned
        deferred += start > alloc.maxtime

    pending = sorted([key[-1] for key in ready] + arrivals[i:])
    tables.backlog = [carried.get(aid) or (allocs[aid], frame_index) for aid in pending]
    return MergeOutcome(
        grants, allocs, delays, retunes, deferred,
        frozenset(allocs.keys() - colliding_ids), pending,
    )


class ScheduleAuditor:
    """Independent feasibility checks over a sequence of merged frames.

    Keeps the last booking of every channel and transceiver in absolute
    time so overlaps across frame boundaries are caught too.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.channel_last: dict[int, tuple[int, int]] = {}
        self.xcvr_last: dict[tuple[int, int], tuple[int, int, int]] = {}
        self.violations: list[str] = []
        self.granted: set[int] = set()
        self.frames_checked = 0

    def _fail(self, message: str) -> None:
        self.violations.append(message)

    def check_frame(self, frame_index: int, outcome: MergeOutcome, expected_ids: set[int] | None = None) -> bool:
        cfg = self.config
        before = len(self.violations)
        offset = frame_index * cfg.frame_duration
        ids = [g.alloc_id for g in outcome.physical_bmap]
        granted = set(ids)
        if len(ids) != len(granted) or granted & self.granted:
            self._fail(f"frame {frame_index}: allocation granted twice (uniqueness violated)")
        self.granted |= granted
        pending = set(outcome.pending)
        expected = set(outcome.allocations) if expected_ids is None else expected_ids
        if granted & pending or granted | pending != expected:
            self._fail(
                f"frame {frame_index}: conservation violated ({len(granted)} granted + "
                f"{len(pending)} carried for {len(expected)} allocations)"
            )
        for g in outcome.physical_bmap:
            if g.delay < 0:
                self._fail(f"frame {frame_index}: negative delay for allocation {g.alloc_id}")
            if not 0 <= g.channel < cfg.num_channels:
                self._fail(f"frame {frame_index}: channel {g.channel} out of range")
            alloc = outcome.allocations.get(g.alloc_id)
            if alloc is not None and g.duration != duration_ns(alloc.payload_bits, cfg.channel_rate):
                self._fail(f"frame {frame_index}: wrong burst duration for allocation {g.alloc_id}")

        for g in sorted(outcome.physical_bmap, key=lambda g: (g.scheduled_start, g.alloc_id)):
            start = offset + g.scheduled_start
            end = start + g.duration + cfg.guard_time
            last = self.channel_last.get(g.channel)
            if last is not None and start < last[1]:
                self._fail(
                    f"channel exclusivity violated: channel {g.channel} allocation {g.alloc_id} "
                    f"starts at {start} before {last[0]} ends at {last[1]}"
                )
            self.channel_last[g.channel] = (g.alloc_id, max(end, last[1]) if last else end)
            prev = self.xcvr_last.get(g.transceiver_id)
            if prev is not None:
                _, prev_end, prev_channel = prev
                need = prev_end + (cfg.tuning_time if prev_channel != g.channel else 0)
                if start < need:
                    kind = "tuning gap" if prev_channel != g.channel and start >= prev_end else "transceiver overlap"
                    self._fail(
                        f"transceiver feasibility violated ({kind}): {g.transceiver_id} "
                        f"allocation {g.alloc_id} starts at {start}, earliest allowed {need}"
                    )
            self.xcvr_last[g.transceiver_id] = (g.alloc_id, end, g.channel)
        self.frames_checked += 1
        return len(self.violations) == before

    @property
    def ok(self) -> bool:
        return not self.violations
