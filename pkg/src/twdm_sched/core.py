"""Shared domain types and integer-nanosecond time arithmetic."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

NS_PER_S = 1_000_000_000
GBPS = 1_000_000_000

FRAME_NS = 125_000
GUARD_NS = 330
SLA_WINDOW_FRAMES = 8

#: (num_channels, channel_rate) pairs sharing 200 Gb/s of upstream capacity.
DEFAULT_CHANNEL_CONFIGS = ((8, 25 * GBPS), (4, 50 * GBPS), (1, 200 * GBPS))
DEFAULT_TUNING_TIMES = (0, 250, 1_000, 15_000)


class ConfigError(ValueError):
    """Raised for scenario parameters outside their valid range."""


@dataclass(frozen=True, slots=True)
class SlaClass:
    latency_target: int
    compliance_pct: float

    def __post_init__(self) -> None:
        if self.latency_target < 0:
            raise ValueError("latency_target must be non-negative")
        if not 0 < self.compliance_pct <= 100:
            raise ValueError("compliance_pct must lie in (0, 100]")

    @property
    def threshold_fraction(self) -> Fraction:
        """Exact tolerated fraction of delayed slots."""
        return (100 - Fraction(self.compliance_pct)) / 100

    @property
    def non_compliance_threshold(self) -> float:
        return float(self.threshold_fraction)


SLA_LOW_LATENCY = SlaClass(latency_target=12_500, compliance_pct=90)
SLA_RELAXED = SlaClass(latency_target=25_000, compliance_pct=95)
DEFAULT_SLA_CLASSES = (SLA_LOW_LATENCY, SLA_RELAXED)


def duration_ns(payload_bits: int, rate: int) -> int:
    """Transmission time of ``payload_bits`` at ``rate`` bit/s, rounded up to 1 ns."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    return -(-payload_bits * NS_PER_S // rate)


@dataclass(frozen=True, slots=True)
class Allocation:
    """One upstream grant request taken from a virtual bandwidth map.

    ``requested_start`` is relative to the start of the frame the
    allocation was issued in. ``maxtime`` is filled in by
    :func:`compute_maxtime` when the merging engine takes the allocation.
    """

    alloc_id: int
    vno_id: int
    onu_id: int
    flow_id: int
    requested_start: int
    payload_bits: int
    sla: SlaClass | None = None
    maxtime: int | None = None

    def __post_init__(self) -> None:
        if self.payload_bits <= 0:
            raise ValueError(f"allocation {self.alloc_id}: payload_bits must be positive")
        if self.requested_start < 0:
            raise ValueError(f"allocation {self.alloc_id}: negative requested_start")

    def duration_on(self, rate: int) -> int:
        return duration_ns(self.payload_bits, rate)

    @property
    def is_sla(self) -> bool:
        return self.sla is not None


def compute_maxtime(alloc: Allocation, frame_horizon: int) -> int:
    """Latest start that keeps ``alloc`` within its latency target.

    Best-effort allocations have no bound and get ``frame_horizon``.
    """
    if alloc.sla is None:
        return frame_horizon
    return alloc.requested_start + alloc.sla.latency_target


def with_maxtime(alloc: Allocation, frame_horizon: int) -> Allocation:
    return replace(alloc, maxtime=compute_maxtime(alloc, frame_horizon))


@dataclass(frozen=True, slots=True)
class VirtualBmap:
    """Per-frame, time-only allocation list from one VNO.

    Allocations sit on ``lanes`` parallel virtual timelines at
    ``reference_rate``; at most ``lanes`` of them overlap at any instant
    once guard time is counted.
    """

    vno_id: int
    frame_index: int
    allocations: tuple[Allocation, ...]
    reference_rate: int
    lanes: int = 1


def virtual_overlap_ok(vbmap: VirtualBmap, guard_time: int) -> bool:
    """Check the internal collision-freedom of a virtual map."""
    events = []
    for a in vbmap.allocations:
        events.append((a.requested_start, 1))
        events.append((a.requested_start + a.duration_on(vbmap.reference_rate) + guard_time, -1))
    # ends sort before starts at the same instant: touching intervals do not overlap
    events.sort(key=lambda e: (e[0], e[1]))
    active = 0
    for _, step in events:
        active += step
        if active > vbmap.lanes:
            return False
    return True


@dataclass(frozen=True, slots=True)
class PhysicalGrant:
    alloc_id: int
    channel: int
    scheduled_start: int
    duration: int
    transceiver_id: tuple[int, int]
    receiver_id: int
    tuned: bool
    requested_start: int

    @property
    def delay(self) -> int:
        return self.scheduled_start - self.requested_start

    @property
    def end(self) -> int:
        """End of the burst, guard time excluded."""
        return self.scheduled_start + self.duration


@dataclass(frozen=True)
class ScenarioConfig:
    num_channels: int = 8
    channel_rate: int = 25 * GBPS
    frame_duration: int = FRAME_NS
    guard_time: int = GUARD_NS
    tuning_time: int = 0
    num_vnos: int = 5
    load_fraction: float = 0.5
    sla_share: float = 0.5
    mean_burst_fraction: float = 0.06
    mean_burst_reference_rate: int = 25 * GBPS
    burst_spread: float = 0.5
    window_frames: int = SLA_WINDOW_FRAMES
    window_mode: str = "sliding"
    onus_per_vno: int = 4
    flows_per_onu: int = 2
    transceivers_per_onu: int = 1
    sla_classes: tuple[SlaClass, ...] = DEFAULT_SLA_CLASSES
    sla_class_split: tuple[float, ...] = (0.5, 0.5)
    vno_weights: tuple[float, ...] | None = None
    virtual_timeline: str = "single"
    placement: str = "stratified"
    sort_mode: str = "margin"
    horizon_frames: int = 2
    warmup_frames: int | None = None
    num_frames: int = 5000
    seed: int = 0
    extra: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.num_channels < 1:
            raise ConfigError("num_channels must be >= 1")
        if self.channel_rate <= 0:
            raise ConfigError("channel_rate must be positive")
        if self.frame_duration <= 0 or self.guard_time < 0 or self.tuning_time < 0:
            raise ConfigError("frame, guard and tuning durations must be non-negative")
        if not 0 < self.load_fraction <= 1:
            raise ConfigError(f"load exceeds capacity: load_fraction={self.load_fraction}")
        if not 0 <= self.sla_share <= 1:
            raise ConfigError(f"sla_share must lie in [0, 1], got {self.sla_share}")
        if not 0 <= self.burst_spread < 1:
            raise ConfigError("burst_spread must lie in [0, 1)")
        if self.num_vnos < 1 or self.onus_per_vno < 1 or self.flows_per_onu < 1:
            raise ConfigError("num_vnos, onus_per_vno and flows_per_onu must be >= 1")
        if self.transceivers_per_onu < 1:
            raise ConfigError("transceivers_per_onu must be >= 1")
        if self.window_frames < 1:
            raise ConfigError("window_frames must be >= 1")
        if self.window_mode not in ("sliding", "tumbling"):
            raise ConfigError(f"unknown window_mode {self.window_mode!r}")
        if self.virtual_timeline not in ("single", "full-capacity"):
            raise ConfigError(f"unknown virtual_timeline {self.virtual_timeline!r}")
        if self.placement not in ("uniform", "stratified"):
            raise ConfigError(f"unknown placement {self.placement!r}")
        if self.sort_mode not in ("margin", "literal-rate-ascending"):
            raise ConfigError(f"unknown sort_mode {self.sort_mode!r}")
        if len(self.sla_class_split) != len(self.sla_classes) or not self.sla_classes:
            raise ConfigError("sla_class_split must match sla_classes")
        if self.vno_weights is not None and (
            len(self.vno_weights) != self.num_vnos or min(self.vno_weights) < 0 or sum(self.vno_weights) <= 0
        ):
            raise ConfigError("vno_weights must hold one non-negative weight per VNO")
        if self.horizon_frames < 1:
            raise ConfigError("horizon_frames must be >= 1")
        if self.num_frames < 0:
            raise ConfigError("num_frames must be >= 0")

    @property
    def capacity(self) -> int:
        """Aggregate upstream capacity in bit/s."""
        return self.num_channels * self.channel_rate

    @property
    def mean_burst_bits(self) -> int:
        return round(self.mean_burst_fraction * self.frame_duration * self.mean_burst_reference_rate / NS_PER_S)

    @property
    def frame_horizon(self) -> int:
        return self.horizon_frames * self.frame_duration

    @property
    def warmup(self) -> int:
        return self.window_frames if self.warmup_frames is None else self.warmup_frames

    @property
    def frame_payload_bits(self) -> int:
        """Target payload bits per frame summed over all VNOs."""
        return round(self.load_fraction * self.capacity * self.frame_duration / NS_PER_S)

    def replace(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def parse_channel_config(text: str) -> tuple[int, int]:
    """Parse ``NxR`` (R in Gb/s), e.g. ``8x25`` -> (8, 25e9)."""
    try:
        count, rate = text.lower().split("x")
        n, r = int(count), float(rate)
    except ValueError:
        raise ConfigError(f"bad channel config {text!r}; expected NxR such as 8x25") from None
    if n < 1 or r <= 0:
        raise ConfigError(f"bad channel config {text!r}")
    return n, round(r * GBPS)


def format_channel_config(num_channels: int, rate: int) -> str:
    gbps = rate / GBPS
    return f"{num_channels}x{gbps:g}"
