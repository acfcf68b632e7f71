"""Flow-breach likelihood table: per-flow delayed-slot accounting over a frame window."""
from __future__ import annotations

from fractions import Fraction
from typing import Iterable

from .core import SlaClass


class FlowState:
    """Ring buffer of (delayed, total) slot counts, one entry per frame."""

    __slots__ = (
        "flow_id", "sla", "window", "delayed", "total", "slot_frame",
        "delayed_in_window", "total_in_window", "non_compliance_rate", "margin",
        "_thr_num", "_thr_den", "_target",
    )

    def __init__(self, flow_id: int, sla: SlaClass, window_frames: int = 8):
        self.flow_id = flow_id
        self.sla = sla
        self.window = window_frames
        self.delayed = [0] * window_frames
        self.total = [0] * window_frames
        self.slot_frame = [-1] * window_frames
        self.delayed_in_window = 0
        self.total_in_window = 0
        self.non_compliance_rate = 0.0
        thr = sla.threshold_fraction
        self._thr_num, self._thr_den = thr.numerator, thr.denominator
        self._target = sla.latency_target
        self.margin = float(thr)

    @property
    def threshold(self) -> float:
        return self._thr_num / self._thr_den

    @property
    def rate_fraction(self) -> Fraction:
        if not self.total_in_window:
            return Fraction(0)
        return Fraction(self.delayed_in_window, self.total_in_window)

    def __repr__(self) -> str:
        return (
            f"FlowState(flow_id={self.flow_id}, delayed={self.delayed_in_window}, "
            f"total={self.total_in_window}, rate={self.non_compliance_rate:.4f})"
        )


def record_grant(state: FlowState, delay: int, frame_index: int) -> FlowState:
    """Count one granted slot; it is delayed only if ``delay`` exceeds the target."""
    if delay < 0:
        raise ValueError("delay must be non-negative")
    slot = frame_index % state.window
    if state.slot_frame[slot] != frame_index:
        state.slot_frame[slot] = frame_index
        state.delayed[slot] = 0
        state.total[slot] = 0
    state.total[slot] += 1
    if delay > state._target:
        state.delayed[slot] += 1
    return state


def window_bounds(frame_index: int, window: int, mode: str = "sliding") -> tuple[int, int]:
    """Inclusive frame range the rate is computed over at ``frame_index``."""
    if mode == "tumbling":
        return frame_index - frame_index % window, frame_index
    return frame_index - window + 1, frame_index


def recompute_state(state: FlowState, frame_index: int, mode: str = "sliding") -> FlowState:
    lo, hi = window_bounds(frame_index, state.window, mode)
    d = t = 0
    for k in range(state.window):
        if lo <= state.slot_frame[k] <= hi:
            d += state.delayed[k]
            t += state.total[k]
    state.delayed_in_window = d
    state.total_in_window = t
    state.non_compliance_rate = d / t if t else 0.0
    state.margin = state.threshold - state.non_compliance_rate
    return state


def recompute_rates(states: Iterable[FlowState], frame_index: int, mode: str = "sliding"):
    for state in states:
        recompute_state(state, frame_index, mode)
    return states


def is_breached(state: FlowState) -> bool:
    """True iff the windowed non-compliance rate is strictly above the threshold."""
    # delayed / total > num / den, in integers
    return state.delayed_in_window * state._thr_den > state._thr_num * state.total_in_window


class BreachTable:
    """The SLA flows of one simulation run, keyed by flow id.

    Best-effort flows are never admitted.
    """

    def __init__(self, flows: Iterable, window_frames: int = 8, mode: str = "sliding"):
        self.mode = mode
        self.states: dict[int, FlowState] = {
            f.flow_id: FlowState(f.flow_id, f.sla, window_frames) for f in flows if f.sla is not None
        }

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, flow_id: int) -> bool:
        return flow_id in self.states

    def get(self, flow_id: int) -> FlowState | None:
        return self.states.get(flow_id)

    def record(self, flow_id: int, delay: int, frame_index: int) -> None:
        state = self.states.get(flow_id)
        if state is not None:
            record_grant(state, delay, frame_index)

    def end_frame(self, frame_index: int) -> int:
        """Recompute every flow and return how many are in breach."""
        breached = 0
        for state in self.states.values():
            recompute_state(state, frame_index, self.mode)
            if is_breached(state):
                breached += 1
        return breached

    def breached_flows(self) -> list[int]:
        return [fid for fid, s in self.states.items() if is_breached(s)]
