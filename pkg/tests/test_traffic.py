import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twdm_sched.core import GBPS, ScenarioConfig, virtual_overlap_ok
from twdm_sched.traffic import InfeasibleLoadError, build_flow_population, generate_frame, payload_time


def test_population_counts():
    cfg = ScenarioConfig(sla_share=1.0)
    flows = build_flow_population(cfg)
    assert len(flows) == 40
    by_class = [sum(f.sla == c for f in flows) for c in cfg.sla_classes]
    assert by_class == [20, 20]
    assert all(f.sla is None for f in build_flow_population(ScenarioConfig(sla_share=0.0)))


def test_population_weights():
    cfg = ScenarioConfig(sla_share=0.5)
    flows = build_flow_population(cfg)
    total = sum(f.weight for f in flows)
    sla = sum(f.weight for f in flows if f.sla is not None)
    assert sla / total == pytest.approx(0.5)
    # every flow belongs to one VNO and one ONU of that VNO
    for f in flows:
        assert f.onu_id // cfg.onus_per_vno == f.vno_id


def test_generation_deterministic():
    cfg = ScenarioConfig(load_fraction=0.8, seed=42)
    flows = build_flow_population(cfg)
    assert generate_frame(flows, 3, cfg) == generate_frame(flows, 3, cfg)
    assert generate_frame(flows, 3, cfg) != generate_frame(flows, 4, cfg)


@pytest.mark.parametrize("load, channels, rate", [(0.2, 8, 25), (0.8, 1, 200)])
def test_payload_matches_load(load, channels, rate):
    cfg = ScenarioConfig(num_channels=channels, channel_rate=rate * GBPS, load_fraction=load)
    flows = build_flow_population(cfg)
    frames = 200
    bits = sum(a.payload_bits for f in range(frames) for vb in generate_frame(flows, f, cfg) for a in vb.allocations)
    target = load * 200 * GBPS * cfg.frame_duration / 1e9
    assert bits / frames == pytest.approx(target, rel=0.02)
    per_frame = payload_time(generate_frame(flows, 0, cfg), channels * rate * GBPS)
    assert per_frame == pytest.approx(load * cfg.frame_duration, abs=cfg.frame_duration * 0.04)


def test_load_accuracy_long_run():
    cfg = ScenarioConfig(load_fraction=0.5, seed=3)
    flows = build_flow_population(cfg)
    totals = [sum(a.payload_bits for vb in generate_frame(flows, f, cfg) for a in vb.allocations) for f in range(1000)]
    assert np.mean(totals) == pytest.approx(cfg.frame_payload_bits, rel=0.02)


def test_mean_burst_size():
    cfg = ScenarioConfig(load_fraction=0.8, seed=5)
    flows = build_flow_population(cfg)
    sizes = []
    f = 0
    while len(sizes) < 10_000:
        sizes += [a.payload_bits for vb in generate_frame(flows, f, cfg) for a in vb.allocations]
        f += 1
    assert np.mean(sizes) == pytest.approx(187_500, rel=0.02)
    assert min(sizes) >= 93_750 and max(sizes) <= 281_250


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**63 - 1),
    frame=st.integers(0, 10_000),
    load=st.sampled_from([0.2, 0.5, 0.8, 0.95]),
    share=st.sampled_from([0.0, 0.3, 1.0]),
    placement=st.sampled_from(["uniform", "stratified"]),
    onus=st.sampled_from([2, 4, 8]),
)
def test_vbmaps_internally_collision_free(seed, frame, load, share, placement, onus):
    cfg = ScenarioConfig(load_fraction=load, sla_share=share, placement=placement, onus_per_vno=onus, seed=seed)
    flows = build_flow_population(cfg)
    for vb in generate_frame(flows, frame, cfg):
        assert virtual_overlap_ok(vb, cfg.guard_time)
        assert all(0 <= a.requested_start < cfg.frame_duration for a in vb.allocations)


def test_full_capacity_timeline():
    cfg = ScenarioConfig(virtual_timeline="full-capacity", load_fraction=0.8)
    for vb in generate_frame(build_flow_population(cfg), 0, cfg):
        assert vb.lanes == cfg.num_channels
        assert virtual_overlap_ok(vb, cfg.guard_time)


def test_overfull_timeline_rejected():
    # five VNOs but all load on one: its single timeline cannot hold it
    cfg = ScenarioConfig(load_fraction=1.0, vno_weights=(1.0, 0.0, 0.0, 0.0, 0.0))
    with pytest.raises(InfeasibleLoadError, match="load exceeds capacity"):
        generate_frame(build_flow_population(cfg), 0, cfg)
