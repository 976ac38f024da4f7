import pytest
from pydantic import ValidationError

from core.errors import ConfigError
from core.simcore import RngStream
from network.mac import (
    PRIORITY_ORDER, SERVICE_CLASSES, MacConfig, MacScheduler, ServiceClass, ServiceClassKind, ServiceFlow,
    enqueue,
)
from network.traffic import MediaPacket
from radio.phy import MCS_REGISTRY


def _packet(size, flow_id="f", pid=0, gen_time=0, deadline=None):
    return MediaPacket(id=pid, flow_id=flow_id, size=size, gen_time=gen_time, frame_id=pid, deadline=deadline)


def _flow(flow_id, cls="rtps", sizes=(), header=0, **kwargs):
    flow = ServiceFlow(flow_id, SERVICE_CLASSES.require(cls), header_bytes=header, **kwargs)
    for pid, size in enumerate(sizes):
        flow.enqueue(_packet(size, flow_id, pid))
    return flow


def test_queue_limit_is_inclusive():
    flow = ServiceFlow("v", SERVICE_CLASSES.require("rtps"), queue_limit=3000)
    assert all(enqueue(flow, _packet(1000, "v", i)) for i in range(3))
    assert not enqueue(flow, _packet(1, "v", 3))
    assert flow.queued_bytes == 3000
    assert flow.counters.enqueued == 4
    assert flow.counters.dropped_overflow == 1
    assert flow.conserved()


def test_header_is_charged_to_air_not_to_the_queue():
    flow = _flow("v", sizes=[1000], header=40)
    assert flow.queued_bytes == 1000
    assert flow.queue[0].remaining == 1040


def test_oversized_packet_spans_frames():
    scheduler = MacScheduler()
    flow = _flow("v", sizes=[3000])
    capacity = 1981

    alloc = scheduler.schedule_frame([flow], capacity, now=0, frame_index=0)
    assert alloc.granted("v") == 1981
    out = scheduler.transmit(alloc, 0.0, None)
    assert out.delivered == []
    assert flow.queue[0].remaining == 1019

    alloc = scheduler.schedule_frame([flow], capacity, now=5000, frame_index=1)
    assert alloc.granted("v") == 1019
    out = scheduler.transmit(alloc, 0.0, None, frame_start=5000)
    assert [d.packet.size for d in out.delivered] == [3000]
    assert not flow.queue


def test_higher_priority_class_starves_best_effort():
    scheduler = MacScheduler()
    rtps = _flow("rt", sizes=[1000] * 5)
    be = _flow("be", cls="be", sizes=[1000] * 5)
    alloc = scheduler.schedule_frame([be, rtps], 1320, now=0)
    assert alloc.granted("rt") == 1320
    assert alloc.granted("be") == 0


def test_leftover_capacity_goes_to_best_effort():
    scheduler = MacScheduler()
    rtps = _flow("rt", sizes=[300])
    be = _flow("be", cls="be", sizes=[5000])
    alloc = scheduler.schedule_frame([rtps, be], 1320, now=0)
    assert alloc.granted("rt") == 300
    assert alloc.granted("be") == 1020


def test_empty_queues_get_nothing():
    scheduler = MacScheduler()
    alloc = scheduler.schedule_frame([_flow("a"), _flow("b", cls="be")], 5000, now=0)
    assert alloc.total == 0
    assert alloc.segments == []
    assert scheduler.transmit(alloc, 0.5, RngStream(1, "e")).delivered == []


def test_ertps_is_served_before_rtps():
    scheduler = MacScheduler()
    rtps = _flow("rt", sizes=[1000])
    ertps = _flow("ert", cls="ertps", sizes=[1000])
    alloc = scheduler.schedule_frame([rtps, ertps], 250, now=0)
    assert alloc.granted("ert") == 250
    assert alloc.granted("rt") == 0


def test_ertps_grant_is_its_sustained_rate():
    ertps_class = MacConfig().service_class("ertps")
    assert ertps_class.fixed_grant_bytes(5.0) == 250

    scheduler = MacScheduler()
    ertps = ServiceFlow("ert", ertps_class)
    ertps.enqueue(_packet(100, "ert"))
    busy = _flow("rt", sizes=[5000])
    alloc = scheduler.schedule_frame([busy, ertps], 2000, now=0)
    # The unused part of the grant is held back from rtPS
    assert alloc.granted("ert") == 250
    assert alloc.granted("rt") == 1750

    backlog = _flow("ert2", cls="ertps", sizes=[1000] * 4)
    alloc = scheduler.schedule_frame([backlog], 5000, now=0)
    assert alloc.granted("ert2") == 250
    assert alloc.total == 250


def test_ertps_follows_rtps_polling_interval():
    ertps_class = MacConfig(rtps_polling_interval=2).service_class("ertps")
    assert ertps_class.polling_interval == 2
    assert ertps_class.fixed_grant_bytes(5.0) == 500

    scheduler = MacScheduler()
    flow = ServiceFlow("ert", ertps_class)
    flow.enqueue(_packet(1000, "ert"))
    assert scheduler.schedule_frame([flow], 5000, now=0, frame_index=1).granted("ert") == 0
    assert scheduler.schedule_frame([flow], 5000, now=0, frame_index=2).granted("ert") == 500


def test_max_sustained_rate_caps_a_grant():
    rtps_class = MacConfig(rtps_max_rate=0.8).service_class("rtps")
    assert rtps_class.max_grant_bytes(5.0) == 500

    scheduler = MacScheduler()
    capped = ServiceFlow("rt", rtps_class)
    for pid in range(3):
        capped.enqueue(_packet(1000, "rt", pid))
    be = _flow("be", cls="be", sizes=[5000])
    alloc = scheduler.schedule_frame([capped, be], 5000, now=0)
    assert alloc.granted("rt") == 500
    assert alloc.granted("be") == 4500


def test_min_reserved_rate_is_granted_ahead_of_higher_classes():
    cfg = MacConfig(nrtps_min_rate=0.8, nrtps_polling_interval=1)
    assert cfg.service_class("nrtps").reserved_bytes(5.0) == 500

    scheduler = MacScheduler()
    rtps = _flow("rt", sizes=[1000] * 10)
    nrtps = ServiceFlow("nrt", cfg.service_class("nrtps"))
    for pid in range(3):
        nrtps.enqueue(_packet(1000, "nrt", pid))
    alloc = scheduler.schedule_frame([rtps, nrtps], 1320, now=0)
    assert alloc.granted("nrt") == 500
    assert alloc.granted("rt") == 820


def test_class_rates_are_validated():
    with pytest.raises(ValidationError):
        MacConfig(rtps_min_rate=1.0, rtps_max_rate=0.5)
    with pytest.raises(ValidationError):
        ServiceClass(kind=ServiceClassKind.NRTPS, max_sustained_rate=0.5, min_reserved_rate=1.0)
    with pytest.raises(ValidationError):
        ServiceClass(kind=ServiceClassKind.ERTPS, max_sustained_rate=0.4, min_reserved_rate=0.2)
    assert MacConfig(rtps_min_rate=0.5).service_class("rtps").max_grant_bytes(5.0) is None


def test_nrtps_only_on_polling_frames():
    scheduler = MacScheduler()
    nrtps = ServiceFlow("nrt", MacConfig().service_class("nrtps"))
    nrtps.enqueue(_packet(500, "nrt"))
    assert nrtps.service_class.polling_interval == 4

    assert scheduler.schedule_frame([nrtps], 5000, now=0, frame_index=1).granted("nrt") == 0
    assert scheduler.schedule_frame([nrtps], 5000, now=0, frame_index=4).granted("nrt") == 500


def test_ugs_fixed_grant():
    ugs_class = MacConfig().service_class("ugs")
    assert ugs_class.fixed_grant_bytes(5.0) == 500

    scheduler = MacScheduler()
    ugs = ServiceFlow("voice", ugs_class, variable_rate=False)
    ugs.enqueue(_packet(100, "voice"))
    be = _flow("be", cls="be", sizes=[5000])
    alloc = scheduler.schedule_frame([ugs, be], 2000, now=0)
    # The unused part of the reservation is still withheld from other classes
    assert alloc.granted("voice") == 500
    assert alloc.granted("be") == 1500
    assert alloc.total == 2000


def test_ugs_rejects_variable_rate_media():
    with pytest.raises(ConfigError, match="UGS"):
        ServiceFlow("video", SERVICE_CLASSES.require("ugs"), variable_rate=True)


def test_ugs_rates_must_match():
    with pytest.raises(ValidationError):
        ServiceClass(kind=ServiceClassKind.UGS, max_sustained_rate=1.0, min_reserved_rate=0.5)


def test_expired_real_time_packets_are_dropped_before_scheduling():
    scheduler = MacScheduler()
    flow = ServiceFlow("v", SERVICE_CLASSES.require("rtps"))
    flow.enqueue(_packet(100, "v", 0, gen_time=0, deadline=1000))
    flow.enqueue(_packet(100, "v", 1, gen_time=500, deadline=1500))

    alloc = scheduler.schedule_frame([flow], 5000, now=1000)
    assert [pkt.id for _, pkt in alloc.expired] == [0]
    assert flow.counters.dropped_expired == 1
    assert alloc.granted("v") == 100
    assert flow.conserved()


def test_round_robin_splits_within_a_class():
    scheduler = MacScheduler()
    a = _flow("a", sizes=[100] * 20)
    b = _flow("b", sizes=[100] * 20)
    alloc = scheduler.schedule_frame([a, b], 1000, now=0)
    assert alloc.granted("a") == 500
    assert alloc.granted("b") == 500


def test_round_robin_start_rotates_between_frames():
    scheduler = MacScheduler()
    a = _flow("a", sizes=[100] * 4)
    b = _flow("b", sizes=[100] * 4)
    first = scheduler.schedule_frame([a, b], 100, now=0)
    second = scheduler.schedule_frame([a, b], 100, now=0)
    assert first.granted("a") == 100
    assert second.granted("b") == 100


@pytest.mark.parametrize("seed", range(20))
def test_grants_never_exceed_capacity(seed):
    rng = RngStream(seed, "mix").generator
    flows = [ServiceFlow("ugs", MacConfig().service_class("ugs"), variable_rate=False)]
    for i, cls in enumerate(["ertps", "rtps", "rtps", "nrtps", "be"]):
        flows.append(ServiceFlow(f"f{i}", SERVICE_CLASSES.require(cls), header_bytes=40))
    for flow in flows:
        for pid in range(int(rng.integers(0, 8))):
            flow.enqueue(_packet(int(rng.integers(1, 4000)), flow.flow_id, pid))
    capacity = int(rng.integers(100, 9000))
    alloc = MacScheduler().schedule_frame(flows, capacity, now=0, frame_index=int(rng.integers(0, 8)))
    assert alloc.total <= capacity
    assert sum(nbytes for _, _, nbytes in alloc.segments) <= alloc.total


def test_error_free_and_always_errored_links():
    scheduler = MacScheduler()
    clean = _flow("v", sizes=[500] * 4)
    out = scheduler.transmit(scheduler.schedule_frame([clean], 5000, now=0), 0.0, RngStream(1, "e"))
    assert len(out.delivered) == 4
    assert clean.counters.delivered_bytes == 2000

    broken = _flow("v", sizes=[500] * 4)
    out = scheduler.transmit(scheduler.schedule_frame([broken], 5000, now=0), 1.0, RngStream(1, "e"))
    assert len(out.errored) == 4
    assert broken.counters.dropped_error == 4
    assert broken.conserved()


def test_error_rate_matches_block_error_probability():
    scheduler = MacScheduler()
    rng = RngStream(7, "air-errors")
    errored = 0
    for frame in range(10):
        flow = _flow("v", sizes=[10] * 10_000)
        alloc = scheduler.schedule_frame([flow], 100_000, now=0, frame_index=frame)
        errored += len(scheduler.transmit(alloc, {"v": 0.1}, rng).errored)
    assert errored / 100_000 == pytest.approx(0.1, abs=0.005)


def test_fragmented_packet_draws_its_error_once():
    scheduler = MacScheduler()
    rng = RngStream(5, "air-errors")
    reference = RngStream(5, "air-errors")
    flow = _flow("v", sizes=[3000])
    for frame in range(2):
        alloc = scheduler.schedule_frame([flow], 1500, now=frame * 5000, frame_index=frame)
        scheduler.transmit(alloc, 0.5, rng, frame_start=frame * 5000)
    assert not flow.queue
    reference.random()
    assert rng.random() == reference.random()


def test_error_rate_of_fragmented_packets_matches_block_error_probability():
    scheduler = MacScheduler()
    rng = RngStream(11, "air-errors")
    flow = _flow("v")
    packets = 40_000
    errored = 0
    for pid in range(packets):
        flow.enqueue(_packet(3000, "v", pid))
        for half in range(2):
            frame = 2 * pid + half
            alloc = scheduler.schedule_frame([flow], 1500, now=frame * 5000, frame_index=frame)
            errored += len(scheduler.transmit(alloc, {"v": 0.1}, rng, frame_start=frame * 5000).errored)
    assert flow.counters.delivered + errored == packets
    assert errored / packets == pytest.approx(0.1, abs=0.005)


def test_blackout_loses_packets_in_handoff():
    scheduler = MacScheduler()
    mobile = _flow("ss-video", sizes=[500] * 3)
    other = _flow("bg1", sizes=[500] * 3)
    alloc = scheduler.schedule_frame([mobile, other], 5000, now=0)
    out = scheduler.transmit(alloc, 0.0, None, blackout={"ss-video"})
    assert len(out.lost_in_handoff) == 3
    assert mobile.counters.dropped_handoff == 3
    assert other.counters.delivered == 3


def test_packet_lost_if_any_segment_falls_in_a_blackout():
    scheduler = MacScheduler()
    flow = _flow("v", sizes=[3000])
    scheduler.transmit(scheduler.schedule_frame([flow], 2000, now=0), 0.0, None, blackout={"v"})
    out = scheduler.transmit(scheduler.schedule_frame([flow], 2000, now=5000), 0.0, None)
    assert out.delivered == []
    assert flow.counters.dropped_handoff == 1


def test_delivery_preserves_fifo_order():
    scheduler = MacScheduler()
    flow = _flow("v", sizes=[700, 1200, 50, 3000, 90, 800])
    delivered = []
    for frame in range(10):
        alloc = scheduler.schedule_frame([flow], 1000, now=frame * 5000, frame_index=frame)
        delivered += scheduler.transmit(alloc, 0.0, None, frame_start=frame * 5000).delivered
    assert [d.packet.id for d in delivered] == list(range(6))
    times = [d.delivered_at for d in delivered]
    assert times == sorted(times)


def test_counters_are_conserved_under_losses():
    scheduler = MacScheduler()
    rng = RngStream(3, "air-errors")
    flows = [_flow("a", sizes=[400] * 30, header=40), _flow("b", cls="be", sizes=[900] * 30, header=40)]
    for frame in range(20):
        alloc = scheduler.schedule_frame(flows, 1500, now=frame * 5000, frame_index=frame)
        scheduler.transmit(alloc, 0.3, rng, frame_start=frame * 5000)
        for flow in flows:
            assert flow.conserved()


def test_delivery_instant_counts_air_bytes():
    qpsk = MCS_REGISTRY.require("qpsk12")
    scheduler = MacScheduler()
    flow = _flow("v", sizes=[1460])
    alloc = scheduler.schedule_frame([flow], 1981, now=0)
    out = scheduler.transmit(alloc, 0.0, None, frame_start=0, dl_rate_bps=qpsk.dl_rate_bps)
    assert out.delivered[0].delivered_at == 3685


def test_priority_order():
    assert [kind.priority for kind in PRIORITY_ORDER] == [0, 1, 2, 3, 4]
    assert ServiceClassKind.UGS.priority < ServiceClassKind.BE.priority


def test_config_applies_class_parameters():
    cfg = MacConfig(rtps_polling_interval=2, deadline=250.0, ugs_rate=1.6)
    assert cfg.service_class("rtps").polling_interval == 2
    assert cfg.service_class("rtps").max_latency == 250.0
    assert cfg.service_class("ertps").max_latency == 250.0
    assert cfg.service_class("ugs").fixed_grant_bytes(5.0) == 1000
    assert cfg.service_class("best_effort").kind is ServiceClassKind.BE
    assert cfg.service_class("be").max_latency is None
