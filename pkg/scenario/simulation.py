from typing import Dict, List, Optional, Tuple
import logging

from core.simcore import Engine, Event, EventKind, SimTime, from_ms, from_seconds
from metrics.collector import MetricsCollector, MetricsReport
from network.mac import MacScheduler, ServiceFlow
from network.mobility import CellLayout, HandoffController, position_at
from network.traffic import CbrSource, MediaSource, packetize
from radio.amc import MCS_MODES, step as amc_step
from radio.channel import bler, sinr
from radio.phy import frame_capacity_bytes
from scenario.config import ScenarioConfig


VIDEO_FLOW = "ss-video"
AUDIO_FLOW = "ss-audio"


class MobileTvSimulation:
    """One scenario: a mobile station watching TV while moving through seven cells.

    Per frame the station's position, serving cell, SINR and MCS are
    refreshed, the serving BS schedules its downlink queues and the
    allocation goes on the air. Background stations share the BS's capacity.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.logger = logging.getLogger(f"scenario.{cfg.scenario_id}")
        self.engine = Engine(seed=cfg.seed, record_log=cfg.record_log)
        self.t_end: SimTime = from_seconds(cfg.duration)
        self.frame_us: SimTime = cfg.phy.frame_duration_us
        self.backbone_us: SimTime = cfg.metrics.backbone_delay_us

        self.layout = CellLayout.hexagonal(cfg.mobility.radius)
        self.trajectory = cfg.mobility.trajectory_for(cfg.speed)
        self.position = position_at(self.trajectory, 0)
        self.pl_model = cfg.pathloss_model
        self.handoff = HandoffController(self.layout, cfg.mobility.handoff, self.pl_model, cfg.tx,
                                         self.position)

        self.shadow = self.engine.rng("shadowing")
        self.air = self.engine.rng("air-errors")
        self.sinr_db = self._measure_sinr()
        self.link = MCS_MODES.require(cfg.mcs_mode).new_state(self.sinr_db, 0)

        self.scheduler = MacScheduler(cfg.phy.frame_duration)
        self.flows: List[ServiceFlow] = []
        self.sources: List[Tuple[MediaSource, ServiceFlow]] = []
        self._next_packet_id: Dict[str, int] = {}
        self._build_flows()

        self.station_flows = [f.flow_id for f in self.flows if f.station == "ss"]
        self.collector = MetricsCollector(self.t_end, from_seconds(cfg.metrics.window), self.station_flows)
        self.frame_index = 0

        self.engine.on(EventKind.TRAJECTORY_UPDATE, self._on_trajectory)
        self.engine.on(EventKind.FRAME_TICK, self._on_frame)
        self.engine.on(EventKind.MEDIA_EMISSION, self._on_emission)
        self.engine.on(EventKind.PACKET_ARRIVAL, self._on_arrival)
        self.engine.on(EventKind.METRICS_WINDOW, self._on_window)

    def _build_flows(self) -> None:
        cfg = self.cfg
        mac = cfg.mac
        media_class = mac.service_class(cfg.service_class)

        video = cfg.traffic.video()
        video_flow = ServiceFlow(VIDEO_FLOW, media_class, mac.queue_limit, mac.header_bytes)
        self._add_source(MediaSource(VIDEO_FLOW, video, fps=cfg.traffic.video_fps, wrap=cfg.traffic.wrap),
                         video_flow)
        av_rate_bps = video.stats.mean_rate * 1e6

        audio = cfg.traffic.audio()
        if audio is not None:
            audio_flow = ServiceFlow(AUDIO_FLOW, media_class, mac.queue_limit, mac.header_bytes)
            wrap = cfg.traffic.wrap or len(audio) == 1
            self._add_source(MediaSource(AUDIO_FLOW, audio, fps=cfg.traffic.audio_fps, wrap=wrap), audio_flow)
            av_rate_bps += audio.stats.mean_size * 8 * cfg.traffic.audio_fps

        background_rate = mac.background_rate_kbps * 1e3 or av_rate_bps
        background_class = mac.service_class("rtps")
        for k in range(1, mac.background_stations + 1):
            flow_id = f"bg{k}"
            flow = ServiceFlow(flow_id, background_class, mac.queue_limit, mac.header_bytes,
                               variable_rate=False, station=f"bg{k}")
            self._add_source(CbrSource(flow_id, background_rate, mac.background_packet_bytes), flow)

        self.logger.debug(f"Flows: {[f.flow_id for f in self.flows]}, background rate {background_rate:.0f} bps")

    def _add_source(self, source: MediaSource, flow: ServiceFlow) -> None:
        self.flows.append(flow)
        self.sources.append((source, flow))
        self._next_packet_id[flow.flow_id] = 0

    def _measure_sinr(self) -> float:
        distance = self.handoff.distance(self.position)
        path_loss = self.pl_model.path_loss(distance, shadow=self.shadow)
        return sinr(self.cfg.tx, path_loss, self.cfg.link)

    def _deadline(self, flow: ServiceFlow, gen_time: SimTime) -> Optional[SimTime]:
        latency = flow.service_class.max_latency
        if flow.service_class.real_time and latency is not None:
            return gen_time + from_ms(latency)
        return None

    def start(self) -> None:
        """Schedule the first event of every recurring activity"""
        self.engine.schedule(0, EventKind.TRAJECTORY_UPDATE)
        self.engine.schedule(0, EventKind.FRAME_TICK)
        for source, flow in self.sources:
            first = source.emission_time(0)
            if first < self.t_end:
                self.engine.schedule(first, EventKind.MEDIA_EMISSION, (source, flow))
        self.engine.schedule(0, EventKind.METRICS_WINDOW, 0)

    def _on_trajectory(self, event: Event) -> None:
        now = event.fire_at
        self.position = position_at(self.trajectory, now)
        if self.handoff.update(now, self.position):
            self.logger.debug(f"t={now}us handoff to cell {self.handoff.serving}")
        next_time = now + from_ms(self.cfg.mobility.update_interval)
        if next_time < self.t_end:
            self.engine.schedule(next_time, EventKind.TRAJECTORY_UPDATE)

    def _on_emission(self, event: Event) -> None:
        source, flow = event.payload
        frame, next_time = source.next_emission(event.fire_at)
        if frame is not None:
            first_id = self._next_packet_id[flow.flow_id]
            packets = packetize(frame.size, self.cfg.traffic.mtu_payload, flow.flow_id, frame.gen_time,
                                frame.frame_id, self._deadline(flow, frame.gen_time), first_id)
            self._next_packet_id[flow.flow_id] = first_id + len(packets)
            self.engine.schedule(frame.gen_time + self.backbone_us, EventKind.PACKET_ARRIVAL, (flow, packets))
        if next_time is not None and next_time < self.t_end:
            self.engine.schedule(next_time, EventKind.MEDIA_EMISSION, (source, flow))

    def _on_arrival(self, event: Event) -> None:
        flow, packets = event.payload
        for pkt in packets:
            if not flow.enqueue(pkt):
                self.collector.record_drop(flow.flow_id, pkt, event.fire_at)

    def _on_frame(self, event: Event) -> None:
        now = event.fire_at
        self.sinr_db = self._measure_sinr()
        previous = self.link.current
        mcs = amc_step(self.link, self.sinr_db, now)
        if mcs is not previous:
            self.logger.debug(f"t={now}us MCS {previous.name} -> {mcs.name} at {self.sinr_db:.1f} dB")

        capacity = frame_capacity_bytes(mcs, self.cfg.phy)
        alloc = self.scheduler.schedule_frame(self.flows, capacity, now, self.frame_index)
        for flow, pkt in alloc.expired:
            self.collector.record_drop(flow.flow_id, pkt, now)

        p = bler(self.sinr_db, mcs, self.cfg.link)
        blackout = self.station_flows if self.handoff.in_outage(now) else ()
        outcome = self.scheduler.transmit(alloc, {fid: p for fid in self.station_flows}, self.air,
                                          now, mcs.dl_rate_bps, blackout)
        for delivery in outcome.delivered:
            self.collector.record_delivery(delivery)
        for flow_id, pkt in outcome.errored + outcome.lost_in_handoff:
            self.collector.record_drop(flow_id, pkt, now)
        self.collector.record_frame(now, mcs.key, p)

        self.frame_index += 1
        next_time = now + self.frame_us
        if next_time < self.t_end:
            self.engine.schedule(next_time, EventKind.FRAME_TICK)

    def _on_window(self, event: Event) -> None:
        index = event.payload
        if index:
            queued = sum(len(f.queue) for f in self.flows if f.station == "ss")
            self.logger.debug(f"Window {index} starts at t={event.fire_at}us, {queued} packets queued")
        next_time = event.fire_at + self.collector.window_us
        if next_time < self.t_end:
            self.engine.schedule(next_time, EventKind.METRICS_WINDOW, index + 1)

    def run(self) -> MetricsReport:
        self.start()
        fired = self.engine.run_until(self.t_end)
        self.logger.debug(f"Processed {fired} events, {self.frame_index} frames")
        return self.report()

    def report(self) -> MetricsReport:
        cfg = self.cfg
        counters = {}
        for flow in self.flows:
            snapshot = flow.counters.as_dict()
            snapshot["queued"] = len(flow.queue)
            counters[flow.flow_id] = snapshot
        return self.collector.report(
            cfg.scenario_id,
            case=cfg.case,
            mcs_mode=cfg.mcs_mode,
            speed_kmh=cfg.speed,
            pathloss_model=cfg.pathloss,
            service_class=cfg.service_class,
            seed=cfg.seed,
            handoffs=self.handoff.handoffs,
            mcs_changes=self.link.changes,
            flow_counters=counters,
        )


def simulate(cfg: ScenarioConfig) -> MetricsReport:
    return MobileTvSimulation(cfg).run()
