"""Video-on-demand QoS metrics: packet loss ratio, end-to-end delay, jitter
and throughput, aggregated per run and per time window."""

from typing import Dict, Iterable, List, Optional, Tuple
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.errors import SimulationError
from core.simcore import SimTime, US_PER_MS, US_PER_SECOND
from network.mac import Delivery
from network.traffic import MediaPacket


# Acceptability bounds for streamed video
PLR_BOUND = 1e-3
DELAY_BOUND_MS = 400.0
JITTER_BOUND_MS = 50.0
THROUGHPUT_BAND_BPS = (221e3, 5311e3)


def plr(lost: int, received: int) -> float:
    """Share of packets lost; 0 when nothing was offered (see ``plr_defined``)"""
    total = lost + received
    if total == 0:
        return 0.0
    return lost / total


def plr_defined(lost: int, received: int) -> bool:
    return lost + received > 0


class DelayComponents(BaseModel):
    """Per-hop delay terms in ms; the end-to-end delay is q_hops times their sum"""
    model_config = ConfigDict(frozen=True)

    q_hops: int = Field(default=1, ge=1)
    d_proc: float = Field(default=0.0, ge=0)
    d_queue: float = Field(default=0.0, ge=0)
    d_trans: float = Field(default=0.0, ge=0)
    d_prop: float = Field(default=0.0, ge=0)

    @property
    def total(self) -> float:
        return self.q_hops * (self.d_proc + self.d_queue + self.d_trans + self.d_prop)


class MetricsConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    window: float = Field(default=1.0, gt=0, description="Aggregation window in s")
    d_proc: float = Field(default=2.0, ge=0, description="Wired processing delay in ms")
    d_prop: float = Field(default=18.0, ge=0, description="Wired propagation delay in ms")

    @property
    def backbone_delay_us(self) -> SimTime:
        return int(round((self.d_proc + self.d_prop) * US_PER_MS))


def transmission_delay_ms(size_bytes: int, dl_rate_bps: float) -> float:
    return size_bytes * 8.0 / dl_rate_bps * 1000.0


def e2e_delay(record: Delivery) -> float:
    """Generation-to-delivery time of a packet in ms"""
    return (record.delivered_at - record.gen_time) / US_PER_MS


def decompose_delay(record: Delivery, d_proc: float, d_prop: float) -> DelayComponents:
    """Split a measured delay into wired, transmission and MAC queueing terms"""
    total = e2e_delay(record)
    d_trans = transmission_delay_ms(record.size, record.dl_rate_bps)
    d_queue = max(0.0, total - d_proc - d_prop - d_trans)
    return DelayComponents(q_hops=1, d_proc=d_proc, d_queue=d_queue, d_trans=d_trans, d_prop=d_prop)


def jitter(t_actual: SimTime, t_expected: SimTime) -> float:
    """Signed arrival error in ms"""
    return (t_actual - t_expected) / US_PER_MS


def throughput(delivered_bytes: int, window_us: SimTime) -> float:
    """Application throughput in bits per second"""
    if window_us <= 0:
        raise ValueError(f"window must be positive, got {window_us}")
    return delivered_bytes * 8.0 * US_PER_SECOND / window_us


class MetricsReport(BaseModel):
    """Results of one scenario run"""

    scenario_id: str
    case: int = 0
    mcs_mode: str = ""
    speed_kmh: float = 0.0
    pathloss_model: str = ""
    service_class: str = ""
    seed: int = 0
    duration: float = Field(default=0.0, ge=0, description="Simulated time in s")
    window: float = Field(default=1.0, gt=0)

    plr: float = Field(default=0.0, ge=0, le=1)
    plr_undefined: bool = False
    mean_e2e_delay: Optional[float] = Field(default=None, description="ms")
    mean_jitter: float = Field(default=0.0, ge=0, description="Mean |jitter| in ms")
    signed_jitter: float = Field(default=0.0, description="Mean signed jitter in ms")
    throughput: float = Field(default=0.0, ge=0, description="bps")
    data_dropped: float = Field(default=0.0, ge=0, description="bps")
    mean_bler: float = Field(default=0.0, ge=0, le=1)

    delivered: int = 0
    lost: int = 0
    handoffs: int = 0
    mcs_changes: int = 0
    mcs_share: Dict[str, float] = Field(default_factory=dict)
    flow_counters: Dict[str, Dict[str, int]] = Field(default_factory=dict)

    plr_series: List[Optional[float]] = Field(default_factory=list)
    delay_series: List[Optional[float]] = Field(default_factory=list)
    jitter_series: List[Optional[float]] = Field(default_factory=list)
    signed_jitter_series: List[Optional[float]] = Field(default_factory=list)
    throughput_series: List[float] = Field(default_factory=list)
    dropped_series: List[float] = Field(default_factory=list)
    bler_series: List[Optional[float]] = Field(default_factory=list)

    @property
    def plr_ok(self) -> bool:
        return self.plr <= PLR_BOUND

    @property
    def delay_ok(self) -> bool:
        return self.mean_e2e_delay is not None and self.mean_e2e_delay < DELAY_BOUND_MS

    @property
    def jitter_ok(self) -> bool:
        return self.mean_jitter < JITTER_BOUND_MS

    @property
    def throughput_in_band(self) -> bool:
        low, high = THROUGHPUT_BAND_BPS
        return low <= self.throughput <= high

    @property
    def windows(self) -> int:
        return len(self.throughput_series)


def merge_reports(reports: Iterable[MetricsReport]) -> List[MetricsReport]:
    """Combine reports from independent runs into one list ordered by scenario id"""
    merged: Dict[str, MetricsReport] = {}
    for report in reports:
        if report.scenario_id in merged:
            raise SimulationError(f"Duplicate report for scenario {report.scenario_id}")
        merged[report.scenario_id] = report
    return [merged[key] for key in sorted(merged)]


class _WindowSums:
    """Per-window accumulators, one slot per window"""

    def __init__(self, windows: int):
        self.delivered = np.zeros(windows, dtype=np.int64)
        self.lost = np.zeros(windows, dtype=np.int64)
        self.delivered_bytes = np.zeros(windows, dtype=np.int64)
        self.dropped_bytes = np.zeros(windows, dtype=np.int64)
        self.delay_sum = np.zeros(windows)
        self.jitter_abs_sum = np.zeros(windows)
        self.jitter_sum = np.zeros(windows)
        self.jitter_count = np.zeros(windows, dtype=np.int64)
        self.bler_sum = np.zeros(windows)
        self.frames = np.zeros(windows, dtype=np.int64)


class MetricsCollector:
    """Accumulates packet and frame events of the mobile's flows"""

    def __init__(self, duration_us: SimTime, window_us: SimTime, flow_ids: Iterable[str]):
        if duration_us <= 0 or window_us <= 0:
            raise ValueError("duration and window must be positive")
        self.duration_us = duration_us
        self.window_us = window_us
        self.windows = math.ceil(duration_us / window_us)
        self.flow_ids = set(flow_ids)
        self.sums = _WindowSums(self.windows)
        # Per flow: (frame_id, first arrival, gen_time) of the last media frame seen
        self._last_frame: Dict[str, Tuple[int, SimTime, SimTime]] = {}
        self._mcs_frames: Dict[str, int] = {}
        self.logger = logging.getLogger(__name__)

    def _window(self, t: SimTime) -> int:
        return min(max(int(t // self.window_us), 0), self.windows - 1)

    def tracks(self, flow_id: str) -> bool:
        return flow_id in self.flow_ids

    def record_delivery(self, record: Delivery) -> None:
        if not self.tracks(record.flow_id):
            return
        w = self._window(record.delivered_at)
        s = self.sums
        s.delivered[w] += 1
        s.delivered_bytes[w] += record.size
        s.delay_sum[w] += e2e_delay(record)

        pkt = record.packet
        previous = self._last_frame.get(record.flow_id)
        if previous is not None and pkt.frame_id <= previous[0]:
            return
        if previous is not None:
            _, last_arrival, last_gen = previous
            j = jitter(record.delivered_at, last_arrival + (pkt.gen_time - last_gen))
            s.jitter_abs_sum[w] += abs(j)
            s.jitter_sum[w] += j
            s.jitter_count[w] += 1
        self._last_frame[record.flow_id] = (pkt.frame_id, record.delivered_at, pkt.gen_time)

    def record_drop(self, flow_id: str, pkt: MediaPacket, now: SimTime) -> None:
        if not self.tracks(flow_id):
            return
        w = self._window(now)
        self.sums.lost[w] += 1
        self.sums.dropped_bytes[w] += pkt.size

    def record_frame(self, now: SimTime, mcs_key: str, bler_p: float) -> None:
        w = self._window(now)
        self.sums.bler_sum[w] += bler_p
        self.sums.frames[w] += 1
        self._mcs_frames[mcs_key] = self._mcs_frames.get(mcs_key, 0) + 1

    def _window_lengths(self) -> np.ndarray:
        lengths = np.full(self.windows, self.window_us, dtype=np.int64)
        lengths[-1] = self.duration_us - self.window_us * (self.windows - 1)
        return lengths

    @staticmethod
    def _ratio(numerator: np.ndarray, denominator: np.ndarray) -> List[Optional[float]]:
        return [float(n / d) if d > 0 else None for n, d in zip(numerator, denominator)]

    def report(self, scenario_id: str, **fields) -> MetricsReport:
        s = self.sums
        lengths = self._window_lengths()
        delivered = int(s.delivered.sum())
        lost = int(s.lost.sum())
        jitter_count = int(s.jitter_count.sum())
        frames = int(s.frames.sum())

        plr_series = [plr(int(l), int(d)) if plr_defined(int(l), int(d)) else None
                      for l, d in zip(s.lost, s.delivered)]
        total_frames = sum(self._mcs_frames.values())
        mcs_share = {key: count / total_frames for key, count in sorted(self._mcs_frames.items())} \
            if total_frames else {}

        return MetricsReport(
            scenario_id=scenario_id,
            duration=self.duration_us / US_PER_SECOND,
            window=self.window_us / US_PER_SECOND,
            plr=plr(lost, delivered),
            plr_undefined=not plr_defined(lost, delivered),
            mean_e2e_delay=float(s.delay_sum.sum() / delivered) if delivered else None,
            mean_jitter=float(s.jitter_abs_sum.sum() / jitter_count) if jitter_count else 0.0,
            signed_jitter=float(s.jitter_sum.sum() / jitter_count) if jitter_count else 0.0,
            throughput=throughput(int(s.delivered_bytes.sum()), self.duration_us),
            data_dropped=throughput(int(s.dropped_bytes.sum()), self.duration_us),
            mean_bler=float(s.bler_sum.sum() / frames) if frames else 0.0,
            delivered=delivered,
            lost=lost,
            mcs_share=mcs_share,
            plr_series=plr_series,
            delay_series=self._ratio(s.delay_sum, s.delivered),
            jitter_series=self._ratio(s.jitter_abs_sum, s.jitter_count),
            signed_jitter_series=self._ratio(s.jitter_sum, s.jitter_count),
            throughput_series=[throughput(int(b), int(n)) for b, n in zip(s.delivered_bytes, lengths)],
            dropped_series=[throughput(int(b), int(n)) for b, n in zip(s.dropped_bytes, lengths)],
            bler_series=self._ratio(s.bler_sum, s.frames),
            **fields,
        )
