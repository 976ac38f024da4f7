"""Downlink MAC: per-flow queues and a per-frame scheduler over the five
802.16 service classes.

Scheduling order inside a frame is strict priority UGS > ertPS > rtPS >
nrtPS > BE. UGS is served from a fixed unsolicited grant every frame and
ertPS from a grant of its sustained rate on rtPS polling frames while it
has data; both keep any unused part of their grant. rtPS and nrtPS are
served only on their polling frames. Minimum reserved rates of rtPS, nrtPS
and BE are granted before the priority pass, and maximum sustained rates
cap what a flow can get per service opportunity. Within a class flows
share capacity packet by packet in round-robin order. Grants are
byte-granular; a packet that does not fit stays at the head of its queue
and finishes in a later frame.
"""

from collections import deque
from enum import Enum
from typing import Deque, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union
import logging

from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import ConfigError, SimulationError
from core.registry import Registry
from core.simcore import RngStream, SimTime
from network.traffic import MediaPacket


class ServiceClassKind(str, Enum):
    UGS = "ugs"
    ERTPS = "ertps"
    RTPS = "rtps"
    NRTPS = "nrtps"
    BE = "be"

    @property
    def priority(self) -> int:
        return PRIORITY_ORDER.index(self)


PRIORITY_ORDER = (
    ServiceClassKind.UGS,
    ServiceClassKind.ERTPS,
    ServiceClassKind.RTPS,
    ServiceClassKind.NRTPS,
    ServiceClassKind.BE,
)

# Classes whose packets carry a deadline and are dropped once it passes
REAL_TIME_CLASSES = frozenset({ServiceClassKind.ERTPS, ServiceClassKind.RTPS})

# Classes granted a fixed allocation; the unused part is not handed on
FIXED_GRANT_CLASSES = frozenset({ServiceClassKind.UGS, ServiceClassKind.ERTPS})


def rate_bytes(rate_mbps: float, frame_duration_ms: float, frames: int = 1) -> int:
    """Bytes a rate in Mbps amounts to over ``frames`` downlink frames"""
    return int(rate_mbps * 1e6 * frame_duration_ms * frames / 1000.0 / 8.0)


class ServiceClass(BaseModel):
    """QoS parameters of a service flow; a zero rate means no cap or no reservation"""
    model_config = ConfigDict(frozen=True)

    kind: ServiceClassKind
    max_sustained_rate: float = Field(default=0.0, ge=0, description="Mbps")
    min_reserved_rate: float = Field(default=0.0, ge=0, description="Mbps")
    max_latency: Optional[float] = Field(default=None, gt=0, description="ms")
    polling_interval: int = Field(default=1, ge=1, description="frames")

    @model_validator(mode="after")
    def _check_rates(self) -> "ServiceClass":
        if self.kind in FIXED_GRANT_CLASSES:
            if self.max_sustained_rate != self.min_reserved_rate:
                raise ValueError(f"{self.kind.value} needs max_sustained_rate == min_reserved_rate")
        elif self.min_reserved_rate > self.max_sustained_rate > 0:
            raise ValueError("min_reserved_rate cannot exceed max_sustained_rate")
        return self

    @property
    def real_time(self) -> bool:
        return self.kind in REAL_TIME_CLASSES

    @property
    def polled(self) -> bool:
        return self.kind in (ServiceClassKind.ERTPS, ServiceClassKind.RTPS, ServiceClassKind.NRTPS)

    def fixed_grant_bytes(self, frame_duration_ms: float) -> int:
        """Per-opportunity grant of a UGS or active ertPS flow; 0 when the class has none"""
        if self.kind not in FIXED_GRANT_CLASSES:
            return 0
        frames = self.polling_interval if self.polled else 1
        return rate_bytes(self.min_reserved_rate, frame_duration_ms, frames)

    def max_grant_bytes(self, frame_duration_ms: float) -> Optional[int]:
        if self.max_sustained_rate <= 0:
            return None
        return rate_bytes(self.max_sustained_rate, frame_duration_ms, self.polling_interval)

    def reserved_bytes(self, frame_duration_ms: float) -> int:
        if self.kind in FIXED_GRANT_CLASSES:
            return 0
        return rate_bytes(self.min_reserved_rate, frame_duration_ms, self.polling_interval)


class MacConfig(BaseModel):
    """MAC parameters; rates are in Mbps and 0 leaves a rate unset"""
    model_config = ConfigDict(frozen=True)

    queue_limit: int = Field(default=1_000_000, gt=0, description="Per-flow queue limit in payload bytes")
    header_bytes: int = Field(default=40, ge=0, description="Per-packet overhead charged to air capacity")
    rtps_polling_interval: int = Field(default=1, ge=1)
    nrtps_polling_interval: int = Field(default=4, ge=1)
    deadline: float = Field(default=400.0, gt=0, description="Real-time packet lifetime in ms")
    ugs_rate: float = Field(default=0.8, ge=0, description="UGS reserved rate")
    ertps_rate: float = Field(default=0.4, ge=0, description="ertPS sustained rate granted while active")
    rtps_max_rate: float = Field(default=0.0, ge=0)
    rtps_min_rate: float = Field(default=0.0, ge=0)
    nrtps_max_rate: float = Field(default=0.0, ge=0)
    nrtps_min_rate: float = Field(default=0.0, ge=0)
    be_max_rate: float = Field(default=0.0, ge=0)
    background_stations: int = Field(default=4, ge=0)
    background_rate_kbps: float = Field(default=0.0, ge=0, description="0 means the mean A/V rate")
    background_packet_bytes: int = Field(default=1000, gt=0)

    @model_validator(mode="after")
    def _check_class_rates(self) -> "MacConfig":
        for name, low, high in (("rtps", self.rtps_min_rate, self.rtps_max_rate),
                                ("nrtps", self.nrtps_min_rate, self.nrtps_max_rate)):
            if low > high > 0:
                raise ValueError(f"{name}_min_rate {low} exceeds {name}_max_rate {high}")
        return self

    def service_class(self, name: str) -> ServiceClass:
        """Resolve a class name and apply this config's polling, rate and deadline settings"""
        base = SERVICE_CLASSES.require(name)
        update: Dict[str, object] = {}
        if base.kind is ServiceClassKind.UGS:
            update.update(max_sustained_rate=self.ugs_rate, min_reserved_rate=self.ugs_rate)
        elif base.kind is ServiceClassKind.ERTPS:
            update.update(max_sustained_rate=self.ertps_rate, min_reserved_rate=self.ertps_rate,
                          polling_interval=self.rtps_polling_interval)
        elif base.kind is ServiceClassKind.RTPS:
            update.update(max_sustained_rate=self.rtps_max_rate, min_reserved_rate=self.rtps_min_rate,
                          polling_interval=self.rtps_polling_interval)
        elif base.kind is ServiceClassKind.NRTPS:
            update.update(max_sustained_rate=self.nrtps_max_rate, min_reserved_rate=self.nrtps_min_rate,
                          polling_interval=self.nrtps_polling_interval)
        else:
            update.update(max_sustained_rate=self.be_max_rate)
        if base.real_time:
            update["max_latency"] = self.deadline
        return ServiceClass(**{**base.model_dump(), **update})


def _build_service_classes() -> Registry[ServiceClass]:
    registry: Registry[ServiceClass] = Registry("service class")
    registry.register("ugs", ServiceClass(kind=ServiceClassKind.UGS, max_sustained_rate=0.8, min_reserved_rate=0.8))
    registry.register("ertps", ServiceClass(kind=ServiceClassKind.ERTPS, max_sustained_rate=0.4,
                                            min_reserved_rate=0.4, max_latency=400.0))
    registry.register("rtps", ServiceClass(kind=ServiceClassKind.RTPS, max_latency=400.0, polling_interval=1))
    registry.register("nrtps", ServiceClass(kind=ServiceClassKind.NRTPS, polling_interval=4))
    registry.register("be", ServiceClass(kind=ServiceClassKind.BE), aliases=["best_effort"])
    return registry


SERVICE_CLASSES = _build_service_classes()


class FlowCounters:
    """Packet counts; ``enqueued`` counts every offered packet, overflow drops included"""

    def __init__(self):
        self.enqueued = 0
        self.delivered = 0
        self.dropped_expired = 0
        self.dropped_error = 0
        self.dropped_overflow = 0
        self.dropped_handoff = 0
        self.delivered_bytes = 0
        self.dropped_bytes = 0

    @property
    def dropped(self) -> int:
        return self.dropped_expired + self.dropped_error + self.dropped_overflow + self.dropped_handoff

    def as_dict(self) -> Dict[str, int]:
        return {
            "enqueued": self.enqueued,
            "delivered": self.delivered,
            "dropped_expired": self.dropped_expired,
            "dropped_error": self.dropped_error,
            "dropped_overflow": self.dropped_overflow,
            "dropped_handoff": self.dropped_handoff,
        }


class ServiceFlow:
    """A downlink service flow with its FIFO queue"""

    def __init__(self, flow_id: str, service_class: ServiceClass, queue_limit: int = 1_000_000,
                 header_bytes: int = 0, variable_rate: bool = True, station: str = "ss"):
        if service_class.kind is ServiceClassKind.UGS and variable_rate:
            raise ConfigError(
                f"Flow {flow_id}: variable-bit-rate media cannot be carried on UGS, "
                f"use ertps, rtps, nrtps or be"
            )
        self.flow_id = flow_id
        self.service_class = service_class
        self.queue_limit = queue_limit
        self.header_bytes = header_bytes
        self.variable_rate = variable_rate
        self.station = station
        self.queue: Deque[MediaPacket] = deque()
        self.queued_bytes = 0
        self.counters = FlowCounters()

    @property
    def kind(self) -> ServiceClassKind:
        return self.service_class.kind

    def enqueue(self, pkt: MediaPacket) -> bool:
        self.counters.enqueued += 1
        if self.queued_bytes + pkt.size > self.queue_limit:
            self.counters.dropped_overflow += 1
            self.counters.dropped_bytes += pkt.size
            return False
        pkt.remaining = pkt.size + self.header_bytes
        self.queue.append(pkt)
        self.queued_bytes += pkt.size
        return True

    def pop_head(self) -> MediaPacket:
        pkt = self.queue.popleft()
        self.queued_bytes -= pkt.size
        return pkt

    def drop_expired(self, now: SimTime) -> List[MediaPacket]:
        """Remove head packets whose deadline has passed"""
        expired = []
        while self.queue and self.queue[0].deadline is not None and self.queue[0].deadline <= now:
            pkt = self.pop_head()
            self.counters.dropped_expired += 1
            self.counters.dropped_bytes += pkt.size
            expired.append(pkt)
        return expired

    def conserved(self) -> bool:
        c = self.counters
        return c.enqueued == c.delivered + c.dropped + len(self.queue)

    def __repr__(self) -> str:
        return f"ServiceFlow({self.flow_id!r}, {self.kind.value}, queued={len(self.queue)})"


def enqueue(flow: ServiceFlow, pkt: MediaPacket) -> bool:
    return flow.enqueue(pkt)


class Grant:
    def __init__(self, flow_id: str, nbytes: int = 0):
        self.flow_id = flow_id
        self.bytes = nbytes


class FrameAllocation:
    """Grants of one downlink frame; ``segments`` lists (flow, packet, bytes) in air order"""

    def __init__(self, frame_index: int, capacity: int):
        self.frame_index = frame_index
        self.capacity = capacity
        self.grants: Dict[str, Grant] = {}
        self.segments: List[Tuple[ServiceFlow, MediaPacket, int]] = []
        self.expired: List[Tuple[ServiceFlow, MediaPacket]] = []

    @property
    def total(self) -> int:
        return sum(g.bytes for g in self.grants.values())

    def granted(self, flow_id: str) -> int:
        grant = self.grants.get(flow_id)
        return grant.bytes if grant else 0

    def _add(self, flow: ServiceFlow, pkt: MediaPacket, nbytes: int) -> None:
        self._grant(flow).bytes += nbytes
        self.segments.append((flow, pkt, nbytes))

    def _grant(self, flow: ServiceFlow) -> Grant:
        return self.grants.setdefault(flow.flow_id, Grant(flow.flow_id))


class Delivery:
    """A packet that reached the mobile intact"""

    def __init__(self, flow_id: str, packet: MediaPacket, delivered_at: SimTime, dl_rate_bps: float):
        self.flow_id = flow_id
        self.packet = packet
        self.delivered_at = delivered_at
        self.dl_rate_bps = dl_rate_bps

    @property
    def gen_time(self) -> SimTime:
        return self.packet.gen_time

    @property
    def size(self) -> int:
        return self.packet.size

    def __repr__(self) -> str:
        return f"Delivery({self.flow_id!r}, #{self.packet.id}, at={self.delivered_at})"


class TransmitOutcome:
    def __init__(self):
        self.delivered: List[Delivery] = []
        self.errored: List[Tuple[str, MediaPacket]] = []
        self.lost_in_handoff: List[Tuple[str, MediaPacket]] = []


class MacScheduler:
    """Builds one FrameAllocation per downlink frame"""

    def __init__(self, frame_duration_ms: float = 5.0):
        self.frame_duration_ms = frame_duration_ms
        self._rr: Dict[ServiceClassKind, int] = {kind: 0 for kind in PRIORITY_ORDER}
        self.logger = logging.getLogger(__name__)

    def schedule_frame(self, flows: Sequence[ServiceFlow], capacity: int, now: SimTime,
                       frame_index: int = 0) -> FrameAllocation:
        alloc = FrameAllocation(frame_index=frame_index, capacity=capacity)
        remaining = capacity

        for flow in flows:
            if flow.service_class.real_time:
                alloc.expired.extend((flow, pkt) for pkt in flow.drop_expired(now))

        # Bytes of each queued packet already granted in this frame
        cursors: Dict[str, Tuple[int, int]] = {flow.flow_id: (0, 0) for flow in flows}
        # Bytes each rate-capped flow may still receive in this frame
        headroom: Dict[str, Optional[int]] = {
            flow.flow_id: flow.service_class.max_grant_bytes(self.frame_duration_ms) for flow in flows
        }

        ugs = [f for f in flows if f.kind is ServiceClassKind.UGS]
        remaining = self._fixed_grants(alloc, ugs, remaining, cursors)

        ertps = self._in_turn(ServiceClassKind.ERTPS, flows, frame_index)
        remaining = self._fixed_grants(alloc, ertps, remaining, cursors)

        for kind in PRIORITY_ORDER[2:]:
            for flow in self._members(kind, flows, frame_index):
                reserved = flow.service_class.reserved_bytes(self.frame_duration_ms)
                if reserved and remaining > 0:
                    used = self._fill(alloc, flow, min(reserved, remaining), cursors, headroom)
                    remaining -= used

        for kind in PRIORITY_ORDER[2:]:
            if remaining <= 0:
                break
            order = self._in_turn(kind, flows, frame_index)
            if order:
                remaining = self._round_robin(alloc, order, remaining, cursors, headroom)

        return alloc

    def _members(self, kind: ServiceClassKind, flows: Sequence[ServiceFlow], frame_index: int) -> List[ServiceFlow]:
        return [f for f in flows if f.kind is kind and self._eligible(f, frame_index)]

    def _in_turn(self, kind: ServiceClassKind, flows: Sequence[ServiceFlow], frame_index: int) -> List[ServiceFlow]:
        """Eligible members of a class, starting one further along each frame"""
        members = self._members(kind, flows, frame_index)
        if not members:
            return []
        start = self._rr[kind] % len(members)
        self._rr[kind] += 1
        return members[start:] + members[:start]

    def _eligible(self, flow: ServiceFlow, frame_index: int) -> bool:
        if not flow.queue:
            return False
        if flow.service_class.polled:
            return frame_index % flow.service_class.polling_interval == 0
        return True

    def _fixed_grants(self, alloc: FrameAllocation, flows: Sequence[ServiceFlow], remaining: int,
                      cursors: Dict[str, Tuple[int, int]]) -> int:
        for flow in flows:
            if remaining <= 0:
                break
            grant = flow.service_class.fixed_grant_bytes(self.frame_duration_ms)
            if grant <= 0:
                if flow.kind is ServiceClassKind.ERTPS:
                    # No configured rate: served like rtPS, nothing held back
                    remaining -= self._fill(alloc, flow, remaining, cursors)
                continue
            reserved = min(grant, remaining)
            remaining -= reserved
            used = self._fill(alloc, flow, reserved, cursors)
            if reserved > used:
                alloc._grant(flow).bytes += reserved - used
        return remaining

    def _next_piece(self, flow: ServiceFlow, cursors: Dict[str, Tuple[int, int]]) -> Optional[Tuple[MediaPacket, int]]:
        index, used = cursors[flow.flow_id]
        if index >= len(flow.queue):
            return None
        pkt = flow.queue[index]
        return pkt, pkt.remaining - used

    def _take(self, alloc: FrameAllocation, flow: ServiceFlow, budget: int,
              cursors: Dict[str, Tuple[int, int]], headroom: Optional[Dict[str, Optional[int]]] = None) -> int:
        """Grant up to ``budget`` bytes of the flow's next unserved packet"""
        cap = headroom.get(flow.flow_id) if headroom else None
        if cap is not None:
            budget = min(budget, cap)
        piece = self._next_piece(flow, cursors)
        if piece is None or budget <= 0:
            return 0
        pkt, left = piece
        nbytes = min(left, budget)
        alloc._add(flow, pkt, nbytes)
        index, used = cursors[flow.flow_id]
        if nbytes == left:
            cursors[flow.flow_id] = (index + 1, 0)
        else:
            cursors[flow.flow_id] = (index, used + nbytes)
        if cap is not None:
            headroom[flow.flow_id] = cap - nbytes
        return nbytes

    def _fill(self, alloc: FrameAllocation, flow: ServiceFlow, budget: int,
              cursors: Dict[str, Tuple[int, int]], headroom: Optional[Dict[str, Optional[int]]] = None) -> int:
        used = 0
        while used < budget:
            taken = self._take(alloc, flow, budget - used, cursors, headroom)
            if taken == 0:
                break
            used += taken
        return used

    def _round_robin(self, alloc: FrameAllocation, order: List[ServiceFlow], remaining: int,
                     cursors: Dict[str, Tuple[int, int]], headroom: Dict[str, Optional[int]]) -> int:
        active = list(order)
        while remaining > 0 and active:
            still_active = []
            for flow in active:
                if remaining <= 0:
                    break
                taken = self._take(alloc, flow, remaining, cursors, headroom)
                remaining -= taken
                if taken and self._next_piece(flow, cursors) is not None:
                    still_active.append(flow)
            active = still_active
        return remaining

    def transmit(self, alloc: FrameAllocation, bler_p: Union[float, Mapping[str, float]],
                 rng: Optional[RngStream], frame_start: SimTime = 0, dl_rate_bps: float = 1.0,
                 blackout: Iterable[str] = ()) -> TransmitOutcome:
        """Put the allocation on the air.

        A packet completes when its last segment is sent. It is then lost in
        handoff if its flow was unreachable for any of its segments, else it
        is errored with its flow's block error probability in this frame
        (one draw per packet, however many frames it spanned), else delivered.
        """
        outcome = TransmitOutcome()
        unreachable: Set[str] = set(blackout)
        offset = 0

        for flow, pkt, nbytes in alloc.segments:
            offset += nbytes
            pkt.remaining -= nbytes
            if flow.flow_id in unreachable:
                pkt.lost_in_handoff = True
            if pkt.remaining > 0:
                continue

            if flow.queue[0] is not pkt:
                raise SimulationError(f"Flow {flow.flow_id} completed a packet out of FIFO order")
            flow.pop_head()
            counters = flow.counters
            if pkt.lost_in_handoff:
                counters.dropped_handoff += 1
                counters.dropped_bytes += pkt.size
                outcome.lost_in_handoff.append((flow.flow_id, pkt))
                continue

            p = bler_p if isinstance(bler_p, (int, float)) else bler_p.get(flow.flow_id, 0.0)
            if p >= 1.0 or (p > 0.0 and rng is not None and rng.random() < p):
                counters.dropped_error += 1
                counters.dropped_bytes += pkt.size
                outcome.errored.append((flow.flow_id, pkt))
            else:
                counters.delivered += 1
                counters.delivered_bytes += pkt.size
                delivered_at = frame_start + int(round(offset * 8 * 1e6 / dl_rate_bps))
                outcome.delivered.append(Delivery(flow.flow_id, pkt, delivered_at, dl_rate_bps))

        return outcome
