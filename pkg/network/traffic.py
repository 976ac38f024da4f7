"""Trace-driven audio/video sources.

A trace is one frame per line: ``size``, ``index size`` or
``index type size`` where type is one of I, P, B or A (default P). Lines
starting with ``#`` are comments. Frames are emitted on the integer clock at
``round(i * 1e6 / fps)`` so long runs do not drift.
"""

from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import logging
import math

import aiofiles
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import TraceFormatError
from core.simcore import RngStream, SimTime, US_PER_SECOND


logger = logging.getLogger(__name__)


class FrameType(str, Enum):
    I = "I"
    P = "P"
    B = "B"
    A = "A"


class TraceStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    frames: int
    min_size: int
    max_size: int
    mean_size: float
    peak_rate: float = Field(description="Mbps at the largest frame size")
    mean_rate: float = Field(description="Mbps at the mean frame size")


class VideoTrace:
    """Immutable sequence of frame sizes with their types"""

    def __init__(self, sizes: Sequence[int], types: Sequence[str], nominal_fps: float, name: str = "trace"):
        sizes_array = np.asarray(sizes, dtype=np.int64)
        if sizes_array.size == 0:
            raise TraceFormatError(f"trace '{name}' has no frames")
        if len(types) != sizes_array.size:
            raise TraceFormatError(f"trace '{name}' has {sizes_array.size} sizes but {len(types)} types")
        if int(sizes_array.min()) < 1:
            raise TraceFormatError(f"trace '{name}' contains a frame smaller than 1 byte")
        if nominal_fps <= 0:
            raise TraceFormatError(f"trace '{name}' needs a positive frame rate, got {nominal_fps}")

        sizes_array.setflags(write=False)
        self.sizes = sizes_array
        self.types: Tuple[str, ...] = tuple(types)
        self.nominal_fps = float(nominal_fps)
        self.name = name
        self._stats: Optional[TraceStats] = None

    @classmethod
    def constant(cls, size: int, frames: int, fps: float, name: str = "constant",
                 frame_type: FrameType = FrameType.P) -> "VideoTrace":
        return cls([size] * frames, [frame_type.value] * frames, fps, name)

    def __len__(self) -> int:
        return int(self.sizes.size)

    @property
    def duration(self) -> float:
        """Playback length in seconds"""
        return len(self) / self.nominal_fps

    @property
    def stats(self) -> TraceStats:
        if self._stats is None:
            mean = float(self.sizes.mean())
            self._stats = TraceStats(
                frames=len(self),
                min_size=int(self.sizes.min()),
                max_size=int(self.sizes.max()),
                mean_size=mean,
                peak_rate=float(self.sizes.max()) * 8 * self.nominal_fps / 1e6,
                mean_rate=mean * 8 * self.nominal_fps / 1e6,
            )
        return self._stats

    def __repr__(self) -> str:
        return f"VideoTrace(name={self.name!r}, frames={len(self)}, fps={self.nominal_fps})"


def load_trace(path: Union[str, Path], fps: float = 25.0, name: Optional[str] = None) -> VideoTrace:
    """Parse a frame-size trace file"""
    path = str(path)
    sizes: List[int] = []
    types: List[str] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) == 1:
                frame_type, size_field = FrameType.P.value, fields[0]
            elif len(fields) == 2:
                frame_type, size_field = FrameType.P.value, fields[1]
            elif len(fields) == 3:
                frame_type, size_field = fields[1].upper(), fields[2]
            else:
                raise TraceFormatError(f"expected 1 to 3 columns, got {len(fields)}", path, line_number)

            if frame_type not in FrameType._value2member_map_:
                raise TraceFormatError(f"unknown frame type '{fields[1]}'", path, line_number)
            try:
                size = int(size_field)
            except ValueError:
                raise TraceFormatError(f"frame size '{size_field}' is not an integer", path, line_number)
            if size < 1:
                raise TraceFormatError(f"frame size must be >= 1, got {size}", path, line_number)

            sizes.append(size)
            types.append(frame_type)

    if not sizes:
        raise TraceFormatError(f"{path}: trace file has no frames")

    trace = VideoTrace(sizes, types, fps, name or Path(path).stem)
    stats = trace.stats
    logger.info(f"Loaded trace {trace.name}: {stats.frames} frames, mean {stats.mean_size:.3f} B, "
                f"min {stats.min_size} B, max {stats.max_size} B, {stats.mean_rate:.3f} Mbps")
    return trace


class SyntheticTraceSpec(BaseModel):
    """Targets for the bundled generator; defaults follow the 2-hour reference movie"""
    model_config = ConfigDict(frozen=True)

    frames: int = Field(default=180_000, ge=1)
    fps: float = Field(default=25.0, gt=0)
    mean_size: float = Field(default=3189.068, gt=0)
    min_size: int = Field(default=8, ge=1)
    max_size: int = Field(default=36450, ge=1)
    sigma: float = Field(default=0.9, gt=0, description="Log-normal shape parameter")
    gop: str = "IBBPBBPBBPBB"
    seed: int = 2008

    @model_validator(mode="after")
    def _check_bounds(self) -> "SyntheticTraceSpec":
        if not self.min_size <= self.mean_size <= self.max_size:
            raise ValueError(f"mean {self.mean_size} must lie within [{self.min_size}, {self.max_size}]")
        if not self.gop or set(self.gop) - {"I", "P", "B"}:
            raise ValueError(f"GOP pattern '{self.gop}' may only use I, P and B")
        # One frame is pinned to min_size and one to max_size; the rest must make up the mean
        if self.frames == 1:
            if self.min_size != self.max_size:
                raise ValueError("a one-frame trace needs min_size == max_size")
        else:
            rest = self.mean_size * self.frames - self.min_size - self.max_size
            slack = 1e-9 * self.mean_size * self.frames
            low = (self.frames - 2) * self.min_size
            high = (self.frames - 2) * self.max_size
            if not low - slack <= rest <= high + slack:
                raise ValueError(
                    f"mean {self.mean_size} is out of reach for {self.frames} frames that include "
                    f"one of {self.min_size} B and one of {self.max_size} B"
                )
        return self


GOP_SIZE_FACTOR = {"I": 3.0, "P": 1.2, "B": 0.7}


def _fit_mean(base: np.ndarray, target: float, low: float, high: float) -> np.ndarray:
    scale = target / float(base.mean())
    clipped = np.clip(base * scale, low, high)
    for _ in range(200):
        mean = float(clipped.mean())
        if abs(mean - target) <= 1e-9 * target:
            break
        scale *= target / mean
        clipped = np.clip(base * scale, low, high)
    return clipped


@lru_cache(maxsize=8)
def generate_synthetic_trace(spec: SyntheticTraceSpec = SyntheticTraceSpec()) -> VideoTrace:
    """Log-normal frame sizes with a GOP pattern, fitted to the target mean
    and pinned to the target minimum and maximum"""
    n = spec.frames
    types = [spec.gop[i % len(spec.gop)] for i in range(n)]
    name = f"synthetic-{spec.seed}"

    if n == 1:
        return VideoTrace([spec.min_size], types, spec.fps, name)
    if n == 2:
        return VideoTrace([spec.min_size, spec.max_size], types, spec.fps, name)

    generator = RngStream(spec.seed, "synthetic-trace").generator
    factors = np.array([GOP_SIZE_FACTOR[t] for t in types])
    base = generator.lognormal(0.0, spec.sigma, n) * factors

    smallest = int(np.argmin(base))
    largest = int(np.argmax(base))
    free = np.ones(n, dtype=bool)
    free[[smallest, largest]] = False

    free_target = (spec.mean_size * n - spec.min_size - spec.max_size) / (n - 2)
    free_target = min(max(free_target, spec.min_size), spec.max_size)

    sizes = np.empty(n, dtype=np.int64)
    sizes[free] = np.rint(_fit_mean(base[free], free_target, spec.min_size, spec.max_size)).astype(np.int64)
    sizes[smallest] = spec.min_size
    sizes[largest] = spec.max_size

    trace = VideoTrace(sizes, types, spec.fps, name)
    logger.info(f"Generated synthetic trace: {n} frames, mean {trace.stats.mean_size:.3f} B")
    return trace


async def write_trace(trace: VideoTrace, path: Union[str, Path]) -> Path:
    """Write a trace in the 'index type size' format"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {trace.name} fps={trace.nominal_fps:g} frames={len(trace)}"]
    lines.extend(f"{i} {t} {int(s)}" for i, (t, s) in enumerate(zip(trace.types, trace.sizes)))
    async with aiofiles.open(path, "w", encoding="utf-8") as f:
        await f.write("\n".join(lines) + "\n")
    logger.info(f"Wrote trace {trace.name} to {path}")
    return path


class MediaPacket:
    """One MAC-sized piece of a media frame; ``remaining`` counts on-air bytes still to send"""
    __slots__ = ("id", "flow_id", "size", "gen_time", "frame_id", "deadline", "remaining", "lost_in_handoff")

    def __init__(self, id: int, flow_id: str, size: int, gen_time: SimTime, frame_id: int,
                 deadline: Optional[SimTime] = None):
        if deadline is not None and deadline <= gen_time:
            raise ValueError(f"packet {flow_id}#{id}: deadline must be after gen_time")
        self.id = id
        self.flow_id = flow_id
        self.size = size
        self.gen_time = gen_time
        self.frame_id = frame_id
        self.deadline = deadline
        self.remaining = size
        self.lost_in_handoff = False

    def __repr__(self) -> str:
        return f"MediaPacket({self.flow_id}#{self.id}, {self.size} B, frame {self.frame_id})"


class MediaFrame:
    """A frame handed over by a source at its emission time"""
    __slots__ = ("frame_id", "size", "frame_type", "gen_time")

    def __init__(self, frame_id: int, size: int, frame_type: str, gen_time: SimTime):
        self.frame_id = frame_id
        self.size = size
        self.frame_type = frame_type
        self.gen_time = gen_time


def packetize(frame_size: int, mtu_payload: int, flow_id: str = "", gen_time: SimTime = 0,
              frame_id: int = 0, deadline: Optional[SimTime] = None, first_id: int = 0) -> List[MediaPacket]:
    """Split a frame into full-MTU packets plus one remainder packet"""
    if mtu_payload <= 0:
        raise ValueError(f"mtu_payload must be positive, got {mtu_payload}")
    count = max(1, math.ceil(frame_size / mtu_payload))
    packets = []
    for k in range(count):
        size = min(mtu_payload, frame_size - k * mtu_payload)
        packets.append(MediaPacket(
            id=first_id + k,
            flow_id=flow_id,
            size=size,
            gen_time=gen_time,
            frame_id=frame_id,
            deadline=deadline,
        ))
    return packets


class MediaSource:
    """Replays a trace as one flow, either stopping at its end or wrapping around"""

    def __init__(self, flow_id: str, trace: VideoTrace, fps: Optional[float] = None,
                 wrap: bool = True, start: SimTime = 0):
        self.flow_id = flow_id
        self.trace = trace
        self.fps = fps or trace.nominal_fps
        self.wrap = wrap
        self.start = start
        self.index = 0

    def emission_time(self, i: int) -> SimTime:
        return self.start + int(round(i * US_PER_SECOND / self.fps))

    @property
    def exhausted(self) -> bool:
        return not self.wrap and self.index >= len(self.trace)

    def next_emission(self, now: SimTime) -> Tuple[Optional[MediaFrame], Optional[SimTime]]:
        """Emit the frame due at ``now``; the second value is when the next one is due"""
        if self.exhausted:
            return None, None
        position = self.index % len(self.trace)
        frame = MediaFrame(
            frame_id=self.index,
            size=int(self.trace.sizes[position]),
            frame_type=self.trace.types[position],
            gen_time=self.emission_time(self.index),
        )
        self.index += 1
        next_time = None if self.exhausted else self.emission_time(self.index)
        return frame, next_time


def next_emission(source: MediaSource, now: SimTime) -> Tuple[Optional[MediaFrame], Optional[SimTime]]:
    return source.next_emission(now)


class CbrSource(MediaSource):
    """Constant-bit-rate stream used for the background stations"""

    def __init__(self, flow_id: str, rate_bps: float, packet_bytes: int, start: SimTime = 0):
        if rate_bps <= 0 or packet_bytes <= 0:
            raise ValueError("CBR source needs a positive rate and packet size")
        fps = rate_bps / (packet_bytes * 8.0)
        super().__init__(flow_id, VideoTrace.constant(packet_bytes, 1, fps, flow_id), fps=fps,
                         wrap=True, start=start)


class TrafficConfig(BaseModel):
    """Media streams of the mobile station"""
    model_config = ConfigDict(frozen=True)

    video_trace: Optional[str] = Field(default=None, description="Trace path; synthetic trace when unset")
    video_fps: float = Field(default=25.0, gt=0)
    audio_trace: Optional[str] = None
    audio_fps: float = Field(default=21.6, gt=0)
    audio_frame_bytes: int = Field(default=160, ge=0, description="0 disables the audio flow")
    mtu_payload: int = Field(default=1460, gt=0)
    wrap: bool = True
    synthetic: SyntheticTraceSpec = Field(default_factory=SyntheticTraceSpec)

    @property
    def audio_enabled(self) -> bool:
        return self.audio_trace is not None or self.audio_frame_bytes > 0

    def video(self) -> VideoTrace:
        if self.video_trace:
            return load_trace(self.video_trace, fps=self.video_fps)
        spec = self.synthetic
        if spec.fps != self.video_fps:
            spec = spec.model_copy(update={"fps": self.video_fps})
        return generate_synthetic_trace(spec)

    def audio(self) -> Optional[VideoTrace]:
        if self.audio_trace:
            return load_trace(self.audio_trace, fps=self.audio_fps)
        if self.audio_frame_bytes > 0:
            return VideoTrace.constant(self.audio_frame_bytes, 1, self.audio_fps, "audio", FrameType.A)
        return None
