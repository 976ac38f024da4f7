from pathlib import Path
from typing import List, Tuple, Union
import bisect
import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from core.errors import ConfigError
from core.simcore import SimTime, US_PER_SECOND, from_ms
from radio.channel import TxBudget


Point = Tuple[float, float]


class Cell(BaseModel):
    model_config = ConfigDict(frozen=True)

    cell_id: int
    x: float
    y: float

    def distance_to(self, pos: Point) -> float:
        return math.hypot(pos[0] - self.x, pos[1] - self.y)


class CellLayout(BaseModel):
    """Seven tangent hexagonal cells: one center cell and a ring of six"""
    model_config = ConfigDict(frozen=True)

    radius: float = Field(default=200.0, gt=0, description="Cell radius in meters")
    cells: Tuple[Cell, ...] = ()

    @model_validator(mode="after")
    def _check_cells(self) -> "CellLayout":
        if len(self.cells) != 7:
            raise ValueError(f"layout needs exactly 7 cells, got {len(self.cells)}")
        spacing = math.sqrt(3.0) * self.radius
        center = self.cells[0]
        for cell in self.cells[1:]:
            if abs(cell.distance_to((center.x, center.y)) - spacing) > 1e-6:
                raise ValueError(f"ring cell {cell.cell_id} is not at sqrt(3)*radius from the center")
        return self

    @classmethod
    def hexagonal(cls, radius: float = 200.0) -> "CellLayout":
        spacing = math.sqrt(3.0) * radius
        cells = [Cell(cell_id=0, x=0.0, y=0.0)]
        for k in range(6):
            angle = math.radians(30.0 + 60.0 * k)
            cells.append(Cell(cell_id=k + 1, x=spacing * math.cos(angle), y=spacing * math.sin(angle)))
        return cls(radius=radius, cells=tuple(cells))

    def cell(self, cell_id: int) -> Cell:
        return self.cells[cell_id]


class Trajectory(BaseModel):
    """Piecewise-linear path followed at constant speed"""
    model_config = ConfigDict(frozen=True)

    waypoints: Tuple[Point, ...]
    speed: float = Field(gt=0, description="Speed in km/h")
    loop: bool = True

    _cumulative: np.ndarray = PrivateAttr()

    @field_validator("waypoints")
    @classmethod
    def _check_waypoints(cls, value: Tuple[Point, ...]) -> Tuple[Point, ...]:
        if len(value) < 2:
            raise ValueError("a trajectory needs at least 2 waypoints")
        return value

    def model_post_init(self, __context) -> None:
        points = list(self.waypoints)
        if self.loop:
            points.append(points[0])
        lengths = [math.dist(a, b) for a, b in zip(points[:-1], points[1:])]
        self._cumulative = np.concatenate(([0.0], np.cumsum(lengths)))

    @property
    def length(self) -> float:
        return float(self._cumulative[-1])

    @property
    def speed_mps(self) -> float:
        return self.speed / 3.6

    @property
    def lap_time_us(self) -> SimTime:
        return int(round(self.length / self.speed_mps * US_PER_SECOND))

    def with_speed(self, speed: float) -> "Trajectory":
        return Trajectory(waypoints=self.waypoints, speed=speed, loop=self.loop)

    def position_at(self, t: SimTime) -> Point:
        return position_at(self, t)


def position_at(tr: Trajectory, t: SimTime) -> Point:
    """Position after travelling for t microseconds"""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    total = tr.length
    travelled = tr.speed_mps * t / US_PER_SECOND
    if total == 0:
        return tr.waypoints[0]
    if tr.loop:
        travelled = math.fmod(travelled, total)
    elif travelled >= total:
        return tr.waypoints[-1]

    points = list(tr.waypoints) + ([tr.waypoints[0]] if tr.loop else [])
    cumulative = tr._cumulative
    segment = bisect.bisect_right(cumulative, travelled) - 1
    segment = min(max(segment, 0), len(points) - 2)
    seg_length = cumulative[segment + 1] - cumulative[segment]
    if seg_length == 0:
        return points[segment]
    fraction = (travelled - cumulative[segment]) / seg_length
    (x0, y0), (x1, y1) = points[segment], points[segment + 1]
    return (x0 + (x1 - x0) * fraction, y0 + (y1 - y0) * fraction)


def load_trajectory(path: Union[str, Path], speed: float, loop: bool = True) -> Trajectory:
    """Read 'x_meters y_meters' waypoints, one per line, '#' starts a comment"""
    waypoints: List[Point] = []
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ConfigError(f"{path}:{line_number}: expected 'x y', got '{raw.strip()}'")
            try:
                waypoints.append((float(fields[0]), float(fields[1])))
            except ValueError:
                raise ConfigError(f"{path}:{line_number}: non-numeric waypoint '{raw.strip()}'")
    try:
        return Trajectory(waypoints=tuple(waypoints), speed=speed, loop=loop)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}")


class HandoffPolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    margin: float = Field(default=3.0, ge=0, description="Hysteresis margin in dB")
    latency: float = Field(default=50.0, ge=0, description="Outage after a handoff in ms")


def received_powers(pos: Point, layout: CellLayout, pl_model, budget: TxBudget) -> List[float]:
    """Mean received power (dBm) from every BS; shadowing is not drawn"""
    base = budget.eirp_plus_rx_gain
    return [base - pl_model.path_loss(cell.distance_to(pos)) for cell in layout.cells]


def strongest_cell(pos: Point, layout: CellLayout, pl_model, budget: TxBudget) -> int:
    powers = received_powers(pos, layout, pl_model, budget)
    return int(np.argmax(powers))


def serving_cell(pos: Point, layout: CellLayout, current: int, pol: HandoffPolicy,
                 pl_model, budget: TxBudget) -> int:
    """Switch to the strongest BS only if it beats the current one by more than the margin"""
    powers = received_powers(pos, layout, pl_model, budget)
    best = int(np.argmax(powers))
    if best != current and powers[best] - powers[current] > pol.margin:
        return best
    return current


class HandoffController:
    """Tracks the serving cell of one mobile and the outage that follows a handoff"""

    def __init__(self, layout: CellLayout, policy: HandoffPolicy, pl_model, budget: TxBudget,
                 initial_pos: Point):
        self.layout = layout
        self.policy = policy
        self.pl_model = pl_model
        self.budget = budget
        self.serving = strongest_cell(initial_pos, layout, pl_model, budget)
        self.outage_until: SimTime = 0
        self.handoffs = 0
        self.history: List[Tuple[SimTime, int, int]] = []
        self.logger = logging.getLogger(__name__)

    def in_outage(self, now: SimTime) -> bool:
        return now < self.outage_until

    def update(self, now: SimTime, pos: Point) -> bool:
        """Re-evaluate the serving cell; return True when a handoff starts"""
        if self.in_outage(now):
            return False

        target = serving_cell(pos, self.layout, self.serving, self.policy, self.pl_model, self.budget)
        if target == self.serving:
            return False

        self.logger.debug(f"Handoff at t={now}us: cell {self.serving} -> {target}")
        self.history.append((now, self.serving, target))
        self.serving = target
        self.handoffs += 1
        self.outage_until = now + from_ms(self.policy.latency)
        return True

    def distance(self, pos: Point) -> float:
        return self.layout.cell(self.serving).distance_to(pos)


def default_trajectory(speed: float, radius: float = 200.0) -> Trajectory:
    """Closed loop that alternates between points near the ring BSs and the
    outer corners between them, so every lap crosses several cell edges"""
    inner = 1.25 * radius
    outer = 4.5 * radius
    waypoints: List[Point] = []
    for k in range(6):
        corner = math.radians(60.0 * k)
        near_bs = math.radians(30.0 + 60.0 * k)
        waypoints.append((outer * math.cos(corner), outer * math.sin(corner)))
        waypoints.append((inner * math.cos(near_bs), inner * math.sin(near_bs)))
    return Trajectory(waypoints=tuple(waypoints), speed=speed, loop=True)
