"""Adaptive modulation and coding with entry/exit hysteresis.

Each profile gives, per MCS row, a mandatory exit threshold (at or below it
the burst profile can no longer be used) and a minimum entry threshold (the
SINR needed to start using it when coming from a more robust profile).
Upgrades may skip levels: the controller jumps to the highest MCS whose
entry threshold is met.
"""

from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.registry import Registry
from core.simcore import SimTime
from radio.phy import FLOOR_MCS, MCS_REGISTRY, MCS_TABLE, McsEntry


class AmcThreshold(BaseModel):
    model_config = ConfigDict(frozen=True)

    mandatory_exit: float
    minimum_entry: float


class AmcProfile(BaseModel):
    """Hysteresis thresholds for the seven MCS rows"""
    model_config = ConfigDict(frozen=True)

    name: str
    thresholds: Tuple[AmcThreshold, ...] = Field(min_length=7, max_length=7)

    @model_validator(mode="after")
    def _check_thresholds(self) -> "AmcProfile":
        for index, row in enumerate(self.thresholds):
            if row.minimum_entry <= row.mandatory_exit:
                raise ValueError(f"{self.name}: entry must exceed exit for row {index}")
            if index > 0:
                previous = self.thresholds[index - 1]
                if row.mandatory_exit <= previous.mandatory_exit or row.minimum_entry <= previous.minimum_entry:
                    raise ValueError(f"{self.name}: thresholds must increase with order_index")
        if self.thresholds[0].mandatory_exit != -20.0:
            raise ValueError(f"{self.name}: the floor MCS exit threshold must be -20 dB")
        return self

    def exit_of(self, mcs: McsEntry) -> float:
        return self.thresholds[mcs.order_index].mandatory_exit

    def entry_of(self, mcs: McsEntry) -> float:
        return self.thresholds[mcs.order_index].minimum_entry


def _profile(name: str, rows: List[Tuple[float, float]]) -> AmcProfile:
    return AmcProfile(
        name=name,
        thresholds=tuple(AmcThreshold(mandatory_exit=e, minimum_entry=n) for e, n in rows),
    )


AMC_1 = _profile("AMC-1", [
    (-20.0, 2.0), (5.0, 5.9), (8.0, 8.9), (11.0, 11.9),
    (14.0, 14.9), (17.0, 17.9), (19.0, 19.9),
])

# Every non-floor threshold sits 6 dB above AMC-1
AMC_2 = _profile("AMC-2", [
    (-20.0, 2.0), (11.0, 11.9), (14.0, 14.9), (17.0, 17.9),
    (20.0, 20.9), (23.0, 23.9), (25.0, 25.9),
])


class AdaptationMode(str, Enum):
    FIXED = "fixed"
    ADAPTIVE = "adaptive"


class LinkAdaptationState:
    """Per-link controller state; in fixed mode the profile is None"""

    def __init__(self, mode: AdaptationMode, current: McsEntry, profile: Optional[AmcProfile] = None,
                 last_change: SimTime = 0, changes: int = 0):
        self.mode = mode
        self.current = current
        self.profile = profile
        self.last_change = last_change
        self.changes = changes

    @classmethod
    def fixed(cls, mcs: McsEntry) -> "LinkAdaptationState":
        return cls(mode=AdaptationMode.FIXED, current=mcs)

    @classmethod
    def adaptive(cls, profile: AmcProfile, sinr: float, now: SimTime = 0) -> "LinkAdaptationState":
        return cls(
            mode=AdaptationMode.ADAPTIVE,
            current=select_initial(sinr, profile),
            profile=profile,
            last_change=now,
        )


def select_initial(sinr: float, profile: AmcProfile) -> McsEntry:
    """Highest-order MCS whose minimum entry threshold is met, else the floor MCS"""
    selected = FLOOR_MCS
    for entry in MCS_TABLE:
        if profile.entry_of(entry) <= sinr:
            selected = entry
    return selected


def step(state: LinkAdaptationState, sinr: float, now: SimTime = 0) -> McsEntry:
    """Advance the controller by one frame and return the MCS to use"""
    if state.mode is AdaptationMode.FIXED or state.profile is None:
        return state.current

    profile = state.profile
    current = state.current
    target = current

    if sinr <= profile.exit_of(current):
        # Mandatory exit: fall to the best profile the SINR still admits
        target = select_initial(sinr, profile)
    else:
        best = select_initial(sinr, profile)
        if best.order_index > current.order_index:
            target = best

    if target.order_index != current.order_index:
        state.current = target
        state.last_change = now
        state.changes += 1
    return state.current


class McsMode(BaseModel):
    """A scenario's link adaptation choice: one fixed MCS or an AMC profile"""
    model_config = ConfigDict(frozen=True)

    name: str
    fixed: Optional[McsEntry] = None
    profile: Optional[AmcProfile] = None

    @property
    def adaptive(self) -> bool:
        return self.profile is not None

    def new_state(self, initial_sinr: float, now: SimTime = 0) -> LinkAdaptationState:
        if self.profile is not None:
            return LinkAdaptationState.adaptive(self.profile, initial_sinr, now)
        return LinkAdaptationState.fixed(self.fixed or FLOOR_MCS)


def _build_mode_registry() -> Registry[McsMode]:
    registry: Registry[McsMode] = Registry("MCS mode")
    for key in MCS_REGISTRY.names():
        registry.register(key, McsMode(name=key, fixed=MCS_REGISTRY.require(key)),
                          aliases=[MCS_REGISTRY.require(key).name])
    registry.register("amc1", McsMode(name="amc1", profile=AMC_1), aliases=["AMC-1"])
    registry.register("amc2", McsMode(name="amc2", profile=AMC_2), aliases=["AMC-2"])
    return registry


MCS_MODES = _build_mode_registry()