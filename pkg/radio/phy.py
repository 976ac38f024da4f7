from enum import Enum
from typing import List, Tuple
import math

from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.registry import Registry


class Modulation(str, Enum):
    """Downlink modulations of the 5 MHz mobile WiMAX profile"""
    QPSK = "QPSK"
    QAM16 = "16QAM"
    QAM64 = "64QAM"


class McsEntry(BaseModel):
    """One modulation + code-rate row of the PHY rate table"""
    model_config = ConfigDict(frozen=True)

    modulation: Modulation
    code_rate: str
    bits_per_symbol: float = Field(gt=0)
    min_sinr: float
    dl_rate: float = Field(gt=0, description="Downlink rate in Mbps")
    ul_rate: float = Field(gt=0, description="Uplink rate in Mbps")
    order_index: int = Field(ge=0, le=6)

    @field_validator("code_rate")
    @classmethod
    def _check_code_rate(cls, value: str) -> str:
        if value not in ("1/2", "2/3", "3/4"):
            raise ValueError(f"unsupported code rate {value}")
        return value

    @property
    def name(self) -> str:
        return f"{self.modulation.value} {self.code_rate}"

    @property
    def key(self) -> str:
        return Registry.normalize(self.name)

    @property
    def rate(self) -> float:
        numerator, denominator = self.code_rate.split("/")
        return int(numerator) / int(denominator)

    @property
    def dl_rate_bps(self) -> float:
        return self.dl_rate * 1e6


def _row(modulation: Modulation, code_rate: str, bits: float, min_sinr: float,
         dl: float, ul: float, index: int) -> McsEntry:
    return McsEntry(
        modulation=modulation,
        code_rate=code_rate,
        bits_per_symbol=bits,
        min_sinr=min_sinr,
        dl_rate=dl,
        ul_rate=ul,
        order_index=index,
    )


# Rates and thresholds for a 5 MHz channel, kept exactly as published
# (including 4 bits/symbol on the 64QAM 3/4 row).
MCS_TABLE: Tuple[McsEntry, ...] = (
    _row(Modulation.QPSK, "1/2", 1, 5, 3.17, 2.28, 0),
    _row(Modulation.QPSK, "3/4", 1.5, 8, 4.75, 3.43, 1),
    _row(Modulation.QAM16, "1/2", 2, 10.5, 6.34, 4.57, 2),
    _row(Modulation.QAM16, "3/4", 3, 14, 9.5, 6.85, 3),
    _row(Modulation.QAM64, "1/2", 3, 16, 9.5, 6.85, 4),
    _row(Modulation.QAM64, "2/3", 4, 18, 12.6, 9.14, 5),
    _row(Modulation.QAM64, "3/4", 4, 20, 14.26, 10.28, 6),
)

FLOOR_MCS = MCS_TABLE[0]


def mcs_table() -> List[McsEntry]:
    """Return the seven MCS rows ordered by order_index"""
    return list(MCS_TABLE)


def _build_mcs_registry() -> Registry[McsEntry]:
    registry: Registry[McsEntry] = Registry("MCS")
    for entry in MCS_TABLE:
        registry.register(entry.key, entry, aliases=[entry.name])
    return registry


MCS_REGISTRY = _build_mcs_registry()


class PhyConfig(BaseModel):
    """TDD frame parameters of the OFDM downlink"""
    model_config = ConfigDict(frozen=True)

    frame_duration: float = Field(default=5.0, gt=0, description="Frame duration in ms")
    dl_fraction: float = Field(default=2.0 / 3.0, gt=0, le=1)
    channel_bw: float = Field(default=5.0, gt=0, description="Channel bandwidth in MHz")

    @property
    def frame_duration_us(self) -> int:
        return int(round(self.frame_duration * 1000))

    @property
    def frames_per_second(self) -> float:
        return 1000.0 / self.frame_duration


def frame_capacity_bytes(mcs: McsEntry, cfg: PhyConfig) -> int:
    """Downlink bytes one MAC frame carries at the given MCS"""
    bits = mcs.dl_rate_bps * (cfg.frame_duration / 1000.0) * cfg.dl_fraction
    # Rounding first keeps exact products such as 12.6 Mbps x 5 ms x 2/3 from
    # landing one byte low after float error.
    return math.floor(round(bits / 8.0, 6))


def transmission_time_us(payload_bytes: int, mcs: McsEntry) -> float:
    """Air time of a payload at the MCS's downlink rate"""
    return payload_bytes * 8.0 / mcs.dl_rate_bps * 1e6
