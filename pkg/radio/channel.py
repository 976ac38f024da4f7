"""Path loss, SINR and block-error probability for the downlink.

The free-space model is standard Friis including the wavelength term; the
published form of that equation drops lambda and is not dimensionally
consistent. The vehicular model defaults to ``+21 log10(f)`` (ITU form); the
published ``-21 log10(f)`` is kept behind ``sign_21logf = -1`` and makes loss
fall with frequency, so it is only useful for reproducing the printed numbers.
"""

from typing import Annotated, Literal, Optional, Union
import math

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from core.errors import ChannelModelError
from core.registry import Registry
from core.simcore import RngStream
from radio.phy import McsEntry


SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0


def noise_floor_dbm(bandwidth_hz: float = 5e6, noise_figure_db: float = 7.0) -> float:
    """Thermal noise power over the channel plus receiver noise figure"""
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


class TxBudget(BaseModel):
    """Transmit power and antenna gains of the BS -> SS link"""
    model_config = ConfigDict(frozen=True)

    tx_power: float = Field(default=43.0, description="BS transmit power in dBm")
    g_tx: float = Field(default=15.0, description="BS antenna gain in dBi")
    g_rx: float = Field(default=-1.0, description="SS antenna gain in dBi")

    @property
    def eirp_plus_rx_gain(self) -> float:
        return self.tx_power + self.g_tx + self.g_rx


class FreeSpaceParams(TxBudget):
    system_loss: float = Field(default=1.0, ge=1.0, description="System loss factor L")
    frequency: float = Field(default=2500.0, gt=0, description="Carrier frequency in MHz")


class ErcegParams(BaseModel):
    """Suburban fixed model; defaults describe hilly terrain with moderate-to-heavy tree density"""
    model_config = ConfigDict(frozen=True)

    frequency: float = Field(default=2500.0, gt=0, description="Carrier frequency in MHz")
    intercept: Optional[float] = Field(default=None, description="H in dB; free-space loss at d0 when unset")
    d0: float = Field(default=100.0, gt=0, description="Reference distance in meters")
    gamma: float = Field(default=4.0, gt=0)
    shadow_sigma: float = Field(default=8.0, ge=0, description="Std-dev of the shadowing term in dB")
    x_f: float = Field(default=0.0, description="Frequency correction in dB")
    x_h: float = Field(default=0.0, description="SS antenna height correction in dB")

    _h: float = PrivateAttr(default=0.0)

    def model_post_init(self, __context) -> None:
        if self.intercept is not None:
            self._h = self.intercept
        else:
            self._h = free_space_path_loss(self.d0, FreeSpaceParams(frequency=self.frequency))

    @property
    def h(self) -> float:
        return self._h


class PedestrianParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    frequency: float = Field(default=2500.0, gt=0, description="Carrier frequency in MHz")


class VehicularParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    dhb: float = Field(default=15.0, gt=0, lt=250, description="BS antenna height above rooftops in meters")
    f: float = Field(default=2500.0, gt=0, description="Carrier frequency in MHz")
    sign_21logf: Literal[1, -1] = 1


class LinkBudget(BaseModel):
    model_config = ConfigDict(frozen=True)

    noise_floor: float = Field(default_factory=noise_floor_dbm, lt=0, description="Noise power in dBm")
    bler_slope: float = Field(default=2.0, gt=0, description="Logistic steepness k per dB")


def free_space_path_loss(distance: float, p: FreeSpaceParams) -> float:
    """Friis loss in dB at ``distance`` meters"""
    if distance <= 0:
        raise ChannelModelError(f"free-space path loss is singular at distance {distance} m")
    wavelength = SPEED_OF_LIGHT / (p.frequency * 1e6)
    return 20.0 * math.log10(4.0 * math.pi * distance / wavelength) + 10.0 * math.log10(p.system_loss)


def erceg_path_loss(distance: float, p: ErcegParams, shadow: Optional[RngStream] = None) -> float:
    """Erceg suburban loss in dB; distances below d0 are clamped to d0"""
    d = max(distance, p.d0)
    loss = p.h + 10.0 * p.gamma * math.log10(d / p.d0) + p.x_f + p.x_h
    if shadow is not None and p.shadow_sigma > 0:
        loss += shadow.normal(0.0, p.shadow_sigma)
    return loss


def pedestrian_path_loss(r_km: float, f_mhz: float) -> float:
    """Outdoor-to-indoor and pedestrian loss in dB"""
    if r_km <= 0 or f_mhz <= 0:
        raise ChannelModelError(f"pedestrian model needs R > 0 and f > 0 (got R={r_km}, f={f_mhz})")
    return 40.0 * math.log10(r_km) + 30.0 * math.log10(f_mhz) + 49.0


def vehicular_path_loss(r_km: float, p: VehicularParams) -> float:
    """Vehicular environment loss in dB"""
    if not 0 < p.dhb < 250:
        raise ChannelModelError(f"antenna height {p.dhb} m outside (0, 250)")
    if r_km <= 0:
        raise ChannelModelError(f"vehicular model needs R > 0 (got {r_km})")
    return (
        40.0 * (1.0 - 4e-3 * p.dhb) * math.log10(r_km)
        - 18.0 * math.log10(p.dhb)
        + p.sign_21logf * 21.0 * math.log10(p.f)
        + 80.0
    )


def sinr(tx: TxBudget, path_loss: float, lb: LinkBudget) -> float:
    """Downlink SINR in dB; a single serving BS, so noise is the only impairment"""
    return tx.tx_power + tx.g_tx + tx.g_rx - path_loss - lb.noise_floor


def bler(sinr_db: float, mcs: McsEntry, lb: LinkBudget) -> float:
    """Block error probability, logistic around the MCS's minimum SINR"""
    exponent = lb.bler_slope * (sinr_db - mcs.min_sinr)
    if exponent > 700:
        return 0.0
    if exponent < -700:
        return 1.0
    return 1.0 / (1.0 + math.exp(exponent))


class _PathLossBase(BaseModel):
    model_config = ConfigDict(frozen=True)

    min_distance_m: float = Field(default=1.0, gt=0, description="Distances are clamped up to this value")

    def _clamped(self, distance_m: float) -> float:
        return max(distance_m, self.min_distance_m)


class FreeSpaceModel(_PathLossBase):
    kind: Literal["free_space"] = "free_space"
    params: FreeSpaceParams = Field(default_factory=FreeSpaceParams)

    def path_loss(self, distance_m: float, shadow: Optional[RngStream] = None) -> float:
        return free_space_path_loss(self._clamped(distance_m), self.params)


class ErcegModel(_PathLossBase):
    kind: Literal["erceg"] = "erceg"
    params: ErcegParams = Field(default_factory=ErcegParams)

    def path_loss(self, distance_m: float, shadow: Optional[RngStream] = None) -> float:
        return erceg_path_loss(self._clamped(distance_m), self.params, shadow)


class PedestrianModel(_PathLossBase):
    kind: Literal["pedestrian"] = "pedestrian"
    params: PedestrianParams = Field(default_factory=PedestrianParams)

    def path_loss(self, distance_m: float, shadow: Optional[RngStream] = None) -> float:
        return pedestrian_path_loss(self._clamped(distance_m) / 1000.0, self.params.frequency)


class VehicularModel(_PathLossBase):
    kind: Literal["vehicular"] = "vehicular"
    params: VehicularParams = Field(default_factory=VehicularParams)

    def path_loss(self, distance_m: float, shadow: Optional[RngStream] = None) -> float:
        return vehicular_path_loss(self._clamped(distance_m) / 1000.0, self.params)


PathLossModel = Annotated[
    Union[FreeSpaceModel, ErcegModel, PedestrianModel, VehicularModel],
    Field(discriminator="kind"),
]


def _build_pathloss_registry() -> Registry[type]:
    registry: Registry[type] = Registry("path-loss model")
    registry.register("free_space", FreeSpaceModel, aliases=["freespace", "friis"])
    registry.register("erceg", ErcegModel, aliases=["suburban", "suburban_fixed"])
    registry.register("pedestrian", PedestrianModel, aliases=["outdoor_to_indoor", "indoor"])
    registry.register("vehicular", VehicularModel, aliases=["vehicle"])
    return registry


PATHLOSS_REGISTRY = _build_pathloss_registry()
