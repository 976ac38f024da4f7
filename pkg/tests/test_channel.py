import math

import numpy as np
import pytest
from pydantic import TypeAdapter, ValidationError

from core.errors import ChannelModelError
from core.simcore import RngStream
from radio.channel import (
    PATHLOSS_REGISTRY, ErcegModel, ErcegParams, FreeSpaceModel, FreeSpaceParams, LinkBudget,
    PathLossModel, PedestrianModel, TxBudget, VehicularParams, bler, erceg_path_loss,
    free_space_path_loss, noise_floor_dbm, pedestrian_path_loss, sinr, vehicular_path_loss,
)
from radio.phy import MCS_REGISTRY, mcs_table


def friis_oracle(distance_m, f_mhz):
    return 20 * math.log10(4 * math.pi * distance_m * f_mhz * 1e6 / 299_792_458.0)


def test_free_space_reference_values():
    p = FreeSpaceParams()
    assert free_space_path_loss(100, p) == pytest.approx(friis_oracle(100, 2500), abs=1e-9)
    assert free_space_path_loss(100, p) == pytest.approx(80.40, abs=0.01)
    assert free_space_path_loss(200, p) == pytest.approx(86.42, abs=0.01)


@pytest.mark.parametrize("distance", [1.0, 37.5, 250.0, 4000.0])
def test_free_space_doubling_adds_six_db(distance):
    p = FreeSpaceParams(frequency=3500, system_loss=2.0)
    delta = free_space_path_loss(2 * distance, p) - free_space_path_loss(distance, p)
    assert delta == pytest.approx(20 * math.log10(2), abs=1e-6)
    assert delta == pytest.approx(6.0206, abs=1e-4)


def test_free_space_rejects_zero_distance():
    with pytest.raises(ChannelModelError):
        free_space_path_loss(0.0, FreeSpaceParams())


def test_system_loss_below_one_is_rejected():
    with pytest.raises(ValidationError):
        FreeSpaceParams(system_loss=0.5)


def test_erceg_at_reference_distance_is_intercept():
    p = ErcegParams(shadow_sigma=0)
    assert erceg_path_loss(p.d0, p) == pytest.approx(p.h)
    # With no explicit intercept, H is the free-space loss at d0
    assert p.h == pytest.approx(friis_oracle(100, 2500))


def test_erceg_decade_slope():
    p = ErcegParams(intercept=70.0, gamma=4.0, shadow_sigma=0)
    assert erceg_path_loss(10 * p.d0, p) == pytest.approx(110.0)


def test_erceg_clamps_below_reference_distance():
    p = ErcegParams(intercept=70.0)
    assert erceg_path_loss(10.0, p) == erceg_path_loss(p.d0, p)


def test_erceg_shadowing_is_zero_mean():
    p = ErcegParams(intercept=70.0, shadow_sigma=8.0)
    stream = RngStream(3, "shadowing")
    samples = np.array([erceg_path_loss(p.d0, p, stream) for _ in range(100_000)]) - 70.0
    assert abs(samples.mean()) < 0.1
    assert samples.std() == pytest.approx(8.0, abs=0.1)


def test_pedestrian_reference_values():
    assert pedestrian_path_loss(0.2, 2500) == pytest.approx(122.98, abs=0.01)
    assert pedestrian_path_loss(1.0, 1.0) == pytest.approx(49.0)
    assert pedestrian_path_loss(2.0, 2500) - pedestrian_path_loss(0.2, 2500) == pytest.approx(40.0)


def test_pedestrian_rejects_nonpositive_inputs():
    with pytest.raises(ChannelModelError):
        pedestrian_path_loss(0.0, 2500)


def test_vehicular_reference_values():
    p = VehicularParams(dhb=15, f=2500)
    oracle = 40 * (1 - 4e-3 * 15) * math.log10(0.2) - 18 * math.log10(15) + 21 * math.log10(2500) + 80
    assert vehicular_path_loss(0.2, p) == pytest.approx(oracle)
    assert vehicular_path_loss(0.2, p) == pytest.approx(103.91, abs=0.01)


def test_vehicular_distance_term_vanishes_at_one_km():
    p = VehicularParams(dhb=15, f=2500)
    expected = -18 * math.log10(15) + 21 * math.log10(2500) + 80
    assert vehicular_path_loss(1.0, p) == pytest.approx(expected)


def test_vehicular_published_sign_is_nonphysical():
    # The minus sign makes loss fall with frequency and goes negative at 200 m
    p = VehicularParams(dhb=15, f=2500, sign_21logf=-1)
    assert vehicular_path_loss(0.2, p) == pytest.approx(-38.81, abs=0.01)
    higher = VehicularParams(dhb=15, f=3500, sign_21logf=-1)
    assert vehicular_path_loss(0.2, higher) < vehicular_path_loss(0.2, p)


def test_vehicular_antenna_height_range():
    with pytest.raises(ValidationError):
        VehicularParams(dhb=250)
    with pytest.raises(ValidationError):
        VehicularParams(dhb=0)


def test_noise_floor():
    assert noise_floor_dbm() == pytest.approx(-100.01, abs=0.01)
    assert LinkBudget().noise_floor == pytest.approx(noise_floor_dbm())


def test_sinr_reference_value():
    lb = LinkBudget(noise_floor=-100.01)
    assert sinr(TxBudget(), 122.98, lb) == pytest.approx(34.03, abs=1e-9)
    assert sinr(TxBudget(), 132.98, lb) == pytest.approx(24.03, abs=1e-9)


def test_bler_logistic_shape():
    lb = LinkBudget()
    qpsk = MCS_REGISTRY.require("qpsk12")
    assert bler(qpsk.min_sinr, qpsk, lb) == pytest.approx(0.5)
    assert bler(1e6, qpsk, lb) == 0.0
    assert bler(-1e6, qpsk, lb) == 1.0
    assert bler(qpsk.min_sinr + 1, qpsk, lb) == pytest.approx(1 / (1 + math.exp(2.0)))


@pytest.mark.parametrize("sinr_db", [-5.0, 5.0, 12.0, 20.0, 30.0])
def test_higher_order_mcs_has_more_bler(sinr_db):
    lb = LinkBudget()
    values = [bler(sinr_db, entry, lb) for entry in mcs_table()]
    assert values == sorted(values)


def test_models_clamp_small_distances():
    model = FreeSpaceModel()
    assert model.path_loss(0.0) == model.path_loss(1.0)
    assert PedestrianModel().path_loss(0.0) == pytest.approx(pedestrian_path_loss(0.001, 2500))


def test_models_apply_shadowing_only_when_given_a_stream():
    model = ErcegModel(params=ErcegParams(intercept=70.0, shadow_sigma=8.0))
    assert model.path_loss(100.0) == pytest.approx(70.0)
    assert model.path_loss(100.0, shadow=RngStream(1, "s")) != pytest.approx(70.0)


def test_registry_and_tagged_union():
    assert PATHLOSS_REGISTRY.names() == ["free_space", "erceg", "pedestrian", "vehicular"]
    assert PATHLOSS_REGISTRY.require("Friis") is FreeSpaceModel
    assert PATHLOSS_REGISTRY.canonical("outdoor_to_indoor") == "pedestrian"

    adapter = TypeAdapter(PathLossModel)
    model = adapter.validate_python({"kind": "erceg", "params": {"gamma": 3.5}})
    assert isinstance(model, ErcegModel)
    assert model.params.gamma == 3.5
