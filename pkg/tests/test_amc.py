import numpy as np
import pytest
from pydantic import ValidationError

from core.simcore import RngStream
from radio.amc import (
    AMC_1, AMC_2, AdaptationMode, AmcProfile, AmcThreshold, LinkAdaptationState, MCS_MODES,
    select_initial, step,
)
from radio.phy import FLOOR_MCS, MCS_REGISTRY, mcs_table


def _state_at(key, profile=AMC_1):
    return LinkAdaptationState(
        mode=AdaptationMode.ADAPTIVE, current=MCS_REGISTRY.require(key), profile=profile,
    )


def test_initial_selection_examples():
    assert select_initial(18.5, AMC_1).key == "64qam23"
    assert select_initial(18.5, AMC_2).key == "16qam34"
    assert select_initial(-30.0, AMC_1) is FLOOR_MCS
    assert select_initial(40.0, AMC_2).key == "64qam34"


def test_upgrade_when_entry_threshold_met():
    state = _state_at("qpsk34")
    assert step(state, 9.0, now=5000).key == "16qam12"
    assert state.changes == 1
    assert state.last_change == 5000


def test_mandatory_exit_downgrades():
    state = _state_at("16qam12")
    assert step(state, 7.9).key == "qpsk34"
    assert state.changes == 1


@pytest.mark.parametrize("start", ["qpsk34", "16qam12"])
def test_hysteresis_band_holds(start):
    state = _state_at(start)
    assert step(state, 8.5).key == start
    assert state.changes == 0


def test_upgrades_may_skip_levels():
    state = _state_at("qpsk12")
    assert step(state, 20.0).key == "64qam34"


def test_mandatory_exit_falls_to_the_best_admitted_profile():
    state = _state_at("64qam34")
    assert step(state, 10.0).key == "qpsk34"
    assert step(state, 1.0) is FLOOR_MCS


def test_ramp_is_monotone_and_reaches_the_floor():
    down = np.round(np.arange(30.0, -10.0 - 1e-9, -0.1), 1)
    up = np.round(np.arange(-10.0, 30.0 + 1e-9, 0.1), 1)
    state = LinkAdaptationState.adaptive(AMC_1, float(down[0]))
    assert state.current.key == "64qam34"

    descending = [step(state, float(s)).order_index for s in down]
    assert all(b <= a for a, b in zip(descending, descending[1:]))
    assert descending[-1] == FLOOR_MCS.order_index

    ascending = [step(state, float(s)).order_index for s in up]
    assert all(b >= a for a, b in zip(ascending, ascending[1:]))
    assert ascending[-1] == 6


def test_no_changes_while_inside_the_hysteresis_band():
    stream = RngStream(11, "sinr-walk")
    state = _state_at("16qam12")
    for _ in range(100_000):
        step(state, stream.uniform(8.01, 11.89))
    assert state.changes == 0
    assert state.current.key == "16qam12"


@pytest.mark.parametrize("sinr_db", list(np.arange(-25.0, 35.0, 0.5)))
def test_conservative_profile_never_picks_a_higher_order(sinr_db):
    assert select_initial(sinr_db, AMC_2).order_index <= select_initial(sinr_db, AMC_1).order_index


def test_conservative_profile_tracks_lower_under_the_same_sinr_sequence():
    stream = RngStream(5, "sinr")
    sequence = [stream.normal(15.0, 6.0) for _ in range(20_000)]
    aggressive = LinkAdaptationState.adaptive(AMC_1, sequence[0])
    conservative = LinkAdaptationState.adaptive(AMC_2, sequence[0])
    for sinr_db in sequence:
        assert step(conservative, sinr_db).order_index <= step(aggressive, sinr_db).order_index


def test_fixed_mode_never_changes():
    qam = MCS_REGISTRY.require("16qam34")
    state = LinkAdaptationState.fixed(qam)
    for sinr_db in (-40.0, 0.0, 40.0):
        assert step(state, sinr_db) is qam
    assert state.changes == 0
    assert state.profile is None


def test_thresholds_follow_table_order():
    for profile in (AMC_1, AMC_2):
        exits = [profile.exit_of(entry) for entry in mcs_table()]
        entries = [profile.entry_of(entry) for entry in mcs_table()]
        assert exits == sorted(exits)
        assert entries == sorted(entries)
        assert exits[0] == -20.0
    # The conservative profile sits 6 dB higher on every non-floor row
    for entry in mcs_table()[1:]:
        assert AMC_2.exit_of(entry) - AMC_1.exit_of(entry) == pytest.approx(6.0)


def _rows(pairs):
    return tuple(AmcThreshold(mandatory_exit=e, minimum_entry=n) for e, n in pairs)


def test_entry_below_exit_is_rejected():
    rows = [(-20.0, 2.0), (5.0, 4.0), (8.0, 8.9), (11.0, 11.9), (14.0, 14.9), (17.0, 17.9), (19.0, 19.9)]
    with pytest.raises(ValidationError):
        AmcProfile(name="bad", thresholds=_rows(rows))


def test_floor_exit_must_be_minus_twenty():
    rows = [(-10.0, 2.0), (5.0, 5.9), (8.0, 8.9), (11.0, 11.9), (14.0, 14.9), (17.0, 17.9), (19.0, 19.9)]
    with pytest.raises(ValidationError):
        AmcProfile(name="bad", thresholds=_rows(rows))


def test_profile_needs_seven_rows():
    with pytest.raises(ValidationError):
        AmcProfile(name="short", thresholds=_rows([(-20.0, 2.0), (5.0, 5.9)]))


def test_mode_registry():
    assert len(MCS_MODES) == 9
    assert MCS_MODES.names()[-2:] == ["amc1", "amc2"]
    assert MCS_MODES.require("AMC-1").profile is AMC_1
    assert MCS_MODES.require("QPSK 1/2").fixed is FLOOR_MCS
    assert MCS_MODES.require("amc2").adaptive
    assert not MCS_MODES.require("64qam34").adaptive


def test_mode_builds_initial_state():
    state = MCS_MODES.require("amc1").new_state(18.5)
    assert state.mode is AdaptationMode.ADAPTIVE
    assert state.current.key == "64qam23"

    fixed = MCS_MODES.require("qpsk34").new_state(30.0)
    assert fixed.mode is AdaptationMode.FIXED
    assert fixed.current.key == "qpsk34"
