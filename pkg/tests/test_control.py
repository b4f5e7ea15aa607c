import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from sklearn.base import clone

from softgrip.control import (
    DetectionConfig,
    FingerSupervisor,
    ForceController,
    Mode,
    Reference,
    ReferenceKind,
    ThresholdCalibrator,
    TrackingController,
    calibrate_threshold,
    detect_contact,
    reference,
)
from softgrip.exceptions import InvalidInputError, InvalidStateError
from softgrip.lti import DifferenceEqState, TransferFunction, simulate, step
from softgrip.rig import effective_input


def test_ramp_reference():
    r = Reference(slope=2.5)
    assert r(0) == 0.0 and r(40) == pytest.approx(2.5 * 4.0)
    assert reference("ramp", {"slope": 3.0}, 10) == pytest.approx(3.0)


def test_ramp_start_delay():
    r = Reference(slope=2.0, start=10.0)
    assert r(100) == 0.0 and r(110) == pytest.approx(2.0)


def test_triangle_reference():
    r = Reference(kind=ReferenceKind.TRIANGLE, amplitude=60.0, period=60.0)
    assert r(300) == pytest.approx(60.0)
    assert r(600) == pytest.approx(0.0)
    assert r(150) == pytest.approx(30.0)


def test_hold_reference():
    r = Reference(kind="hold", value=12.0)
    assert all(r(k) == 12.0 for k in (0, 5, 10_000))


def test_reference_validation():
    with pytest.raises(InvalidInputError):
        Reference(kind="triangle", period=0.0)
    with pytest.raises(InvalidInputError):
        Reference(start=-1.0)


def test_tracking_zero_error_gives_bias():
    assert TrackingController().step(0.0) == 20.0


def test_tracking_realization_matches_tf(rng):
    c = TrackingController(d_bias=0.0, duty_limits=(-1e9, 1e9))
    e = rng.normal(size=200)
    tf = TransferFunction([0.066, -0.066 * 0.97], [1.0, -2.0, 1.0], 0.1)
    assert np.max(np.abs([c.step(v) for v in e] - simulate(tf, e))) <= 1e-12


def test_force_realization_matches_tf(rng):
    c = ForceController(d_at_contact=0.0, duty_limits=(-1e9, 1e9))
    e = rng.normal(size=200)
    tf = TransferFunction([0.21, -0.21 * 0.44], [1.0, -1.0], 0.1)
    assert np.max(np.abs([c.step(v) for v in e] - simulate(tf, e))) <= 1e-12


def test_controller_clamps_and_recovers():
    c = ForceController(d_at_contact=50.0)
    for _ in range(200):
        d = c.step(100.0)
    assert d == 100.0 and c.saturated
    # no windup: the duty leaves the limit as soon as the error reverses
    assert c.step(-100.0) < 100.0


def test_controller_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        TrackingController().step(math.nan)


def test_controller_gain_validation():
    with pytest.raises(InvalidInputError):
        TrackingController(K_t=0.0)
    with pytest.raises(InvalidInputError):
        ForceController(K_f=-1.0)


@pytest.mark.parametrize(
    "e,duty,expected", [(4.0, 31.0, True), (4.0, 15.0, False), (2.0, 50.0, False), (3.88, 30.0, True)]
)
def test_detect_examples(e, duty, expected):
    assert detect_contact(e, duty, 3.88, 30.0) is expected


def test_detect_with_config():
    assert detect_contact(4.0, 31.0, DetectionConfig())
    assert not detect_contact(4.0, 29.0, DetectionConfig())


@given(st.floats(-50, 50), st.floats(0, 100), st.floats(0.1, 20), st.floats(21, 99))
def test_detect_is_conjunction(e, duty, e_tr, floor):
    assert detect_contact(e, duty, e_tr, floor) == ((e >= e_tr) and (duty >= floor))


def test_detection_config_validation():
    with pytest.raises(InvalidInputError):
        DetectionConfig(e_tr=(0.0, 1.0))
    with pytest.raises(InvalidInputError):
        DetectionConfig(duty_floor=15.0)


def test_threshold_examples():
    assert calibrate_threshold(np.arange(1, 11), 0.8) == 8
    assert calibrate_threshold(np.full(20, 2.5)) == 2.5


def test_threshold_too_few():
    with pytest.raises(InvalidInputError):
        calibrate_threshold(np.arange(9))
    with pytest.raises(InvalidInputError):
        calibrate_threshold([])


@given(st.lists(st.floats(-1e3, 1e3), min_size=10, max_size=300), st.floats(0.01, 1.0))
def test_threshold_percentile_property(xs, p):
    x = np.asarray(xs)
    v = calibrate_threshold(x, p)
    n = x.size
    assert v in x
    assert np.sum(x <= v) / n >= p
    below = x[x < v]
    if below.size:
        # the next smaller sample fails the inequality
        assert np.sum(x <= below.max()) / n < p


def test_threshold_calibrator_estimator():
    cal = ThresholdCalibrator(percentile=0.8).fit(-np.arange(1, 11.0))
    assert cal.threshold_ == 8.0
    assert list(cal.predict([7.9, 8.0, -9.0])) == [False, True, True]
    assert clone(cal).get_params() == {"percentile": 0.8, "absolute": True}


def _closed_loop(sup, n, contact_at=None, stiffness=0.3):
    """Supervisor on the nominal plant; beyond ``contact_at`` the bending is held back."""
    from softgrip.rig import NOMINAL_ARX

    adv = TransferFunction(list(NOMINAL_ARX.num.coeffs) + [0.0], NOMINAL_ARX.den, 0.1)
    st_ = DifferenceEqState.for_system(adv)
    y, outs = 0.0, []
    for k in range(n):
        o = sup.step(y, k)
        outs.append(o)
        y_free = step(adv, effective_input(o.duty), st_)
        y = y_free if contact_at is None or y_free <= contact_at else contact_at + stiffness * (y_free - contact_at)
    return outs


def test_ramp_tracking_error_vanishes():
    sup = FingerSupervisor(ref=Reference(slope=2.0), e_tr=math.inf)
    outs = _closed_loop(sup, 501)
    assert abs(outs[500].error) < 1e-3
    assert all(o.mode is Mode.TRACKING for o in outs)


def test_e_des_values():
    assert FingerSupervisor(e_tr=3.88, mu=4).state.e_des == pytest.approx(15.52)
    assert FingerSupervisor(e_tr=4.71, mu=4).state.e_des == pytest.approx(18.84)


def test_supervisor_switch_latched_and_bumpless():
    sup = FingerSupervisor(ref=Reference(slope=4.0), e_tr=3.88, mu=2.0)
    outs = _closed_loop(sup, 600, contact_at=40.0, stiffness=0.3)
    modes = [o.mode for o in outs]
    k = modes.index(Mode.FORCE)
    assert all(m is Mode.TRACKING for m in modes[:k]) and all(m is Mode.FORCE for m in modes[k:])
    sw = outs[k - 1]
    assert sw.switched and sup.state.d_at_contact == sw.duty
    # first force duty differs from the contact duty by one D_f step on e_f
    first = outs[k]
    assert first.duty - sw.duty == pytest.approx(0.21 * first.error, abs=1e-12)
    assert abs(outs[-1].error) < 1e-2


@pytest.mark.parametrize("e_des", [0.0, 5.0, 10.0, 15.52, 18.84])
def test_force_regulation_within_300_steps(e_des):
    sup = FingerSupervisor(ref=Reference(slope=4.0), e_tr=3.88, mu=e_des / 3.88)
    outs = _closed_loop(sup, 800, contact_at=30.0, stiffness=0.3)
    k = [o.mode for o in outs].index(Mode.FORCE)
    assert abs(outs[k + 300].error) < 1e-2


def test_force_setpoint_requires_contact():
    with pytest.raises(InvalidStateError):
        FingerSupervisor().force_setpoint()


def test_supervisor_validation():
    with pytest.raises(InvalidInputError):
        FingerSupervisor(mu=-1.0)
    with pytest.raises(InvalidInputError):
        FingerSupervisor(e_tr=0.0)
