import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from softgrip.exceptions import InvalidInputError, InvalidStateError
from softgrip.experiments import default_geometry
from softgrip.lti import simulate
from softgrip.rig import (
    NOMINAL_ARX,
    ContactLaw,
    FingerPlant,
    Mobility,
    ObjectModel,
    Rig,
    contact_geometry,
    effective_input,
    pla_cylinder_load,
    rig_step,
    touch_bending,
)
from softgrip.sensing import Side


def make_rig(obj=None, contact=ContactLaw()):
    g1, g2 = default_geometry()
    return Rig((FingerPlant(g1), FingerPlant(g2)), obj, contact)


@pytest.mark.parametrize("duty,eff", [(20, 0), (0, 0), (60, 40), (100, 80), (150, 80), (-5, 0)])
def test_effective_input(duty, eff):
    assert effective_input(duty) == eff


def test_object_weight_and_breakaway():
    assert pla_cylinder_load() == pytest.approx(1.284, abs=2e-3)
    assert ObjectModel().breakaway_force == pytest.approx(0.1156, abs=2e-4)


def test_object_validation():
    with pytest.raises(InvalidInputError):
        ObjectModel(radius=0.0)
    with pytest.raises(InvalidInputError):
        ObjectModel(static_friction=-0.1)


def test_touch_symmetric_object():
    g1, g2 = default_geometry()
    obj = ObjectModel(center=(0.0, 15.0))
    assert touch_bending(obj, g1) == pytest.approx(touch_bending(obj, g2), abs=1e-6)


def test_touch_offset_object_left_bends_further():
    g1, g2 = default_geometry()
    obj = ObjectModel(center=(1.25, 15.0))
    assert touch_bending(obj, g2) > touch_bending(obj, g1)


def test_touch_side_argument_mirrors():
    g1, g2 = default_geometry()
    obj = ObjectModel(center=(1.25, 15.0))
    assert touch_bending(obj, g1, Side.LEFT) == pytest.approx(touch_bending(obj, g2), abs=1e-9)


def test_touch_unreachable():
    g1, _ = default_geometry()
    assert touch_bending(ObjectModel(center=(0.0, 80.0)), g1) is None


def test_touch_monotone_toward_finger():
    g1, _ = default_geometry()
    xs = np.linspace(-1.5, 1.5, 13)
    ys = [touch_bending(ObjectModel(center=(x, 15.0)), g1) for x in xs]
    assert all(b < a for a, b in zip(ys, ys[1:]))


def test_touch_point_on_surface():
    g1, _ = default_geometry()
    t = contact_geometry((0.0, 15.0), 2.0, g1)
    d = math.hypot(t.point[0] - 0.0, t.point[1] - 15.0)
    assert d == pytest.approx(2.0 + g1.thickness / 2, abs=1e-9)
    assert math.hypot(*t.normal) == pytest.approx(1.0)


def test_contact_law_advance():
    c = ContactLaw()
    assert c.advance(0.0) == 0.0
    xs = np.linspace(0, 200, 401)
    h = np.array([c.advance(x) for x in xs])
    assert np.all(np.diff(h) >= 0) and np.all(h <= xs + 1e-12)


def test_contact_law_validation():
    with pytest.raises(InvalidInputError):
        ContactLaw(stiffness=0.0)
    with pytest.raises(InvalidInputError):
        ContactLaw(compliance=1.5)


def test_finger_rejects_unstable_model():
    from softgrip.lti import TransferFunction

    with pytest.raises(InvalidInputError):
        FingerPlant(default_geometry()[0], TransferFunction([1.0], [1.0, -1.5], 0.1))


def test_below_dead_zone_stays_still():
    rig = make_rig()
    for _ in range(50):
        out = rig_step(rig, 15.0, 20.0)
    assert out.y == (0.0, 0.0) and out.F_X == 0.0 and out.F_Y == 0.0


def test_nan_duty_rejected():
    with pytest.raises(InvalidInputError):
        make_rig().step(math.nan, 30.0)


def test_free_motion_oracle_1000_steps(rng):
    rig = make_rig()
    d1, d2 = rng.uniform(0, 100, 1000), rng.uniform(0, 100, 1000)
    ys = np.array([rig.step(a, b).y for a, b in zip(d1, d2)])
    for i, d in enumerate((d1, d2)):
        # the rig returns the bending after the duty is applied: y[k] = G-output[k + 1]
        ref_next = simulate(NOMINAL_ARX, np.append([effective_input(v) for v in d], 0.0))[1:]
        assert np.max(np.abs(ys[:, i] - ref_next)) <= 1e-12


def test_force_zero_at_touch_boundary():
    rig = make_rig(ObjectModel(center=(0.0, 15.0)))
    t = rig.touches()
    ys, fs = rig._contact_forces([t[0].bending, t[1].bending], t)
    assert fs == [0.0, 0.0]


def test_mirror_symmetry_centered_object(rng):
    rig = make_rig(ObjectModel(center=(0.0, 15.0)))
    for d in np.concatenate([np.linspace(20, 90, 150), rng.uniform(40, 100, 100)]):
        out = rig.step(d, d)
        assert out.y[0] == pytest.approx(out.y[1], abs=1e-9)
        assert abs(out.F_X) <= 1e-12


def test_force_composition_exact(rng):
    rig = make_rig(ObjectModel(center=(0.7, 14.0)))
    for d1, d2 in zip(np.linspace(30, 100, 120), np.linspace(25, 100, 120)):
        out = rig.step(d1, d2)
        t = rig.touches()
        v = [f * np.asarray(tt.normal) if f > 0 else np.zeros(2) for f, tt in zip(out.forces, t)]
        assert out.F_X == -v[0][0] - v[1][0]
        assert out.F_Y == v[0][1] + v[1][1]


@settings(max_examples=40)
@given(st.floats(-1.5, 1.5), st.floats(12.0, 16.0), st.lists(st.floats(0, 100), min_size=2, max_size=2))
def test_unilateral_forces(xc, yc, duties):
    rig = make_rig(ObjectModel(center=(xc, yc)))
    for _ in range(60):
        out = rig.step(*duties)
        assert all(f >= 0 for f in out.forces)
        for f, t in zip(out.forces, rig.touches()):
            if f > 0:
                # each finger pushes the object away from its contact point
                away = np.array([xc, yc]) - np.asarray(t.point)
                assert f * (np.asarray(t.normal) @ away) > 0


def test_movable_object_stiction(rng):
    obj = ObjectModel(center=(1.25, 15.0), mobility=Mobility.MOVABLE)
    rig = make_rig(obj)
    limit = obj.breakaway_force
    duties = np.concatenate([np.linspace(20, 100, 200), rng.uniform(20, 100, 200)])
    moved = 0
    for d1, d2 in zip(duties, duties[::-1]):
        before = rig.object_pos
        out = rig.step(d1, d2)
        y_free = out.y_free
        net_before = float(np.hypot(*rig._net_force(y_free, before)))
        if net_before <= limit:
            assert rig.object_pos == before
        else:
            moved += 1
            assert rig.object_pos != before
        # after any slide the object rests where the net force is at most breakaway (or hit the per-step cap)
        net_after = float(np.hypot(*rig._net_force(y_free, rig.object_pos)))
        step_len = math.dist(before, rig.object_pos)
        assert net_after <= limit + 1e-6 or step_len == pytest.approx(rig.max_slide_per_step)
    assert moved > 0


def _grasped_rig():
    rig = make_rig(ObjectModel(center=(0.0, 6.25)))
    for _ in range(100):
        rig.step(80.0, 80.0)
    assert all(rig.outputs.contact)
    return rig


def test_pull_requires_both_contacts():
    rig = make_rig(ObjectModel(center=(0.0, 6.25)))
    with pytest.raises(InvalidStateError):
        rig.pull_step(5.0)


def test_zero_velocity_pull_is_constant():
    rig = _grasped_rig()
    first = rig.pull_step(0.0)
    for _ in range(20):
        out = rig.pull_step(0.0)
    assert out.object_pos == first.object_pos and out.contact == first.contact
    assert out.y == pytest.approx(first.y, abs=1e-9)
    assert out.forces == pytest.approx(first.forces, abs=1e-12)


def test_pull_releases_and_peak_dominates():
    rig = _grasped_rig()
    peak_seen = 0.0
    for _ in range(30):
        out = rig.pull_step(5.0)
        assert out.pull_peak >= out.pull_force
        peak_seen = max(peak_seen, out.pull_peak)
        if rig.released:
            break
    assert rig.released
    assert out.forces == (0.0, 0.0)
    assert peak_seen > 0


def test_pull_rejects_nonfinite_velocity():
    with pytest.raises(InvalidInputError):
        _grasped_rig().pull_step(math.inf)
