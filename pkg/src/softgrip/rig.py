"""Desk-scale two-finger rig: ARX fingers, dead zone, spring contact, object.

Frame: X across the gripper (finger 1 on the +X side, finger 2 on the -X
side), Y along the fingers, away from the palm. Lengths in cm, bending in
degrees, forces in N.

Each finger has an unobstructed ("free") bending that follows the ARX
model driven by the dead-zoned duty. Once the free bending passes the
bending at which the finger first touches the object, the soft finger and
pad deform in series. With ``x`` the free advance past touch, the
measured bending advances by ``h(x) = min(x (compliance + wrap_gain x), x)``:
a stiff pad at first, softening as the finger wraps around the object.
The contact force is a linear unilateral spring in the measured bending
past touch, ``F = stiffness * h(x)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .exceptions import InvalidInputError, InvalidStateError
from .lti import DifferenceEqState, TransferFunction, is_stable, step
from .sensing import FingerGeometry, Side

__all__ = [
    "NOMINAL_ARX",
    "Mobility",
    "ObjectModel",
    "ContactLaw",
    "Touch",
    "FingerPlant",
    "RigOutputs",
    "Rig",
    "effective_input",
    "contact_geometry",
    "touch_bending",
    "rig_step",
    "pullout_step",
    "pla_cylinder_load",
]

NOMINAL_ARX = TransferFunction([0.04074, 0.3601], [1.0, -0.7655, 0.03624], sample_time=0.1)
GRAVITY = 9.81
PULL_DIRECTION = np.array([0.0, 1.0])


def pla_cylinder_load(radius=2.0, height=8.4, density=1.24) -> float:
    """Weight (N) of a solid cylinder; cm and g/cm^3 in."""
    mass_kg = math.pi * radius**2 * height * density / 1000.0
    return mass_kg * GRAVITY


class Mobility(str, enum.Enum):
    FIXED = "fixed"
    MOVABLE = "movable"


@dataclass(frozen=True)
class ObjectModel:
    center: tuple[float, float] = (0.0, 15.0)
    radius: float = 2.0
    mobility: Mobility = Mobility.FIXED
    static_friction: float = 0.09
    normal_load: float = field(default_factory=pla_cylinder_load)

    def __post_init__(self):
        object.__setattr__(self, "mobility", Mobility(self.mobility))
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise InvalidInputError("object radius must be positive")
        if self.static_friction < 0 or self.normal_load < 0:
            raise InvalidInputError("friction and normal load must be >= 0")

    @property
    def breakaway_force(self) -> float:
        return self.static_friction * self.normal_load


@dataclass(frozen=True)
class ContactLaw:
    """Finger/object contact parameters.

    stiffness: N per degree of measured bending past the touch bending.
    compliance: share of the free-bending advance past touch that shows up
        in the measured bending right at touch (0 = rigid stop).
    wrap_gain: growth (1/degree) of that share as the finger wraps around
        the object under rising pressure.
    grip_friction: effective friction of the finger pad along the pull axis.
    escape_deflection: opening (degrees of touch bending) a hooked finger
        tolerates before the object slips past it.
    """

    stiffness: float = 0.012435
    compliance: float = 0.08
    wrap_gain: float = 0.012
    grip_friction: float = 0.1102
    escape_deflection: float = 17.18

    def __post_init__(self):
        if not self.stiffness > 0:
            raise InvalidInputError("contact stiffness must be positive")
        if not 0 < self.compliance < 1:
            raise InvalidInputError("compliance must lie in (0, 1)")
        if self.wrap_gain < 0:
            raise InvalidInputError("wrap_gain must be >= 0")
        if self.grip_friction < 0 or self.escape_deflection <= 0:
            raise InvalidInputError("grip_friction must be >= 0 and escape_deflection > 0")

    def advance(self, x: float) -> float:
        """Measured bending past touch for a free-bending advance ``x >= 0`` past touch.

        ``h(x) = c x + g x^2``, capped at ``x`` (the obstruction never makes
        the finger bend further than it would freely).
        """
        return min(x * (self.compliance + self.wrap_gain * x), x)


def effective_input(duty: float, dead_zone: float = 20.0, duty_limits=(0.0, 100.0)) -> float:
    """Valve dead zone: duty (clamped to limits) minus ``dead_zone``, floored at 0."""
    duty = float(duty)
    if math.isnan(duty):
        raise InvalidInputError("duty is NaN")
    lo, hi = duty_limits
    duty = min(max(duty, lo), hi)
    return max(0.0, duty - dead_zone)


@dataclass(frozen=True)
class Touch:
    """First contact between a finger and the object.

    ``normal`` is the unit vector from the contact point toward the object
    centre, i.e. the direction in which the finger pushes the object.
    """

    bending: float
    point: tuple[float, float]
    normal: tuple[float, float]


def _arc_distance(geom: FingerGeometry, bends: np.ndarray, q: np.ndarray):
    """Distance from local point ``q`` to the finger centre line, per bend.

    Returns ``(dist, sigma)`` with ``sigma`` the arc length of the nearest
    point.
    """
    L = geom.finger_length
    k = np.radians(bends) / (2.0 * geom.marker_spacing)
    dist = np.empty_like(k)
    sigma = np.empty_like(k)

    straight = k < 1e-12
    if np.any(straight):
        sv = np.clip(q[1], 0.0, L)
        dist[straight] = math.hypot(q[0], q[1] - sv)
        sigma[straight] = sv

    bent = ~straight
    if np.any(bent):
        kb = k[bent]
        R = 1.0 / kb
        du = q[0] - R
        dv = q[1]
        rho = np.hypot(du, dv)
        psi = np.arctan2(dv, du)
        s_star = np.mod(math.pi - psi, 2.0 * math.pi) * R
        inside = (s_star <= L) & (rho > 0)
        d_in = np.abs(rho - R)
        # endpoints: base (0, 0) and tip
        tip_u = (1.0 - np.cos(kb * L)) * R
        tip_v = np.sin(kb * L) * R
        d_base = math.hypot(q[0], q[1])
        d_tip = np.hypot(q[0] - tip_u, q[1] - tip_v)
        d_end = np.where(d_base <= d_tip, d_base, d_tip)
        s_end = np.where(d_base <= d_tip, 0.0, L)
        dist[bent] = np.where(inside, d_in, d_end)
        sigma[bent] = np.where(inside, s_star, s_end)
    return dist, sigma


_BEND_GRID = np.arange(0.0, 180.0, 0.25)


def contact_geometry(obj_center, obj_radius: float, geom: FingerGeometry) -> Touch | None:
    """Smallest bending at which the finger surface touches the cylinder.

    The finger is a constant-curvature centre line of thickness
    ``geom.thickness``; contact happens when the centre line comes within
    ``obj_radius + thickness / 2`` of the cylinder axis. Returns ``None``
    when no bending in [0, 180) reaches the object.
    """
    q = geom.to_local(obj_center)
    reach = obj_radius + geom.thickness / 2.0

    def gap(b):
        d, _ = _arc_distance(geom, np.atleast_1d(float(b)), q)
        return float(d[0] - reach)

    d, _ = _arc_distance(geom, _BEND_GRID, q)
    hits = np.flatnonzero(d <= reach)
    if hits.size == 0:
        return None
    i = int(hits[0])
    if i == 0:
        bend = 0.0
    else:
        bend = brentq(gap, _BEND_GRID[i - 1], _BEND_GRID[i], xtol=1e-12, rtol=1e-14)
    _, s = _arc_distance(geom, np.array([bend]), q)
    point = geom.to_world(geom.arc_points(bend, s[0]))
    n = np.asarray(obj_center, dtype=float) - point
    norm = float(np.hypot(n[0], n[1]))
    n = n / norm if norm > 0 else np.zeros(2)
    return Touch(bending=float(bend), point=(float(point[0]), float(point[1])), normal=(float(n[0]), float(n[1])))


def touch_bending(obj: ObjectModel, geom: FingerGeometry, side: Side | None = None) -> float | None:
    """Bending (degrees) at which the finger first touches ``obj``, or ``None``."""
    if side is not None and Side(side) is not geom.side:
        geom = replace(geom, side=Side(side), base=(-geom.base[0], geom.base[1]))
    t = contact_geometry(obj.center, obj.radius, geom)
    return None if t is None else t.bending


class FingerPlant:
    """One soft finger: ARX bending dynamics behind the valve dead zone.

    ``advance(duty)`` applies the duty for the current sample and returns the
    free bending at the next sample, so the plant is realized as
    ``z G(z)``; the samples it produces are exactly those of ``G`` shifted
    by one.
    """

    def __init__(
        self,
        geometry: FingerGeometry,
        arx: TransferFunction = NOMINAL_ARX,
        dead_zone: float = 20.0,
        duty_limits: tuple[float, float] = (0.0, 100.0),
    ):
        if not 0 <= dead_zone < 100:
            raise InvalidInputError("dead_zone must lie in [0, 100)")
        if arx.num.degree >= arx.den.degree:
            raise InvalidInputError("finger model must be strictly proper")
        if not is_stable(arx.poles()):
            raise InvalidInputError("finger ARX model must be stable")
        self.geometry = geometry
        self.arx = arx
        self.dead_zone = float(dead_zone)
        self.duty_limits = tuple(float(v) for v in duty_limits)
        self._advanced = TransferFunction(list(arx.num.coeffs) + [0.0], arx.den, arx.sample_time)
        self.state = DifferenceEqState.for_system(self._advanced)
        self.y_free = 0.0

    @property
    def side(self) -> Side:
        return self.geometry.side

    def effective_input(self, duty: float) -> float:
        return effective_input(duty, self.dead_zone, self.duty_limits)

    def advance(self, duty: float) -> float:
        self.y_free = step(self._advanced, self.effective_input(duty), self.state)
        return self.y_free

    def reset(self) -> None:
        self.state.reset()
        self.y_free = 0.0


@dataclass(frozen=True)
class RigOutputs:
    y: tuple[float, float]
    y_free: tuple[float, float]
    forces: tuple[float, float]
    F_X: float
    F_Y: float
    object_pos: tuple[float, float]
    contact: tuple[bool, bool]
    pull_force: float = 0.0
    pull_peak: float = 0.0

    @property
    def y1(self) -> float:
        return self.y[0]

    @property
    def y2(self) -> float:
        return self.y[1]

    @property
    def force_magnitude(self) -> float:
        return math.hypot(self.F_X, self.F_Y)


class Rig:
    """Two fingers and an optional cylindrical object.

    Finger 1 is the RIGHT (+X) finger, finger 2 the LEFT one. ``step``
    advances both fingers by one sample; a MOVABLE object then slides
    quasi-statically whenever the net in-plane finger force exceeds its
    breakaway friction.
    """

    max_slide_per_step = 1.0  # cm

    def __init__(
        self,
        fingers: tuple[FingerPlant, FingerPlant],
        obj: ObjectModel | None = None,
        contact: ContactLaw = ContactLaw(),
    ):
        if len(fingers) != 2:
            raise InvalidInputError("the rig has exactly two fingers")
        self.fingers = tuple(fingers)
        self.contact = contact
        self.obj = obj
        self.object_pos = None if obj is None else tuple(obj.center)
        self.enabled = [obj is not None, obj is not None]
        self._touch_cache: dict = {}
        self._pull_ref: list[float | None] | None = None
        self.last_duties = (0.0, 0.0)
        self.outputs = RigOutputs(
            y=(0.0, 0.0),
            y_free=(0.0, 0.0),
            forces=(0.0, 0.0),
            F_X=0.0,
            F_Y=0.0,
            object_pos=self.object_pos or (math.nan, math.nan),
            contact=(False, False),
        )

    @property
    def sample_time(self) -> float:
        return self.fingers[0].arx.sample_time

    def touches(self, pos=None) -> tuple[Touch | None, Touch | None]:
        if self.obj is None:
            return (None, None)
        pos = tuple(self.object_pos if pos is None else (float(pos[0]), float(pos[1])))
        hit = self._touch_cache.get(pos)
        if hit is None:
            hit = tuple(contact_geometry(pos, self.obj.radius, f.geometry) for f in self.fingers)
            if len(self._touch_cache) > 4096:
                self._touch_cache.clear()
            self._touch_cache[pos] = hit
        return hit

    def _contact_forces(self, y_free, touches):
        """Measured bending and normal force per finger for given free bendings."""
        c = self.contact
        ys, fs = [], []
        for i in range(2):
            t = touches[i]
            if self.enabled[i] and t is not None and y_free[i] > t.bending:
                y = t.bending + c.advance(y_free[i] - t.bending)
                f = c.stiffness * (y - t.bending)
            else:
                y, f = y_free[i], 0.0
            ys.append(y)
            fs.append(f)
        return ys, fs

    def _net_force(self, y_free, pos) -> np.ndarray:
        touches = self.touches(pos)
        _, fs = self._contact_forces(y_free, touches)
        net = np.zeros(2)
        for f, t in zip(fs, touches):
            if f > 0:
                net += f * np.asarray(t.normal)
        return net

    def _slide(self, y_free) -> None:
        limit = self.obj.breakaway_force
        pos0 = np.asarray(self.object_pos)
        net0 = self._net_force(y_free, pos0)
        mag0 = float(np.hypot(*net0))
        if mag0 <= limit:
            return
        direction = net0 / mag0

        def excess(d):
            return float(np.hypot(*self._net_force(y_free, pos0 + d * direction))) - limit

        dmax = self.max_slide_per_step
        if excess(dmax) > 0:
            d = dmax
        else:
            d = brentq(excess, 0.0, dmax, xtol=1e-10)
            # a fingertip slipping past the object is a jump in the net force;
            # settle on the far side of it
            nudge = 1e-10
            while excess(d) > 0 and d < dmax:
                d = min(d + nudge, dmax)
                nudge *= 2.0
        new = pos0 + d * direction
        self.object_pos = (float(new[0]), float(new[1]))

    def step(self, duty1: float, duty2: float, object_velocity: float | None = None) -> RigOutputs:
        duties = (float(duty1), float(duty2))
        if any(math.isnan(d) for d in duties):
            raise InvalidInputError("duty is NaN")
        self.last_duties = duties
        y_free = [f.advance(d) for f, d in zip(self.fingers, duties)]
        peak = 0.0
        if self.obj is not None:
            if object_velocity is not None:
                peak = self._pull(y_free, object_velocity)
            elif self.obj.mobility is Mobility.MOVABLE:
                self._slide(y_free)
        touches = self.touches()
        ys, fs = self._contact_forces(y_free, touches)
        vec = [np.zeros(2), np.zeros(2)]
        for i, (f, t) in enumerate(zip(fs, touches)):
            if f > 0:
                vec[i] = f * np.asarray(t.normal)
        pull = self._pull_resistance(fs, touches)
        # F_X: finger-1 x-force minus finger-2 x-force (finger 1 pushes toward -X)
        fx = -vec[0][0] - vec[1][0]
        fy = vec[0][1] + vec[1][1]
        self.outputs = RigOutputs(
            y=(ys[0], ys[1]),
            y_free=(y_free[0], y_free[1]),
            forces=(fs[0], fs[1]),
            F_X=float(fx),
            F_Y=float(fy),
            object_pos=self.object_pos or (math.nan, math.nan),
            contact=(fs[0] > 0, fs[1] > 0),
            pull_force=pull,
            pull_peak=max(pull, peak),
        )
        return self.outputs

    def _pull_resistance(self, fs, touches) -> float:
        """Force needed to drag the object along the pull axis against the fingers."""
        total = 0.0
        for f, t in zip(fs, touches):
            if f > 0:
                hook = max(0.0, -float(np.asarray(t.normal) @ PULL_DIRECTION))
                total += f * (hook + self.contact.grip_friction)
        return float(total)

    def _opening(self, i: int, pos) -> float:
        """Touch-bending drop of finger ``i`` since the pull started (180 once out of reach)."""
        t = self.touches(pos)[i]
        return 180.0 if t is None else self._pull_ref[i] - t.bending

    def _pull(self, y_free, velocity: float) -> float:
        """Advance the object one sample along the pull axis; returns the in-step peak resistance.

        A finger releases at the instant its opening reaches the escape
        deflection; the resistance just before each release is evaluated
        there, so the recorded peak does not depend on where the sample
        grid happens to fall.
        """
        if self._pull_ref is None:
            self._pull_ref = [None if t is None else t.bending for t in self.touches()]
            for i, ref in enumerate(self._pull_ref):
                if ref is None:
                    self.enabled[i] = False
        pos0 = np.asarray(self.object_pos)
        delta = velocity * self.sample_time * PULL_DIRECTION
        esc = self.contact.escape_deflection
        events = []
        for i in range(2):
            if not self.enabled[i]:
                continue
            if self._opening(i, pos0 + delta) >= esc:
                def gap(s, i=i):
                    return self._opening(i, pos0 + s * delta) - esc
                s = 0.0 if gap(0.0) >= 0 else brentq(gap, 0.0, 1.0, xtol=1e-12)
                events.append((s, i))
        peak = 0.0
        for s, i in sorted(events):
            at = pos0 + s * delta
            touches = self.touches(at)
            _, fs = self._contact_forces(y_free, touches)
            peak = max(peak, self._pull_resistance(fs, touches))
            self.enabled[i] = False
        end = pos0 + delta
        self.object_pos = (float(end[0]), float(end[1]))
        return peak

    @property
    def released(self) -> bool:
        return self._pull_ref is not None and not any(self.enabled)

    def pull_step(self, velocity: float, duty1: float | None = None, duty2: float | None = None) -> RigOutputs:
        """Move the object along +Y (out of the grasp) at ``velocity`` cm/s for one sample.

        Duties default to those last applied. Starting a pull requires both
        fingers to be in contact.
        """
        if not math.isfinite(velocity):
            raise InvalidInputError("pull velocity must be finite")
        if self._pull_ref is None and not all(self.outputs.contact):
            raise InvalidStateError("pull-out requires both fingers in contact")
        if duty1 is None or duty2 is None:
            d1, d2 = self.last_duties
            duty1 = d1 if duty1 is None else duty1
            duty2 = d2 if duty2 is None else duty2
        return self.step(duty1, duty2, object_velocity=velocity)


def rig_step(rig: Rig, duty1: float, duty2: float) -> RigOutputs:
    return rig.step(duty1, duty2)


def pullout_step(rig: Rig, object_velocity: float, duty1=None, duty2=None) -> RigOutputs:
    return rig.pull_step(object_velocity, duty1, duty2)
