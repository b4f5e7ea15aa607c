"""Per-finger controllers, contact detection and the TRACKING -> FORCE supervisor.

Tracking:  D_t(z) = K_t (z - z_t) / (z - 1)^2, output offset by d_bias.
Force:     D_f(z) = K_f (z - z_f) / (z - 1), output offset by the duty
           memorized at contact.

Both controllers clamp their duty to the valve limits. While the output is
clamped the integrator (output) history is frozen and only the error
history advances, which stops windup without stalling the controller.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidInputError, InvalidStateError
from .lti import DifferenceEqState, TransferFunction

__all__ = [
    "ReferenceKind",
    "Reference",
    "reference",
    "TrackingController",
    "ForceController",
    "controller_step",
    "DetectionConfig",
    "detect_contact",
    "calibrate_threshold",
    "ThresholdCalibrator",
    "Mode",
    "FingerMode",
    "SupervisorOutput",
    "FingerSupervisor",
    "supervisor_step",
]

DUTY_LIMITS = (0.0, 100.0)


class ReferenceKind(str, enum.Enum):
    RAMP = "ramp"
    TRIANGLE = "triangle"
    HOLD = "hold"


@dataclass(frozen=True)
class Reference:
    """Bending reference in degrees as a pure function of the step index.

    RAMP rises at ``slope`` deg/s from ``start`` seconds on. TRIANGLE runs
    from 0 up to ``amplitude`` and back over each ``period`` seconds,
    starting at ``start``. HOLD is the constant ``value``. All kinds are 0
    before ``start`` except HOLD.
    """

    kind: ReferenceKind = ReferenceKind.RAMP
    slope: float = 4.0
    start: float = 0.0
    amplitude: float = 60.0
    period: float = 60.0
    value: float = 0.0
    sample_time: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", ReferenceKind(self.kind))
        if not self.sample_time > 0:
            raise InvalidInputError("sample_time must be positive")
        if self.kind is ReferenceKind.TRIANGLE and not self.period > 0:
            raise InvalidInputError("triangle period must be positive")
        if self.start < 0:
            raise InvalidInputError("start must be >= 0")

    def __call__(self, k: int) -> float:
        if self.kind is ReferenceKind.HOLD:
            return float(self.value)
        t = k * self.sample_time - self.start
        if t <= 0:
            return 0.0
        if self.kind is ReferenceKind.RAMP:
            return self.slope * t
        phase = (t % self.period) / self.period
        return self.amplitude * (1.0 - abs(2.0 * phase - 1.0))


def reference(kind, params: dict | None = None, k: int = 0) -> float:
    return Reference(kind=kind, **(params or {}))(k)


class _ClampedController:
    def __init__(self, tf: TransferFunction, offset: float, duty_limits=DUTY_LIMITS):
        lo, hi = duty_limits
        if not lo < hi:
            raise InvalidInputError("duty limits must satisfy lo < hi")
        self.tf = tf
        self.offset = float(offset)
        self.duty_limits = (float(lo), float(hi))
        self.state = DifferenceEqState.for_system(tf)
        self.saturated = False

    def reset(self) -> None:
        self.state.reset()
        self.saturated = False

    def step(self, error: float) -> float:
        error = float(error)
        if not math.isfinite(error):
            raise InvalidInputError("controller error must be finite")
        u = self.state.output(self.tf, error)
        duty = u + self.offset
        lo, hi = self.duty_limits
        clamped = min(max(duty, lo), hi)
        self.saturated = clamped != duty
        if self.saturated:
            # conditional integration: keep the output history, advance the errors
            self.state.past_inputs.appendleft(error)
        else:
            self.state.push(error, u)
        return clamped


class TrackingController(_ClampedController):
    def __init__(self, K_t: float = 0.066, z_t: float = 0.97, d_bias: float = 20.0, duty_limits=DUTY_LIMITS, sample_time: float = 0.1):
        if not K_t > 0:
            raise InvalidInputError("K_t must be positive")
        self.K_t, self.z_t, self.d_bias = float(K_t), float(z_t), float(d_bias)
        tf = TransferFunction([K_t, -K_t * z_t], [1.0, -2.0, 1.0], sample_time)
        super().__init__(tf, d_bias, duty_limits)


class ForceController(_ClampedController):
    def __init__(self, K_f: float = 0.21, z_f: float = 0.44, d_at_contact: float = 0.0, duty_limits=DUTY_LIMITS, sample_time: float = 0.1):
        if not K_f > 0:
            raise InvalidInputError("K_f must be positive")
        self.K_f, self.z_f = float(K_f), float(z_f)
        tf = TransferFunction([K_f, -K_f * z_f], [1.0, -1.0], sample_time)
        super().__init__(tf, d_at_contact, duty_limits)

    @property
    def d_at_contact(self) -> float:
        return self.offset


def controller_step(ctrl: _ClampedController, error: float) -> float:
    return ctrl.step(error)


@dataclass(frozen=True)
class DetectionConfig:
    e_tr: tuple[float, float] = (3.88, 4.71)
    duty_floor: float = 30.0
    dead_zone: float = 20.0

    def __post_init__(self):
        object.__setattr__(self, "e_tr", tuple(float(v) for v in self.e_tr))
        if any(not v > 0 for v in self.e_tr):
            raise InvalidInputError("e_tr must be positive")
        if not self.duty_floor > self.dead_zone:
            raise InvalidInputError("duty_floor must exceed the dead zone")


def detect_contact(e_t: float, duty: float, e_tr: float | DetectionConfig, duty_floor: float | None = None) -> bool:
    """True iff the tracking error reaches the threshold while the valve is well open."""
    if isinstance(e_tr, DetectionConfig):
        cfg = e_tr
        e_tr = cfg.e_tr[0]
        duty_floor = cfg.duty_floor if duty_floor is None else duty_floor
    if duty_floor is None:
        duty_floor = 30.0
    return bool(e_t >= e_tr) and bool(duty >= duty_floor)


def calibrate_threshold(errors, percentile: float = 0.8) -> float:
    """Inverse empirical CDF: the smallest sample ``v`` with ``#(x <= v) / n >= p``."""
    x = np.sort(np.asarray(errors, dtype=float).ravel())
    n = x.size
    if n < 10:
        raise InvalidInputError(f"need at least 10 samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("samples must be finite")
    if not 0.0 < percentile <= 1.0:
        raise InvalidInputError("percentile must lie in (0, 1]")
    m = min(max(math.ceil(percentile * n), 1), n)
    while m > 1 and (m - 1) / n >= percentile:
        m -= 1
    while m < n and m / n < percentile:
        m += 1
    # ties: the count at x[m-1] includes every equal sample, still >= p
    return float(x[m - 1])


class ThresholdCalibrator(BaseEstimator):
    """Fits a contact threshold to a corpus of free-motion tracking errors.

    ``fit`` stores ``threshold_`` (the ``percentile`` quantile of ``|e|`` when
    ``absolute`` is set); ``predict`` flags errors at or above it.
    """

    def __init__(self, percentile: float = 0.8, absolute: bool = True):
        self.percentile = percentile
        self.absolute = absolute

    def _prep(self, X):
        X = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_min_samples=1)
        X = X[:, 0]
        return np.abs(X) if self.absolute else X

    def fit(self, X, y=None):
        self.threshold_ = calibrate_threshold(self._prep(X), self.percentile)
        self.n_samples_seen_ = int(np.asarray(X).size)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "threshold_")
        return self._prep(X) >= self.threshold_


class Mode(str, enum.Enum):
    TRACKING = "TRACKING"
    FORCE = "FORCE"


@dataclass
class FingerMode:
    mode: Mode = Mode.TRACKING
    y_at_contact: float | None = None
    d_at_contact: float | None = None
    e_des: float = 0.0
    mu: float = 0.0


@dataclass(frozen=True)
class SupervisorOutput:
    duty: float
    mode: Mode
    error: float
    reference: float
    switched: bool = False


@dataclass
class FingerSupervisor:
    """Mode machine for one finger; the switch to FORCE is latched.

    The step that detects contact still applies the tracking duty (it is
    the memorized ``d_at_contact``) and reports TRACKING; force control
    takes over from the next step.
    """

    ref: Reference = field(default_factory=Reference)
    e_tr: float = 3.88
    mu: float = 0.0
    duty_floor: float = 30.0
    K_t: float = 0.066
    z_t: float = 0.97
    d_bias: float = 20.0
    K_f: float = 0.21
    z_f: float = 0.44
    duty_limits: tuple[float, float] = DUTY_LIMITS

    def __post_init__(self):
        if self.mu < 0:
            raise InvalidInputError("mu must be >= 0")
        if not self.e_tr > 0:
            raise InvalidInputError("e_tr must be positive")
        self.tracking = TrackingController(self.K_t, self.z_t, self.d_bias, self.duty_limits, self.ref.sample_time)
        self.force: ForceController | None = None
        self.state = FingerMode(e_des=self.mu * self.e_tr, mu=self.mu)

    @property
    def mode(self) -> Mode:
        return self.state.mode

    def set_mu(self, mu: float) -> None:
        """Change the force factor; in FORCE mode this steps the set point."""
        if mu < 0:
            raise InvalidInputError("mu must be >= 0")
        self.mu = float(mu)
        self.state.mu = self.mu
        self.state.e_des = self.mu * self.e_tr

    def force_setpoint(self) -> float:
        if self.state.mode is not Mode.FORCE:
            raise InvalidStateError("no force set point before contact")
        return self.state.y_at_contact + self.state.e_des

    def step(self, y: float, k: int) -> SupervisorOutput:
        st = self.state
        if st.mode is Mode.FORCE:
            r = self.force_setpoint()
            e = r - y
            return SupervisorOutput(self.force.step(e), Mode.FORCE, e, r)
        r = self.ref(k)
        e = r - y
        duty = self.tracking.step(e)
        if detect_contact(e, duty, self.e_tr, self.duty_floor):
            st.mode = Mode.FORCE
            st.y_at_contact = float(y)
            st.d_at_contact = float(duty)
            self.force = ForceController(self.K_f, self.z_f, duty, self.duty_limits, self.ref.sample_time)
            return SupervisorOutput(duty, Mode.TRACKING, e, r, switched=True)
        return SupervisorOutput(duty, Mode.TRACKING, e, r)


def supervisor_step(finger: FingerSupervisor, y: float, k: int) -> SupervisorOutput:
    return finger.step(y, k)
