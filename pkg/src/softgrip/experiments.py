"""Scripted closed-loop scenarios on the simulated rig, sweeps and calibrations.

Every scenario is a deterministic function of its :class:`Scenario` (the
seed drives the marker noise only). A run logs one row per control step:
row ``k`` holds the measured bending the supervisors saw at step ``k``,
their references, errors and duties, and the rig forces and object pose
that produced that measurement.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .control import DetectionConfig, FingerSupervisor, Mode, Reference
from .exceptions import InvalidInputError, ScenarioInvariantError, ScenarioTimeoutError
from .rig import NOMINAL_ARX, ContactLaw, FingerPlant, Mobility, ObjectModel, Rig
from .lti import TransferFunction
from .sensing import Camera, FingerGeometry, Side, measure_bending, synth_markers

__all__ = [
    "ControllerGains",
    "Scenario",
    "TimeSeriesLog",
    "SweepResult",
    "ScenarioRun",
    "default_geometry",
    "linear_fit",
    "run_free_tracking",
    "run_grasp",
    "run_asymmetric_grasp",
    "run_pullout",
    "sweep_contact_force",
    "sweep_pullout",
    "calibrate_contact_stiffness",
    "calibrate_pullout",
    "steady_value",
]

COLUMNS = (
    "t", "mode1", "mode2", "Rref1", "Rref2", "y1", "y2", "e1", "e2", "d1", "d2",
    "F_X", "F_Y", "X_obj", "Y_obj", "contact1", "contact2",
)
STEADY_WINDOW = 50
OFF = "OFF"


def default_geometry() -> tuple[FingerGeometry, FingerGeometry]:
    return (FingerGeometry(side=Side.RIGHT, base=(7.5, 6.5)), FingerGeometry(side=Side.LEFT, base=(-7.5, 6.5)))


@dataclass(frozen=True)
class ControllerGains:
    K_t: float = 0.066
    z_t: float = 0.97
    d_bias: float = 20.0
    K_f: float = 0.21
    z_f: float = 0.44


@dataclass(frozen=True)
class Scenario:
    """Everything a closed-loop run needs.

    ``refs`` are the per-finger tracking references. When ``finger2_delay``
    is set, finger 2's reference instead starts that many seconds after
    finger 1 detects contact. ``duration`` caps the run in steps; grasp
    runs stop ``settle_steps`` after the last contact. ``camera.noise_px``
    of 0 gives noiseless measurements.
    """

    name: str = "light_touch"
    duration: int = 1200
    settle_steps: int = 300
    refs: tuple[Reference, Reference] = (Reference(), Reference(start=10.0))
    mu: tuple[float, float] = (0.0, 0.0)
    obj: ObjectModel | None = field(default_factory=ObjectModel)
    active: tuple[bool, bool] = (True, True)
    finger2_delay: float | None = None
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    gains: ControllerGains = field(default_factory=ControllerGains)
    plant: TransferFunction = NOMINAL_ARX
    dead_zone: float = 20.0
    contact: ContactLaw = field(default_factory=ContactLaw)
    geometry: tuple[FingerGeometry, FingerGeometry] = field(default_factory=default_geometry)
    camera: Camera = field(default_factory=lambda: Camera(noise_px=0.0))
    seed: int = 0
    pull_velocity: float = 5.0
    max_pull: float = 6.0

    def __post_init__(self):
        if self.duration <= 0 or self.settle_steps < STEADY_WINDOW:
            raise InvalidInputError(f"duration must be > 0 and settle_steps >= {STEADY_WINDOW}")
        if any(m < 0 for m in self.mu):
            raise InvalidInputError("mu must be >= 0")
        for r in self.refs:
            if not math.isclose(r.sample_time, self.plant.sample_time):
                raise InvalidInputError("reference and plant sample times differ")
        if self.finger2_delay is not None and self.finger2_delay < 0:
            raise InvalidInputError("finger2_delay must be >= 0")

    @property
    def sample_time(self) -> float:
        return self.plant.sample_time

    @property
    def noiseless(self) -> bool:
        return self.camera.noise_px == 0


class TimeSeriesLog:
    """Fixed-column per-step log with CSV export.

    Besides the CSV columns it keeps the per-finger contact forces and
    the within-step peak pull resistance, which several summaries need.
    """

    def __init__(self, sample_time: float = 0.1):
        self.sample_time = sample_time
        self.rows: list[tuple] = []
        self.forces: list[tuple[float, float]] = []
        self.pull_peaks: list[float] = []
        self.meta: dict = {}

    def append(self, row: tuple, forces=(0.0, 0.0), pull_peak: float = 0.0) -> None:
        if len(row) != len(COLUMNS):
            raise InvalidInputError("row does not match the log columns")
        self.rows.append(row)
        self.forces.append(tuple(forces))
        self.pull_peaks.append(float(pull_peak))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        j = COLUMNS.index(name)
        vals = [r[j] for r in self.rows]
        if name.startswith("mode"):
            return np.array(vals, dtype=object)
        return np.asarray(vals, dtype=float)

    def finger_forces(self) -> np.ndarray:
        return np.asarray(self.forces, dtype=float).reshape(-1, 2)

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    return format(float(v), ".10g")


@dataclass
class SweepResult:
    kind: str
    points: list[tuple[float, list[float]]]
    fit: dict | None
    metadata: dict = field(default_factory=dict)

    def abscissae(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    def means(self) -> np.ndarray:
        return np.array([np.mean(p[1]) if p[1] else math.nan for p in self.points])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "points": [{"x": x, "values": list(v)} for x, v in self.points],
            "fit": self.fit,
            "metadata": self.metadata,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def linear_fit(points) -> tuple[float, float, float]:
    """Ordinary least squares line through ``(x, y)`` pairs: ``(slope, intercept, R^2)``.

    R^2 is reported as 0 when the ``y`` values have no spread.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError("points must be a sequence of (x, y) pairs")
    x, y = pts[:, 0], pts[:, 1]
    if np.unique(x).size < 2:
        raise InvalidInputError("need at least two distinct x values")
    slope, intercept = np.polyfit(x, y, 1)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return float(slope), float(intercept), 0.0
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    return float(slope), float(intercept), float(max(0.0, 1.0 - ss_res / ss_tot))


def steady_value(values, window: int = STEADY_WINDOW) -> float:
    """Mean over the last ``window`` samples."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InvalidInputError("no samples")
    return float(v[-window:].mean())


class ScenarioRun:
    """Rig, two supervisors and a log advanced in lockstep."""

    def __init__(self, sc: Scenario, detect: bool = True):
        self.sc = sc
        fingers = tuple(FingerPlant(g, sc.plant, sc.dead_zone) for g in sc.geometry)
        self.rig = Rig(fingers, sc.obj, sc.contact)
        self.rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(sc.seed).spawn(2)]
        g = sc.gains
        self.sups: list[FingerSupervisor | None] = []
        for i in range(2):
            if not sc.active[i]:
                self.sups.append(None)
                continue
            ref = sc.refs[i]
            if i == 1 and sc.finger2_delay is not None:
                ref = replace(ref, start=math.inf)
            e_tr = sc.detection.e_tr[i] if detect else math.inf
            self.sups.append(
                FingerSupervisor(
                    ref=ref, e_tr=e_tr, mu=sc.mu[i], duty_floor=sc.detection.duty_floor,
                    K_t=g.K_t, z_t=g.z_t, d_bias=g.d_bias, K_f=g.K_f, z_f=g.z_f,
                )
            )
        self.k = 0
        self.log = TimeSeriesLog(sc.sample_time)
        self.contact_step: list[int | None] = [None, None]
        self.last_error = [0.0, 0.0]

    def measure(self, i: int) -> float:
        y = self.rig.outputs.y[i]
        if self.sc.noiseless:
            return y
        bend = min(max(y, 0.0), 179.999)
        markers = synth_markers(bend, self.sc.geometry[i], self.sc.camera, self.rngs[i])
        return measure_bending(markers)

    def all_in_force(self) -> bool:
        return all(s is None or s.mode is Mode.FORCE for s in self.sups)

    def set_mu(self, mu: tuple[float, float]) -> None:
        for s, m in zip(self.sups, mu):
            if s is not None:
                s.set_mu(m)

    def step(self, pull_velocity: float | None = None):
        out = self.rig.outputs
        T = self.sc.sample_time
        modes, refs, ys, errs, duties = [], [], [], [], []
        for i, sup in enumerate(self.sups):
            y = self.measure(i) if sup is not None else out.y[i]
            ys.append(y)
            if sup is None:
                modes.append(OFF)
                refs.append(0.0)
                errs.append(0.0)
                duties.append(0.0)
                continue
            so = sup.step(y, self.k)
            if so.switched:
                self.contact_step[i] = self.k
                if i == 0 and self.sc.finger2_delay is not None and self.sups[1] is not None:
                    self.sups[1].ref = replace(self.sc.refs[1], start=self.k * T + self.sc.finger2_delay)
            modes.append(so.mode.value)
            refs.append(so.reference)
            errs.append(so.error)
            duties.append(so.duty)
        self.last_error = errs
        pos = out.object_pos
        row = (
            self.k * T, modes[0], modes[1], refs[0], refs[1], ys[0], ys[1], errs[0], errs[1],
            duties[0], duties[1], out.F_X, out.F_Y, pos[0], pos[1], out.contact[0], out.contact[1],
        )
        self.log.append(row, out.forces, out.pull_peak)
        if pull_velocity is None:
            self.rig.step(duties[0], duties[1])
        else:
            self.rig.pull_step(pull_velocity, duties[0], duties[1])
        self.k += 1

    def run(self, n: int, **kw) -> None:
        for _ in range(n):
            self.step(**kw)

    def run_until_contact(self) -> None:
        while not self.all_in_force():
            if self.k >= self.sc.duration:
                missing = [i + 1 for i, s in enumerate(self.sups) if s is not None and s.mode is not Mode.FORCE]
                raise ScenarioTimeoutError(f"finger(s) {missing} never detected contact within {self.sc.duration} steps")
            self.step()

    def summary(self, window: int = STEADY_WINDOW) -> dict:
        log = self.log
        f = log.finger_forces()[-window:]
        fx = log.column("F_X")[-window:]
        fy = log.column("F_Y")[-window:]
        return {
            "steps": len(log),
            "contact_steps": list(self.contact_step),
            "terminal_forces": [float(f[:, 0].mean()), float(f[:, 1].mean())],
            "terminal_F_X": float(fx.mean()),
            "terminal_F_Y": float(fy.mean()),
            "terminal_force_magnitude": float(np.hypot(fx, fy).mean()),
            "terminal_errors": [float(e) for e in self.last_error],
            "object_pos": list(self.rig.outputs.object_pos),
        }


def run_free_tracking(sc: Scenario) -> tuple[TimeSeriesLog, dict[int, np.ndarray]]:
    """Track the references with no object and contact detection disabled.

    Returns the log and, per active finger, the corpus of absolute tracking
    errors used for threshold calibration.
    """
    if sc.obj is not None:
        raise InvalidInputError("free tracking runs without an object")
    run = ScenarioRun(sc, detect=False)
    run.run(sc.duration)
    log = run.log
    if np.any(log.column("contact1")) or np.any(log.column("contact2")):
        raise ScenarioInvariantError("contact reported during free tracking")
    corpus = {}
    for i in range(2):
        if sc.active[i]:
            corpus[i + 1] = np.abs(log.column(f"e{i + 1}"))
    log.meta = {"scenario": sc.name, "seed": sc.seed}
    return log, corpus


def run_grasp(sc: Scenario) -> TimeSeriesLog:
    """Ramp the fingers into the object and hold it in force mode.

    Stops ``settle_steps`` after the last contact detection.
    """
    if sc.obj is None:
        raise InvalidInputError("grasp scenarios need an object")
    run = ScenarioRun(sc)
    run.run_until_contact()
    run.run(sc.settle_steps)
    run.log.meta = {"scenario": sc.name, "seed": sc.seed, **run.summary()}
    return run.log


def run_asymmetric_grasp(sc: Scenario, raise_to: tuple[float, float] | None = None) -> TimeSeriesLog:
    """Gentle grasp of a movable object, then a step of both force factors.

    Phase 1 runs with mu = 0 until both fingers are in force mode plus
    ``settle_steps``; the object must not move. Phase 2 raises the factors
    to ``raise_to`` (default ``sc.mu``) for another ``settle_steps``.
    """
    if sc.obj is None or sc.obj.mobility is not Mobility.MOVABLE:
        raise InvalidInputError("asymmetric grasp needs a movable object")
    raise_to = tuple(sc.mu) if raise_to is None else tuple(raise_to)
    run = ScenarioRun(replace(sc, mu=(0.0, 0.0)))
    start = np.asarray(sc.obj.center)
    run.run_until_contact()
    run.run(sc.settle_steps)
    boundary = run.k
    pos = np.column_stack([run.log.column("X_obj"), run.log.column("Y_obj")])
    shift1 = float(np.max(np.hypot(*(pos - start).T)))
    end1 = np.asarray(run.rig.outputs.object_pos)
    shift1 = max(shift1, float(np.hypot(*(end1 - start))))
    if shift1 != 0.0:
        raise ScenarioInvariantError(f"object moved {shift1:.3g} cm during the gentle phase")
    phase1 = run.summary()
    run.set_mu(raise_to)
    run.run(sc.settle_steps)
    end = np.asarray(run.rig.outputs.object_pos)
    run.log.meta = {
        "scenario": sc.name,
        "seed": sc.seed,
        "phase_boundary": boundary,
        "phase1_displacement": shift1,
        "phase1": phase1,
        "displacement": [float(v) for v in end - start],
        **run.summary(),
    }
    return run.log


def _grasped_run(sc: Scenario) -> ScenarioRun:
    run = ScenarioRun(sc)
    run.run_until_contact()
    run.run(sc.settle_steps)
    if not all(run.rig.outputs.contact):
        raise ScenarioInvariantError("grasp not established before the pull")
    return run


def _pull(run: ScenarioRun) -> float:
    sc = run.sc
    n_max = int(math.ceil(sc.max_pull / (abs(sc.pull_velocity) * sc.sample_time))) if sc.pull_velocity else sc.settle_steps
    peak = 0.0
    for _ in range(n_max):
        run.step(pull_velocity=sc.pull_velocity)
        peak = max(peak, run.rig.outputs.pull_peak)
        if run.rig.released:
            break
    # one more row so the log shows the released state
    run.step(pull_velocity=sc.pull_velocity)
    return peak


def run_pullout(sc: Scenario) -> tuple[TimeSeriesLog, float]:
    """Power grasp, settle, then pull the object out at ``sc.pull_velocity``.

    Returns the log and the peak pull resistance (N).
    """
    run = _grasped_run(sc)
    boundary = run.k
    peak = _pull(run)
    run.log.meta = {"scenario": sc.name, "seed": sc.seed, "pull_start": boundary, "peak_pull_force": peak, "released": run.rig.released}
    return run.log, peak


def _trial_seeds(sc: Scenario, trials: int) -> list[int]:
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    if sc.noiseless:
        return [sc.seed]
    return [sc.seed + j for j in range(trials)]


def _single_finger(sc: Scenario, mu: float) -> Scenario:
    ref0 = replace(sc.refs[0], start=0.0)
    return replace(sc, mu=(mu, 0.0), active=(True, False), finger2_delay=None, refs=(ref0, sc.refs[1]))


def sweep_contact_force(sc: Scenario, mu_grid=(0, 1, 2, 3, 4, 5), trials: int = 5, tol: float | None = None, on_trial=None) -> SweepResult:
    """Finger 1 alone against a fixed object; steady contact force per e_des = mu e_tr.

    ``on_trial(mu, seed, log)`` is called after every trial, if given.
    """
    if len(mu_grid) == 0:
        raise InvalidInputError("empty mu grid")
    tol = (1e-2 if sc.noiseless else 1.0) if tol is None else tol
    e_tr = sc.detection.e_tr[0]
    points, excluded = [], []
    for mu in mu_grid:
        vals = []
        for seed in _trial_seeds(sc, trials):
            run = ScenarioRun(_single_finger(replace(sc, seed=seed), float(mu)))
            run.run_until_contact()
            run.run(sc.settle_steps)
            if on_trial is not None:
                on_trial(float(mu), seed, run.log)
            e_end = abs(steady_value(run.log.column("e1")))
            f = steady_value(run.log.finger_forces()[:, 0])
            if e_end > tol or f <= 0.0:
                excluded.append({"mu": float(mu), "seed": seed, "terminal_error": e_end})
                warnings.warn(f"trial mu={mu} seed={seed} did not settle (|e_f|={e_end:.3g}); excluded", RuntimeWarning)
                continue
            vals.append(f)
        points.append((float(mu) * e_tr, vals))
    pairs = [(x, v) for x, vs in points for v in vs]
    fit = _fit_or_none(pairs)
    return SweepResult("contact", points, fit, {"seed": sc.seed, "e_tr": e_tr, "mu_grid": [float(m) for m in mu_grid], "excluded": excluded})


def _fit_or_none(pairs) -> dict | None:
    if len({x for x, _ in pairs}) < 2:
        warnings.warn("fewer than two distinct abscissae; fit omitted", RuntimeWarning)
        return None
    slope, intercept, r2 = linear_fit(pairs)
    return {"slope": slope, "intercept": intercept, "r2": r2}


def sweep_pullout(sc: Scenario, mu_grid=(0, 1, 2, 3, 4, 5), trials: int = 5, on_trial=None) -> SweepResult:
    """Peak pull-out force versus mu (both fingers at the same factor)."""
    if len(mu_grid) == 0:
        raise InvalidInputError("empty mu grid")
    points = []
    for mu in mu_grid:
        vals = []
        for seed in _trial_seeds(sc, trials):
            log, peak = run_pullout(replace(sc, seed=seed, mu=(float(mu), float(mu))))
            if on_trial is not None:
                on_trial(float(mu), seed, log)
            vals.append(peak)
        points.append((float(mu), vals))
    e_tr = sc.detection.e_tr[0]
    pairs = [(x * e_tr, v) for x, vs in points for v in vs]
    fit = _fit_or_none(pairs)
    return SweepResult("pullout", points, fit, {"seed": sc.seed, "velocity": sc.pull_velocity, "mu_grid": [float(m) for m in mu_grid]})


def calibrate_contact_stiffness(sc: Scenario, targets=((0.0, 0.05), (5.0, 0.25))) -> float:
    """Least-squares contact stiffness matching steady single-finger forces.

    ``targets`` are ``(mu, force)`` pairs. With a fixed object the closed
    loop does not depend on the stiffness, so forces scale linearly in it
    and one unit-stiffness run per point gives the closed form
    ``k = sum(f1 F) / sum(f1^2)``.
    """
    unit = replace(sc, contact=replace(sc.contact, stiffness=1.0), camera=Camera(noise_px=0.0))
    if unit.obj is not None:
        unit = replace(unit, obj=replace(unit.obj, mobility=Mobility.FIXED))
    f1, tgt = [], []
    for mu, force in targets:
        run = ScenarioRun(_single_finger(unit, float(mu)))
        run.run_until_contact()
        run.run(sc.settle_steps)
        f1.append(steady_value(run.log.finger_forces()[:, 0]))
        tgt.append(force)
    f1, tgt = np.asarray(f1), np.asarray(tgt)
    return float(f1 @ tgt / (f1 @ f1))


def calibrate_pullout(sc: Scenario, targets=((0.0, 0.3), (5.0, 1.2)), escape_bracket=(1.0, 40.0)) -> tuple[float, float]:
    """Escape deflection and grip friction reproducing two peak pull-out forces.

    The grasp phase does not depend on either parameter, so each grasp is
    simulated once and only the pull is replayed. For a given escape
    deflection the grip friction is solved to hit the first target; the
    escape deflection is then solved to hit the second.
    Returns ``(escape_deflection, grip_friction)``.
    """
    sc = replace(sc, camera=Camera(noise_px=0.0))
    (mu_a, f_a), (mu_b, f_b) = targets
    grasped = {mu: _grasped_run(replace(sc, mu=(mu, mu))) for mu in (float(mu_a), float(mu_b))}

    def peak(mu, esc, grip):
        run = copy.deepcopy(grasped[mu])
        run.rig.contact = replace(run.rig.contact, escape_deflection=esc, grip_friction=grip)
        run.sc = replace(run.sc, contact=run.rig.contact)
        return _pull(run)

    def grip_for(esc):
        g = lambda grip: peak(float(mu_a), esc, grip) - f_a
        return brentq(g, 0.0, 20.0, xtol=1e-9)

    def mismatch(esc):
        return peak(float(mu_b), esc, grip_for(esc)) - f_b

    lo, hi = escape_bracket
    # a deep hook alone can exceed the first target; cap the bracket where grip 0 suffices
    if peak(float(mu_a), hi, 0.0) >= f_a:
        hi = brentq(lambda e: peak(float(mu_a), e, 0.0) - f_a, lo, hi, xtol=1e-6) - 1e-4
    esc = brentq(mismatch, lo, hi, xtol=1e-6)
    return float(esc), float(grip_for(esc))
