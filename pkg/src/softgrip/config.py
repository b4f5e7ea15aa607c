"""Tool configuration: a validated, YAML-backed tree of every run parameter.

Units: lengths in cm, bending in degrees, duty in %, forces in N, time in s.
Unknown keys are rejected at every level. ``nominal()`` is the reference
configuration; ``config_hash`` is a sha256 over canonical JSON so two
configs with the same values hash the same regardless of key order.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .control import DetectionConfig, Reference, ReferenceKind
from .experiments import ControllerGains, Scenario
from .lti import TransferFunction
from .rig import ContactLaw, Mobility, ObjectModel, pla_cylinder_load
from .sensing import Camera, FingerGeometry, Side

__all__ = [
    "ToolConfig",
    "SCENARIOS",
    "nominal",
    "load_config",
    "dump_config",
    "config_hash",
    "build_scenario",
]

SCENARIOS = ("free_tracking", "light_touch", "force_modulation", "asymmetric", "pullout", "single_finger")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PlantSection(_Section):
    """ARX finger model A(z) y = B(z) d with A = z^2 + a1 z + a2, B = b1 z + b2."""

    a1: float = -0.7655
    a2: float = 0.03624
    b1: float = 0.04074
    b2: float = 0.3601
    sample_time: float = Field(0.1, gt=0)
    dead_zone: float = Field(20.0, ge=0, lt=100)

    def transfer_function(self) -> TransferFunction:
        return TransferFunction([self.b1, self.b2], [1.0, self.a1, self.a2], self.sample_time)


class TrackingSection(_Section):
    K_t: float = Field(0.066, gt=0)
    z_t: float = 0.97
    d_bias: float = 20.0


class ForceSection(_Section):
    K_f: float = Field(0.21, gt=0)
    z_f: float = 0.44


class DetectionSection(_Section):
    e_tr: tuple[float, float] = (3.88, 4.71)
    duty_floor: float = 30.0
    percentile: float = Field(0.8, gt=0, le=1)

    @field_validator("e_tr")
    @classmethod
    def _positive(cls, v):
        if any(not x > 0 for x in v):
            raise ValueError("e_tr values must be positive")
        return v


class GeometrySection(_Section):
    """Finger 1 is mounted at (+base_x, base_y), finger 2 mirrored at -base_x."""

    base_x: float = 7.5
    base_y: float = 6.5
    tilt: float = 0.0
    finger_length: float = Field(10.7, gt=0)
    marker_spacing: float = Field(2.73, gt=0)
    thickness: float = Field(2.5, ge=0)

    def fingers(self) -> tuple[FingerGeometry, FingerGeometry]:
        kw = dict(tilt=self.tilt, finger_length=self.finger_length, marker_spacing=self.marker_spacing, thickness=self.thickness)
        return (
            FingerGeometry(side=Side.RIGHT, base=(self.base_x, self.base_y), **kw),
            FingerGeometry(side=Side.LEFT, base=(-self.base_x, self.base_y), **kw),
        )


class ObjectSection(_Section):
    """Cylinder; its weight follows from the solid-PLA dimensions unless given."""

    radius: float = Field(2.0, gt=0)
    height: float = Field(8.4, gt=0)
    density: float = Field(1.24, gt=0)
    static_friction: float = Field(0.09, ge=0)
    normal_load: float | None = Field(None, ge=0)
    center: tuple[float, float] | None = None

    def load(self) -> float:
        if self.normal_load is not None:
            return self.normal_load
        return pla_cylinder_load(self.radius, self.height, self.density)


class ContactSection(_Section):
    stiffness: float = Field(ContactLaw.stiffness, gt=0)
    compliance: float = Field(ContactLaw.compliance, gt=0, lt=1)
    wrap_gain: float = Field(ContactLaw.wrap_gain, ge=0)
    grip_friction: float = Field(ContactLaw.grip_friction, ge=0)
    escape_deflection: float = Field(ContactLaw.escape_deflection, gt=0)

    def law(self) -> ContactLaw:
        return ContactLaw(**self.model_dump())


class CameraSection(_Section):
    px_per_cm: float = Field(20.0, gt=0)
    noise_px: float = Field(0.5, ge=0)


class ScenarioSection(_Section):
    """Run parameters shared by the scenario builders.

    ``mu`` overrides each scenario's own force factors. ``noisy`` switches
    the camera noise on; unset means noisy for free tracking only.
    """

    mu: tuple[float, float] | None = None
    ramp_slope: float = Field(4.0, gt=0)
    finger2_start: float = Field(10.0, ge=0)
    finger2_delay: float = Field(10.0, ge=0)
    triangle_amplitude: float = Field(60.0, ge=0)
    triangle_period: float = Field(60.0, gt=0)
    free_duration: int = Field(1200, gt=0)
    duration: int = Field(1200, gt=0)
    settle_steps: int = Field(300, ge=50)
    pull_velocity: float = Field(5.0, gt=0)
    max_pull: float = Field(6.0, gt=0)
    mu_grid: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
    trials: int = Field(5, ge=1)
    noisy: bool | None = None

    @field_validator("mu")
    @classmethod
    def _mu(cls, v):
        if v is not None and any(m < 0 for m in v):
            raise ValueError("mu must be >= 0")
        return v

    @field_validator("mu_grid")
    @classmethod
    def _grid(cls, v):
        if len(v) == 0:
            raise ValueError("mu_grid must not be empty")
        if any(m < 0 for m in v):
            raise ValueError("mu_grid values must be >= 0")
        return v


class ToolConfig(_Section):
    plant: PlantSection = PlantSection()
    tracking: TrackingSection = TrackingSection()
    force: ForceSection = ForceSection()
    detection: DetectionSection = DetectionSection()
    geometry: GeometrySection = GeometrySection()
    object: ObjectSection = ObjectSection()
    contact: ContactSection = ContactSection()
    camera: CameraSection = CameraSection()
    scenario: ScenarioSection = ScenarioSection()
    seed: int = Field(0, ge=0)
    output_dir: str = "out"

    @model_validator(mode="after")
    def _floor(self):
        if not self.detection.duty_floor > self.plant.dead_zone:
            raise ValueError("detection.duty_floor must exceed plant.dead_zone")
        return self


def nominal() -> ToolConfig:
    return ToolConfig()


def load_config(source: str | Path | None) -> ToolConfig:
    """``None`` or ``"nominal"`` give the nominal config; anything else is a YAML path."""
    if source is None or str(source) == "nominal":
        return nominal()
    text = Path(source).read_text(encoding="utf-8")
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError("config file must hold a mapping at top level")
    return ToolConfig.model_validate(data)


def dump_config(cfg: ToolConfig, path: str | Path | None = None) -> str:
    text = yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def config_hash(cfg: ToolConfig) -> str:
    blob = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


_DEFAULT_MU = {
    "free_tracking": (0.0, 0.0),
    "light_touch": (0.0, 0.0),
    "force_modulation": (4.0, 4.0),
    "asymmetric": (4.0, 4.0),
    "pullout": (0.0, 0.0),
    "single_finger": (0.0, 0.0),
}
_CENTER = {
    "light_touch": (0.0, 15.0),
    "force_modulation": (0.0, 15.0),
    "asymmetric": (1.25, 15.0),
    "pullout": (0.0, 6.25),
    "single_finger": (0.0, 15.0),
}


def build_scenario(cfg: ToolConfig, name: str, seed: int | None = None, mu: tuple[float, float] | None = None) -> Scenario:
    """Scenario ``name`` with every parameter taken from ``cfg``."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    sc_cfg = cfg.scenario
    mu = tuple(mu if mu is not None else sc_cfg.mu if sc_cfg.mu is not None else _DEFAULT_MU[name])
    if len(mu) != 2 or any(m < 0 or not math.isfinite(m) for m in mu):
        raise ValueError("mu must be two finite values >= 0")
    T = cfg.plant.sample_time
    noisy = sc_cfg.noisy if sc_cfg.noisy is not None else name == "free_tracking"
    camera = Camera(cfg.camera.px_per_cm, cfg.camera.noise_px if noisy else 0.0)

    if name == "free_tracking":
        tri = Reference(kind=ReferenceKind.TRIANGLE, amplitude=sc_cfg.triangle_amplitude, period=sc_cfg.triangle_period, sample_time=T)
        refs = (tri, tri)
        obj = None
    else:
        refs = (
            Reference(slope=sc_cfg.ramp_slope, sample_time=T),
            Reference(slope=sc_cfg.ramp_slope, start=sc_cfg.finger2_start, sample_time=T),
        )
        o = cfg.object
        mobility = Mobility.MOVABLE if name == "asymmetric" else Mobility.FIXED
        obj = ObjectModel(
            center=o.center if o.center is not None else _CENTER[name],
            radius=o.radius,
            mobility=mobility,
            static_friction=o.static_friction,
            normal_load=o.load(),
        )
    return Scenario(
        name=name,
        duration=sc_cfg.free_duration if name == "free_tracking" else sc_cfg.duration,
        settle_steps=sc_cfg.settle_steps,
        refs=refs,
        mu=mu,
        obj=obj,
        active=(True, name != "single_finger"),
        finger2_delay=sc_cfg.finger2_delay if name == "asymmetric" else None,
        detection=DetectionConfig(e_tr=cfg.detection.e_tr, duty_floor=cfg.detection.duty_floor, dead_zone=cfg.plant.dead_zone),
        gains=ControllerGains(cfg.tracking.K_t, cfg.tracking.z_t, cfg.tracking.d_bias, cfg.force.K_f, cfg.force.z_f),
        plant=cfg.plant.transfer_function(),
        dead_zone=cfg.plant.dead_zone,
        contact=cfg.contact.law(),
        geometry=cfg.geometry.fingers(),
        camera=camera,
        seed=cfg.seed if seed is None else int(seed),
        pull_velocity=sc_cfg.pull_velocity,
        max_pull=sc_cfg.max_pull,
    )
