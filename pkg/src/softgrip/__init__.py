"""Simulation, identification and force control for a two-finger soft gripper that senses contact through its own bending."""

__version__ = "0.1.0"

from .control import (
    DetectionConfig,
    FingerSupervisor,
    ForceController,
    Mode,
    Reference,
    ThresholdCalibrator,
    TrackingController,
    calibrate_threshold,
    detect_contact,
)
from .exceptions import (
    DegenerateCircleError,
    DegenerateLoopError,
    InvalidInputError,
    InvalidStateError,
    ScenarioInvariantError,
    ScenarioTimeoutError,
    SoftGripError,
    UnidentifiableError,
    UnstableLoopError,
)
from .lti import Polynomial, TransferFunction, closed_loop_poles, is_stable, poly_roots, root_locus, simulate, steady_state_error
from .rig import NOMINAL_ARX, ContactLaw, FingerPlant, Mobility, ObjectModel, Rig
from .sensing import Camera, FingerGeometry, MarkerSet, bending_angle, circumcenter, measure_bending, synth_markers
from .sysid import ARXRegressor, fit_arx, prbs
