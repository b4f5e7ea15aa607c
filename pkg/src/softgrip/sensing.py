"""Marker-based bending measurement and a synthetic marker generator.

The bending ``y`` of a finger is the largest angle, seen from the centre of
the circle through the three marker centres, between any two markers.
Markers arrive unlabelled, so the measurement must not depend on their
order. ``synth_markers`` stands in for the camera: it places three markers
on a constant-curvature finger and optionally adds pixel noise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateCircleError, InvalidInputError

__all__ = [
    "Side",
    "MarkerSet",
    "BendingMeasurement",
    "FingerGeometry",
    "Camera",
    "circumcenter",
    "bending_angle",
    "measure_bending",
    "synth_markers",
]

COLLINEAR_TOL = 1e-9


class Side(str, enum.Enum):
    """Which side of the gripper a finger is mounted on.

    A RIGHT finger sits at positive X and curls toward -X; a LEFT finger
    mirrors it.
    """

    RIGHT = "right"
    LEFT = "left"


@dataclass(frozen=True)
class MarkerSet:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (3, 2):
            raise InvalidInputError(f"expected 3 planar points, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("marker coordinates must be finite")
        for i in range(3):
            for j in range(i + 1, 3):
                if np.array_equal(pts[i], pts[j]):
                    raise InvalidInputError("marker points must be pairwise distinct")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class BendingMeasurement:
    y: float
    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class FingerGeometry:
    """Planar constant-curvature finger, lengths in cm.

    ``base`` is the finger root, ``tilt`` (degrees) rotates the unbent
    finger from +Y toward the gripper centre line. The three markers sit on
    the distal part of the finger, ``marker_spacing`` apart along the arc.
    """

    side: Side = Side.RIGHT
    base: tuple[float, float] = (7.5, 6.5)
    tilt: float = 0.0
    finger_length: float = 10.7
    marker_spacing: float = 2.73
    thickness: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "side", Side(self.side))
        if not self.marker_spacing > 0:
            raise InvalidInputError("marker_spacing must be positive")
        if 2 * self.marker_spacing > self.finger_length:
            raise InvalidInputError("three markers do not fit on the finger")
        if self.thickness < 0:
            raise InvalidInputError("thickness must be >= 0")

    def curvature(self, bend: float) -> float:
        """Curvature (1/cm) of a finger whose markers subtend ``bend`` degrees."""
        return math.radians(bend) / (2.0 * self.marker_spacing)

    def frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Origin, bending direction ``u`` and finger axis ``v`` in world coordinates."""
        t = math.radians(self.tilt)
        if self.side is Side.RIGHT:
            v = np.array([-math.sin(t), math.cos(t)])
            u = np.array([-math.cos(t), -math.sin(t)])
        else:
            v = np.array([math.sin(t), math.cos(t)])
            u = np.array([math.cos(t), -math.sin(t)])
        return np.asarray(self.base, dtype=float), u, v

    def to_local(self, point) -> np.ndarray:
        o, u, v = self.frame()
        q = np.asarray(point, dtype=float) - o
        return np.array([q @ u, q @ v])

    def to_world(self, local) -> np.ndarray:
        o, u, v = self.frame()
        local = np.asarray(local, dtype=float)
        return o + local[..., :1] * u + local[..., 1:2] * v

    def arc_points(self, bend: float, s) -> np.ndarray:
        """Local coordinates of the centre line at arc lengths ``s``."""
        s = np.asarray(s, dtype=float)
        k = self.curvature(bend)
        if k < 1e-12:
            return np.stack([np.zeros_like(s), s], axis=-1)
        return np.stack([(1.0 - np.cos(k * s)) / k, np.sin(k * s) / k], axis=-1)


@dataclass(frozen=True)
class Camera:
    """Pixel model for synthetic markers: scale plus uniform quantization noise."""

    px_per_cm: float = 20.0
    noise_px: float = 0.5

    def __post_init__(self):
        if not self.px_per_cm > 0:
            raise InvalidInputError("px_per_cm must be positive")
        if self.noise_px < 0:
            raise InvalidInputError("noise_px must be >= 0")


def circumcenter(m: MarkerSet) -> tuple[tuple[float, float], float]:
    """Centre and radius of the circle through the three markers."""
    pts = m.points
    origin = pts.mean(axis=0)
    a, b, c = pts - origin
    span = np.ptp(pts, axis=0)
    diag2 = float(span @ span)
    cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if abs(cross) / 2.0 < COLLINEAR_TOL * diag2:
        raise DegenerateCircleError("markers are collinear (straight finger)")
    d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]))
    a2, b2, c2 = a @ a, b @ b, c @ c
    ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d
    uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d
    center = np.array([ux, uy])
    radius = float(np.mean(np.linalg.norm(pts - origin - center, axis=1)))
    center = center + origin
    return (float(center[0]), float(center[1])), radius


def bending_angle(m: MarkerSet) -> BendingMeasurement:
    """Largest pairwise angle between the centre-to-marker vectors, in degrees.

    The angle is evaluated as ``atan2(|r_k x r_j|, r_k . r_j)``, which equals
    the arccos of the normalized dot product but stays accurate near 0 and
    180 degrees.
    """
    center, radius = circumcenter(m)
    r = m.points - np.asarray(center)
    best = 0.0
    for k in range(3):
        for j in range(k + 1, 3):
            cross = r[k, 0] * r[j, 1] - r[k, 1] * r[j, 0]
            best = max(best, math.atan2(abs(cross), float(r[k] @ r[j])))
    return BendingMeasurement(y=math.degrees(best), center=center, radius=radius)


def measure_bending(m: MarkerSet) -> float:
    """Bending in degrees, with a straight (collinear) finger reported as 0."""
    try:
        return bending_angle(m).y
    except DegenerateCircleError:
        return 0.0


def synth_markers(
    bend: float,
    geom: FingerGeometry | None = None,
    camera: Camera | None = None,
    rng: np.random.Generator | int | None = None,
) -> MarkerSet:
    """Pixel coordinates of the three markers of a finger bent by ``bend`` degrees.

    Markers sit at arc lengths ``L - 2s``, ``L - s`` and ``L`` so the
    outermost pair subtends exactly ``bend`` at the centre of curvature.
    With ``camera.noise_px > 0`` every coordinate is perturbed by an
    independent uniform draw in ``[-noise_px, noise_px]``.
    """
    if not (0.0 <= bend < 180.0):
        raise InvalidInputError(f"bend must lie in [0, 180), got {bend}")
    geom = geom or FingerGeometry()
    camera = camera or Camera(noise_px=0.0)
    s = geom.marker_spacing
    arc = geom.arc_points(bend, [geom.finger_length - 2 * s, geom.finger_length - s, geom.finger_length])
    px = geom.to_world(arc) * camera.px_per_cm
    if camera.noise_px > 0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        px = px + gen.uniform(-camera.noise_px, camera.noise_px, size=px.shape)
    return MarkerSet(px)
