"""Array layouts, steering vectors, poses, bearings, and free-space path loss.

The world is the 2D x-z plane. Arrays live at a pose (position + boresight
orientation); bearings are measured from the boresight, positive toward the
local +x side. Planar panels contribute their in-plane axis to angular
resolution and the orthogonal axis only to gain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299792458.0
"""Speed of light in m/s."""


class FieldOfViewError(ValueError):
    """Target lies in the rear half-plane of an array."""


@dataclass(frozen=True)
class RfParams:
    """Narrowband RF link parameters, all in SI / linear units.

    ``raa_gain`` is the amplitude gain of the backscatter reflection
    (power gain is its square).  ``wavelength`` may be omitted, in which
    case it is derived from the carrier; if given it must be consistent
    with the carrier to 1e-9 relative.
    """

    carrier_frequency: float       # Hz
    bandwidth: float               # Hz
    symbol_time: float             # s
    tx_power: float                # W
    element_gain_trx: float = 1.0  # linear
    element_gain_raa: float = 1.0  # linear
    noise_figure_trx: float = 1.0  # linear
    noise_figure_raa: float = 1.0  # linear
    raa_gain: float = 1.0          # linear amplitude
    wavelength: float = field(default=0.0)  # m, 0 -> derived

    def __post_init__(self):
        for name in ("carrier_frequency", "bandwidth", "symbol_time", "tx_power",
                     "element_gain_trx", "element_gain_raa",
                     "noise_figure_trx", "noise_figure_raa", "raa_gain"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        derived = SPEED_OF_LIGHT / self.carrier_frequency
        if self.wavelength == 0.0:
            object.__setattr__(self, "wavelength", derived)
        elif abs(self.wavelength - derived) > 1e-9 * derived:
            raise ValueError(
                f"wavelength {self.wavelength} inconsistent with carrier "
                f"frequency (expected {derived})")


@dataclass(frozen=True)
class Pose:
    """Position in the x-z plane plus boresight orientation.

    ``orientation`` is the rotation of the boresight from the +z axis
    toward +x, in radians (0 means the array faces +z).
    """

    x: float = 0.0
    z: float = 0.0
    orientation: float = 0.0

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.z])


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear (ny == 1) or uniform planar antenna array.

    ``spacing`` is the inter-element distance in meters; ``None`` means
    half a wavelength at whatever carrier the array is evaluated for.
    """

    nx: int
    ny: int = 1
    spacing: float | None = None
    pose: Pose | None = None

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("element counts must be >= 1")
        if self.spacing is not None and self.spacing <= 0:
            raise ValueError("spacing must be positive")

    @classmethod
    def linear(cls, n: int, spacing: float | None = None,
               pose: Pose | None = None) -> "ArrayGeometry":
        return cls(nx=n, ny=1, spacing=spacing, pose=pose)

    @classmethod
    def planar(cls, nx: int, ny: int, spacing: float | None = None,
               pose: Pose | None = None) -> "ArrayGeometry":
        return cls(nx=nx, ny=ny, spacing=spacing, pose=pose)

    @property
    def is_linear(self) -> bool:
        return self.ny == 1

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def spacing_for(self, wavelength: float) -> float:
        return self.spacing if self.spacing is not None else wavelength / 2.0


def _ula_factor(n: int, spacing: float, wavelength: float, angle: float) -> np.ndarray:
    """Unit-norm ULA vector with element phases +(2*pi/lambda)*k*spacing*sin(angle)."""
    phases = (2.0 * np.pi / wavelength) * spacing * np.sin(angle) * np.arange(n)
    return np.exp(1j * phases) / math.sqrt(n)


def steering_vector(geometry: ArrayGeometry, angle: float, wavelength: float) -> np.ndarray:
    """Unit-norm steering vector of a linear array toward ``angle``.

    Element k carries phase +(2*pi/lambda)*k*spacing*sin(angle); this is
    the conjugated convention, i.e. the response of the array to a plane
    wave arriving from ``angle`` off boresight.

    Args:
        geometry: linear array (planar layouts are rejected).
        angle: bearing off boresight in rad, |angle| <= pi/2.
        wavelength: carrier wavelength in m.
    """
    if not geometry.is_linear:
        raise ValueError("planar geometry: use planar_steering_vector")
    if abs(angle) > np.pi / 2:
        raise ValueError(f"angle {angle} outside [-pi/2, pi/2]")
    return _ula_factor(geometry.nx, geometry.spacing_for(wavelength), wavelength, angle)


def planar_steering_vector(geometry: ArrayGeometry, azimuth: float,
                           wavelength: float) -> np.ndarray:
    """Unit-norm steering vector of a planar array for an in-plane azimuth.

    The scene is two-dimensional, so only the in-plane (x) axis of the
    panel sees a phase gradient; the orthogonal axis is excited uniformly
    and contributes gain only.  The result is the Kronecker product of the
    two ULA factors and reduces to ``steering_vector`` for ny == 1.
    Element ordering: index = ix * ny + iy.
    """
    if abs(azimuth) > np.pi / 2:
        raise ValueError(f"azimuth {azimuth} outside [-pi/2, pi/2]")
    delta = geometry.spacing_for(wavelength)
    vx = _ula_factor(geometry.nx, delta, wavelength, azimuth)
    vy = _ula_factor(geometry.ny, delta, wavelength, 0.0)
    return np.kron(vx, vy)


def array_response(geometry: ArrayGeometry, angle: float, wavelength: float) -> np.ndarray:
    """Steering vector for either layout (dispatch helper)."""
    if geometry.is_linear:
        return steering_vector(geometry, angle, wavelength)
    return planar_steering_vector(geometry, angle, wavelength)


def path_loss(distance: float, wavelength: float) -> float:
    """One-way free-space link loss (4*pi*d/lambda)**2, a linear power ratio."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    return (4.0 * np.pi * distance / wavelength) ** 2


def bearing(pose: Pose, point) -> float:
    """Bearing of ``point`` in the local frame of ``pose``.

    Returns the angle off boresight in (-pi/2, pi/2], positive toward the
    local +x side.  Raises FieldOfViewError when the point lies behind the
    array plane.
    """
    px, pz = float(point[0]), float(point[1])
    dx, dz = px - pose.x, pz - pose.z
    if dx == 0.0 and dz == 0.0:
        raise ValueError("point coincides with the array position")
    beta = pose.orientation
    forward = dx * math.sin(beta) + dz * math.cos(beta)
    lateral = dx * math.cos(beta) - dz * math.sin(beta)
    if forward < 0.0 or (forward == 0.0 and lateral < 0.0):
        raise FieldOfViewError("target behind the array plane")
    return math.atan2(lateral, forward)


def ray_angle_from_x(pose: Pose, local_bearing: float) -> float:
    """Global direction of a bearing ray, measured from the +x axis.

    The bearing-line least squares in the localization engine expects ray
    angles in this convention: a ray from pose leaves in direction
    (cos(theta), sin(theta)) in (x, z).
    """
    return np.pi / 2 - (pose.orientation + local_bearing)


def distance(a, b) -> float:
    return math.hypot(float(b[0]) - float(a[0]), float(b[1]) - float(a[1]))
