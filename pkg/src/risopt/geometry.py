"""Scenario geometry: planar dipole arrays, user placement and derived angles.

The RIS lies in the x-z plane and faces +y. Azimuths are measured from
the +y (broadside) axis so that a plane wave from azimuth ``phi`` produces
the phase ``k * x * sin(phi)`` across the elements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from risopt.errors import DegenerateDirection, UncertaintyTooLarge

SPEED_OF_LIGHT = 299_792_458.0


def _vec3(value) -> tuple[float, float, float]:
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class ArraySpec:
    """Uniform planar array of z-oriented thin-wire dipoles."""

    n_horizontal: int
    n_vertical: int
    spacing_x: float
    spacing_z: float
    center: tuple[float, float, float]
    element_length: float
    element_radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center))
        if self.n_horizontal < 1 or self.n_vertical < 1:
            raise ValueError("array needs at least one element per axis")
        if self.spacing_x <= 0 or self.spacing_z <= 0:
            raise ValueError("element spacings must be positive")
        if self.element_length <= 0 or self.element_radius <= 0:
            raise ValueError("dipole length and radius must be positive")

    @property
    def size(self) -> int:
        return self.n_horizontal * self.n_vertical


@dataclass(frozen=True)
class UeSpec:
    """Single-antenna user with a circular (horizontal) position uncertainty."""

    nominal_position: tuple[float, float, float]
    uncertainty_radius: float = 0.0
    tx_power: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "nominal_position", _vec3(self.nominal_position))
        if self.uncertainty_radius < 0:
            raise ValueError("uncertainty radius must be non-negative")
        if self.tx_power <= 0:
            raise ValueError("transmit power must be positive")


@dataclass(frozen=True)
class ScenarioGeometry:
    """BS array, RIS array and users; ``ues[0]`` is the intended user."""

    bs: ArraySpec
    ris: ArraySpec
    ues: tuple[UeSpec, ...] = field(default_factory=tuple)
    wavelength: float = SPEED_OF_LIGHT / 30e9

    def __post_init__(self):
        object.__setattr__(self, "ues", tuple(self.ues))
        if not self.ues:
            raise ValueError("scenario needs at least one user")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")

    @property
    def n_ris(self) -> int:
        return self.ris.size

    @property
    def n_bs(self) -> int:
        return self.bs.size

    @property
    def n_users(self) -> int:
        return len(self.ues)

    def with_ues(self, ues) -> "ScenarioGeometry":
        return ScenarioGeometry(self.bs, self.ris, tuple(ues), self.wavelength)


def element_positions(array: ArraySpec) -> np.ndarray:
    """Element coordinates of a planar array, shape ``(n_horizontal * n_vertical, 3)``.

    Rows are ordered row-major with the horizontal index running fastest.
    The grid lies in the x-z plane and is centered on ``array.center``.
    """
    ix = np.arange(array.n_horizontal) - (array.n_horizontal - 1) / 2.0
    iz = np.arange(array.n_vertical) - (array.n_vertical - 1) / 2.0
    gx, gz = np.meshgrid(ix * array.spacing_x, iz * array.spacing_z, indexing="xy")
    pos = np.zeros((array.size, 3))
    pos[:, 0] = gx.ravel()
    pos[:, 2] = gz.ravel()
    return pos + np.asarray(array.center)


def grid_indices(array: ArraySpec) -> np.ndarray:
    """Integer (horizontal, vertical) grid index of every element, same order as positions."""
    gx, gz = np.meshgrid(np.arange(array.n_horizontal), np.arange(array.n_vertical), indexing="xy")
    return np.stack([gx.ravel(), gz.ravel()], axis=1)


def azimuth_of(point, reference) -> float:
    """Azimuth of ``point`` seen from ``reference``, measured from +y toward +x."""
    dx, dy, _ = np.subtract(_vec3(point), _vec3(reference))
    if math.hypot(dx, dy) == 0.0:
        raise DegenerateDirection("point lies on the vertical through the reference")
    return math.atan2(dx, dy)


def elevation_of(point, reference) -> float:
    """Elevation of ``point`` above the horizontal plane through ``reference``."""
    dx, dy, dz = np.subtract(_vec3(point), _vec3(reference))
    rho = math.hypot(dx, dy)
    if rho == 0.0:
        raise DegenerateDirection("point lies on the vertical through the reference")
    return math.atan2(dz, rho)


def horizontal_distance(point, reference) -> float:
    dx, dy, _ = np.subtract(_vec3(point), _vec3(reference))
    return math.hypot(dx, dy)


def angular_spread(ue: UeSpec, reference) -> float:
    """Full azimuth range subtended by the user's uncertainty disk.

    The disk is horizontal, so the distance used is the horizontal one.
    """
    d = horizontal_distance(ue.nominal_position, reference)
    sigma = ue.uncertainty_radius
    if sigma >= d:
        raise UncertaintyTooLarge(f"uncertainty radius {sigma} m >= distance {d} m")
    return 2.0 * math.asin(sigma / d)


def sample_positions(ue: UeSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` true positions uniformly in the horizontal disk around the nominal one."""
    radius = ue.uncertainty_radius * np.sqrt(rng.random(n))
    angle = rng.uniform(0.0, 2.0 * np.pi, n)
    pos = np.tile(np.asarray(ue.nominal_position), (n, 1))
    pos[:, 0] += radius * np.cos(angle)
    pos[:, 1] += radius * np.sin(angle)
    return pos


def ue_at_angle(angle: float, distance: float = 10.0, sigma: float = 0.0,
                tx_power: float = 0.1, height: float = 0.0) -> UeSpec:
    """User at ``distance * (cos angle, sin angle, height)`` (angle measured from +x)."""
    pos = (distance * math.cos(angle), distance * math.sin(angle), height)
    return UeSpec(pos, sigma, tx_power)


def ris_columns_for_spacing(spacing_in_wavelengths: float, aperture_in_wavelengths: float = 16.0,
                            rounding: str = "nearest") -> int:
    """Number of horizontal RIS elements keeping the aperture fixed."""
    raw = aperture_in_wavelengths / spacing_in_wavelengths
    if rounding == "nearest":
        n = int(round(raw))
    elif rounding == "up":
        n = math.ceil(raw - 1e-9)
    elif rounding == "down":
        n = math.floor(raw + 1e-9)
    else:
        raise ValueError(f"unknown rounding mode {rounding!r}")
    return max(n, 1)


def default_scenario(dx: float = 0.5, sigma: float = 0.0, ue_angles=(math.pi / 8,),
                  ue_distance: float = 10.0, tx_power: float = 0.1,
                  frequency: float = 30e9, rounding: str = "nearest") -> ScenarioGeometry:
    """Default indoor scenario: 30 GHz, RIS at (0, 0, 3) m, 16-element BS at (-7, 7, 2) m.

    ``dx`` is the horizontal RIS spacing in wavelengths; the number of RIS
    columns is ``16 / dx`` so the aperture stays constant.
    """
    lam = SPEED_OF_LIGHT / frequency
    length = 0.46 * lam
    radius = lam / 500.0
    ris = ArraySpec(ris_columns_for_spacing(dx, rounding=rounding), 4, dx * lam, 0.75 * lam,
                    (0.0, 0.0, 3.0), length, radius)
    bs = ArraySpec(8, 2, 0.5 * lam, 0.75 * lam, (-7.0, 7.0, 2.0), length, radius)
    ues = tuple(ue_at_angle(a, ue_distance, sigma, tx_power) for a in ue_angles)
    return ScenarioGeometry(bs, ris, ues, lam)
