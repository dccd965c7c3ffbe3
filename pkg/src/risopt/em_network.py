"""Thin-wire dipole impedances and the multiport matrices of the RIS link.

All dipoles are z-oriented with a sinusoidal current distribution. The
mutual impedance between two of them follows from the induced-EMF method:
the exact near field of the source dipole is integrated against the
current of the receiving dipole with adaptive quadrature.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad_vec

from risopt.errors import GeometryOverlap
from risopt.geometry import ArraySpec, ScenarioGeometry, element_positions, grid_indices

FREE_SPACE_IMPEDANCE = 376.730313668
Z0_DEFAULT = 50.0
R0_DEFAULT = 0.1
KERNEL_EPSABS = 1e-6
# far-field channel entries are ~1e-2 ohm, so they get a tighter absolute tolerance
CHANNEL_EPSABS = 1e-10


@dataclass(frozen=True)
class ImpedanceNetwork:
    """Z-parameter description of the BS-RIS-UE link (all impedances in ohm).

    ``t`` holds one row per user: the LOS channel from that user to every
    RIS port at its nominal position.
    """

    z_ss: np.ndarray
    s: np.ndarray
    t: np.ndarray
    z0: float = Z0_DEFAULT
    r0: float = R0_DEFAULT
    y0: float = 1.0 / Z0_DEFAULT

    def __post_init__(self):
        if self.z0 <= 0 or self.y0 <= 0:
            raise ValueError("reference impedance and admittance must be positive")
        if self.r0 < 0:
            raise ValueError("parasitic resistance must be non-negative")
        m = self.z_ss.shape[0]
        if self.z_ss.shape != (m, m) or self.s.shape[1] != m or self.t.shape[1] != m:
            raise ValueError("inconsistent network dimensions")

    @property
    def n_ris(self) -> int:
        return self.z_ss.shape[0]

    def ideal(self) -> "ImpedanceNetwork":
        """Same channels with an uncoupled, matched, lossless RIS (``Z_SS = Z0 I``, ``r0 = 0``)."""
        return ImpedanceNetwork(self.z0 * np.eye(self.n_ris, dtype=complex), self.s, self.t,
                                self.z0, 0.0, self.y0)

    def with_channels(self, s=None, t=None) -> "ImpedanceNetwork":
        return ImpedanceNetwork(self.z_ss, self.s if s is None else s,
                                self.t if t is None else np.atleast_2d(t), self.z0, self.r0, self.y0)


def induced_emf(rho, dz, length: float, radius: float, wavelength: float,
                epsabs: float = KERNEL_EPSABS) -> np.ndarray:
    """Mutual impedance of parallel z-dipoles for arrays of (horizontal, vertical) offsets.

    Passing ``rho = radius`` and ``dz = 0`` gives the self-impedance. The
    result is referred to the feed-point currents of both dipoles.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    dz = np.broadcast_to(np.asarray(dz, dtype=float), rho.shape)
    k = 2.0 * math.pi / wavelength
    h = length / 2.0
    cos_kh = math.cos(k * h)
    rho2 = rho * rho

    def integrand(s):
        z = dz + s
        r1 = np.sqrt(rho2 + (z - h) ** 2)
        r2 = np.sqrt(rho2 + (z + h) ** 2)
        r0 = np.sqrt(rho2 + z * z)
        field = (np.exp(-1j * k * r1) / r1 + np.exp(-1j * k * r2) / r2
                 - 2.0 * cos_kh * np.exp(-1j * k * r0) / r0)
        return math.sin(k * (h - abs(s))) * field

    val, _ = quad_vec(integrand, -h, h, points=[0.0], epsabs=epsabs, epsrel=1e-10,
                      norm="max", limit=4000)
    return 1j * FREE_SPACE_IMPEDANCE / (4.0 * math.pi * math.sin(k * h) ** 2) * val


def _check_overlap(rho, adz, length, radius):
    distinct = (rho > 0) | (adz > 0)
    clash = distinct & (rho < 2.0 * radius) & (adz < length)
    if np.any(clash):
        raise GeometryOverlap("distinct dipoles intersect")


def mutual_impedance(pos_a, pos_b, wavelength: float, length: float, radius: float) -> complex:
    """Impedance between dipoles centered at ``pos_a`` and ``pos_b`` (self-impedance if equal)."""
    d = np.subtract(pos_b, pos_a, dtype=float)
    rho = math.hypot(d[0], d[1])
    adz = abs(d[2])
    _check_overlap(np.array([rho]), np.array([adz]), length, radius)
    if rho == 0.0 and adz == 0.0:
        rho = radius
    return complex(induced_emf(rho, adz, length, radius, wavelength)[0])


def _pairwise(rx: np.ndarray, tx: np.ndarray, wavelength, length, radius, epsabs) -> np.ndarray:
    d = rx[:, None, :] - tx[None, :, :]
    rho = np.hypot(d[..., 0], d[..., 1])
    adz = np.abs(d[..., 2])
    _check_overlap(rho, adz, length, radius)
    self_pair = (rho == 0) & (adz == 0)
    rho = np.where(self_pair, radius, rho)
    # the kernel only depends on (rho, |dz|); evaluate each distinct offset once
    scale = wavelength * 1e-9
    keys = np.stack([np.round(rho / scale), np.round(adz / scale)], axis=-1).reshape(-1, 2)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    vals = induced_emf(uniq[:, 0] * scale, uniq[:, 1] * scale, length, radius, wavelength, epsabs)
    return vals[inverse.reshape(-1)].reshape(rho.shape)


def assemble_z_ss(ris: ArraySpec, wavelength: float, epsabs: float = KERNEL_EPSABS) -> np.ndarray:
    """Self and mutual impedances of all RIS ports, an ``M x M`` complex-symmetric matrix."""
    idx = grid_indices(ris)
    di = np.abs(idx[:, None, 0] - idx[None, :, 0])
    dj = np.abs(idx[:, None, 1] - idx[None, :, 1])
    offsets, inverse = np.unique(np.stack([di.ravel(), dj.ravel()], axis=1), axis=0,
                                 return_inverse=True)
    rho = offsets[:, 0] * ris.spacing_x
    adz = offsets[:, 1] * ris.spacing_z
    _check_overlap(rho, adz, ris.element_length, ris.element_radius)
    rho = np.where((offsets[:, 0] == 0) & (offsets[:, 1] == 0), ris.element_radius, rho)
    vals = induced_emf(rho, adz, ris.element_length, ris.element_radius, wavelength, epsabs)
    return vals[inverse.reshape(-1)].reshape(ris.size, ris.size)


def assemble_channel(tx_positions, rx_positions, wavelength: float, length: float, radius: float,
                     epsabs: float = CHANNEL_EPSABS) -> np.ndarray:
    """Impedance channel between two disjoint dipole sets, shape ``(n_rx, n_tx)``."""
    tx = np.atleast_2d(np.asarray(tx_positions, dtype=float))
    rx = np.atleast_2d(np.asarray(rx_positions, dtype=float))
    return _pairwise(rx, tx, wavelength, length, radius, epsabs)


def ue_channels(geometry: ScenarioGeometry, ue_positions) -> np.ndarray:
    """LOS channels from users at ``ue_positions`` to the RIS, one row per user."""
    ris = geometry.ris
    return assemble_channel(ue_positions, element_positions(ris), geometry.wavelength,
                            ris.element_length, ris.element_radius).T


def bs_ris_channel(geometry: ScenarioGeometry) -> np.ndarray:
    """RIS-to-BS impedance channel ``S``, shape ``(N, M)``."""
    ris = geometry.ris
    return assemble_channel(element_positions(ris), element_positions(geometry.bs),
                            geometry.wavelength, ris.element_length, ris.element_radius)


def _direction(src, dst) -> np.ndarray:
    d = np.subtract(dst, src, dtype=float)
    return d / np.linalg.norm(d)


def bs_arrival_azimuth(geometry: ScenarioGeometry) -> float:
    """Azimuth of the RIS seen from the BS, in the BS frame whose broadside faces the RIS side."""
    u = _direction(geometry.bs.center, geometry.ris.center)
    facing = 1.0 if u[1] >= 0 else -1.0
    return math.atan2(facing * u[0], facing * u[1])


def bs_combiner(geometry: ScenarioGeometry, elevation_aware: bool = True) -> np.ndarray:
    """Beamforming combiner of the BS steered toward the RIS.

    Entry ``n`` is ``exp(j k u . (q_n - c))`` with ``u`` the unit vector from
    the BS center ``c`` to the RIS center. Without elevation, only the
    horizontal phase progression ``k x sin(phi_BS)`` of the BS frame is kept.
    """
    k = 2.0 * math.pi / geometry.wavelength
    rel = element_positions(geometry.bs) - np.asarray(geometry.bs.center)
    u = _direction(geometry.bs.center, geometry.ris.center)
    if elevation_aware:
        phase = k * rel @ u
    else:
        facing = 1.0 if u[1] >= 0 else -1.0
        phase = k * (facing * rel[:, 0]) * math.sin(bs_arrival_azimuth(geometry))
    return np.exp(1j * phase)


def scenario_key(geometry: ScenarioGeometry, epsabs: float = KERNEL_EPSABS) -> str:
    ris = geometry.ris
    payload = json.dumps({
        "ris": [ris.n_horizontal, ris.n_vertical, ris.spacing_x, ris.spacing_z,
                ris.element_length, ris.element_radius],
        "wavelength": geometry.wavelength,
        "epsabs": epsabs,
    }, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_matrix(path, matrix: np.ndarray) -> None:
    """Write a complex matrix as two little-endian uint32 dims and row-major complex64 pairs."""
    m = np.asarray(matrix, dtype=np.complex64)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", *m.shape))
        fh.write(m.astype("<c8").tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<c8")
    if data.size != rows * cols:
        raise ValueError(f"corrupt matrix cache {path}")
    return data.reshape(rows, cols).astype(complex)


def cached_z_ss(geometry: ScenarioGeometry, cache_dir) -> np.ndarray:
    """``assemble_z_ss`` through an on-disk cache; values are always complex64-rounded."""
    path = Path(cache_dir) / f"zss_{scenario_key(geometry)}.bin"
    if path.exists():
        return load_matrix(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_matrix(path, assemble_z_ss(geometry.ris, geometry.wavelength))
    return load_matrix(path)


def build_network(geometry: ScenarioGeometry, z0: float = Z0_DEFAULT, r0: float = R0_DEFAULT,
                  y0: float | None = None, cache_dir=None) -> ImpedanceNetwork:
    """Assemble ``Z_SS``, ``S`` and the nominal-position LOS ``t_i`` for a scenario."""
    if geometry.bs.element_length != geometry.ris.element_length:
        raise ValueError("BS and RIS dipoles must share the same length")
    if cache_dir is None:
        z_ss = assemble_z_ss(geometry.ris, geometry.wavelength)
    else:
        z_ss = cached_z_ss(geometry, cache_dir)
    s = bs_ris_channel(geometry)
    t = ue_channels(geometry, [ue.nominal_position for ue in geometry.ues])
    return ImpedanceNetwork(z_ss, s, t, z0, r0, 1.0 / z0 if y0 is None else y0)
