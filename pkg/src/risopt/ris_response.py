"""RIS reflection operators and the reactance/phase parameterization.

A lossless port loaded with reactance ``b`` has reflection coefficient
``(jb - Z0) / (jb + Z0) = exp(j phi)`` with ``b = Z0 cot(phi / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from risopt.em_network import Z0_DEFAULT, ImpedanceNetwork
from risopt.errors import PhaseAtBranchPoint, SingularNetwork

PHASE_GUARD = 1e-3
MAX_CONDITION = 1e12

TWO_PI = 2.0 * np.pi


def _wrap(phi):
    return np.mod(np.asarray(phi, dtype=float), TWO_PI)


def phase_to_reactance(phi, z0: float = Z0_DEFAULT, guard: float = PHASE_GUARD) -> np.ndarray:
    """Reactance producing the reflection phase ``phi``; raises near ``phi = 0 mod 2pi``."""
    w = _wrap(phi)
    if np.any((w < guard) | (w > TWO_PI - guard)):
        raise PhaseAtBranchPoint(f"phase within {guard} rad of the branch point 0 mod 2pi")
    return z0 / np.tan(w / 2.0)


def reactance_to_phase(b, z0: float = Z0_DEFAULT) -> np.ndarray:
    """Reflection phase in ``(0, 2pi)`` of a port loaded with reactance ``b``."""
    return 2.0 * np.arctan2(z0, np.asarray(b, dtype=float))


def reflection_coefficient(b, z0: float = Z0_DEFAULT) -> np.ndarray:
    jb = 1j * np.asarray(b, dtype=float)
    return (jb - z0) / (jb + z0)


def reactance_jacobian(b, z0: float = Z0_DEFAULT) -> np.ndarray:
    """Derivative ``db/dphi = -(b^2 + Z0^2) / (2 Z0)`` of every port."""
    b = np.asarray(b, dtype=float)
    return -(b * b + z0 * z0) / (2.0 * z0)


def clamp_phase(phi, guard: float = PHASE_GUARD) -> np.ndarray:
    """Push phases lying inside the guard band around 0 mod 2pi to its edge."""
    w = _wrap(phi)
    return np.where(w < guard, guard, np.where(w > TWO_PI - guard, TWO_PI - guard, w))


@dataclass(frozen=True)
class RisState:
    """Tunable reactances ``b`` (ohm) and the matching reflection phases ``phi`` (rad)."""

    b: np.ndarray
    phi: np.ndarray

    @classmethod
    def from_reactances(cls, b, z0: float = Z0_DEFAULT) -> "RisState":
        b = np.array(b, dtype=float)
        if not np.all(np.isfinite(b)):
            raise ValueError("reactances must be finite")
        return cls(b, reactance_to_phase(b, z0))

    @classmethod
    def from_phases(cls, phi, z0: float = Z0_DEFAULT, guard: float = PHASE_GUARD) -> "RisState":
        w = _wrap(phi)
        return cls(phase_to_reactance(w, z0, guard), w)

    @classmethod
    def random(cls, m: int, rng: np.random.Generator, z0: float = Z0_DEFAULT,
               guard: float = PHASE_GUARD) -> "RisState":
        return cls.from_phases(rng.uniform(guard, TWO_PI - guard, m), z0, guard)

    @property
    def size(self) -> int:
        return self.b.shape[0]


def _reactances(state) -> np.ndarray:
    return state.b if isinstance(state, RisState) else np.asarray(state, dtype=float)


def port_admittance(z_ss: np.ndarray, r0: float, b) -> np.ndarray:
    """``(Z_SS + r0 I + j diag(b))^-1`` with a conditioning check."""
    mat = z_ss + np.diag(r0 + 1j * np.asarray(b, dtype=float))
    try:
        inv = np.linalg.inv(mat)
    except np.linalg.LinAlgError as exc:
        raise SingularNetwork(str(exc)) from exc
    cond = np.linalg.norm(mat, 1) * np.linalg.norm(inv, 1)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularNetwork(f"port impedance matrix condition number {cond:.3g}")
    return inv


def delta_mp(network: ImpedanceNetwork, state) -> np.ndarray:
    """Multiport reflection matrix ``-2 Y0 (Z_SS + r0 I + j diag(b))^-1`` (dense under coupling)."""
    return -2.0 * network.y0 * port_admittance(network.z_ss, network.r0, _reactances(state))


def delta_imp(state, z0: float = Z0_DEFAULT, y0: float | None = None) -> np.ndarray:
    """Uncoupled, matched, lossless special case: ``diag(-2 Y0 / (Z0 + j b))``."""
    y0 = 1.0 / z0 if y0 is None else y0
    return np.diag(-2.0 * y0 / (z0 + 1j * _reactances(state)))


def delta_ct(state, z0: float = Z0_DEFAULT, y0: float | None = None) -> np.ndarray:
    """Ideal phase-shifter reflection ``(Y0 / Z0) diag(exp(j phi))``.

    Accepts a ``RisState`` or a bare phase vector.
    """
    y0 = 1.0 / z0 if y0 is None else y0
    phi = state.phi if isinstance(state, RisState) else np.asarray(state, dtype=float)
    return np.diag((y0 / z0) * np.exp(1j * phi))


def structural_term(m: int, z0: float = Z0_DEFAULT, y0: float | None = None) -> np.ndarray:
    """Specular reflection of a matched-load RIS, ``-(Y0 / Z0) I``."""
    y0 = 1.0 / z0 if y0 is None else y0
    return -(y0 / z0) * np.eye(m, dtype=complex)
