"""Prior channel correlations from angular spread, and Rician channel sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from risopt.em_network import ImpedanceNetwork, ue_channels
from risopt.geometry import (
    ScenarioGeometry,
    angular_spread,
    azimuth_of,
    element_positions,
    elevation_of,
    sample_positions,
)

RANK_TOL = 1e-9
QUAD_ORDER = 64
QUAD_RTOL = 1e-8
QUAD_MAX_ORDER = 8192


@dataclass(frozen=True)
class RicianSpec:
    """Rician factors and NLOS angular spreads of the RIS-UE and BS-RIS links."""

    k_ris_ue: float = 10.0
    k_bs_ris: float = 20.0
    nlos_spread: float = math.pi / 6
    nlos_spread_bs: float = math.pi / 6

    def __post_init__(self):
        if self.k_ris_ue <= 0 or self.k_bs_ris <= 0:
            raise ValueError("Rician factors must be positive")
        for spread in (self.nlos_spread, self.nlos_spread_bs):
            if not 0.0 < spread < math.pi:
                raise ValueError("NLOS angular spreads must lie in (0, pi)")


@dataclass(frozen=True)
class ChannelStatistics:
    """Intended-signal and interference correlations plus the eigenfactors of ``r_x``."""

    r_x: np.ndarray
    r_w: tuple[np.ndarray, ...]
    u: np.ndarray
    d: np.ndarray

    @property
    def rank(self) -> int:
        return self.d.shape[0]

    @property
    def r_interference(self) -> np.ndarray:
        total = np.zeros_like(self.r_x)
        for r in self.r_w:
            total = total + r
        return total

    @property
    def r_total(self) -> np.ndarray:
        return self.r_x + self.r_interference

    @property
    def signal_factor(self) -> np.ndarray:
        """``U D^(1/2)``, an ``M x r`` factor of ``r_x``."""
        return self.u * np.sqrt(self.d)[None, :]

    @classmethod
    def from_correlations(cls, r_x, r_w=(), tol: float = RANK_TOL) -> "ChannelStatistics":
        r_x = _hermitize(np.asarray(r_x, dtype=complex))
        evals, evecs = np.linalg.eigh(r_x)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
        d_max = max(evals[0], 0.0)
        keep = evals > tol * d_max if d_max > 0 else np.zeros_like(evals, dtype=bool)
        u, d = evecs[:, keep], evals[keep]
        # store the truncated reconstruction so that R_x = U D U^H holds exactly
        r_x = _hermitize((u * d[None, :]) @ u.conj().T)
        return cls(r_x, tuple(_hermitize(np.asarray(r, dtype=complex)) for r in r_w), u, d)

    def scaled(self, factor: float) -> "ChannelStatistics":
        return ChannelStatistics(self.r_x * factor, tuple(r * factor for r in self.r_w),
                                 self.u, self.d * factor)


def _hermitize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.conj().T)


def steering_vector(positions_x, phi: float, wavelength: float, positions_z=None,
                    elevation: float = 0.0) -> np.ndarray:
    """Array response ``exp(j 2pi/lambda x_m sin(phi))`` of a horizontal plane wave.

    With ``positions_z`` and a non-zero ``elevation`` the wave is tilted:
    the phase becomes ``k (x cos(el) sin(phi) + z sin(el))``.
    """
    k = 2.0 * math.pi / wavelength
    x = np.asarray(positions_x, dtype=float)
    phase = k * x * math.sin(phi) * math.cos(elevation)
    if positions_z is not None:
        phase = phase + k * np.asarray(positions_z, dtype=float) * math.sin(elevation)
    return np.exp(1j * phase)


def scattering_density(phi, center: float, spread: float) -> np.ndarray:
    """Triangular-magnitude density ``4 |phi - center| / spread^2`` on ``center +- spread/2``."""
    phi = np.asarray(phi, dtype=float)
    inside = np.abs(phi - center) <= spread / 2.0
    return np.where(inside, 4.0 * np.abs(phi - center) / spread ** 2, 0.0)


def _steering_matrix(phis, positions_x, wavelength, positions_z, elevation) -> np.ndarray:
    k = 2.0 * math.pi / wavelength
    x = np.asarray(positions_x, dtype=float)
    phase = k * np.outer(x, np.sin(phis)) * math.cos(elevation)
    if positions_z is not None:
        phase = phase + (k * np.asarray(positions_z, dtype=float) * math.sin(elevation))[:, None]
    return np.exp(1j * phase)


def _quadrature(order, phi_c, spread, positions_x, wavelength, positions_z, elevation):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    half = spread / 2.0
    # the density has a kink at the center; integrate each half separately
    s = 0.5 * (nodes + 1.0)
    # density times Jacobian, 4 (half s) / spread^2 * (half / 2) w, is free of spread
    w = 0.5 * s * weights
    phis = np.concatenate([phi_c - half * s, phi_c + half * s])
    wts = np.concatenate([w, w])
    a = _steering_matrix(phis, positions_x, wavelength, positions_z, elevation)
    return (a * wts[None, :]) @ a.conj().T


def los_correlation(phi_i: float, spread: float, beta: float, positions_x, wavelength: float,
                    positions_z=None, elevation: float = 0.0) -> np.ndarray:
    """``beta * integral f(phi) a(phi) a(phi)^H dphi`` over the angular range of the user.

    Gauss-Legendre quadrature, doubled from order 64 until the relative
    Frobenius change falls below 1e-8. ``spread = 0`` gives the rank-one
    limit ``beta a(phi_i) a(phi_i)^H``.
    """
    if spread < 0 or beta <= 0:
        raise ValueError("spread must be >= 0 and beta > 0")
    if spread == 0.0:
        a = steering_vector(positions_x, phi_i, wavelength, positions_z, elevation)
        return beta * np.outer(a, a.conj())
    order = QUAD_ORDER
    prev = _quadrature(order, phi_i, spread, positions_x, wavelength, positions_z, elevation)
    while order < QUAD_MAX_ORDER:
        order *= 2
        cur = _quadrature(order, phi_i, spread, positions_x, wavelength, positions_z, elevation)
        done = np.linalg.norm(cur - prev) <= QUAD_RTOL * np.linalg.norm(cur)
        prev = cur
        if done:
            break
    return beta * _hermitize(prev)


def nlos_correlation(phi_i: float, spread: float, beta: float, k_factor: float, positions_x,
                     wavelength: float, positions_z=None, elevation: float = 0.0) -> np.ndarray:
    """Scattered-part correlation: the LOS-style integral over ``spread`` scaled by ``beta / K``."""
    if k_factor <= 0:
        raise ValueError("Rician factor must be positive")
    if math.isinf(k_factor):
        return np.zeros((len(positions_x),) * 2, dtype=complex)
    return los_correlation(phi_i, spread, beta / k_factor, positions_x, wavelength,
                           positions_z, elevation)


@dataclass(frozen=True)
class UserPrior:
    """Per-user inputs of the prior: nominal direction seen from the RIS and LOS gain."""

    azimuth: float
    elevation: float
    spread: float
    beta: float


def user_priors(geometry: ScenarioGeometry, network: ImpedanceNetwork,
                elevation_aware: bool = True) -> list[UserPrior]:
    center = geometry.ris.center
    priors = []
    for i, ue in enumerate(geometry.ues):
        el = elevation_of(ue.nominal_position, center) if elevation_aware else 0.0
        beta = float(np.mean(np.abs(network.t[i]) ** 2))
        priors.append(UserPrior(azimuth_of(ue.nominal_position, center), el,
                                angular_spread(ue, center), beta))
    return priors


def _ris_coords(geometry: ScenarioGeometry, elevation_aware: bool):
    rel = element_positions(geometry.ris) - np.asarray(geometry.ris.center)
    return rel[:, 0], (rel[:, 2] if elevation_aware else None)


def user_correlations(geometry: ScenarioGeometry, rician: RicianSpec, network: ImpedanceNetwork,
                      elevation_aware: bool = True) -> list[tuple[np.ndarray, np.ndarray]]:
    """``(R_i, W_i)`` for every user, without transmit power."""
    x, z = _ris_coords(geometry, elevation_aware)
    out = []
    for p in user_priors(geometry, network, elevation_aware):
        r = los_correlation(p.azimuth, p.spread, p.beta, x, geometry.wavelength, z, p.elevation)
        w = nlos_correlation(p.azimuth, rician.nlos_spread, p.beta, rician.k_ris_ue, x,
                             geometry.wavelength, z, p.elevation)
        out.append((r, w))
    return out


def build_statistics(geometry: ScenarioGeometry, rician: RicianSpec, network: ImpedanceNetwork,
                     elevation_aware: bool = True, tol: float = RANK_TOL) -> ChannelStatistics:
    """``R_x = s1^2 (R_1 + W_1)`` and ``R_w_i = s_i^2 (R_i + W_i)`` with ``R_x``'s eigenfactors.

    With ``elevation_aware`` the steering vectors carry each user's nominal
    elevation, so the rows of the RIS are phased like the LOS channel.
    """
    corr = user_correlations(geometry, rician, network, elevation_aware)
    powers = [ue.tx_power for ue in geometry.ues]
    r_x = powers[0] * (corr[0][0] + corr[0][1])
    r_w = [p * (r + w) for p, (r, w) in zip(powers[1:], corr[1:])]
    return ChannelStatistics.from_correlations(r_x, r_w, tol)


def rank_one_statistics(t_intended, t_interferers=(), powers=(1.0,)) -> ChannelStatistics:
    """Statistics of perfectly known channels: ``R = s^2 t t^H`` for every user."""
    t1 = np.asarray(t_intended)
    r_x = powers[0] * np.outer(t1, t1.conj())
    r_w = [p * np.outer(t, np.conj(t)) for p, t in zip(powers[1:], t_interferers)]
    return ChannelStatistics.from_correlations(r_x, r_w)


def psd_factor(cov: np.ndarray) -> np.ndarray:
    """``L`` with ``L L^H = cov`` for a Hermitian PSD matrix (negative eigenvalues clipped)."""
    evals, evecs = np.linalg.eigh(_hermitize(cov))
    return evecs * np.sqrt(np.clip(evals, 0.0, None))[None, :]


def complex_gaussian(factor: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws of ``CN(0, factor factor^H)``, one per row."""
    k = factor.shape[1]
    g = (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))) / math.sqrt(2.0)
    return g @ factor.T


@dataclass(frozen=True)
class Realization:
    s_e: np.ndarray
    t_e: np.ndarray
    true_positions: np.ndarray


class ChannelSampler:
    """Draws channel realizations: random true user positions, LOS from the dipole model, NLOS.

    The NLOS covariances are built once at the nominal directions. Each BS
    row of ``S`` receives an independent NLOS vector with the RIS-side
    covariance of the BS direction.
    """

    def __init__(self, geometry: ScenarioGeometry, rician: RicianSpec, network: ImpedanceNetwork,
                 elevation_aware: bool = True):
        self.geometry = geometry
        self.rician = rician
        self.network = network
        x, z = _ris_coords(geometry, elevation_aware)
        lam = geometry.wavelength
        self.nlos_factors = []
        for p in user_priors(geometry, network, elevation_aware):
            w = nlos_correlation(p.azimuth, rician.nlos_spread, p.beta, rician.k_ris_ue, x, lam,
                                 z, p.elevation)
            self.nlos_factors.append(psd_factor(w))
        center = geometry.ris.center
        bs_el = elevation_of(geometry.bs.center, center) if elevation_aware else 0.0
        beta_s = float(np.mean(np.abs(network.s) ** 2))
        w_s = nlos_correlation(azimuth_of(geometry.bs.center, center), rician.nlos_spread_bs,
                               beta_s, rician.k_bs_ris, x, lam, z, bs_el)
        self.bs_factor = psd_factor(w_s)

    def sample(self, rng: np.random.Generator) -> Realization:
        geo = self.geometry
        positions = np.stack([sample_positions(ue, 1, rng)[0] for ue in geo.ues])
        if all(ue.uncertainty_radius == 0 for ue in geo.ues):
            t_los = self.network.t.copy()
        else:
            t_los = ue_channels(geo, positions)
        t_e = np.stack([t_los[i] + complex_gaussian(f, 1, rng)[0]
                        for i, f in enumerate(self.nlos_factors)])
        s_e = self.network.s + complex_gaussian(self.bs_factor, self.network.s.shape[0], rng)
        return Realization(s_e, t_e, positions)


def sample_realization(geometry: ScenarioGeometry, rician: RicianSpec, network: ImpedanceNetwork,
                       rng_seed, elevation_aware: bool = True) -> Realization:
    """One seeded channel realization (builds a fresh sampler)."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return ChannelSampler(geometry, rician, network, elevation_aware).sample(rng)
