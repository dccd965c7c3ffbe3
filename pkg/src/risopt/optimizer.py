"""CSI-free alternating optimization of the RIS reactances.

The expected SINR seen through a fixed combiner ``v`` is tied to the MSE
of an LMMSE estimate of the whitened intended signal:
``mse = r - 1 + 1 / (E[gamma] + 1)``. Minimizing the MSE alternates
between the closed-form LMMSE filter and a trust-region step on the
reflection phases, where the network inverse is linearized with a
first-order Neumann expansion.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from risopt.channel_stats import ChannelStatistics
from risopt.em_network import ImpedanceNetwork
from risopt.ris_response import (
    PHASE_GUARD,
    RisState,
    port_admittance,
    reactance_jacobian,
    reactance_to_phase,
)

log = logging.getLogger(__name__)

MODELS = ("MP", "CT")


@dataclass(frozen=True)
class AoConfig:
    """Settings of one alternating-optimization run."""

    epsilon: float = 0.1
    max_iterations: int = 500
    mse_tolerance: float = 1e-6
    mu_bisection_tol: float = 1e-12
    model: str = "MP"
    seed: int = 0
    max_halvings: int = 20
    n_starts: int = 1
    phase_guard: float = PHASE_GUARD

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("trust radius epsilon must lie in (0, 1)")
        if self.max_iterations < 1 or self.n_starts < 1:
            raise ValueError("max_iterations and n_starts must be >= 1")
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")


# -- expected SINR and LMMSE -------------------------------------------------

def _combined(phi_mat, v):
    return np.conj(v) @ phi_mat


def expected_sinr(phi_mat: np.ndarray, stats: ChannelStatistics, v: np.ndarray,
                  noise_var: float) -> float:
    """``v^H Phi R_x Phi^H v / v^H (Phi sum(R_w) Phi^H + s_n^2 I) v``."""
    c = _combined(phi_mat, v)
    signal = np.real(c @ stats.r_x @ c.conj())
    interference = np.real(c @ stats.r_interference @ c.conj()) if stats.r_w else 0.0
    return float(signal / (interference + noise_var * np.real(np.vdot(v, v))))


def _q_and_total(phi_mat, stats, v, noise_var):
    c = _combined(phi_mat, v)
    q = c @ stats.signal_factor
    total = np.real(c @ stats.r_total @ c.conj()) + noise_var * np.real(np.vdot(v, v))
    return q, float(total)


def lmmse_filter(phi_mat: np.ndarray, stats: ChannelStatistics, v: np.ndarray,
                 noise_var: float) -> np.ndarray:
    """LMMSE filter ``D^(1/2) U^H Phi^H v / (v^H (Phi R Phi^H + s_n^2 I) v)`` (length ``r``)."""
    q, total = _q_and_total(phi_mat, stats, v, noise_var)
    return q.conj() / total


def mse_given_filter(lam: np.ndarray, phi_mat: np.ndarray, stats: ChannelStatistics,
                     v: np.ndarray, noise_var: float) -> float:
    """``||lam||^2 Q - 2 Re(sum_j lam_j q_j) + r`` for an arbitrary filter ``lam``."""
    q, total = _q_and_total(phi_mat, stats, v, noise_var)
    return float(np.real(np.vdot(lam, lam)) * total - 2.0 * np.real(q @ lam) + stats.rank)


def lmmse_mse(phi_mat: np.ndarray, stats: ChannelStatistics, v: np.ndarray,
              noise_var: float) -> float:
    q, total = _q_and_total(phi_mat, stats, v, noise_var)
    return float(stats.rank - np.real(np.vdot(q, q)) / total)


def sinr_from_mse(mse: float, rank: int) -> float:
    return 1.0 / (mse - rank + 1.0) - 1.0


def rate_bound_from_mse(mse: float, rank: int) -> float:
    """Bits/s/Hz of ``log2(1 + E[gamma])`` recovered from an LMMSE-consistent MSE."""
    return math.log2(1.0 + sinr_from_mse(mse, rank))


# -- network linearization ---------------------------------------------------

class _Operating:
    """Exact quantities of the reflection model at one reactance vector.

    For MP, ``Phi = -2 Y0 S A`` with ``A = (Z_SS + r0 I + jB)^-1``. For CT,
    the optimizer sees an uncoupled matched RIS without the structural term:
    ``Phi = S (-2 Y0 A + (Y0/Z0) I)`` with ``A = (Z0 I + jB)^-1``.
    """

    def __init__(self, network: ImpedanceNetwork, b: np.ndarray, model: str):
        self.b = b
        y0 = network.y0
        if model == "MP":
            self.a = port_admittance(network.z_ss, network.r0, b)
            self.phi = -2.0 * y0 * (network.s @ self.a)
        else:
            diag = 1.0 / (network.z0 + 1j * b)
            self.a = np.diag(diag)
            self.phi = network.s * (-2.0 * y0 * diag + y0 / network.z0)[None, :]


def effective_channel(network: ImpedanceNetwork, b, model: str = "MP") -> np.ndarray:
    """``Phi(b) = S Delta(b)`` under the MP model or the optimizer's CT view."""
    return _Operating(network, np.asarray(b, dtype=float), model).phi


@dataclass(frozen=True)
class QuadraticModel:
    """Local model ``delta^T C delta - 2 g^T delta`` of the MSE change, with the Neumann radii.

    ``theta[m]`` is the norm of row ``m`` of ``P = F A``, so that
    ``sum(delta^2 theta^2)`` equals ``||diag(delta) P||_F^2``.
    """

    curvature: np.ndarray
    gradient_vector: np.ndarray
    theta: np.ndarray
    jacobian: np.ndarray = field(repr=False, default=None)

    def predicted_change(self, delta) -> float:
        delta = np.asarray(delta, dtype=float)
        return float(delta @ self.curvature @ delta - 2.0 * self.gradient_vector @ delta)

    def neumann_measure(self, delta) -> float:
        delta = np.asarray(delta, dtype=float)
        return float(np.sqrt(np.sum(delta ** 2 * self.theta ** 2)))


def _quadratic_model(op: _Operating, lam, network, stats, v, noise_var) -> QuadraticModel:
    y0 = network.y0
    f = reactance_jacobian(op.b, network.z0)
    a = op.a
    # G = j S A F and h = 2 Y0 v^H G: the first-order change is Phi ~ Phi0 + H diag(delta) A
    sa = network.s @ a
    h = 2.0 * y0 * 1j * (np.conj(v) @ sa) * f
    r_tot = stats.r_total
    lam_sq = float(np.real(np.vdot(lam, lam)))
    ha = h[:, None] * a
    curvature = lam_sq * np.real(ha @ r_tot @ ha.conj().T)
    curvature = 0.5 * (curvature + curvature.T)
    # linear term of Q is 2 Re(h_m (A R Phi0^H v)_m); f12 carries the opposite sign
    f12 = -h * (a @ (r_tot @ (op.phi.conj().T @ v)))
    f45 = h * (a @ (stats.signal_factor @ lam))
    gradient = lam_sq * np.real(f12) + np.real(f45)
    theta = np.abs(f) * np.linalg.norm(a, axis=1)
    return QuadraticModel(curvature, gradient, theta, f)


def build_quadratic_model(b, lam, network: ImpedanceNetwork, stats: ChannelStatistics,
                          v: np.ndarray, noise_var: float, model: str = "MP") -> QuadraticModel:
    """Quadratic model of the fixed-filter MSE in the phase increment ``delta``.

    The reactance update is ``b + F delta`` with ``F = db/dphi``.
    """
    op = _Operating(network, np.asarray(b, dtype=float), model)
    return _quadratic_model(op, lam, network, stats, v, noise_var)


# -- trust-region step -------------------------------------------------------

class TrustRegionStep:
    """Minimizer of ``d^T C d - 2 g^T d`` subject to ``sum(psi d^2) <= eps^2``, ``psi = theta^2``.

    Scaling ``y = theta * d`` turns the constraint into a ball; one
    eigendecomposition then serves every radius, and the multiplier of
    ``(C + mu diag(psi)) d = g`` is found by bisection on ``||y(mu)||``.
    """

    def __init__(self, model: QuadraticModel, tol: float = 1e-12):
        self.theta = np.asarray(model.theta, dtype=float)
        if np.any(self.theta <= 0):
            raise ValueError("Neumann radii must be positive")
        c = model.curvature / np.outer(self.theta, self.theta)
        c = 0.5 * (c + c.T)
        self.evals, self.evecs = np.linalg.eigh(c)
        self.g = np.asarray(model.gradient_vector, dtype=float)
        self.gamma = self.evecs.T @ (self.g / self.theta)
        self.tol = tol

    def _y_norm(self, mu):
        return float(np.linalg.norm(self.gamma / (self.evals + mu)))

    def _delta(self, mu):
        return (self.evecs @ (self.gamma / (self.evals + mu))) / self.theta

    def solve(self, eps: float) -> tuple[np.ndarray, float]:
        """Return ``(delta, mu)``; ``mu = 0`` when the constraint is inactive."""
        if not np.any(self.g):
            return np.zeros_like(self.g), 0.0
        lam_min = float(self.evals[0])
        scale = max(float(np.max(np.abs(self.evals))), 1e-300)
        if lam_min > 1e-14 * scale and self._y_norm(0.0) <= eps:
            return self._delta(0.0), 0.0
        lo = max(0.0, -lam_min)
        # raise mu until C + mu diag(psi) is positive definite
        floor = lo + 1e-14 * scale
        if self._y_norm(floor) < eps and lo > 0:
            return self._hard_case(lo, eps)
        hi = max(1.0, 2.0 * lo)
        while self._y_norm(hi) > eps:
            hi *= 2.0
        lo = floor
        for _ in range(4000):
            mid = math.sqrt(lo * hi) if lo > 0 and hi > 4.0 * lo else 0.5 * (lo + hi)
            if self._y_norm(mid) > eps:
                lo = mid
            else:
                hi = mid
            if hi - lo <= self.tol * hi:
                break
            if abs(self._y_norm(hi) - eps) <= self.tol * eps:
                break
        return self._delta(hi), hi

    def _hard_case(self, mu, eps):
        gamma = self.gamma.copy()
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(np.abs(self.evals + mu) > 1e-14, gamma / (self.evals + mu), 0.0)
        tau = math.sqrt(max(eps ** 2 - float(coef @ coef), 0.0))
        coef[0] = coef[0] + tau
        return (self.evecs @ coef) / self.theta, mu


def solve_delta(model: QuadraticModel, eps: float, tol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Trust-region phase step ``[C + mu diag(theta^2)]^-1 g`` and its multiplier ``mu``."""
    return TrustRegionStep(model, tol).solve(eps)


# -- alternating optimization -------------------------------------------------

@dataclass
class AoState:
    b: np.ndarray
    lam: np.ndarray
    mse: float
    rate_bound: float
    trust_radius: float
    iteration: int
    rank: int

    @property
    def phi(self) -> np.ndarray:
        return reactance_to_phase(self.b)

    @property
    def expected_sinr(self) -> float:
        return sinr_from_mse(self.mse, self.rank)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    mse: float
    rate_bound_bits: float
    trust_radius: float
    accepted: bool


@dataclass
class AoResult:
    state: AoState
    trace: list[TraceRow]
    model: str
    converged: bool

    @property
    def b(self) -> np.ndarray:
        return self.state.b

    @property
    def rate_bound(self) -> float:
        return self.state.rate_bound

    def rate_bounds(self) -> np.ndarray:
        return np.array([row.rate_bound_bits for row in self.trace if row.accepted])

    def write_trace(self, path) -> None:
        write_trace_csv(self.trace, path)


TRACE_COLUMNS = ("iteration", "mse", "rate_bound_bits", "trust_radius", "accepted")


def write_trace_csv(trace, path, header_lines=()) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in trace:
            writer.writerow([row.iteration, repr(row.mse), repr(row.rate_bound_bits),
                             repr(row.trust_radius), int(row.accepted)])


def _single_run(network, stats, v, noise_var, config: AoConfig, b0) -> AoResult:
    rank = stats.rank
    op = _Operating(network, b0, config.model)
    mse = lmmse_mse(op.phi, stats, v, noise_var)
    radius = config.epsilon
    lam = lmmse_filter(op.phi, stats, v, noise_var)
    trace = [TraceRow(0, mse, rate_bound_from_mse(mse, rank), radius, True)]
    converged = False
    k = 0
    for k in range(1, config.max_iterations + 1):
        lam = lmmse_filter(op.phi, stats, v, noise_var)
        model = _quadratic_model(op, lam, network, stats, v, noise_var)
        step = TrustRegionStep(model, config.mu_bisection_tol)
        accepted = None
        for _ in range(config.max_halvings + 1):
            delta, _mu = step.solve(radius)
            b_new = op.b + model.jacobian * delta
            cand = _Operating(network, b_new, config.model)
            mse_new = lmmse_mse(cand.phi, stats, v, noise_var)
            if mse_new < mse:
                accepted = cand
                break
            radius *= 0.5
        if accepted is None:
            trace.append(TraceRow(k, mse, rate_bound_from_mse(mse, rank), radius, False))
            converged = True
            log.debug("no decreasing step after %d halvings; stopping at iteration %d",
                      config.max_halvings, k)
            break
        rel = (mse - mse_new) / mse
        op, mse = accepted, mse_new
        trace.append(TraceRow(k, mse, rate_bound_from_mse(mse, rank), radius, True))
        radius = min(config.epsilon, 2.0 * radius)
        if rel < config.mse_tolerance:
            converged = True
            break
    lam = lmmse_filter(op.phi, stats, v, noise_var)
    state = AoState(op.b, lam, mse, rate_bound_from_mse(mse, rank), radius, k, rank)
    return AoResult(state, trace, config.model, converged)


def initial_reactances(m: int, rng: np.random.Generator, z0: float, guard: float) -> np.ndarray:
    return RisState.random(m, rng, z0, guard).b


def ao_optimize(network: ImpedanceNetwork, stats: ChannelStatistics, v: np.ndarray,
                noise_var: float, config: AoConfig = AoConfig(), b0=None) -> AoResult:
    """Run the alternating optimization; returns the best of ``config.n_starts`` runs.

    Each run starts from ``b0`` (first run only) or from uniformly random
    phases, and accepts a trust-region step only if the exact MSE drops.
    """
    rng = np.random.default_rng(config.seed)
    best = None
    for start in range(config.n_starts):
        if b0 is not None and start == 0:
            init = np.asarray(b0, dtype=float)
        else:
            init = initial_reactances(network.n_ris, rng, network.z0, config.phase_guard)
        result = _single_run(network, stats, v, noise_var, config, init)
        if best is None or result.state.mse < best.state.mse:
            best = result
    return best
