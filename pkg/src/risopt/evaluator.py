"""Monte Carlo rate evaluation on realized channels, noise calibration and beampatterns."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from risopt.channel_stats import ChannelSampler, ChannelStatistics, Realization, RicianSpec
from risopt.em_network import ImpedanceNetwork, bs_combiner, ue_channels
from risopt.geometry import ScenarioGeometry
from risopt.optimizer import expected_sinr
from risopt.ris_response import RisState, delta_mp

SNR_REFERENCES = ("per-antenna", "post-combining")


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


def calibrate_noise(network: ImpedanceNetwork, geometry: ScenarioGeometry, tx_power: float,
                    target_snr_db: float = -20.0, n_random_configs: int = 100, seed: int = 0,
                    reference: str = "per-antenna", v=None) -> float:
    """Noise variance giving ``target_snr_db`` for the intended user under random RIS phases.

    ``reference="per-antenna"`` averages the received power over the BS
    antennas before combining, ``E ||Phi t_1||^2 / N``;
    ``"post-combining"`` uses ``E |v^H Phi t_1|^2 / ||v||^2``. Random
    configurations go through the multiport response.
    """
    if n_random_configs < 1:
        raise ValueError("need at least one random configuration")
    if reference not in SNR_REFERENCES:
        raise ValueError(f"reference must be one of {SNR_REFERENCES}")
    v = bs_combiner(geometry) if v is None else np.asarray(v)
    rng = np.random.default_rng(seed)
    t1 = network.t[0]
    powers = []
    for _ in range(n_random_configs):
        state = RisState.random(network.n_ris, rng, network.z0)
        y = network.s @ (delta_mp(network, state) @ t1)
        if reference == "per-antenna":
            powers.append(np.real(np.vdot(y, y)) / y.shape[0])
        else:
            powers.append(abs(np.vdot(v, y)) ** 2 / np.real(np.vdot(v, v)))
    return float(tx_power * np.mean(powers) / 10.0 ** (target_snr_db / 10.0))


def instantaneous_sinr(s_e: np.ndarray, t_e: np.ndarray, delta: np.ndarray, v: np.ndarray,
                       noise_var: float, powers, include_interference: bool = True) -> float:
    """SINR after combining with perfectly known realized channels."""
    gains = (np.conj(v) @ s_e @ delta) @ np.atleast_2d(t_e).T
    p = np.abs(gains) ** 2 * np.asarray(powers, dtype=float)
    interference = float(np.sum(p[1:])) if include_interference else 0.0
    return float(p[0] / (interference + noise_var * np.real(np.vdot(v, v))))


def instantaneous_rate(realization: Realization, delta: np.ndarray, v: np.ndarray,
                       noise_var: float, powers, include_interference: bool = True) -> float:
    """``log2(1 + gamma)`` on one realization, ``delta`` being the RIS reflection matrix."""
    return math.log2(1.0 + instantaneous_sinr(realization.s_e, realization.t_e, delta, v,
                                              noise_var, powers, include_interference))


@dataclass(frozen=True)
class EvaluationReport:
    mean_rate: float
    stderr: float
    rate_samples: np.ndarray
    sinr_samples: np.ndarray
    rate_bound: float
    mean_signal_power: float
    mean_interference_power: float
    noise_power: float
    n_trials: int
    seed: int


def trial_generators(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-trial streams derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def monte_carlo_rate(geometry: ScenarioGeometry, rician: RicianSpec, network: ImpedanceNetwork,
                     b, v: np.ndarray, noise_var: float, n_trials: int = 200, seed: int = 0,
                     stats: ChannelStatistics | None = None, sampler: ChannelSampler | None = None,
                     include_interference: bool = True) -> EvaluationReport:
    """Average achievable rate of RIS setting ``b`` over random positions and NLOS draws.

    The RIS always responds through the multiport model of ``network``.
    ``rate_bound`` is the prior-based bound when ``stats`` is given, else NaN.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    sampler = ChannelSampler(geometry, rician, network) if sampler is None else sampler
    delta = delta_mp(network, b)
    powers = np.array([ue.tx_power for ue in geometry.ues])
    noise = noise_var * float(np.real(np.vdot(v, v)))
    rates, sinrs, sig, intf = [], [], [], []
    for rng in trial_generators(seed, n_trials):
        real = sampler.sample(rng)
        gains = (np.conj(v) @ real.s_e @ delta) @ real.t_e.T
        p = np.abs(gains) ** 2 * powers
        i_pow = float(np.sum(p[1:])) if include_interference else 0.0
        gamma = float(p[0] / (i_pow + noise))
        sinrs.append(gamma)
        rates.append(math.log2(1.0 + gamma))
        sig.append(float(p[0]))
        intf.append(i_pow)
    rates = np.array(rates)
    stderr = float(np.std(rates, ddof=1) / math.sqrt(n_trials)) if n_trials > 1 else 0.0
    bound = math.nan
    if stats is not None:
        bound = math.log2(1.0 + expected_sinr(network.s @ delta, stats, v, noise_var))
    return EvaluationReport(float(np.mean(rates)), stderr, rates, np.array(sinrs), bound,
                            float(np.mean(sig)), float(np.mean(intf)), noise, n_trials, seed)


def beampattern(network: ImpedanceNetwork, geometry: ScenarioGeometry, b, v: np.ndarray,
                angles, distance: float = 10.0, tx_power: float = 0.1,
                height: float = 0.0) -> np.ndarray:
    """Received power (dB, model units) of a single probe transmitter versus its angle.

    The probe sits at ``distance * (cos a, sin a)`` in the plane ``z = height``,
    the same placement as the users.
    """
    angles = np.asarray(angles, dtype=float)
    pos = np.stack([distance * np.cos(angles), distance * np.sin(angles),
                    np.full_like(angles, height)], axis=1)
    t = ue_channels(geometry, pos)
    gains = (np.conj(v) @ network.s @ delta_mp(network, b)) @ t.T
    return 10.0 * np.log10(tx_power * np.abs(gains) ** 2)


@dataclass(frozen=True)
class PatternSummary:
    peak_angle: float
    peak_db: float
    level_at_probe_db: float
    null_depth_db: float
    beamwidth_3db: float


def beamwidth(angles, power_db, peak_index: int, drop_db: float = 3.0) -> float:
    """Width of the contiguous lobe around ``peak_index`` above ``peak - drop_db`` (interpolated)."""
    angles = np.asarray(angles, dtype=float)
    p = np.asarray(power_db, dtype=float)
    level = p[peak_index] - drop_db

    def edge(direction):
        i = peak_index
        while 0 <= i + direction < len(p) and p[i + direction] >= level:
            i += direction
        j = i + direction
        if not 0 <= j < len(p):
            return angles[i]
        frac = (p[i] - level) / (p[i] - p[j])
        return angles[i] + frac * (angles[j] - angles[i])

    return float(edge(1) - edge(-1))


def summarize_pattern(angles, power_db, beam_window, probe_angle: float) -> PatternSummary:
    """Peak inside ``beam_window`` (a ``(lo, hi)`` angle pair), level and null depth at ``probe_angle``."""
    angles = np.asarray(angles, dtype=float)
    p = np.asarray(power_db, dtype=float)
    inside = np.flatnonzero((angles >= beam_window[0]) & (angles <= beam_window[1]))
    peak = int(inside[np.argmax(p[inside])])
    probe = float(np.interp(probe_angle, angles, p))
    return PatternSummary(float(angles[peak]), float(p[peak]), probe, float(p[peak] - probe),
                          beamwidth(angles, p, peak))
