import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from risopt.channel_stats import RicianSpec, build_statistics
from risopt.em_network import build_network, bs_combiner
from risopt.geometry import SPEED_OF_LIGHT, ArraySpec, ScenarioGeometry, ue_at_angle

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []

WAVELENGTH = SPEED_OF_LIGHT / 30e9


def small_geometry(n_h=4, n_v=2, dx=0.5, sigma=0.0, angles=(math.pi / 8,), tx_power=0.1):
    """Scaled-down version of the default room: same positions, a few RIS elements."""
    lam = WAVELENGTH
    length, radius = 0.46 * lam, lam / 500
    ris = ArraySpec(n_h, n_v, dx * lam, 0.75 * lam, (0.0, 0.0, 3.0), length, radius)
    bs = ArraySpec(4, 1, 0.5 * lam, 0.75 * lam, (-7.0, 7.0, 2.0), length, radius)
    ues = [ue_at_angle(a, 10.0, sigma, tx_power) for a in angles]
    return ScenarioGeometry(bs, ris, ues, lam)


class SmallScenario:
    def __init__(self, geometry, rician=RicianSpec()):
        self.geometry = geometry
        self.rician = rician
        self.network = build_network(geometry)
        self.v = bs_combiner(geometry)
        self.stats = build_statistics(geometry, rician, self.network)
        y = self.network.s @ self.network.t[0]
        self.noise_var = float(geometry.ues[0].tx_power * np.real(np.vdot(y, y)) / len(y)) * 1e-2


@pytest.fixture(scope="session")
def small_scenario():
    return SmallScenario(small_geometry(angles=(math.pi / 8, math.pi / 4)))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
