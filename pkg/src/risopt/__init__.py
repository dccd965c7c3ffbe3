"""CSI-free optimization of reconfigurable intelligent surfaces with a multiport impedance model."""

from risopt.channel_stats import ChannelStatistics, RicianSpec, build_statistics
from risopt.em_network import ImpedanceNetwork, bs_combiner, build_network
from risopt.geometry import ArraySpec, ScenarioGeometry, UeSpec
from risopt.optimizer import AoConfig, ao_optimize
from risopt.ris_response import RisState, delta_ct, delta_mp

__all__ = [
    "AoConfig",
    "ArraySpec",
    "ChannelStatistics",
    "ImpedanceNetwork",
    "RicianSpec",
    "RisState",
    "ScenarioGeometry",
    "UeSpec",
    "ao_optimize",
    "bs_combiner",
    "build_network",
    "build_statistics",
    "delta_ct",
    "delta_mp",
]

__version__ = "0.1.0"
