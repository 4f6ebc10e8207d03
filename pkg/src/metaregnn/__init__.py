"""REGNN power control for interfering wireless links, with first-order
meta-learned initializations (FOMAML and REPTILE)."""

from .channel import ChannelConfig, ChannelEpisode, dbm_to_mw, sample_episode, split_episode
from .objective import RateReport, link_rate, rate_gradient, sum_rate
from .regnn import NumericalError, RegnnParams, backward, forward, graph_conv, init_params
from .topology import NetworkDrop, TopologyConfig, generate_drop, sample_network_size
from .trainers import (
    FOMAML,
    REPTILE,
    MetaState,
    TaskData,
    TrainConfig,
    adapt,
    fomaml_step,
    meta_train,
    reptile_step,
    sgd_train,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelConfig", "ChannelEpisode", "dbm_to_mw", "sample_episode", "split_episode",
    "RateReport", "link_rate", "rate_gradient", "sum_rate",
    "NumericalError", "RegnnParams", "backward", "forward", "graph_conv", "init_params",
    "NetworkDrop", "TopologyConfig", "generate_drop", "sample_network_size",
    "FOMAML", "REPTILE", "MetaState", "TaskData", "TrainConfig", "adapt",
    "fomaml_step", "meta_train", "reptile_step", "sgd_train",
]
