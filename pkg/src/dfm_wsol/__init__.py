"""Parameter-free dual-attention erasing for weakly supervised localization,
with a numpy CNN, CAM localization pipeline and synthetic benchmark."""

from .cam_loc import Box, LocOutcome, MetricsReport, evaluate, iou
from .dfm import DfmConfig, dfm_backward, dfm_forward
from .tensor_core import RngStream
from .toy_net import Network, TrainConfig, init_network

__all__ = [
    "Box", "DfmConfig", "LocOutcome", "MetricsReport", "Network", "RngStream", "TrainConfig",
    "dfm_backward", "dfm_forward", "evaluate", "init_network", "iou",
]
