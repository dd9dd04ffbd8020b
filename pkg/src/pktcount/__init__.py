"""Packet-count reception modelling and localization for BLE beacon deployments."""

from .layout import Beacon, LayoutSpec, demo_layout, stacks_between
from .model import (
    EPS,
    QuadraticCoefficients,
    RadioConfig,
    ReceptionModel,
    empirical_prob,
    log_reception_general,
    reference_model,
    reception_prob,
)
from .trace import PacketTrace, WindowedCounts, window_counts

__version__ = "0.1.0"
