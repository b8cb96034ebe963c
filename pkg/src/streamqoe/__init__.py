"""QoE measurement and MOS prediction for HTTP adaptive video streaming."""

__version__ = "0.1.0"
