"""Two-timescale hierarchical RL for URLLC power and HARQ orchestration."""

__version__ = "0.1.0"
