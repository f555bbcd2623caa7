"""Predictability-aware MPPI planning and multi-agent benchmarks."""

__version__ = "0.1.0"
