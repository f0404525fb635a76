"""Simulator for multi-layer metasurface (SIM) beamforming in cell-free
massive MIMO downlinks, with a multi-agent PPO trainer and classical
codebook/water-filling baselines.
"""

from simcf.kernels import KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
