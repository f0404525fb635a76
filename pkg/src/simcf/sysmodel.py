"""Downlink objective evaluation: effective gains, SINR, spectral
efficiency and the per-AP sum-power projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from simcf import kernels

# Relative slack on the power comparison so that re-projecting an already
# projected allocation is an exact no-op (idempotence despite rounding).
_PROJECTION_GUARD = 1e-13


@dataclass(frozen=True)
class NoiseModel:
    """Receiver noise power, linear watts."""

    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"noise power must be positive, got {self.sigma2}")


@dataclass(frozen=True)
class PowerAllocation:
    """Per-antenna power amplitudes p[l, k, m] >= 0 (units sqrt(W)).

    sum_k ||p[l, k]||^2 <= P_max holds per AP after project_power.
    """

    p: np.ndarray  # (L, K, M_AP) float64

    def per_ap_power(self) -> np.ndarray:
        """sum_k ||p[l, k]||^2 for each AP, shape (L,)."""
        return (self.p ** 2).sum(axis=(1, 2))


@dataclass(frozen=True)
class EffectiveGains:
    """g[l, k, :] = conj(h_hat[l, k]) @ G_l @ w_first, shape (L, K, M_AP).

    Recomputed whenever phases or the channel change.
    """

    g: np.ndarray


def effective_gains(h_hat: np.ndarray, forward: np.ndarray) -> EffectiveGains:
    """Contract the channels against each AP's beamformed feed response.

    h_hat : (L, K, N); forward : (L, N, M_AP), one cascade_apply per AP.
    """
    h_hat = np.asarray(h_hat)
    forward = np.asarray(forward)
    if h_hat.ndim != 3 or forward.ndim != 3 or h_hat.shape[0] != forward.shape[0] \
            or h_hat.shape[2] != forward.shape[1]:
        raise ValueError(
            f"shape mismatch: h_hat {h_hat.shape} vs forward {forward.shape}"
        )
    return EffectiveGains(g=kernels.effective_gains(h_hat, forward))


def sinr(gains: EffectiveGains, pa: PowerAllocation, noise: NoiseModel) -> np.ndarray:
    """Per-UE SINR under the given (projected) power allocation.

    The interference term pairs UE k's effective channel with UE j's power
    vector; the denominator is bounded below by the noise power, so the
    result is always finite and nonnegative.
    """
    if gains.g.shape != pa.p.shape:
        raise ValueError(f"shape mismatch: gains {gains.g.shape} vs power {pa.p.shape}")
    return kernels.sinr_from_gains(gains.g, pa.p, noise.sigma2)


def spectral_efficiency(gamma: np.ndarray) -> np.ndarray:
    """Per-UE rate log2(1 + gamma), bit/s/Hz."""
    gamma = np.asarray(gamma, dtype=np.float64)
    if np.any(gamma < 0):
        raise ValueError("negative SINR (upstream bug)")
    return np.log2(1.0 + gamma)


def sum_se(rates: np.ndarray) -> float:
    """Network sum spectral efficiency."""
    return float(np.sum(rates))


def project_power(raw: PowerAllocation, p_max: float | np.ndarray) -> PowerAllocation:
    """Project onto the per-AP sum-power ball by radial scaling.

    Negative amplitudes are clipped to zero first; any AP whose total power
    exceeds its budget has all its entries scaled by sqrt(budget / total).
    Idempotent (repeated projection is a bitwise no-op).
    """
    p = np.maximum(np.asarray(raw.p, dtype=np.float64), 0.0)
    budget = np.broadcast_to(np.asarray(p_max, dtype=np.float64), (p.shape[0],))
    total = (p ** 2).sum(axis=(1, 2))
    over = total > budget * (1.0 + _PROJECTION_GUARD)
    scale = np.ones_like(total)
    scale[over] = np.sqrt(budget[over] / total[over])
    return PowerAllocation(p=p * scale[:, None, None])
