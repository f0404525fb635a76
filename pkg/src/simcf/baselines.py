"""Classical comparison method: best-of-C random phase codebook combined
with per-AP iterative water-filling power allocation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from simcf import kernels, sysmodel
from simcf.emwave import PhaseConfig, PropagationSet
from simcf.sysmodel import NoiseModel, PowerAllocation

_BUDGET_TOL = 1e-10
_MAX_BISECTIONS = 500


@dataclass(frozen=True)
class Codebook:
    """C independent uniform-random phase configurations, reproducible from
    the seed; entries drawn sequentially so a larger codebook with the same
    seed extends a smaller one (nested prefixes)."""

    size: int
    entries: np.ndarray  # (C, L, M, N)
    seed: int


def make_codebook(size: int, agents: int, layers: int, atoms: int, seed: int) -> Codebook:
    if size < 1:
        raise ValueError(f"codebook size must be >= 1, got {size}")
    rng = np.random.default_rng(seed)
    entries = np.empty((size, agents, layers, atoms))
    for c in range(size):
        entries[c] = rng.uniform(0.0, 2.0 * math.pi, (agents, layers, atoms))
    entries.setflags(write=False)
    return Codebook(size=size, entries=entries, seed=seed)


def water_filling(gains: np.ndarray, p_max: float, sigma2: float) -> np.ndarray:
    """Per-UE powers p_k = max(0, mu - sigma2 / g_k), water level by bisection.

    The level is refined until the budget residual |sum p - p_max| drops
    below 1e-10. Nonpositive gains get zero power; if every gain is
    nonpositive the budget is split uniformly (with a warning).
    """
    gains = np.asarray(gains, dtype=np.float64)
    if p_max <= 0 or sigma2 <= 0:
        raise ValueError("p_max and sigma2 must be positive")
    positive = gains > 0
    if not positive.any():
        warnings.warn("water-filling fallback: all gains nonpositive, uniform split")
        return np.full(gains.shape, p_max / gains.size)
    floor = sigma2 / gains[positive]
    lo = float(floor.min())          # sum(p) = 0 here
    hi = float(floor.max()) + p_max  # sum(p) >= p_max here
    level = hi
    for _ in range(_MAX_BISECTIONS):
        level = 0.5 * (lo + hi)
        total = np.maximum(0.0, level - floor).sum()
        if abs(total - p_max) <= _BUDGET_TOL:
            break
        if total > p_max:
            hi = level
        else:
            lo = level
    powers = np.zeros(gains.shape)
    powers[positive] = np.maximum(0.0, level - floor)
    return powers


def wf_power_allocation(gains: np.ndarray, p_max: float, sigma2: float) -> PowerAllocation:
    """Water-fill each AP over single-user effective power gains.

    gains: (L, K, M_AP) complex effective gains. Each AP l fills its budget
    over g_k = ||gains[l, k]||^2 (an interference-free proxy), then splits
    each UE's power evenly across its antenna amplitudes.
    """
    agents, users, ap_antennas = gains.shape
    p = np.zeros((agents, users, ap_antennas))
    for l in range(agents):
        g = (np.abs(gains[l]) ** 2).sum(axis=1)
        per_ue = water_filling(g, p_max, sigma2)
        p[l] = np.sqrt(per_ue / ap_antennas)[:, None]
    return PowerAllocation(p=p)


def evaluate_phases(phases: np.ndarray, h_hat: np.ndarray, prop: PropagationSet,
                    sigma2: float, p_max: float) -> tuple[float, PowerAllocation]:
    """Sum SE of one full phase configuration with water-filled powers."""
    agents = phases.shape[0]
    forward = np.stack([
        kernels.cascade_apply(phases[l], prop.w_inter, prop.w_first)
        for l in range(agents)])
    gains = sysmodel.effective_gains(h_hat, forward)
    pa = wf_power_allocation(gains.g, p_max, sigma2)
    gamma = sysmodel.sinr(gains, pa, NoiseModel(sigma2=sigma2))
    return sysmodel.sum_se(sysmodel.spectral_efficiency(gamma)), pa


def codebook_search(h_hat: np.ndarray, prop: PropagationSet, cb: Codebook,
                    sigma2: float, p_max: float) -> tuple[PhaseConfig, float]:
    """Best codebook entry on one channel snapshot (ties keep the lowest
    index). Returns the winning phase configuration and its sum SE."""
    if cb.size < 1 or len(cb.entries) < 1:
        raise ValueError("empty codebook")
    best_se = -math.inf
    best_idx = 0
    for c in range(cb.size):
        se, _ = evaluate_phases(cb.entries[c], h_hat, prop, sigma2, p_max)
        if se > best_se:
            best_se = se
            best_idx = c
    return PhaseConfig(cb.entries[best_idx].copy()), best_se
