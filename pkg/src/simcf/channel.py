"""Network layout, large-scale fading and equivalent channel realizations.

APs sit at the centroids of a square tiling of the service area (height
10 m); single-antenna UEs drop uniformly at random (height 1.7 m).
Large-scale fading follows a log-distance pathloss law, and small-scale
fading is i.i.d. Rayleigh per meta-atom of the final stack layer. Channels
are block fading: one realization per episode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

AP_HEIGHT_M = 10.0
UE_HEIGHT_M = 1.7

# Log-distance pathloss, urban-microcell-style coefficients. Swappable via
# the harness config.
PATHLOSS_REF_DB = -30.5
PATHLOSS_SLOPE_DB = 36.7

CHANNEL_MODES = ("rayleigh", "as-written")


@dataclass(frozen=True)
class Layout:
    """AP/UE drop of one network instance."""

    area_m: float
    ap_positions: np.ndarray  # (L, 3)
    ue_positions: np.ndarray  # (K, 3)
    seed: int


@dataclass(frozen=True)
class LargeScale:
    """Linear-scale large-scale fading factors, shape (L, K), all > 0."""

    beta: np.ndarray


@dataclass(frozen=True)
class ChannelRealization:
    """Equivalent channels from each AP's final stack layer to every UE.

    h_hat : (L, K, N) complex128
    mode  : 'rayleigh'   -> h_hat = sqrt(beta) * h   (circularly symmetric)
            'as-written' -> h_hat = beta * |h|^2     (real, nonnegative)
    """

    h_hat: np.ndarray
    mode: str


def tiling_centroids(count: int, area_m: float) -> np.ndarray:
    """First `count` centroids (row-major) of the ceil(sqrt)^2 square tiling."""
    grid = math.ceil(math.sqrt(count))
    side = area_m / grid
    xy = np.zeros((count, 2))
    for i in range(count):
        row, col = divmod(i, grid)
        xy[i] = ((col + 0.5) * side, (row + 0.5) * side)
    return xy


def place_network(seed: int, ap_count: int, ue_count: int, area_m: float) -> Layout:
    """Drop APs on the tiling centroids and UEs uniformly over the area."""
    if area_m <= 0:
        raise ValueError(f"area must be positive, got {area_m}")
    if ap_count < 1 or ue_count < 1:
        raise ValueError("need at least one AP and one UE")
    rng = np.random.default_rng(seed)
    ap = np.column_stack([tiling_centroids(ap_count, area_m),
                          np.full(ap_count, AP_HEIGHT_M)])
    ue = np.column_stack([rng.uniform(0.0, area_m, size=(ue_count, 2)),
                          np.full(ue_count, UE_HEIGHT_M)])
    return Layout(area_m=area_m, ap_positions=ap, ue_positions=ue, seed=seed)


def large_scale(layout: Layout, ref_db: float = PATHLOSS_REF_DB,
                slope_db: float = PATHLOSS_SLOPE_DB) -> LargeScale:
    """Log-distance pathloss on the 3D AP-UE distances.

    beta_dB = ref_db - slope_db * log10(d_3D / 1 m), returned in linear scale.
    """
    diff = layout.ap_positions[:, None, :] - layout.ue_positions[None, :, :]
    d3 = np.linalg.norm(diff, axis=2)
    if np.any(d3 == 0.0):
        raise ValueError("AP and UE positions coincide (zero distance)")
    beta_db = ref_db - slope_db * np.log10(d3)
    return LargeScale(beta=10.0 ** (beta_db / 10.0))


def sample_channel(ls: LargeScale, atoms_per_layer: int, seed: int,
                   mode: str = "rayleigh") -> ChannelRealization:
    """One block-fading realization of the equivalent channels.

    Small-scale entries are standard circularly symmetric complex Gaussians
    (unit variance per entry, i.e. (randn + j randn) / sqrt(2)).
    """
    if mode not in CHANNEL_MODES:
        raise ValueError(f"unknown channel mode {mode!r}, expected one of {CHANNEL_MODES}")
    ap_count, ue_count = ls.beta.shape
    rng = np.random.default_rng(seed)
    shape = (ap_count, ue_count, atoms_per_layer)
    h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    if mode == "rayleigh":
        h_hat = np.sqrt(ls.beta)[:, :, None] * h
    else:
        # Literal elementwise beta * |h|^2; real and nonnegative, which
        # discards the phase structure the stack optimizes. Kept selectable.
        h_hat = (ls.beta[:, :, None] * np.abs(h) ** 2).astype(np.complex128)
    return ChannelRealization(h_hat=h_hat, mode=mode)
