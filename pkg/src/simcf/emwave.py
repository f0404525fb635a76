"""Metasurface stack geometry and wave-domain beamforming.

Each access point feeds a stack of M metasurface layers. The feed antennas
form a centered uniform linear array one inter-layer spacing before the
first layer; every layer is an s x s square grid of meta-atoms at
half-wavelength pitch, centered on the propagation axis. Free-space
coupling between consecutive planes follows the Rayleigh-Sommerfeld
diffraction coefficient, and the stack's controllable per-atom phase
shifts turn it into an analog beamformer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from simcf import kernels

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GeometryConfig:
    """Build parameters for one metasurface stack (shared by all APs)."""

    wavelength_m: float = 0.0108        # 28 GHz downlink
    layer_count: int = 2                # M
    atoms_per_layer: int = 9            # N, must be a perfect square
    ap_antenna_count: int = 2           # M_AP
    stack_depth_wavelengths: float = 5.0  # layer M sits this many lambda out
    atom_pitch_wavelengths: float = 0.5


@dataclass(frozen=True)
class SimGeometry:
    """Positions and spacings of the feed array and every meta-atom.

    Immutable after construction; shared read-only across threads.
    """

    wavelength_m: float
    atom_size_m: tuple[float, float]    # (d_x, d_y), = pitch by default
    layer_count: int
    atoms_per_layer: int
    layer_spacing_m: float
    ap_antenna_count: int
    atom_positions: np.ndarray          # (M, N, 3), layer-major, row-major grid
    ap_antenna_positions: np.ndarray    # (M_AP, 3)
    layer_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))


@dataclass(frozen=True)
class PhaseConfig:
    """Controllable phases, indexed [agent][layer][atom], each in [0, 2pi)."""

    phases: np.ndarray  # (L, M, N) float64

    def __post_init__(self):
        ph = np.asarray(self.phases, dtype=np.float64)
        if ph.ndim != 3:
            raise ValueError(f"phases must be (agents, layers, atoms), got shape {ph.shape}")
        if np.any(ph < 0.0) or np.any(ph >= TWO_PI):
            raise ValueError("phases must lie in [0, 2pi)")
        object.__setattr__(self, "phases", ph)

    @property
    def agent_count(self) -> int:
        return self.phases.shape[0]


@dataclass(frozen=True)
class PropagationSet:
    """Fixed transmission matrices of one stack geometry.

    w_first : (N, M_AP) feed-array to first layer
    w_inter : (M-1, N, N), entry m-2 couples layer m-1 to layer m

    Deterministic function of geometry alone; all agents share one instance
    when their stacks are identical.
    """

    w_first: np.ndarray
    w_inter: np.ndarray


def build_geometry(cfg: GeometryConfig) -> SimGeometry:
    """Place the feed array and all meta-atom grids.

    Layer m (1-based) sits at axial offset m * d_layer from the feed plane,
    with d_layer = stack depth / M, so the final layer is exactly one stack
    depth out regardless of the layer count.
    """
    if cfg.wavelength_m <= 0:
        raise ValueError(f"wavelength must be positive, got {cfg.wavelength_m}")
    if cfg.layer_count < 1:
        raise ValueError(f"layer_count must be >= 1, got {cfg.layer_count}")
    if cfg.ap_antenna_count < 1:
        raise ValueError(f"ap_antenna_count must be >= 1, got {cfg.ap_antenna_count}")
    if cfg.stack_depth_wavelengths <= 0:
        raise ValueError("stack depth must be positive")
    if cfg.atom_pitch_wavelengths <= 0:
        raise ValueError("atom pitch must be positive")

    side = math.isqrt(cfg.atoms_per_layer)
    if side < 1 or side * side != cfg.atoms_per_layer:
        raise ValueError(
            f"atoms_per_layer must be a perfect square (grid layers), got {cfg.atoms_per_layer}"
        )

    lam = cfg.wavelength_m
    pitch = cfg.atom_pitch_wavelengths * lam
    d_layer = cfg.stack_depth_wavelengths * lam / cfg.layer_count

    # Row-major s x s grid centered on the axis, one grid per layer.
    offsets = (np.arange(side) - (side - 1) / 2.0) * pitch
    grid_x, grid_y = np.meshgrid(offsets, offsets, indexing="xy")
    atom_xy = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    atoms = np.zeros((cfg.layer_count, cfg.atoms_per_layer, 3))
    for m in range(cfg.layer_count):
        atoms[m, :, :2] = atom_xy
        atoms[m, :, 2] = (m + 1) * d_layer

    # Centered ULA in the feed plane (z = 0), half-wavelength pitch along x.
    ap = np.zeros((cfg.ap_antenna_count, 3))
    ap[:, 0] = (np.arange(cfg.ap_antenna_count) - (cfg.ap_antenna_count - 1) / 2.0) * lam / 2.0

    return SimGeometry(
        wavelength_m=lam,
        atom_size_m=(pitch, pitch),
        layer_count=cfg.layer_count,
        atoms_per_layer=cfg.atoms_per_layer,
        layer_spacing_m=d_layer,
        ap_antenna_count=cfg.ap_antenna_count,
        atom_positions=atoms,
        ap_antenna_positions=ap,
    )


def propagation_coefficient(src: np.ndarray, dst: np.ndarray, geom: SimGeometry) -> complex:
    """Rayleigh-Sommerfeld coupling coefficient between two points.

    With d = |dst - src| and cos chi the axial direction cosine of the hop:

        (d_x d_y cos chi / d) * (1 / (2 pi d) - j / lambda) * e^{j 2 pi d / lambda}
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    diff = dst - src
    d = float(np.linalg.norm(diff))
    if d == 0.0:
        raise ValueError("propagation distance is zero (coincident src/dst)")
    cos_chi = abs(float(diff @ geom.layer_normal)) / d
    d_x, d_y = geom.atom_size_m
    lam = geom.wavelength_m
    amplitude = (d_x * d_y * cos_chi / d) * (1.0 / (TWO_PI * d) - 1j / lam)
    return amplitude * np.exp(1j * TWO_PI * d / lam)


def _pairwise_coefficients(src_pos: np.ndarray, dst_pos: np.ndarray,
                           geom: SimGeometry) -> np.ndarray:
    """Vectorized propagation_coefficient over all (dst, src) pairs."""
    diff = dst_pos[:, None, :] - src_pos[None, :, :]
    d = np.linalg.norm(diff, axis=2)
    if np.any(d == 0.0):
        raise ValueError("propagation distance is zero (coincident planes)")
    cos_chi = np.abs(diff @ geom.layer_normal) / d
    d_x, d_y = geom.atom_size_m
    lam = geom.wavelength_m
    amplitude = (d_x * d_y * cos_chi / d) * (1.0 / (TWO_PI * d) - 1j / lam)
    return amplitude * np.exp(1j * TWO_PI * d / lam)


def build_transmission_matrices(geom: SimGeometry) -> PropagationSet:
    """All fixed coupling matrices of one stack.

    w_first[n, a] couples feed antenna a to first-layer atom n; w_inter[m-2]
    couples layer m-1 to layer m. Agents with identical geometry share the
    result (compute once, reference L times).
    """
    w_first = _pairwise_coefficients(geom.ap_antenna_positions, geom.atom_positions[0], geom)
    n = geom.atoms_per_layer
    w_inter = np.zeros((geom.layer_count - 1, n, n), dtype=np.complex128)
    for m in range(1, geom.layer_count):
        w_inter[m - 1] = _pairwise_coefficients(
            geom.atom_positions[m - 1], geom.atom_positions[m], geom
        )
    return PropagationSet(w_first=w_first, w_inter=w_inter)


def phase_matrix(pc: PhaseConfig, agent: int, layer: int) -> np.ndarray:
    """Diagonal unit-modulus phase matrix of one layer, shape (N, N)."""
    return np.diag(np.exp(1j * pc.phases[agent, layer]))


def beamforming_matrix(pc: PhaseConfig, ps: PropagationSet, agent: int) -> np.ndarray:
    """Cascaded wave-domain beamforming matrix of one agent's stack.

    Product over layers, rightmost factor first:
    diag(e^{j phi_M}) W_M ... W_2 diag(e^{j phi_1}); equals the bare phase
    matrix when M = 1.
    """
    phases = pc.phases[agent]
    n = phases.shape[1]
    if ps.w_inter.shape[0] != phases.shape[0] - 1 or (
        ps.w_inter.shape[0] and ps.w_inter.shape[1] != n
    ):
        raise ValueError(
            f"phase config ({phases.shape}) inconsistent with transmission "
            f"matrices ({ps.w_inter.shape})"
        )
    return kernels.cascade(phases, ps.w_inter)


def forward_matrix(pc: PhaseConfig, ps: PropagationSet, agent: int) -> np.ndarray:
    """Beamforming matrix applied to the feed coupling: G @ w_first, (N, M_AP)."""
    return kernels.cascade_apply(pc.phases[agent], ps.w_inter, ps.w_first)
