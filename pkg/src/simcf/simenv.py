"""Shared-reward multi-agent environment around the downlink physics.

One agent per AP-stack group. Actions are absolute settings: each agent
re-issues its full phase configuration and power split every slot, which
keeps feasibility local to the decode step. The channel is block fading,
resampled at reset and held for the episode's T slots; the shared reward
is the network sum spectral efficiency of the applied joint configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from simcf import channel as chmod
from simcf import emwave, kernels, sysmodel
from simcf.emwave import GeometryConfig, PhaseConfig, PropagationSet, SimGeometry
from simcf.sysmodel import NoiseModel, PowerAllocation

TWO_PI = 2.0 * math.pi

# seed-stream tags (mixed into the rng entropy, never overlapping)
_STREAM_LAYOUT = 0
_STREAM_CHANNEL = 1
_STREAM_INIT = 2


class PolicyDivergenceError(RuntimeError):
    """Raised when an agent emits non-finite raw actions."""


@dataclass(frozen=True)
class EnvConfig:
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    ap_count: int = 2
    ue_count: int = 2
    area_m: float = 100.0
    steps_per_episode: int = 20
    p_max_w: float = 10.0 ** ((3.0 - 30.0) / 10.0)     # 3 dBm
    sigma2_w: float = 10.0 ** ((-96.0 - 30.0) / 10.0)  # -96 dBm
    channel_mode: str = "rayleigh"
    resample_layout: bool = False   # fresh UE drop every episode when True
    include_w_context: bool = False  # append fixed coupling summary to the state
    pathloss_ref_db: float = chmod.PATHLOSS_REF_DB
    pathloss_slope_db: float = chmod.PATHLOSS_SLOPE_DB


@dataclass
class GlobalState:
    """Centralized-critic state: positions, fixed coupling context, last SINR."""

    layout: chmod.Layout
    prop: PropagationSet
    last_sinr: np.ndarray   # (K,), SINR of the most recently applied joint action
    step_index: int


@dataclass(frozen=True)
class LocalObservation:
    """Agent-local view: own channels, own power split, own phases.

    local_csi is the agent's equivalent channels (all UEs), interleaved
    real/imag and scaled by the agent's mean large-scale factor; own_power
    is scaled by sqrt(P_max); own_phases is (cos, sin) per atom. The vector
    length is fixed at 2KN + K*M_AP + 2MN.
    """

    local_csi: np.ndarray
    own_power: np.ndarray
    own_phases: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.local_csi, self.own_power, self.own_phases])


@dataclass(frozen=True)
class JointAction:
    """Raw (pre-squash) actor outputs for every agent."""

    raw_power: np.ndarray   # (L, K * M_AP)
    raw_phases: np.ndarray  # (L, M * N)

    @classmethod
    def from_flat(cls, flat: np.ndarray, ue_count: int, ap_antennas: int) -> "JointAction":
        power_dim = ue_count * ap_antennas
        flat = np.asarray(flat, dtype=np.float64)
        return cls(raw_power=flat[:, :power_dim], raw_phases=flat[:, power_dim:])


@dataclass(frozen=True)
class StepResult:
    next_obs: list
    shared_reward: float
    done: bool
    next_state: GlobalState


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


class SimEnv:
    """Single-writer episodic environment; run parallel copies for parallel
    rollouts, each with its own seed.
    """

    def __init__(self, cfg: EnvConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = int(seed)
        self.geometry: SimGeometry = emwave.build_geometry(cfg.geometry)
        # identical stacks at every AP share one propagation set
        self.prop: PropagationSet = emwave.build_transmission_matrices(self.geometry)
        self._fixed_layout = None
        if not cfg.resample_layout:
            self._fixed_layout = chmod.place_network(
                self._stream_seed(_STREAM_LAYOUT, 0), cfg.ap_count, cfg.ue_count, cfg.area_m)
        self._episode_counter = 0
        self._state: GlobalState | None = None
        self._w_context = self._coupling_context() if cfg.include_w_context else np.empty(0)
        # episode-scoped fields, set by reset()
        self.h_hat = None
        self.beta = None
        self.phases = None
        self.power = None
        self._csi_scale = None
        self._done = True

    # -- dimensions ------------------------------------------------------
    @property
    def agent_count(self) -> int:
        return self.cfg.ap_count

    @property
    def obs_dim(self) -> int:
        g = self.cfg.geometry
        k = self.cfg.ue_count
        return 2 * k * g.atoms_per_layer + k * g.ap_antenna_count \
            + 2 * g.layer_count * g.atoms_per_layer

    @property
    def act_dim(self) -> int:
        g = self.cfg.geometry
        return self.cfg.ue_count * g.ap_antenna_count + g.layer_count * g.atoms_per_layer

    @property
    def state_dim(self) -> int:
        return 2 * (self.cfg.ap_count + self.cfg.ue_count) + self.cfg.ue_count + 1 \
            + self._w_context.size

    # -- seeding ----------------------------------------------------------
    def _stream_seed(self, stream: int, episode_seed: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.seed, int(episode_seed), stream])

    # -- episode lifecycle -------------------------------------------------
    def reset(self, seed: int | None = None):
        """Start a new episode; returns (GlobalState, [LocalObservation] * L).

        With an explicit seed the episode (layout resample, channel draw,
        initial phases) is a pure function of (env seed, given seed), which
        is how evaluation and baselines share held-out channels.
        """
        cfg = self.cfg
        if seed is None:
            seed = self._episode_counter
            self._episode_counter += 1
        if cfg.resample_layout:
            layout_rng = np.random.default_rng(self._stream_seed(_STREAM_LAYOUT, seed))
            layout = chmod.place_network(
                int(layout_rng.integers(2 ** 62)), cfg.ap_count, cfg.ue_count, cfg.area_m)
        else:
            layout = self._fixed_layout
        ls = chmod.large_scale(layout, cfg.pathloss_ref_db, cfg.pathloss_slope_db)
        self.beta = ls.beta
        channel_rng = np.random.default_rng(self._stream_seed(_STREAM_CHANNEL, seed))
        realization = chmod.sample_channel(
            ls, cfg.geometry.atoms_per_layer, int(channel_rng.integers(2 ** 62)),
            mode=cfg.channel_mode)
        self.h_hat = realization.h_hat
        # observation scaling: per-agent mean pathloss, fixed per episode
        self._csi_scale = 1.0 / np.sqrt(self.beta.mean(axis=1))

        init_rng = np.random.default_rng(self._stream_seed(_STREAM_INIT, seed))
        g = cfg.geometry
        self.phases = init_rng.uniform(
            0.0, TWO_PI, (cfg.ap_count, g.layer_count, g.atoms_per_layer))
        # even split: P_max / K per UE, spread across the AP's antennas
        amp = math.sqrt(cfg.p_max_w / (cfg.ue_count * g.ap_antenna_count))
        self.power = np.full((cfg.ap_count, cfg.ue_count, g.ap_antenna_count), amp)

        gamma = self._evaluate()[1]
        self._state = GlobalState(layout=layout, prop=self.prop,
                                  last_sinr=gamma, step_index=0)
        self._done = False
        return self._state, self._observations()

    def action_decode(self, raw_power: np.ndarray, raw_phases: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
        """Map one agent's raw outputs onto the feasible set.

        Phases: pi * (tanh(x) + 1), wrapped into [0, 2pi). Power: softplus
        amplitudes projected onto the AP's sum-power ball.
        """
        raw_power = np.asarray(raw_power, dtype=np.float64)
        raw_phases = np.asarray(raw_phases, dtype=np.float64)
        if not (np.all(np.isfinite(raw_power)) and np.all(np.isfinite(raw_phases))):
            raise PolicyDivergenceError("non-finite raw action (diverged policy)")
        g = self.cfg.geometry
        phases = np.mod(math.pi * (np.tanh(raw_phases) + 1.0),
                        TWO_PI).reshape(g.layer_count, g.atoms_per_layer)
        amps = softplus(raw_power).reshape(self.cfg.ue_count, g.ap_antenna_count)
        projected = sysmodel.project_power(
            PowerAllocation(p=amps[None]), self.cfg.p_max_w)
        return projected.p[0], phases

    def step(self, actions: JointAction) -> StepResult:
        """Apply the joint action, pay out the shared sum-SE reward."""
        if self._done or self._state is None:
            raise RuntimeError("step() after episode end; call reset() first")
        cfg = self.cfg
        for l in range(cfg.ap_count):
            power_l, phases_l = self.action_decode(
                actions.raw_power[l], actions.raw_phases[l])
            self.power[l] = power_l
            self.phases[l] = phases_l
        rates, gamma = self._evaluate()
        reward = sysmodel.sum_se(rates)
        t_next = self._state.step_index + 1
        self._state = GlobalState(layout=self._state.layout, prop=self.prop,
                                  last_sinr=gamma, step_index=t_next)
        self._done = t_next >= cfg.steps_per_episode
        return StepResult(next_obs=self._observations(), shared_reward=reward,
                          done=self._done, next_state=self._state)

    # -- feature builders --------------------------------------------------
    def _evaluate(self) -> tuple[np.ndarray, np.ndarray]:
        pc = PhaseConfig(self.phases)
        forward = np.stack([
            kernels.cascade_apply(pc.phases[l], self.prop.w_inter, self.prop.w_first)
            for l in range(self.cfg.ap_count)])
        gains = sysmodel.effective_gains(self.h_hat, forward)
        gamma = sysmodel.sinr(gains, PowerAllocation(p=self.power),
                              NoiseModel(sigma2=self.cfg.sigma2_w))
        return sysmodel.spectral_efficiency(gamma), gamma

    def _observations(self) -> list[LocalObservation]:
        power_scale = 1.0 / math.sqrt(self.cfg.p_max_w)
        obs = []
        for l in range(self.cfg.ap_count):
            csi = self.h_hat[l] * self._csi_scale[l]
            csi_vec = np.column_stack([csi.real.ravel(), csi.imag.ravel()]).ravel()
            phases = self.phases[l].ravel()
            phase_vec = np.column_stack([np.cos(phases), np.sin(phases)]).ravel()
            obs.append(LocalObservation(
                local_csi=csi_vec,
                own_power=self.power[l].ravel() * power_scale,
                own_phases=phase_vec))
        return obs

    def state_features(self, state: GlobalState | None = None) -> np.ndarray:
        """Flat critic input for the (noise-free) global state."""
        state = state or self._state
        area = self.cfg.area_m
        ap_xy = state.layout.ap_positions[:, :2].ravel() / area - 0.5
        ue_xy = state.layout.ue_positions[:, :2].ravel() / area - 0.5
        sinr_feat = np.log1p(state.last_sinr)
        progress = np.array([state.step_index / self.cfg.steps_per_episode])
        return np.concatenate([ap_xy, ue_xy, sinr_feat, progress, self._w_context])

    def _coupling_context(self) -> np.ndarray:
        """Fixed summary of the (constant) transmission matrices.

        The matrices never change within a run, so they enter the critic as
        a small constant embedding rather than being re-fed wholesale.
        """
        feats = []
        for mat in (self.prop.w_first, *self.prop.w_inter):
            mags = np.abs(mat)
            feats.extend([mags.mean(), mags.std(), float(np.abs(mat.sum()) / mat.size)])
        return np.asarray(feats)
