"""Network building blocks: dense layers, a gated recurrent cell, and
Gaussian policy heads with a state-independent learned log-std.
"""

from __future__ import annotations

import math

import numpy as np

from simcf.neural import autodiff as ad
from simcf.neural.autodiff import ParameterSet, Tensor

LOG_2PI = math.log(2.0 * math.pi)


def orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    """Orthogonal-style init (QR of a Gaussian, sign-fixed), scaled by gain."""
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Dense:
    """Affine layer y = x @ W + b with registered parameters."""

    def __init__(self, params: ParameterSet, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator, gain: float = math.sqrt(2.0)):
        self.w = params.register(f"{name}.w", orthogonal(rng, in_dim, out_dim, gain))
        self.b = params.register(f"{name}.b", np.zeros(out_dim))
        self.in_dim = in_dim
        self.out_dim = out_dim

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {x.shape}")
        return (x @ self.w) + self.b


class GRUCell:
    """Gated recurrent cell, reset-before-candidate convention.

    r = sig(x Wr + h Ur + br),  z = sig(x Wz + h Uz + bz)
    n = tanh(x Wn + bn + r * (h Un + cn)),  h' = (1 - z) * n + z * h
    """

    def __init__(self, params: ParameterSet, name: str, in_dim: int, hidden_dim: int,
                 rng: np.random.Generator):
        blocks_in = [orthogonal(rng, in_dim, hidden_dim, 1.0) for _ in range(3)]
        blocks_h = [orthogonal(rng, hidden_dim, hidden_dim, 1.0) for _ in range(3)]
        self.w_in = params.register(f"{name}.w_in", np.concatenate(blocks_in, axis=1))
        self.w_h = params.register(f"{name}.w_h", np.concatenate(blocks_h, axis=1))
        self.b_in = params.register(f"{name}.b_in", np.zeros(3 * hidden_dim))
        self.b_h = params.register(f"{name}.b_h", np.zeros(3 * hidden_dim))
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim

    def step(self, x: Tensor, h: Tensor) -> Tensor:
        if x.shape[-1] != self.in_dim or h.shape[-1] != self.hidden_dim:
            raise ValueError(
                f"expected dims ({self.in_dim}, {self.hidden_dim}), got {x.shape}, {h.shape}")
        nh = self.hidden_dim
        gi = (x @ self.w_in) + self.b_in
        gh = (h @ self.w_h) + self.b_h
        r = ad.sigmoid(gi[:, 0:nh] + gh[:, 0:nh])
        z = ad.sigmoid(gi[:, nh:2 * nh] + gh[:, nh:2 * nh])
        n = ad.tanh(gi[:, 2 * nh:3 * nh] + r * gh[:, 2 * nh:3 * nh])
        return (1.0 - z) * n + z * h


def gaussian_log_prob(mean: Tensor, log_std: Tensor, actions: np.ndarray) -> Tensor:
    """Log density of diagonal-Gaussian actions, summed over dimensions.

    mean: (B, A) graph tensor; log_std: (A,) parameter; actions: (B, A) data.
    """
    actions = ad.as_tensor(actions)
    z = (actions - mean) * ad.exp(-log_std)
    return (-0.5) * ad.tensor_sum(z * z, axis=1) - ad.tensor_sum(log_std) \
        - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_log_prob_np(mean: np.ndarray, log_std: np.ndarray,
                         actions: np.ndarray) -> np.ndarray:
    """Same arithmetic as gaussian_log_prob, plain numpy (rollout path)."""
    z = (actions - mean) * np.exp(-log_std)
    return -0.5 * (z * z).sum(axis=-1) - log_std.sum() - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_entropy(log_std: Tensor) -> Tensor:
    """Exact diagonal-Gaussian entropy: sum_d (log sigma_d + (1 + ln 2 pi)/2)."""
    dims = log_std.shape[-1]
    return ad.tensor_sum(log_std) + 0.5 * dims * (1.0 + LOG_2PI)


class GaussianRecurrentActor:
    """Policy network: dense encoder, gated recurrent cell, Gaussian head.

    The log-std is a learned state-independent vector. All agents share one
    instance; agent identity enters only through observation content.
    """

    def __init__(self, obs_dim: int, act_dim: int, hidden_dim: int = 64,
                 seed: int = 0, init_log_std: float = -0.5):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden_dim = hidden_dim
        rng = np.random.default_rng(seed)
        self.params = ParameterSet()
        self.encoder = Dense(self.params, "encoder", obs_dim, hidden_dim, rng)
        self.cell = GRUCell(self.params, "gru", hidden_dim, hidden_dim, rng)
        self.mean_head = Dense(self.params, "mean_head", hidden_dim, act_dim, rng, gain=0.01)
        self.log_std = self.params.register("log_std", np.full(act_dim, init_log_std))
        self.params.freeze()

    def initial_state(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.hidden_dim))

    def step(self, obs: Tensor | np.ndarray, hidden: Tensor | np.ndarray) -> tuple[Tensor, Tensor]:
        """One recurrent step: (mean (B, A), next hidden (B, H))."""
        obs = ad.as_tensor(obs)
        hidden = ad.as_tensor(hidden)
        encoded = ad.tanh(self.encoder(obs))
        next_hidden = self.cell.step(encoded, hidden)
        return self.mean_head(next_hidden), next_hidden

    def forward_sequence(self, obs_seq: np.ndarray, hidden0: np.ndarray
                         ) -> tuple[list[Tensor], Tensor, Tensor]:
        """Roll the policy over a (T, B, obs) sequence.

        Returns per-step mean tensors, the shared log-std tensor and the
        final hidden state. Chunked processing with carried hidden states
        reproduces the unchunked outputs exactly.
        """
        hidden: Tensor = ad.as_tensor(hidden0)
        means = []
        for t in range(obs_seq.shape[0]):
            mean_t, hidden = self.step(obs_seq[t], hidden)
            means.append(mean_t)
        return means, self.log_std, hidden

    def act(self, obs: np.ndarray, hidden: np.ndarray, rng: np.random.Generator | None,
            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Rollout-path action sampling (no graph).

        With rng=None the mean action is returned (deterministic execution).
        Returns (actions, log_probs, next_hidden) as plain arrays.
        """
        with ad.no_grad():
            mean_t, next_hidden = self.step(obs, hidden)
        mean_data = mean_t.data
        if rng is None:
            actions = mean_data.copy()
        else:
            std = np.exp(self.log_std.data)
            actions = mean_data + std * rng.standard_normal(mean_data.shape)
        log_probs = gaussian_log_prob_np(mean_data, self.log_std.data, actions)
        return actions, log_probs, next_hidden.data


class ValueNet:
    """Centralized value function: two tanh dense layers and a scalar head."""

    def __init__(self, in_dim: int, hidden_dim: int = 128, seed: int = 0):
        self.in_dim = in_dim
        rng = np.random.default_rng(seed)
        self.params = ParameterSet()
        self.fc1 = Dense(self.params, "fc1", in_dim, hidden_dim, rng)
        self.fc2 = Dense(self.params, "fc2", hidden_dim, hidden_dim, rng)
        self.head = Dense(self.params, "head", hidden_dim, 1, rng, gain=1.0)
        self.params.freeze()

    def __call__(self, x: Tensor | np.ndarray) -> Tensor:
        """Values for a (B, in_dim) batch, shape (B,)."""
        x = ad.as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected input dim {self.in_dim}, got {x.shape}")
        h = ad.tanh(self.fc1(x))
        h = ad.tanh(self.fc2(h))
        return ad.reshape(self.head(h), (-1,))

    def values_np(self, x: np.ndarray) -> np.ndarray:
        with ad.no_grad():
            return self(x).data
