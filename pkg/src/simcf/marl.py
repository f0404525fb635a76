"""Multi-agent PPO with a recurrent actor and noise-augmented centralized
critic.

All agents share one actor and one critic (agent identity enters through
observation content). Each agent has a fixed Gaussian vector that is
concatenated, scaled by a noise weight, to the critic's state input; the
agent-to-vector assignment is reshuffled at a configurable interval so the
per-agent value estimates stay diverse during training. Execution is fully
decentralized: the deployed policy touches neither the critic nor the
noise bank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from simcf.neural import autodiff as ad
from simcf.neural.autodiff import Tensor
from simcf.neural.nets import (
    GaussianRecurrentActor,
    ValueNet,
    gaussian_entropy,
    gaussian_log_prob,
    gaussian_log_prob_np,
)
from simcf.neural.optim import Adam
from simcf.simenv import JointAction, SimEnv

# evaluation episodes draw channel seeds from a disjoint range so held-out
# channels can never collide with training episodes
EVAL_SEED_BASE = 1_000_000


class TrainingDivergedError(RuntimeError):
    """Raised when a loss turns non-finite; carries a diagnostic dump."""


@dataclass
class Hyperparams:
    clip: float = 0.2
    entropy_weight: float = 0.01
    noise_weight: float = 0.5
    noise_dim: int = 8
    discount: float = 0.99
    gae_lambda: float = 0.95
    batch_episodes: int = 5
    chunk_length: int = 10
    epochs: int = 5
    minibatches: int = 1
    nv_shuffle_interval: int = 1
    episodes: int = 200
    actor_lr: float = 3e-4
    critic_lr: float = 1e-3
    hidden_dim: int = 64
    critic_hidden_dim: int = 128
    init_log_std: float = -0.5
    max_grad_norm: float = 0.5
    advantage_norm: bool = True
    lr_anneal: bool = False   # linear decay of both learning rates to zero
    critic_sees_local_obs: bool = True  # share each agent's observation with the critic
    eval_episodes: int = 8
    eval_every: int = 1

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ValueError(f"clip must be in (0, 1), got {self.clip}")
        if self.entropy_weight < 0:
            raise ValueError("entropy_weight must be >= 0")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.batch_episodes < 1 or self.epochs < 1 or self.minibatches < 1:
            raise ValueError("batch_episodes, epochs and minibatches must be >= 1")
        if self.noise_dim < 1 or self.chunk_length < 1:
            raise ValueError("noise_dim and chunk_length must be >= 1")


class NoiseBank:
    """Per-agent critic noise vectors, sampled once per training run.

    The row contents are immutable; shuffling permutes the agent-to-row
    assignment. Stored row indices therefore keep referring to the exact
    vectors used when a value was computed.
    """

    def __init__(self, rows: np.ndarray, assignment: np.ndarray):
        self.rows = rows
        self.rows.setflags(write=False)
        self.assignment = np.asarray(assignment, dtype=np.int64)
        self.history: list[np.ndarray] = []

    @classmethod
    def sample(cls, agents: int, dim: int, rng: np.random.Generator) -> "NoiseBank":
        return cls(rows=rng.standard_normal((agents, dim)),
                   assignment=np.arange(agents))

    @property
    def x(self) -> np.ndarray:
        """Current (agent, dim) view; rows permute under shuffling."""
        return self.rows[self.assignment]

    def assigned_index(self, agent: int) -> int:
        return int(self.assignment[agent])

    def row(self, index: int) -> np.ndarray:
        return self.rows[index]


def shuffle_noise(bank: NoiseBank, seed) -> NoiseBank:
    """Uniformly permute the agent-to-row assignment (multiset preserved)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    perm = rng.permutation(len(bank.assignment))
    out = NoiseBank(rows=bank.rows, assignment=bank.assignment[perm])
    out.history = bank.history + [perm]
    return out


def noisy_value_input(state_features: np.ndarray, noise_row: np.ndarray,
                      noise_weight: float) -> np.ndarray:
    """Critic input: state features with the scaled agent noise appended."""
    return np.concatenate([state_features, noise_weight * noise_row])


def gae(rewards: np.ndarray, values: np.ndarray, bootstrap: float,
        discount: float, lam: float, dones: np.ndarray | None = None
        ) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one trajectory.

    delta_t = r_t + discount * v_{t+1} - v_t (v_T = bootstrap), and
    A_t = sum_i (discount * lam)^i delta_{t+i}, truncated at episode ends
    (dones[t] true means no bootstrap past step t). Returns (A, A + v).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    horizon = rewards.shape[0]
    if values.shape[0] != horizon:
        raise ValueError("rewards and values must have equal length")
    if dones is None:
        dones = np.zeros(horizon, dtype=bool)
    adv = np.zeros(horizon)
    running = 0.0
    for t in range(horizon - 1, -1, -1):
        if t == horizon - 1:
            next_value = bootstrap
        elif dones[t]:
            next_value, running = 0.0, 0.0
        else:
            next_value = values[t + 1]
        delta = rewards[t] + discount * next_value - values[t]
        running = delta + discount * lam * running
        adv[t] = running
    return adv, adv + values


def ppo_ratio(logp_new: Tensor, logp_old: np.ndarray
              ) -> tuple[Tensor, np.ndarray, int]:
    """Importance ratios exp(logp_new - logp_old).

    Non-finite ratios are dropped from the graph (selected out by index),
    counted, and surfaced through the returned mask.
    """
    diff = logp_new - np.asarray(logp_old, dtype=np.float64)
    valid = np.isfinite(diff.data) & (diff.data < 700.0)  # exp overflow guard
    dropped = int(valid.size - valid.sum())
    if dropped:
        ratio = ad.exp(diff[np.where(valid)[0]])
    else:
        ratio = ad.exp(diff)
    return ratio, valid, dropped


def actor_loss(ratio: Tensor, advantages: np.ndarray, clip_eps: float,
               entropy: Tensor, entropy_weight: float) -> Tensor:
    """Clipped-surrogate policy loss (to minimize) with entropy bonus.

    mean of -min(r * A, clip(r, 1-eps, 1+eps) * A) minus the weighted
    entropy; minimizing it maximizes the clipped objective.
    """
    advantages = np.asarray(advantages, dtype=np.float64)
    surrogate = ad.minimum(ratio * advantages,
                           ad.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages)
    return -ad.mean(surrogate) - entropy_weight * entropy


def critic_loss(values: Tensor, returns: np.ndarray) -> Tensor:
    """Mean squared error between predicted values and empirical returns."""
    err = values - np.asarray(returns, dtype=np.float64)
    return ad.mean(err * err)


class RolloutBuffer:
    """Fixed-capacity store of whole episodes (capacity = batch_episodes).

    Per (episode, step, agent): observation, state features, raw action,
    behavior log-prob, shared reward, value, pre-step hidden state; plus
    the noise row index each agent used for the episode.
    """

    def __init__(self, capacity: int, steps: int, agents: int,
                 obs_dim: int, act_dim: int, state_dim: int, hidden_dim: int):
        self.capacity = capacity
        self.steps = steps
        self.agents = agents
        self.obs = np.zeros((capacity, steps, agents, obs_dim))
        self.state = np.zeros((capacity, steps, state_dim))
        self.actions = np.zeros((capacity, steps, agents, act_dim))
        self.logp = np.zeros((capacity, steps, agents))
        self.rewards = np.zeros((capacity, steps))
        self.values = np.zeros((capacity, steps, agents))
        self.hidden = np.zeros((capacity, steps, agents, hidden_dim))
        self.dones = np.zeros((capacity, steps), dtype=bool)
        self.noise_idx = np.zeros((capacity, agents), dtype=np.int64)
        self.size = 0

    @property
    def full(self) -> bool:
        return self.size >= self.capacity

    def add_episode(self, obs, state, actions, logp, rewards, values, hidden,
                    dones, noise_idx):
        if self.full:
            raise RuntimeError("rollout buffer full; update before collecting more")
        e = self.size
        self.obs[e] = obs
        self.state[e] = state
        self.actions[e] = actions
        self.logp[e] = logp
        self.rewards[e] = rewards
        self.values[e] = values
        self.hidden[e] = hidden
        self.dones[e] = dones
        self.noise_idx[e] = noise_idx
        self.size += 1

    def clear(self):
        self.size = 0


def _clip_gradients(params, max_norm: float):
    if max_norm <= 0:
        return
    total = 0.0
    for _, t in params.items():
        if t.grad is not None:
            total += float((t.grad ** 2).sum())
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for _, t in params.items():
            if t.grad is not None:
                t.grad = t.grad * scale


@dataclass
class UpdateStats:
    actor_loss: float = 0.0
    critic_loss: float = 0.0
    entropy: float = 0.0
    clip_fraction: float = 0.0
    dropped_ratios: int = 0


class Trainer:
    """Centralized training, decentralized execution of the downlink task."""

    def __init__(self, env_factory, hp: Hyperparams, seed: int = 0):
        self.hp = hp
        self.seed = int(seed)
        self.env: SimEnv = env_factory(seed)
        self.eval_env: SimEnv = env_factory(seed)
        self.agents = self.env.agent_count
        self.steps = self.env.cfg.steps_per_episode

        def child(tag: int) -> int:
            return int(np.random.SeedSequence([self.seed, tag]).generate_state(1)[0])

        self.actor = GaussianRecurrentActor(
            obs_dim=self.env.obs_dim, act_dim=self.env.act_dim,
            hidden_dim=hp.hidden_dim, seed=child(1), init_log_std=hp.init_log_std)
        # the critic sees the global state, optionally the agent's shared
        # local observation, and the agent's scaled noise vector
        self._critic_state_dim = self.env.state_dim \
            + (self.env.obs_dim if hp.critic_sees_local_obs else 0)
        self.critic = ValueNet(
            in_dim=self._critic_state_dim + hp.noise_dim,
            hidden_dim=hp.critic_hidden_dim, seed=child(2))
        self.bank = NoiseBank.sample(self.agents, hp.noise_dim,
                                     np.random.default_rng(child(3)))
        self._action_rng = np.random.default_rng(child(4))
        self._shuffle_rng = np.random.default_rng(child(5))
        self._batch_rng = np.random.default_rng(child(6))
        self.actor_opt = Adam(self.actor.params, lr=hp.actor_lr)
        self.critic_opt = Adam(self.critic.params, lr=hp.critic_lr)
        self.buffer = RolloutBuffer(
            capacity=hp.batch_episodes, steps=self.steps, agents=self.agents,
            obs_dim=self.env.obs_dim, act_dim=self.env.act_dim,
            state_dim=self.env.state_dim, hidden_dim=hp.hidden_dim)
        self.update_rounds = 0

    # -- rollout ---------------------------------------------------------
    def _critic_state(self, state_features: np.ndarray, obs_row: np.ndarray) -> np.ndarray:
        if self.hp.critic_sees_local_obs:
            return np.concatenate([state_features, obs_row])
        return state_features

    def _agent_values(self, state_features: np.ndarray, obs_mat: np.ndarray) -> np.ndarray:
        """Centralized values, one per agent, using the current assignment."""
        rows = np.stack([
            noisy_value_input(self._critic_state(state_features, obs_mat[l]),
                              self.bank.row(self.bank.assigned_index(l)),
                              self.hp.noise_weight)
            for l in range(self.agents)])
        return self.critic.values_np(rows)

    def collect_episode(self) -> float:
        """Roll one episode into the buffer; returns its mean shared reward."""
        env, hp = self.env, self.hp
        _, obs_list = env.reset()
        obs_mat = np.stack([o.as_vector() for o in obs_list])
        hidden = self.actor.initial_state(self.agents)
        noise_idx = self.bank.assignment.copy()

        ep = {name: np.zeros_like(buf[0]) for name, buf in (
            ("obs", self.buffer.obs), ("state", self.buffer.state),
            ("actions", self.buffer.actions), ("logp", self.buffer.logp),
            ("rewards", self.buffer.rewards), ("values", self.buffer.values),
            ("hidden", self.buffer.hidden))}
        dones = np.zeros(self.steps, dtype=bool)

        for t in range(self.steps):
            state_features = env.state_features()
            actions, logp, next_hidden = self.actor.act(obs_mat, hidden, self._action_rng)
            result = env.step(JointAction.from_flat(
                actions, env.cfg.ue_count, env.cfg.geometry.ap_antenna_count))
            ep["obs"][t] = obs_mat
            ep["state"][t] = state_features
            ep["actions"][t] = actions
            ep["logp"][t] = logp
            ep["rewards"][t] = result.shared_reward
            ep["values"][t] = self._agent_values(state_features, obs_mat)
            ep["hidden"][t] = hidden
            dones[t] = result.done
            obs_mat = np.stack([o.as_vector() for o in result.next_obs])
            hidden = next_hidden

        self.buffer.add_episode(ep["obs"], ep["state"], ep["actions"], ep["logp"],
                                ep["rewards"], ep["values"], ep["hidden"],
                                dones, noise_idx)
        return float(ep["rewards"].mean())

    # -- update ----------------------------------------------------------
    def _advantages(self) -> tuple[np.ndarray, np.ndarray]:
        """(episodes, steps, agents) advantages and returns via GAE.

        Every agent's advantage at (episode, step) is computed from the
        same shared reward scalar; values differ through the noise rows.
        """
        buf, hp = self.buffer, self.hp
        adv = np.zeros((buf.size, self.steps, self.agents))
        ret = np.zeros_like(adv)
        for e in range(buf.size):
            for l in range(self.agents):
                adv[e, :, l], ret[e, :, l] = gae(
                    buf.rewards[e], buf.values[e, :, l], bootstrap=0.0,
                    discount=hp.discount, lam=hp.gae_lambda, dones=buf.dones[e])
        return adv, ret

    def _chunks(self) -> list[tuple[int, int, int]]:
        """(episode, agent, chunk start) triples covering the buffer."""
        starts = range(0, self.steps, self.hp.chunk_length)
        return [(e, l, s) for e in range(self.buffer.size)
                for l in range(self.agents) for s in starts]

    def update(self) -> UpdateStats:
        """One optimization round over the collected batch (Adam, clipped
        surrogate for the actor, squared error for the critic)."""
        buf, hp = self.buffer, self.hp
        adv, ret = self._advantages()
        if hp.advantage_norm:
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)

        chunks = self._chunks()
        stats = UpdateStats()
        samples_seen = 0
        clipped_seen = 0.0

        for _ in range(hp.epochs):
            order = self._batch_rng.permutation(len(chunks))
            for mb in np.array_split(order, hp.minibatches):
                if mb.size == 0:
                    continue
                selected = [chunks[i] for i in mb]
                stats_mb = self._update_minibatch(selected, adv, ret)
                weight = len(selected)
                stats.actor_loss = stats_mb.actor_loss
                stats.critic_loss = stats_mb.critic_loss
                stats.entropy = stats_mb.entropy
                stats.dropped_ratios += stats_mb.dropped_ratios
                clipped_seen += stats_mb.clip_fraction * weight
                samples_seen += weight
        stats.clip_fraction = clipped_seen / max(samples_seen, 1)
        self.buffer.clear()
        self.update_rounds += 1
        return stats

    def _update_minibatch(self, selected, adv, ret) -> UpdateStats:
        buf, hp = self.buffer, self.hp
        n = len(selected)
        lengths = [min(hp.chunk_length, self.steps - s) for (_, _, s) in selected]
        c_len = max(lengths)

        obs_seq = np.zeros((c_len, n, self.env.obs_dim))
        act_seq = np.zeros((c_len, n, self.env.act_dim))
        logp_old = np.zeros((c_len, n))
        adv_seq = np.zeros((c_len, n))
        ret_seq = np.zeros((c_len, n))
        critic_in = np.zeros((c_len, n, self._critic_state_dim + hp.noise_dim))
        h0 = np.zeros((n, hp.hidden_dim))
        for i, (e, l, s) in enumerate(selected):
            span = slice(s, s + lengths[i])
            obs_seq[:lengths[i], i] = buf.obs[e, span, l]
            act_seq[:lengths[i], i] = buf.actions[e, span, l]
            logp_old[:lengths[i], i] = buf.logp[e, span, l]
            adv_seq[:lengths[i], i] = adv[e, span, l]
            ret_seq[:lengths[i], i] = ret[e, span, l]
            noise = hp.noise_weight * self.bank.row(int(buf.noise_idx[e, l]))
            for t in range(lengths[i]):
                critic_in[t, i] = np.concatenate([
                    self._critic_state(buf.state[e, s + t], buf.obs[e, s + t, l]), noise])
            h0[i] = buf.hidden[e, s, l]
        # fixed-length episodes split into equal chunks; guard anyway
        assert all(length == c_len for length in lengths)

        # actor: refresh hidden states along each chunk, then the clipped loss
        means, log_std, _ = self.actor.forward_sequence(obs_seq, h0)
        logp_new = ad.concat([gaussian_log_prob(m, log_std, act_seq[t])
                              for t, m in enumerate(means)])
        ratio, valid, dropped = ppo_ratio(logp_new, logp_old.ravel())
        flat_adv = adv_seq.ravel()
        if dropped:
            flat_adv = flat_adv[valid]
        entropy = gaussian_entropy(log_std)
        a_loss = actor_loss(ratio, flat_adv, hp.clip, entropy, hp.entropy_weight)

        self.actor_opt.zero_grad()
        a_loss.backward()
        _clip_gradients(self.actor.params, hp.max_grad_norm)
        self.actor_opt.step()

        # critic: squared error against the GAE returns, matching noise rows
        values = self.critic(critic_in.reshape(-1, critic_in.shape[-1]))
        c_loss = critic_loss(values, ret_seq.ravel())
        self.critic_opt.zero_grad()
        c_loss.backward()
        _clip_gradients(self.critic.params, hp.max_grad_norm)
        self.critic_opt.step()

        if not (np.isfinite(a_loss.data) and np.isfinite(c_loss.data)):
            raise TrainingDivergedError(
                f"non-finite loss (actor={float(a_loss.data)}, critic={float(c_loss.data)}); "
                f"round={self.update_rounds}, |actor params|="
                f"{np.linalg.norm(self.actor.params.get_flat()):.3e}, |critic params|="
                f"{np.linalg.norm(self.critic.params.get_flat()):.3e}")

        clip_frac = float(np.mean(np.abs(ratio.data - 1.0) > hp.clip))
        return UpdateStats(actor_loss=float(a_loss.data), critic_loss=float(c_loss.data),
                           entropy=float(entropy.data), clip_fraction=clip_frac,
                           dropped_ratios=dropped)

    # -- evaluation --------------------------------------------------------
    def evaluate(self, episodes: int | None = None) -> float:
        episodes = self.hp.eval_episodes if episodes is None else episodes
        return evaluate_policy(self.actor, self.eval_env, episodes)

    # -- training loop -------------------------------------------------------
    def train(self) -> list[dict]:
        """Run the full loop; returns one metrics row per episode."""
        hp = self.hp
        rows = []
        last = UpdateStats()
        last_eval = float("nan")
        for episode in range(hp.episodes):
            mean_reward = self.collect_episode()
            if self.buffer.full:
                if hp.lr_anneal:
                    frac = 1.0 - episode / hp.episodes
                    self.actor_opt.state.lr = hp.actor_lr * frac
                    self.critic_opt.state.lr = hp.critic_lr * frac
                if self.update_rounds % hp.nv_shuffle_interval == 0:
                    self.bank = shuffle_noise(self.bank, self._shuffle_rng)
                last = self.update()
            if hp.eval_every > 0 and episode % hp.eval_every == 0:
                last_eval = self.evaluate()
            rows.append({
                "episode": episode,
                "mean_reward": mean_reward,
                "sum_se_eval": last_eval,
                "actor_loss": last.actor_loss,
                "critic_loss": last.critic_loss,
                "entropy": last.entropy,
                "ratio_clip_fraction": last.clip_fraction,
            })
        return rows

    def checkpoint_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, t in self.actor.params.items():
            out[f"actor/{name}"] = t.data.copy()
        for name, t in self.critic.params.items():
            out[f"critic/{name}"] = t.data.copy()
        return out


def evaluate_policy(actor: GaussianRecurrentActor, env: SimEnv, episodes: int,
                    seed_base: int = EVAL_SEED_BASE) -> float:
    """Deterministic (mean-action) rollouts on held-out channels.

    Decentralized execution path: no critic, no noise, no sampling. Scores
    each channel by the final slot's sum SE and averages over channels.
    """
    if episodes <= 0:
        return float("nan")
    finals = []
    for i in range(episodes):
        _, obs_list = env.reset(seed=seed_base + i)
        obs_mat = np.stack([o.as_vector() for o in obs_list])
        hidden = actor.initial_state(env.agent_count)
        reward = 0.0
        for _ in range(env.cfg.steps_per_episode):
            actions, _, hidden = actor.act(obs_mat, hidden, rng=None)
            result = env.step(JointAction.from_flat(
                actions, env.cfg.ue_count, env.cfg.geometry.ap_antenna_count))
            obs_mat = np.stack([o.as_vector() for o in result.next_obs])
            reward = result.shared_reward
        finals.append(reward)
    return float(np.mean(finals))


def train(env_factory, hp: Hyperparams, seed: int = 0
          ) -> tuple[dict[str, np.ndarray], list[dict]]:
    """Convenience wrapper: build a Trainer, run it, return
    (checkpoint tensors, per-episode metrics rows)."""
    trainer = Trainer(env_factory, hp, seed=seed)
    rows = trainer.train()
    return trainer.checkpoint_arrays(), rows
