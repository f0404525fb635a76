"""Trainer machinery: noise bank, GAE, PPO losses, buffer bookkeeping."""

import math

import numpy as np
import pytest

import oracles
from simcf import marl
from simcf.marl import (
    Hyperparams,
    NoiseBank,
    Trainer,
    actor_loss,
    critic_loss,
    gae,
    noisy_value_input,
    ppo_ratio,
    shuffle_noise,
)
from simcf.neural import autodiff as ad
from simcf.neural import ParameterSet, gaussian_entropy, gradients
from simcf.simenv import EnvConfig, SimEnv


def tiny_hp(**over):
    defaults = dict(batch_episodes=2, episodes=4, eval_episodes=2, eval_every=2,
                    chunk_length=5, epochs=2, noise_dim=3)
    defaults.update(over)
    return Hyperparams(**defaults)


def tiny_env_factory(seed):
    from simcf.emwave import GeometryConfig
    cfg = EnvConfig(geometry=GeometryConfig(layer_count=1, atoms_per_layer=4,
                                            ap_antenna_count=2),
                    ap_count=2, ue_count=2, steps_per_episode=10)
    return SimEnv(cfg, seed=seed)


class TestHyperparams:
    def test_validation(self):
        with pytest.raises(ValueError, match="clip"):
            Hyperparams(clip=1.5)
        with pytest.raises(ValueError, match="discount"):
            Hyperparams(discount=0.0)
        with pytest.raises(ValueError, match="gae_lambda"):
            Hyperparams(gae_lambda=-0.1)
        with pytest.raises(ValueError, match="entropy"):
            Hyperparams(entropy_weight=-1.0)
        with pytest.raises(ValueError, match=">= 1"):
            Hyperparams(batch_episodes=0)


class TestNoiseBank:
    def test_noisy_value_input_zero_weight(self):
        out = noisy_value_input(np.array([1.0, 2.0]), np.array([3.0, -4.0]), 0.0)
        np.testing.assert_array_equal(out, [1.0, 2.0, 0.0, 0.0])

    def test_noisy_value_input_unit_weight(self):
        out = noisy_value_input(np.array([9.0]), np.array([1.0, -1.0]), 1.0)
        np.testing.assert_array_equal(out[-2:], [1.0, -1.0])

    def test_noisy_value_input_length(self):
        out = noisy_value_input(np.zeros(7), np.zeros(5), 0.3)
        assert out.shape == (12,)

    def test_shuffle_single_agent_unchanged(self):
        bank = NoiseBank.sample(1, 4, np.random.default_rng(0))
        out = shuffle_noise(bank, 5)
        np.testing.assert_array_equal(out.x, bank.x)

    def test_shuffle_preserves_row_multiset(self):
        bank = NoiseBank.sample(6, 4, np.random.default_rng(1))
        out = shuffle_noise(bank, 7)
        before = np.sort(bank.x.sum(axis=1))
        after = np.sort(out.x.sum(axis=1))
        np.testing.assert_allclose(after, before)

    def test_shuffle_fixed_seed_fixed_permutation(self):
        bank = NoiseBank.sample(5, 4, np.random.default_rng(2))
        a = shuffle_noise(bank, 11)
        b = shuffle_noise(bank, 11)
        np.testing.assert_array_equal(a.assignment, b.assignment)

    def test_rows_immutable(self):
        bank = NoiseBank.sample(3, 4, np.random.default_rng(3))
        with pytest.raises(ValueError):
            bank.rows[0, 0] = 1.0


class TestGae:
    def test_lambda_zero_is_td_error(self):
        rng = np.random.default_rng(4)
        r, v = rng.standard_normal(8), rng.standard_normal(8)
        adv, _ = gae(r, v, bootstrap=0.3, discount=0.9, lam=0.0)
        ext = np.append(v, 0.3)
        np.testing.assert_allclose(adv, r + 0.9 * ext[1:] - v, rtol=1e-12)

    def test_lambda_one_zero_values_is_reward_to_go(self):
        r = np.array([1.0, 2.0, 3.0])
        adv, ret = gae(r, np.zeros(3), bootstrap=0.0, discount=0.5, lam=1.0)
        want = [1.0 + 0.5 * 2.0 + 0.25 * 3.0, 2.0 + 0.5 * 3.0, 3.0]
        np.testing.assert_allclose(adv, want, rtol=1e-12)
        np.testing.assert_allclose(ret, want, rtol=1e-12)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(1, 11))
            r = rng.standard_normal(n)
            v = rng.standard_normal(n)
            boot = float(rng.standard_normal())
            disc = float(rng.uniform(0.8, 1.0))
            lam = float(rng.uniform(0.0, 1.0))
            adv, ret = gae(r, v, boot, disc, lam)
            adv_o, ret_o = oracles.gae_naive(r.tolist(), v.tolist(), boot, disc, lam)
            np.testing.assert_allclose(adv, adv_o, rtol=1e-10, atol=1e-12)
            np.testing.assert_allclose(ret, ret_o, rtol=1e-10, atol=1e-12)

    def test_mid_trajectory_done_resets(self):
        r = np.array([1.0, 1.0, 1.0, 1.0])
        v = np.zeros(4)
        dones = np.array([False, True, False, False])
        adv, _ = gae(r, v, bootstrap=0.0, discount=1.0, lam=1.0, dones=dones)
        np.testing.assert_allclose(adv, [2.0, 1.0, 2.0, 1.0])


class TestPpoRatio:
    def test_equal_log_probs_give_unity(self):
        logp = ad.as_tensor(np.array([-1.0, -2.0, 0.5]))
        ratio, valid, dropped = ppo_ratio(logp, logp.data.copy())
        np.testing.assert_allclose(ratio.data, 1.0, rtol=1e-15)
        assert dropped == 0 and valid.all()

    def test_log_two_gap_doubles(self):
        new = ad.as_tensor(np.array([math.log(2.0)]))
        ratio, _, _ = ppo_ratio(new, np.array([0.0]))
        assert ratio.data[0] == pytest.approx(2.0, rel=1e-12)

    def test_non_finite_dropped_and_counted(self):
        new = ad.as_tensor(np.array([0.0, np.nan, 1.0, np.inf]))
        ratio, valid, dropped = ppo_ratio(new, np.zeros(4))
        assert dropped == 2
        np.testing.assert_array_equal(valid, [True, False, True, False])
        assert ratio.data.shape == (2,)
        assert np.all(np.isfinite(ratio.data))


class TestActorLoss:
    def _entropy(self, val=0.0):
        return ad.as_tensor(np.float64(val))

    def test_unit_ratios_reduce_to_mean_advantage(self):
        adv = np.array([0.5, -1.0, 2.0])
        ratio = ad.as_tensor(np.ones(3))
        loss = actor_loss(ratio, adv, clip_eps=0.2, entropy=self._entropy(1.3),
                          entropy_weight=0.01)
        assert float(loss.data) == pytest.approx(-adv.mean() - 0.01 * 1.3, rel=1e-12)

    def test_positive_advantage_capped_by_clip(self):
        eps = 0.2
        adv = np.array([1.0])
        ratio = ad.as_tensor(np.array([1.0 + 2 * eps]))
        loss = actor_loss(ratio, adv, clip_eps=eps, entropy=self._entropy(),
                          entropy_weight=0.0)
        assert float(loss.data) == pytest.approx(-(1.0 + eps), rel=1e-12)

    def test_zero_advantage_zero_entropy_zero_loss_and_grad(self):
        ps = ParameterSet()
        logits = ps.register("logits", np.array([0.3, -0.4]))
        ratio = ad.exp(logits - logits.detach())
        loss = actor_loss(ratio, np.zeros(2), clip_eps=0.2,
                          entropy=self._entropy(), entropy_weight=0.0)
        grads = gradients(loss, ps)
        assert float(loss.data) == 0.0
        np.testing.assert_array_equal(grads["logits"], np.zeros(2))

    def test_unclipped_region_identity(self):
        # for |r - 1| <= eps the surrogate equals r * A exactly
        eps = 0.2
        r_grid = np.linspace(0.8, 1.2, 21)
        adv = np.full_like(r_grid, 0.7)
        ratio = ad.as_tensor(r_grid)
        loss = actor_loss(ratio, adv, clip_eps=eps, entropy=self._entropy(),
                          entropy_weight=0.0)
        assert float(loss.data) == pytest.approx(-np.mean(r_grid * adv), rel=1e-12)

    def test_clip_bound_envelope(self):
        rng = np.random.default_rng(6)
        r = rng.uniform(0.0, 3.0, 500)
        adv = rng.standard_normal(500)
        eps = 0.2
        surrogate = np.minimum(r * adv, np.clip(r, 1 - eps, 1 + eps) * adv)
        envelope = np.clip(r, 1 - eps, 1 + eps) * np.abs(adv) + np.abs(adv)
        assert np.all(surrogate <= envelope + 1e-12)
        inside = np.abs(r - 1) <= eps
        np.testing.assert_allclose(surrogate[inside], (r * adv)[inside], rtol=1e-12)

    def test_finite_difference_gradient(self):
        rng = np.random.default_rng(7)
        ps = ParameterSet()
        logp = ps.register("logp", rng.standard_normal(6) * 0.1)
        log_std = ps.register("log_std", rng.uniform(-1, 0, 3))
        logp_old = logp.data + rng.standard_normal(6) * 0.05
        adv = rng.standard_normal(6)

        def loss():
            ratio, _, _ = ppo_ratio(logp, logp_old)
            return actor_loss(ratio, adv, clip_eps=0.2,
                              entropy=gaussian_entropy(log_std), entropy_weight=0.01)

        from test_neural import assert_grad_close
        assert_grad_close(ps, loss)


class TestCriticLoss:
    def test_exact_fit_zero(self):
        v = ad.as_tensor(np.array([1.0, -2.0]))
        assert float(critic_loss(v, v.data.copy()).data) == 0.0

    def test_constant_offset_squares(self):
        v = ad.as_tensor(np.full(5, 2.5))
        loss = critic_loss(v, np.full(5, 1.5))
        assert float(loss.data) == pytest.approx(1.0, rel=1e-14)

    def test_random_batch_matches_hand_sum(self):
        rng = np.random.default_rng(8)
        v = rng.standard_normal(48)
        r = rng.standard_normal(48)
        loss = critic_loss(ad.as_tensor(v), r)
        want = sum((a - b) ** 2 for a, b in zip(v, r)) / 48
        assert float(loss.data) == pytest.approx(want, rel=1e-12)

    def test_finite_difference_gradient(self):
        rng = np.random.default_rng(9)
        ps = ParameterSet()
        v = ps.register("v", rng.standard_normal(10))
        target = rng.standard_normal(10)

        def loss():
            return critic_loss(v, target)

        from test_neural import assert_grad_close
        assert_grad_close(ps, loss)


class TestTrainerMechanics:
    def test_first_epoch_ratios_are_unity(self):
        trainer = Trainer(tiny_env_factory, tiny_hp(), seed=3)
        for _ in range(trainer.hp.batch_episodes):
            trainer.collect_episode()
        buf = trainer.buffer
        for (e, l, s) in trainer._chunks():
            span = slice(s, s + trainer.hp.chunk_length)
            means, log_std, _ = trainer.actor.forward_sequence(
                buf.obs[e, span, l][:, None, :], buf.hidden[e, s, l][None, :])
            from simcf.neural import gaussian_log_prob
            logp_new = ad.concat([gaussian_log_prob(m, log_std, buf.actions[e, s + t, l][None, :])
                                  for t, m in enumerate(means)])
            ratio, _, dropped = ppo_ratio(logp_new, buf.logp[e, span, l])
            assert dropped == 0
            np.testing.assert_allclose(ratio.data, 1.0, atol=1e-10)

    def test_buffer_values_match_stored_noise_rows(self):
        trainer = Trainer(tiny_env_factory, tiny_hp(), seed=4)
        for _ in range(trainer.hp.batch_episodes):
            trainer.collect_episode()
        # shuffle afterwards; stored indices must still reproduce the values
        trainer.bank = shuffle_noise(trainer.bank, trainer._shuffle_rng)
        buf = trainer.buffer
        for e in range(buf.size):
            for t in range(trainer.steps):
                for l in range(trainer.agents):
                    row = trainer.bank.row(int(buf.noise_idx[e, l]))
                    feed = noisy_value_input(
                        trainer._critic_state(buf.state[e, t], buf.obs[e, t, l]),
                        row, trainer.hp.noise_weight)
                    got = trainer.critic.values_np(feed[None, :])[0]
                    assert got == pytest.approx(buf.values[e, t, l], abs=1e-12)

    def test_shared_reward_symmetry_in_advantages(self):
        trainer = Trainer(tiny_env_factory, tiny_hp(), seed=5)
        for _ in range(trainer.hp.batch_episodes):
            trainer.collect_episode()
        # all agents see the same rewards; force equal values and the
        # advantages must coincide exactly
        trainer.buffer.values[:] = trainer.buffer.values[:, :, :1]
        adv, _ = trainer._advantages()
        for l in range(1, trainer.agents):
            np.testing.assert_array_equal(adv[:, :, l], adv[:, :, 0])

    def test_training_runs_and_is_deterministic(self):
        rows_a = marl.train(tiny_env_factory, tiny_hp(), seed=6)[1]
        rows_b = marl.train(tiny_env_factory, tiny_hp(), seed=6)[1]
        assert rows_a == rows_b
        assert len(rows_a) == 4
        for row in rows_a:
            for key in ("episode", "mean_reward", "sum_se_eval", "actor_loss",
                        "critic_loss", "entropy", "ratio_clip_fraction"):
                assert key in row

    def test_noise_shuffle_interval_respected(self):
        hp = tiny_hp(nv_shuffle_interval=1, episodes=4, batch_episodes=2)
        trainer = Trainer(tiny_env_factory, hp, seed=7)
        before = trainer.bank.assignment.copy()
        trainer.train()
        assert len(trainer.bank.history) == 2  # one shuffle per update round
        assert before.shape == trainer.bank.assignment.shape

    def test_checkpoint_arrays_cover_both_networks(self):
        trainer = Trainer(tiny_env_factory, tiny_hp(), seed=8)
        arrays = trainer.checkpoint_arrays()
        assert any(k.startswith("actor/") for k in arrays)
        assert any(k.startswith("critic/") for k in arrays)

    def test_evaluation_uses_no_noise_bank(self, monkeypatch):
        trainer = Trainer(tiny_env_factory, tiny_hp(), seed=9)

        def boom(*a, **k):
            raise AssertionError("noise bank touched during evaluation")

        monkeypatch.setattr(trainer.bank, "row", boom)
        monkeypatch.setattr(trainer.critic, "values_np", boom)
        score = trainer.evaluate(episodes=2)
        assert np.isfinite(score)

    def test_evaluate_zero_episodes_is_nan(self):
        trainer = Trainer(tiny_env_factory, tiny_hp(), seed=10)
        assert math.isnan(trainer.evaluate(episodes=0))
