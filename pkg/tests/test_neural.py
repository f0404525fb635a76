"""Autodiff correctness (finite differences), layers, Adam, checkpoints."""

import math

import numpy as np
import pytest

from simcf import neural
from simcf.neural import autodiff as ad
from simcf.neural import (
    Adam,
    AdamState,
    Dense,
    GRUCell,
    GaussianRecurrentActor,
    ParameterSet,
    Tensor,
    ValueNet,
    adam_step,
    gaussian_entropy,
    gaussian_log_prob,
    gaussian_log_prob_np,
    gradients,
    load_checkpoint,
    parameter,
    save_checkpoint,
)


def finite_difference(params: ParameterSet, loss_fn, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of loss_fn() w.r.t. the flat parameters."""
    base = params.get_flat()
    grad = np.zeros_like(base)
    for i in range(base.size):
        for sign in (+1.0, -1.0):
            perturbed = base.copy()
            perturbed[i] += sign * eps
            params.set_flat(perturbed)
            grad[i] += sign * float(loss_fn().data)
    params.set_flat(base)
    return grad / (2.0 * eps)


def analytic_flat(params: ParameterSet, loss_fn) -> np.ndarray:
    grads = gradients(loss_fn(), params)
    return np.concatenate([grads[name].ravel() for name in params.names()])


def assert_grad_close(params, loss_fn, tol=1e-4):
    ana = analytic_flat(params, loss_fn)
    num = finite_difference(params, loss_fn)
    denom = np.maximum(np.abs(num), 1e-8)
    assert np.max(np.abs(ana - num) / denom) < tol


class TestAutodiffBasics:
    def test_quadratic_gradient(self):
        w = parameter(3.0)
        loss = w * w
        loss.backward()
        assert w.grad == pytest.approx(6.0)

    def test_detached_branch_gets_no_gradient(self):
        w = parameter(2.0)
        loss = w * w + w.detach() * 5.0
        loss.backward()
        assert w.grad == pytest.approx(4.0)

    def test_backward_rejects_non_scalar(self):
        w = parameter(np.ones(3))
        with pytest.raises(ValueError, match="scalar"):
            (w * 2.0).backward()

    def test_gradients_helper(self):
        ps = ParameterSet()
        w = ps.register("w", [1.0, 2.0])
        loss = ad.tensor_sum(w * w)
        grads = gradients(loss, ps)
        np.testing.assert_allclose(grads["w"], [2.0, 4.0])

    def test_no_grad_blocks_graph(self):
        w = parameter(2.0)
        with ad.no_grad():
            out = w * w
        assert not out.requires_grad

    def test_broadcast_add_gradient(self):
        ps = ParameterSet()
        b = ps.register("b", np.zeros(3))
        x = Tensor(np.arange(6.0).reshape(2, 3))

        def loss():
            return ad.tensor_sum((x + b) * (x + b))

        assert_grad_close(ps, loss, tol=1e-6)

    def test_minimum_clip_take_concat_gradients(self):
        rng = np.random.default_rng(0)
        ps = ParameterSet()
        a = ps.register("a", rng.standard_normal((4, 3)))
        b = ps.register("b", rng.standard_normal((4, 3)))

        def loss():
            m = ad.minimum(a * 2.0, b + 0.3)
            c = ad.clip(m, -0.7, 0.9)
            cat = ad.concat([c, a[:, 0:2]], axis=1)
            return ad.mean(cat * cat)

        assert_grad_close(ps, loss, tol=1e-5)

    def test_parameter_set_flat_roundtrip(self):
        ps = ParameterSet()
        ps.register("a", np.arange(6.0).reshape(2, 3))
        ps.register("b", np.array([7.0]))
        flat = ps.get_flat()
        assert flat.size == 7
        ps.set_flat(flat * 2)
        np.testing.assert_array_equal(ps["a"].data, np.arange(6.0).reshape(2, 3) * 2)

    def test_frozen_registry_rejects_new_names(self):
        ps = ParameterSet()
        ps.register("a", [1.0])
        ps.freeze()
        with pytest.raises(RuntimeError, match="frozen"):
            ps.register("b", [2.0])


class TestLayerGradients:
    def test_dense_finite_difference(self):
        rng = np.random.default_rng(1)
        ps = ParameterSet()
        layer = Dense(ps, "fc", 4, 3, rng)
        x = rng.standard_normal((5, 4))
        target = rng.standard_normal((5, 3))

        def loss():
            err = ad.tanh(layer(Tensor(x))) - target
            return ad.mean(err * err)

        assert_grad_close(ps, loss)

    def test_gru_finite_difference(self):
        rng = np.random.default_rng(2)
        ps = ParameterSet()
        cell = GRUCell(ps, "gru", 3, 4, rng)
        x = rng.standard_normal((2, 5, 3))
        h0 = rng.standard_normal((5, 4))

        def loss():
            h = Tensor(h0)
            for t in range(x.shape[0]):
                h = cell.step(Tensor(x[t]), h)
            return ad.mean(h * h)

        assert_grad_close(ps, loss)

    def test_gaussian_log_prob_finite_difference(self):
        rng = np.random.default_rng(3)
        ps = ParameterSet()
        mean = ps.register("mean", rng.standard_normal((6, 4)))
        log_std = ps.register("log_std", rng.uniform(-1, 0, 4))
        actions = rng.standard_normal((6, 4))

        def loss():
            return ad.mean(gaussian_log_prob(mean, log_std, actions))

        assert_grad_close(ps, loss)

    def test_entropy_finite_difference_and_identity(self):
        ps = ParameterSet()
        log_std = ps.register("log_std", np.array([-0.5, 0.2, 0.0]))

        def loss():
            return gaussian_entropy(log_std)

        assert_grad_close(ps, loss)
        expected = sum(0.5 * math.log(2 * math.pi * math.e) + s
                       for s in [-0.5, 0.2, 0.0])
        assert float(loss().data) == pytest.approx(expected, rel=1e-15)

    def test_two_layer_net_finite_difference(self):
        rng = np.random.default_rng(4)
        ps = ParameterSet()
        fc1 = Dense(ps, "fc1", 3, 8, rng)
        fc2 = Dense(ps, "fc2", 8, 1, rng)
        x = rng.standard_normal((10, 3))

        def loss():
            return ad.mean(fc2(ad.tanh(fc1(Tensor(x)))) ** 2)

        assert_grad_close(ps, loss)


class TestPolicyNetworks:
    def test_zero_weights_zero_mean(self):
        actor = GaussianRecurrentActor(obs_dim=5, act_dim=3, hidden_dim=8, seed=0)
        actor.params.set_flat(np.zeros(actor.params.get_flat().size))
        obs = np.ones((2, 5))
        mean, _ = actor.step(obs, actor.initial_state(2))
        np.testing.assert_array_equal(mean.data, np.zeros((2, 3)))

    def test_stepwise_equals_sequence(self):
        actor = GaussianRecurrentActor(obs_dim=4, act_dim=2, hidden_dim=6, seed=1)
        rng = np.random.default_rng(5)
        obs_seq = rng.standard_normal((7, 3, 4))
        means_seq, _, h_end = actor.forward_sequence(obs_seq, actor.initial_state(3))
        h = ad.as_tensor(actor.initial_state(3))
        for t in range(7):
            mean_t, h = actor.step(obs_seq[t], h)
            assert np.max(np.abs(mean_t.data - means_seq[t].data)) < 1e-12
        assert np.max(np.abs(h.data - h_end.data)) < 1e-12

    def test_chunked_equals_unchunked(self):
        actor = GaussianRecurrentActor(obs_dim=4, act_dim=2, hidden_dim=6, seed=2)
        rng = np.random.default_rng(6)
        obs_seq = rng.standard_normal((10, 2, 4))
        full, _, _ = actor.forward_sequence(obs_seq, actor.initial_state(2))
        first, _, h_mid = actor.forward_sequence(obs_seq[:4], actor.initial_state(2))
        second, _, _ = actor.forward_sequence(obs_seq[4:], h_mid.data)
        chunked = first + second
        for a, b in zip(full, chunked):
            assert np.max(np.abs(a.data - b.data)) < 1e-10

    def test_hidden_state_evolves(self):
        actor = GaussianRecurrentActor(obs_dim=3, act_dim=2, hidden_dim=5, seed=3)
        obs = np.ones((1, 3))
        h0 = actor.initial_state(1)
        _, h1 = actor.step(obs, h0)
        _, h2 = actor.step(obs, h1.data)
        assert np.any(h1.data != 0.0)
        assert np.any(h2.data != h1.data)

    def test_act_deterministic_is_mean(self):
        actor = GaussianRecurrentActor(obs_dim=3, act_dim=2, hidden_dim=5, seed=4)
        obs = np.random.default_rng(7).standard_normal((2, 3))
        h0 = actor.initial_state(2)
        actions, logp, _ = actor.act(obs, h0, rng=None)
        mean, _ = actor.step(obs, h0)
        np.testing.assert_array_equal(actions, mean.data)
        want = gaussian_log_prob_np(mean.data, actor.log_std.data, actions)
        np.testing.assert_array_equal(logp, want)

    def test_rollout_and_graph_log_probs_agree(self):
        actor = GaussianRecurrentActor(obs_dim=3, act_dim=2, hidden_dim=5, seed=5)
        rng = np.random.default_rng(8)
        obs = rng.standard_normal((4, 3))
        actions, logp_np, _ = actor.act(obs, actor.initial_state(4), rng=rng)
        mean, _ = actor.step(obs, actor.initial_state(4))
        logp_graph = gaussian_log_prob(mean, actor.log_std, actions)
        np.testing.assert_allclose(logp_graph.data, logp_np, rtol=0, atol=1e-12)

    def test_value_net_zero_weights(self):
        critic = ValueNet(in_dim=6, hidden_dim=4, seed=0)
        critic.params.set_flat(np.zeros(critic.params.get_flat().size))
        out = critic.values_np(np.ones((3, 6)))
        np.testing.assert_array_equal(out, np.zeros(3))

    def test_single_linear_layer_manual_dot(self):
        rng = np.random.default_rng(9)
        ps = ParameterSet()
        layer = Dense(ps, "lin", 4, 1, rng, gain=1.0)
        x = rng.standard_normal((3, 4))
        got = layer(Tensor(x)).data.ravel()
        want = x @ layer.w.data.ravel() + layer.b.data[0]
        np.testing.assert_allclose(got, want, rtol=1e-14)

    def test_distinct_noise_tails_give_distinct_values(self):
        critic = ValueNet(in_dim=6, hidden_dim=16, seed=1)
        state = np.ones(4)
        a = critic.values_np(np.concatenate([state, [0.5, -0.5]])[None, :])
        b = critic.values_np(np.concatenate([state, [-1.0, 2.0]])[None, :])
        assert a[0] != b[0]

    def test_value_net_rejects_bad_width(self):
        critic = ValueNet(in_dim=6, hidden_dim=4, seed=0)
        with pytest.raises(ValueError, match="input dim"):
            critic(np.ones((2, 5)))


class TestAdam:
    def test_zero_gradient_no_move(self):
        params = {"w": np.array([1.0, -2.0])}
        state = AdamState(lr=0.1)
        out = adam_step(params, {"w": np.zeros(2)}, state)
        np.testing.assert_array_equal(out["w"], params["w"])

    def test_first_step_is_signed_learning_rate(self):
        params = {"w": np.array([0.0, 0.0])}
        state = AdamState(lr=0.05)
        out = adam_step(params, {"w": np.array([3.0, -0.2])}, state)
        np.testing.assert_allclose(out["w"], [-0.05, 0.05], rtol=1e-6)

    def test_converges_on_convex_quadratic(self):
        ps = ParameterSet()
        w = ps.register("w", np.array([5.0, -3.0, 2.0]))
        target = np.array([1.0, 2.0, -0.5])
        opt = Adam(ps, lr=0.1)
        for _ in range(200):
            opt.zero_grad()
            err = w - target
            loss = ad.tensor_sum(err * err)
            loss.backward()
            opt.step()
        assert np.max(np.abs(w.data - target)) < 1e-3

    def test_shape_mismatch_rejected(self):
        state = AdamState()
        with pytest.raises(ValueError, match="shape"):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, state)


class TestDeterminism:
    def _train_trajectory(self, seed):
        actor = GaussianRecurrentActor(obs_dim=4, act_dim=2, hidden_dim=6, seed=seed)
        rng = np.random.default_rng(100)
        obs = rng.standard_normal((5, 3, 4))
        actions = rng.standard_normal((5, 3, 2))
        opt = Adam(actor.params, lr=1e-3)
        trace = []
        for _ in range(5):
            opt.zero_grad()
            means, log_std, _ = actor.forward_sequence(obs, actor.initial_state(3))
            logp = [gaussian_log_prob(m, log_std, actions[t]) for t, m in enumerate(means)]
            loss = -ad.mean(ad.concat(logp))
            loss.backward()
            opt.step()
            trace.append(float(loss.data))
        return actor.params.get_flat(), trace

    def test_same_seed_identical_trajectory(self):
        flat_a, trace_a = self._train_trajectory(11)
        flat_b, trace_b = self._train_trajectory(11)
        np.testing.assert_array_equal(flat_a, flat_b)
        assert trace_a == trace_b

    def test_different_seed_different_init(self):
        a = GaussianRecurrentActor(obs_dim=4, act_dim=2, hidden_dim=6, seed=1)
        b = GaussianRecurrentActor(obs_dim=4, act_dim=2, hidden_dim=6, seed=2)
        assert np.any(a.params.get_flat() != b.params.get_flat())


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        actor = GaussianRecurrentActor(obs_dim=4, act_dim=2, hidden_dim=6, seed=13)
        path = tmp_path / "actor.npz"
        save_checkpoint(path, actor.params.arrays(), meta={"kind": "actor"})
        tensors, meta = load_checkpoint(path)
        assert meta == {"kind": "actor"}
        fresh = GaussianRecurrentActor(obs_dim=4, act_dim=2, hidden_dim=6, seed=99)
        fresh.params.load_arrays(tensors)
        np.testing.assert_array_equal(fresh.params.get_flat(), actor.params.get_flat())

    def test_rejects_non_checkpoint(self, tmp_path):
        path = tmp_path / "junk.npz"
        np.savez(path, a=np.zeros(3))
        with pytest.raises(ValueError, match="header"):
            load_checkpoint(path)

    def test_load_arrays_shape_mismatch(self, tmp_path):
        actor = GaussianRecurrentActor(obs_dim=4, act_dim=2, hidden_dim=6, seed=13)
        path = tmp_path / "actor.npz"
        save_checkpoint(path, actor.params.arrays())
        tensors, _ = load_checkpoint(path)
        other = GaussianRecurrentActor(obs_dim=5, act_dim=2, hidden_dim=6, seed=13)
        with pytest.raises(ValueError, match="mismatch"):
            other.params.load_arrays(tensors)
