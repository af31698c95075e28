"""Network tests: forward oracle, finite-difference gradients, Adam, checkpoints."""

import numpy as np
import pytest

from drbid.neuralnet import AdamOptimizer, DenseNetwork, soft_update


def forward_reference(net, x):
    """Independent, loop-based forward pass."""
    a = np.atleast_2d(x).astype(float)
    for k in range(net.n_layers):
        z = np.empty((a.shape[0], net.sizes[k + 1]))
        for r in range(a.shape[0]):
            for j in range(net.sizes[k + 1]):
                z[r, j] = net.biases[k][j] + sum(
                    a[r, i] * net.weights[k][i, j] for i in range(net.sizes[k])
                )
        name = net.output_activation if k == net.n_layers - 1 else net.hidden_activation
        if name == "relu":
            a = np.maximum(z, 0.0)
        elif name == "tanh":
            a = np.tanh(z)
        else:
            a = z
        del z
    return a


def numeric_gradients(net, x, upstream, h=1e-5):
    """Central finite differences of sum(upstream * output) per parameter."""
    grads = []
    for p in net.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            orig = p[idx]
            p[idx] = orig + h
            up = float(np.sum(upstream * net.forward(x)))
            p[idx] = orig - h
            down = float(np.sum(upstream * net.forward(x)))
            p[idx] = orig
            g[idx] = (up - down) / (2 * h)
            it.iternext()
        grads.append(g)
    return grads


class TestForward:
    def test_zero_parameters_squash_to_zero(self):
        net = DenseNetwork([3, 4, 1], output_activation="tanh", rng=np.random.default_rng(0))
        for w in net.weights:
            w[:] = 0.0
        for b in net.biases:
            b[:] = 0.0
        assert np.all(net.forward(np.ones(3)) == 0.0)

    def test_one_by_one_reproduces_activation(self):
        net = DenseNetwork([1, 1], output_activation="tanh", rng=np.random.default_rng(0))
        net.weights[0][:] = 1.0
        net.biases[0][:] = 0.0
        for x in (-2.0, -0.5, 0.0, 1.3):
            assert net.forward(np.array([x]))[0, 0] == pytest.approx(np.tanh(x))

    @pytest.mark.parametrize("out_act", ["identity", "tanh"])
    def test_matches_independent_forward(self, out_act):
        rng = np.random.default_rng(42)
        net = DenseNetwork([5, 7, 3, 2], output_activation=out_act, rng=rng)
        x = rng.normal(size=(4, 5))
        np.testing.assert_allclose(net.forward(x), forward_reference(net, x), rtol=1e-12)

    def test_dimension_mismatch_rejected(self):
        net = DenseNetwork([3, 2], rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            net.forward(np.ones(4))


class TestBackward:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_central_differences(self, seed):
        rng = np.random.default_rng(seed)
        sizes = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(2, 5)))]
        out_act = ["identity", "tanh"][seed % 2]
        net = DenseNetwork(sizes, output_activation=out_act, rng=rng)
        x = rng.normal(size=(3, sizes[0]))
        upstream = rng.normal(size=(3, sizes[-1]))
        net.forward(x)
        analytic, _ = net.backward(upstream)
        numeric = numeric_gradients(net, x, upstream)
        for a, n in zip(analytic, numeric):
            np.testing.assert_allclose(a, n, rtol=1e-4, atol=1e-7)

    def test_zero_upstream_zero_gradients(self):
        net = DenseNetwork([3, 4, 2], rng=np.random.default_rng(1))
        net.forward(np.ones((2, 3)))
        grads, input_grad = net.backward(np.zeros((2, 2)))
        assert all(np.all(g == 0.0) for g in grads)
        assert np.all(input_grad == 0.0)

    def test_linear_network_gradient_scales_linearly(self):
        # identity activations: gradients w.r.t. weights scale with the input
        net = DenseNetwork([2, 3, 1], hidden_activation="identity",
                           output_activation="identity", rng=np.random.default_rng(2))
        x = np.array([[0.3, -1.2]])
        up = np.array([[1.0]])
        net.forward(x)
        g1, _ = net.backward(up)
        net.forward(2 * x)
        g2, _ = net.backward(up)
        np.testing.assert_allclose(g2[0], 2 * g1[0], rtol=1e-12)

    def test_input_gradient_matches_differences(self):
        rng = np.random.default_rng(3)
        net = DenseNetwork([4, 6, 2], output_activation="tanh", rng=rng)
        x = rng.normal(size=(1, 4))
        up = rng.normal(size=(1, 2))
        net.forward(x)
        _, input_grad = net.backward(up)
        h = 1e-6
        for i in range(4):
            dx = np.zeros_like(x)
            dx[0, i] = h
            num = (np.sum(up * net.forward(x + dx)) - np.sum(up * net.forward(x - dx))) / (2 * h)
            assert input_grad[0, i] == pytest.approx(num, rel=1e-4, abs=1e-8)

    def test_stale_cache_rejected(self):
        net = DenseNetwork([2, 2], rng=np.random.default_rng(0))
        with pytest.raises(RuntimeError):
            net.backward(np.ones((1, 2)))
        net.forward(np.ones(2))
        net.backward(np.ones((1, 2)))
        with pytest.raises(RuntimeError):
            net.backward(np.ones((1, 2)))


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        net = DenseNetwork([2, 2], rng=np.random.default_rng(0))
        before = [p.copy() for p in net.parameters()]
        opt = AdamOptimizer(net, learning_rate=0.1)
        opt.step(net, [np.zeros_like(p) for p in net.parameters()])
        for b, p in zip(before, net.parameters()):
            np.testing.assert_array_equal(b, p)

    def test_first_step_size_equals_learning_rate(self):
        net = DenseNetwork([1, 1], rng=np.random.default_rng(0))
        net.weights[0][:] = 5.0
        opt = AdamOptimizer(net, learning_rate=0.01)
        grads = [np.full_like(p, 3.0) for p in net.parameters()]
        opt.step(net, grads)
        # bias-corrected first step is lr * g / (|g| + eps) = lr * sign(g)
        assert net.weights[0][0, 0] == pytest.approx(5.0 - 0.01, rel=1e-6)

    def test_quadratic_bowl_converges(self):
        net = DenseNetwork([1, 1], rng=np.random.default_rng(0))
        net.weights[0][:] = 2.0
        net.biases[0][:] = 0.0
        opt = AdamOptimizer(net, learning_rate=0.05)
        for _ in range(2000):
            w = net.weights[0][0, 0]
            b = net.biases[0][0]
            opt.step(net, [np.array([[2 * (w - 0.5)]]), np.array([2 * b])])
        assert net.weights[0][0, 0] == pytest.approx(0.5, abs=1e-6)
        assert net.biases[0][0] == pytest.approx(0.0, abs=1e-6)

    def test_non_finite_gradient_rejected(self):
        net = DenseNetwork([2, 2], rng=np.random.default_rng(0))
        opt = AdamOptimizer(net)
        grads = [np.zeros_like(p) for p in net.parameters()]
        grads[0][0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            opt.step(net, grads)


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, tmp_path):
        net = DenseNetwork([4, 8, 3], output_activation="tanh", rng=np.random.default_rng(5))
        path = tmp_path / "net.ckpt"
        net.save(path)
        loaded = DenseNetwork.load(path)
        x = np.random.default_rng(6).normal(size=(5, 4))
        np.testing.assert_array_equal(net.forward(x), loaded.forward(x))
        loaded.save(tmp_path / "net2.ckpt")
        assert path.read_bytes() == (tmp_path / "net2.ckpt").read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTANET0" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            DenseNetwork.load(path)

    def test_documented_parameter_count(self):
        # the shared hidden stack over the 20-feature state, scalar output
        net = DenseNetwork([20, 300, 600, 400, 200, 1], rng=np.random.default_rng(0))
        expected = (20 * 300 + 300 * 600 + 600 * 400 + 400 * 200 + 200 * 1) + (
            300 + 600 + 400 + 200 + 1
        )
        assert net.parameter_count() == expected == 507_701


def test_soft_update_convex_combination():
    rng = np.random.default_rng(7)
    online = DenseNetwork([3, 4, 1], rng=rng)
    target = DenseNetwork([3, 4, 1], rng=rng)
    before = [p.copy() for p in target.parameters()]
    soft_update(target, online, tau=0.25)
    for b, t, o in zip(before, target.parameters(), online.parameters()):
        np.testing.assert_allclose(t, 0.75 * b + 0.25 * o, rtol=1e-12)
    with pytest.raises(ValueError):
        soft_update(target, online, tau=1.5)


def test_final_init_scale_shrinks_last_layer():
    net = DenseNetwork([4, 16, 1], rng=np.random.default_rng(8), final_init_scale=1e-3)
    assert np.max(np.abs(net.weights[-1])) <= 1e-3
    assert np.max(np.abs(net.biases[-1])) <= 1e-3
    assert np.max(np.abs(net.weights[0])) > 1e-2
