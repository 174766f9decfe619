import numpy as np
import pytest

from tedecomp import autodiff as ad
from tedecomp.errors import ContractError, ShapeError, TrainingDivergedError


def finite_diff(f, params, h=1e-4):
    """Central finite differences of a scalar function of flat parameters."""
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        flat = p.value.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-8)


class TestForwardOps:
    def test_leaky_relu_negative(self):
        t = ad.leaky_relu(ad.Tensor([-1.0]))
        np.testing.assert_allclose(t.value, [-0.1])

    def test_logsumexp_no_overflow(self):
        t = ad.logsumexp(ad.Tensor([1000.0, 1000.0]), axis=0)
        assert t.value == pytest.approx(1000.0 + np.log(2.0))

    def test_matmul_shape(self):
        out = ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((3, 1))))
        assert out.shape == (2, 1)

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))

    def test_clip_blocks_gradient_outside_range(self):
        x = ad.parameter([-20.0, 0.5, 20.0])
        loss = ad.sum_(ad.clip(x, -10.0, 10.0))
        loss.backward()
        np.testing.assert_allclose(x.grad, [0.0, 1.0, 0.0])


class TestBackward:
    def test_square_gradient(self):
        x = ad.parameter(3.0)
        loss = ad.square(x)
        loss.backward()
        assert x.grad == pytest.approx(6.0)

    def test_non_scalar_loss_rejected(self):
        x = ad.parameter(np.ones(3))
        with pytest.raises(ContractError):
            ad.square(x).backward()

    def test_repeated_backward_accumulates(self):
        x = ad.parameter(2.0)
        ad.square(x).backward()
        first = float(x.grad)
        ad.square(x).backward()
        assert x.grad == pytest.approx(2 * first)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_tanh_layer_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        W = ad.parameter(rng.standard_normal((8, 8)))
        x = rng.standard_normal((8, 8))

        def loss_value():
            return ad.sum_(ad.tanh(ad.matmul(ad.Tensor(x), ad.transpose(W)))).value.item()

        ad.zero_grads([W])
        loss = ad.sum_(ad.tanh(ad.matmul(ad.Tensor(x), ad.transpose(W))))
        loss.backward()
        (fd,) = finite_diff(loss_value, [W])
        assert rel_err(W.grad, fd) < 1e-4

    @pytest.mark.parametrize("op", [ad.exp, ad.log, ad.square, ad.leaky_relu, ad.tanh])
    def test_elementwise_ops_match_finite_differences(self, op):
        rng = np.random.default_rng(hash(op.__name__) % 2**31)
        x = ad.parameter(rng.uniform(0.2, 2.0, size=(5, 4)))

        def loss_value():
            return ad.sum_(op(x)).value.item()

        loss = ad.sum_(op(x))
        loss.backward()
        (fd,) = finite_diff(loss_value, [x])
        assert rel_err(x.grad, fd) < 1e-4

    def test_broadcast_add_and_reductions(self):
        rng = np.random.default_rng(4)
        a = ad.parameter(rng.standard_normal((4, 1)))
        b = ad.parameter(rng.standard_normal((1, 5)))

        def loss_value():
            return ad.mean(ad.square(a + b)).value.item()

        loss = ad.mean(ad.square(a + b))
        loss.backward()
        fd = finite_diff(loss_value, [a, b])
        assert rel_err(a.grad, fd[0]) < 1e-4
        assert rel_err(b.grad, fd[1]) < 1e-4

    def test_logsumexp_gradient(self):
        rng = np.random.default_rng(5)
        x = ad.parameter(rng.standard_normal((3, 6)))

        def loss_value():
            return ad.sum_(ad.logsumexp(x, axis=1)).value.item()

        ad.sum_(ad.logsumexp(x, axis=1)).backward()
        (fd,) = finite_diff(loss_value, [x])
        assert rel_err(x.grad, fd) < 1e-4

    def test_concat_and_slice_gradients(self):
        rng = np.random.default_rng(6)
        a = ad.parameter(rng.standard_normal((3, 2)))
        b = ad.parameter(rng.standard_normal((3, 4)))

        def graph():
            joined = ad.concat([a, b])
            return ad.sum_(ad.square(ad.slice_cols(joined, 1, 5)))

        graph().backward()
        fd = finite_diff(lambda: graph().value.item(), [a, b])
        assert rel_err(a.grad, fd[0]) < 1e-4
        assert rel_err(b.grad, fd[1]) < 1e-4


class TestDenseMlp:
    def test_glorot_bounds(self):
        layer = ad.DenseLayer.create(100, 50, np.random.default_rng(0))
        limit = np.sqrt(6.0 / 150)
        assert np.abs(layer.W.value).max() <= limit
        assert np.all(layer.b.value == 0.0)

    def test_mlp_composed_gradient(self):
        rng = np.random.default_rng(7)
        mlp = ad.MLP.create(6, [8], 3, rng)
        x = rng.standard_normal((10, 6))

        def graph():
            return ad.mean(ad.square(mlp(ad.Tensor(x))))

        ad.zero_grads(mlp.params())
        graph().backward()
        fd = finite_diff(lambda: graph().value.item(), mlp.params())
        for p, g in zip(mlp.params(), fd):
            assert rel_err(p.grad, g) < 1e-3


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = ad.parameter(np.ones(4))
        p.grad = np.zeros(4)
        state = ad.AdamState()
        ad.adam_step([p], state)
        np.testing.assert_array_equal(p.value, np.ones(4))

    def test_first_step_magnitude(self):
        p = ad.parameter(np.zeros(3))
        p.grad = np.array([0.5, -2.0, 10.0])
        state = ad.AdamState(learning_rate=3e-4)
        ad.adam_step([p], state)
        np.testing.assert_allclose(p.value, -3e-4 * np.sign(p.grad), rtol=1e-6)

    def test_non_finite_gradient_raises(self):
        p = ad.parameter(np.zeros(2))
        p.grad = np.array([1.0, np.nan])
        with pytest.raises(TrainingDivergedError):
            ad.adam_step([p], ad.AdamState())

    def test_quadratic_convergence(self):
        # minimize ||x - target||^2; optimum value 0
        target = np.array([1.0, -2.0, 0.5])
        x = ad.parameter(np.zeros(3))
        state = ad.AdamState(learning_rate=0.05)
        for _ in range(200):
            ad.zero_grads([x])
            loss = ad.sum_(ad.square(x - ad.Tensor(target)))
            loss.backward()
            ad.adam_step([x], state)
        final = float(np.sum((x.value - target) ** 2))
        assert final < 1e-3

    def test_deterministic_trajectories(self):
        def run():
            rng = np.random.default_rng(3)
            mlp = ad.MLP.create(4, [8], 2, rng)
            state = ad.AdamState()
            x = rng.standard_normal((16, 4))
            for _ in range(20):
                ad.zero_grads(mlp.params())
                ad.mean(ad.square(mlp(ad.Tensor(x)))).backward()
                ad.adam_step(mlp.params(), state)
            return ad.get_flat_params(mlp.params())

        np.testing.assert_array_equal(run(), run())


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        mlp = ad.MLP.create(3, [4], 2, rng)
        before = ad.get_flat_params(mlp.params())
        prefix = str(tmp_path / "ckpt")
        ad.save_checkpoint(mlp.params(), prefix)
        for p in mlp.params():
            p.value = p.value * 0.0
        ad.load_checkpoint(mlp.params(), prefix)
        np.testing.assert_array_equal(ad.get_flat_params(mlp.params()), before)
