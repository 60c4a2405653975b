"""Tests for the reverse-mode autodiff engine, layers and Adam"""

import numpy as np
import pytest

from app.core import autograd as ag
from app.core.autograd import (
    MLP,
    Adam,
    AdamState,
    Dense,
    Tape,
    Tensor,
    adam_step,
    finite_difference_gradient,
    kl_to_standard_normal,
    relative_error,
    reparameterize,
)
from app.core.errors import InvalidInputError, ShapeMismatchError


@pytest.fixture
def rng():
    return np.random.default_rng(11)


def gradient_error(build_loss, param):
    """Relative error between the tape gradient and central differences"""
    with Tape() as tape:
        loss = build_loss()
    tape.backward(loss)
    analytic = param.grad.copy()
    numeric = finite_difference_gradient(lambda: build_loss().item(), param)
    return relative_error(analytic, numeric)


class TestPrimitiveGradients:
    """Finite-difference checks of each primitive"""

    @pytest.mark.parametrize("op", [ag.tanh, ag.sin, ag.cos, ag.exponential, ag.square, ag.leaky_relu])
    def test_unary(self, rng, op):
        """Elementwise nonlinearities"""
        x = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
        weights = rng.standard_normal((3, 4))
        assert gradient_error(lambda: ag.sum(ag.multiply(op(x), weights)), x) < 1e-6

    def test_affine_chain(self, rng):
        """x @ W + b through tanh"""
        x = Tensor(rng.standard_normal((5, 3)))
        w = Tensor(rng.standard_normal((3, 2)), requires_grad=True)
        b = Tensor(rng.standard_normal(2), requires_grad=True)

        def loss():
            return ag.sum(ag.square(ag.tanh(ag.affine(x, w, b))))

        assert gradient_error(loss, w) < 1e-6
        assert gradient_error(loss, b) < 1e-6

    def test_broadcast_multiply(self, rng):
        """Gradients are summed back over broadcast axes"""
        a = Tensor(rng.standard_normal((2, 3, 1)), requires_grad=True)
        b = Tensor(rng.standard_normal((1, 1, 4)), requires_grad=True)

        def loss():
            return ag.sum(ag.square(ag.multiply(a, b)))

        assert gradient_error(loss, a) < 1e-6
        assert gradient_error(loss, b) < 1e-6

    def test_reductions_and_layout(self, rng):
        """sum over an axis, reshape and concatenate"""
        x = Tensor(rng.standard_normal((2, 6)), requires_grad=True)

        def loss():
            reshaped = ag.reshape(x, (2, 2, 3))
            pooled = ag.sum(reshaped, axis=1)
            joined = ag.concatenate([pooled, ag.mean(reshaped, axis=2)], axis=1)
            return ag.sum(ag.square(joined))

        assert gradient_error(loss, x) < 1e-6

    def test_matmul(self, rng):
        """2-D matrix product"""
        a = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        assert gradient_error(lambda: ag.sum(ag.square(a @ b)), a) < 1e-6
        assert gradient_error(lambda: ag.sum(ag.square(a @ b)), b) < 1e-6

    def test_absolute_subgradient_at_zero(self):
        """d|x|/dx is taken as 0 at x = 0"""
        x = Tensor(np.array([0.0, -2.0, 3.0]), requires_grad=True)
        with Tape() as tape:
            loss = ag.sum(ag.absolute(x))
        tape.backward(loss)
        np.testing.assert_array_equal(x.grad, [0.0, -1.0, 1.0])


class TestTape:
    """Tests for tape bookkeeping"""

    def test_no_recording_outside_tape(self, rng):
        """Forward passes outside a tape leave no trace"""
        tape = Tape()
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        ag.square(x)
        assert len(tape) == 0

    def test_constants_not_recorded(self):
        """Ops on tensors without gradients are not taped"""
        with Tape() as tape:
            ag.square(Tensor(np.ones(3)))
        assert len(tape) == 0

    def test_unreached_tensor_zero_gradient(self):
        """Parameters the loss ignores get a zero gradient"""
        x = Tensor(np.ones(2), requires_grad=True)
        y = Tensor(np.ones(2), requires_grad=True)
        with Tape() as tape:
            loss = ag.sum(ag.square(x))
            ag.square(y)
        tape.backward(loss)
        np.testing.assert_array_equal(y.grad, [0.0, 0.0])
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])

    def test_gradient_overwritten_between_calls(self):
        """A second backward pass replaces rather than accumulates"""
        x = Tensor(np.array([1.0]), requires_grad=True)
        for _ in range(2):
            with Tape() as tape:
                loss = ag.sum(ag.scale(x, 3.0))
            tape.backward(loss)
        np.testing.assert_array_equal(x.grad, [3.0])

    def test_non_scalar_loss_rejected(self):
        """backward needs a scalar"""
        x = Tensor(np.ones(2), requires_grad=True)
        with Tape() as tape:
            y = ag.square(x)
        with pytest.raises(InvalidInputError):
            tape.backward(y)

    def test_shape_mismatch(self):
        """Incompatible shapes raise with both shapes named"""
        with pytest.raises(ShapeMismatchError):
            ag.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
        with pytest.raises(ShapeMismatchError):
            ag.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


class TestVariationalHelpers:
    """Tests for reparameterization and the KL term"""

    def test_kl_zero_at_standard_normal(self):
        """KL(N(0, 1) || N(0, 1)) = 0"""
        zeros = Tensor(np.zeros((2, 3)))
        assert kl_to_standard_normal(zeros, zeros).item() == 0.0

    def test_kl_closed_form(self):
        """0.5 * (mu^2 + e^lv - lv - 1) summed"""
        mu = Tensor(np.array([[1.0, 0.0]]))
        log_var = Tensor(np.array([[0.0, 1.0]]))
        expected = 0.5 * (1.0 + (np.e - 1.0 - 1.0))
        assert kl_to_standard_normal(mu, log_var).item() == pytest.approx(expected)

    def test_reparameterize(self):
        """z = mu + exp(lv / 2) * eps"""
        mu = Tensor(np.array([[1.0]]))
        log_var = Tensor(np.array([[np.log(4.0)]]))
        z = reparameterize(mu, log_var, np.array([[0.5]]))
        assert z.item() == pytest.approx(2.0)

    def test_gradient_through_sampling(self, rng):
        """Gradients reach mu and log_var through z"""
        mu = Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        log_var = Tensor(rng.standard_normal((2, 3)) * 0.1, requires_grad=True)
        noise = rng.standard_normal((2, 3))

        def loss():
            z = reparameterize(mu, log_var, noise)
            return ag.add(ag.sum(ag.square(z)), kl_to_standard_normal(mu, log_var))

        assert gradient_error(loss, mu) < 1e-6
        assert gradient_error(loss, log_var) < 1e-6


class TestLayers:
    """Tests for Dense and MLP"""

    def test_glorot_bounds(self, rng):
        """Weights within +-sqrt(6 / (fan_in + fan_out)), zero bias"""
        layer = Dense(30, 20, rng)
        assert np.abs(layer.weight.values).max() <= np.sqrt(6.0 / 50)
        assert np.all(layer.bias.values == 0)

    def test_mlp_shapes_and_names(self, rng):
        """Output width and parameter names follow the layer sizes"""
        mlp = MLP([4, 8, 3], rng, name="net")
        assert mlp(np.ones((5, 4))).shape == (5, 3)
        assert [p.name for p in mlp.parameters()] == ["net.0.weight", "net.0.bias", "net.1.weight", "net.1.bias"]

    def test_same_rng_same_init(self):
        """Initialization is a function of the generator"""
        a = MLP([3, 5, 2], np.random.default_rng(0))
        b = MLP([3, 5, 2], np.random.default_rng(0))
        for pa, pb in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(pa.values, pb.values)

    def test_unknown_activation(self, rng):
        """Only registered activations are accepted"""
        with pytest.raises(InvalidInputError):
            MLP([2, 2], rng, activation="softsign")


class TestAdam:
    """Tests for the Adam optimizer"""

    def test_first_step_size(self):
        """The first bias-corrected step moves each parameter by lr"""
        x = np.array([1.0, -2.0])
        state = AdamState(lr=0.1)
        adam_step([x], [np.array([3.0, -0.5])], state)
        np.testing.assert_allclose(x, [0.9, -1.9], atol=1e-6)
        assert state.step == 1

    def test_minimizes_quadratic(self):
        """1000 steps on x^2 from x=1 reach |x| < 1e-3"""
        x = np.array([1.0])
        state = AdamState(lr=0.05)
        for _ in range(1000):
            adam_step([x], [2.0 * x], state)
        assert abs(x[0]) < 1e-3

    def test_gradient_count_mismatch(self):
        """One gradient per parameter"""
        with pytest.raises(InvalidInputError):
            adam_step([np.zeros(2)], [], AdamState())

    def test_wrapper_uses_tensor_gradients(self):
        """Adam.step applies the gradients left by the tape"""
        x = Tensor(np.array([1.0]), requires_grad=True)
        optimizer = Adam([x], lr=0.1)
        with Tape() as tape:
            loss = ag.sum(ag.square(x))
        tape.backward(loss)
        optimizer.step()
        assert x.values[0] == pytest.approx(0.9, abs=1e-6)
