"""Reverse-mode automatic differentiation over float64 NumPy tensors

Operations record themselves on the active ``Tape`` (entered with ``with
Tape() as tape:``) whenever one of their inputs requires a gradient. Outside a
tape every primitive is a plain forward computation, which is what inference
uses. The active tape is context-local, so independent tapes can run on
different threads.

Complex channels never enter this module: they are fed as real/imaginary
planes.
"""

from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.errors import InvalidInputError, ShapeMismatchError

ArrayLike = Union["Tensor", np.ndarray, float, int]
BackwardRule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_active_tape: ContextVar[Optional["Tape"]] = ContextVar("active_tape", default=None)


class Tensor:
    """Dense float64 array with an optional gradient"""

    __slots__ = ("values", "grad", "requires_grad", "name")
    __array_priority__ = 1000

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.values)

    def item(self) -> float:
        if self.values.size != 1:
            raise InvalidInputError(f"item() needs a single value, got shape {self.shape}")
        return float(self.values.reshape(()))

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __add__(self, other: ArrayLike) -> "Tensor":
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return multiply(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        return matmul(self, other)


@dataclass
class TapeEntry:
    """One recorded primitive"""
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardRule


@dataclass
class Tape:
    """Ordered record of primitives; inputs always precede the entries using them"""
    entries: List[TapeEntry] = field(default_factory=list)
    _tokens: List = field(default_factory=list, repr=False)

    def __enter__(self) -> "Tape":
        self._tokens.append(_active_tape.set(self))
        return self

    def __exit__(self, *exc_info) -> None:
        _active_tape.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, rule: BackwardRule) -> None:
        self.entries.append(TapeEntry(op, inputs, output, rule))

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` of every gradient-requiring tensor on this tape

        Gradients are overwritten, not accumulated across calls. Tensors on the
        tape that the loss does not depend on end up with a zero gradient.
        """
        if loss.size != 1:
            raise InvalidInputError(f"loss must be a scalar, got shape {loss.shape}")

        tracked: Dict[int, Tensor] = {id(loss): loss}
        for entry in self.entries:
            for tensor in entry.inputs:
                if tensor.requires_grad:
                    tracked[id(tensor)] = tensor
            tracked[id(entry.output)] = entry.output

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
        for entry in reversed(self.entries):
            upstream = grads.get(id(entry.output))
            if upstream is None:
                continue
            local = entry.backward(upstream)
            for tensor, grad in zip(entry.inputs, local):
                if grad is None or not tensor.requires_grad:
                    continue
                key = id(tensor)
                grads[key] = grads[key] + grad if key in grads else grad

        for key, tensor in tracked.items():
            if tensor.requires_grad:
                grad = grads.get(key)
                tensor.grad = np.zeros_like(tensor.values) if grad is None else np.asarray(grad).reshape(tensor.shape)


def backward(tape: Tape, loss: Tensor) -> None:
    """Run the reverse pass of ``tape`` from ``loss``"""
    tape.backward(loss)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _result(values: np.ndarray, op: str, inputs: Tuple[Tensor, ...], rule: BackwardRule) -> Tensor:
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(values, requires_grad=requires_grad)
    tape = _active_tape.get()
    if requires_grad and tape is not None:
        tape.record(op, inputs, out, rule)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


# Elementwise arithmetic
def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)
    return _result(
        a.values + b.values, "add", (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)
    return _result(
        a.values - b.values, "sub", (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def multiply(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("multiply", a, b)
    return _result(
        a.values * b.values, "multiply", (a, b),
        lambda g: (_unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)),
    )


def scale(a: ArrayLike, factor: float) -> Tensor:
    a = as_tensor(a)
    return _result(a.values * factor, "scale", (a,), lambda g: (g * factor,))


def square(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(a.values * a.values, "square", (a,), lambda g: (2.0 * a.values * g,))


def absolute(a: ArrayLike) -> Tensor:
    """|a|; the backward pass uses sign(a), so the subgradient at 0 is 0"""
    a = as_tensor(a)
    return _result(np.abs(a.values), "absolute", (a,), lambda g: (g * np.sign(a.values),))


# Linear maps
def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    return _result(
        a.values @ b.values, "matmul", (a, b),
        lambda g: (g @ b.values.T, a.values.T @ g),
    )


def affine(x: ArrayLike, weight: ArrayLike, bias: ArrayLike) -> Tensor:
    """Dense layer x @ W + b for a (batch, in) input"""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.values.ndim != 2 or weight.values.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeMismatchError("affine input vs weight", x.shape, weight.shape)
    if bias.shape != (weight.shape[1],):
        raise ShapeMismatchError("affine bias", (weight.shape[1],), bias.shape)
    return _result(
        x.values @ weight.values + bias.values, "affine", (x, weight, bias),
        lambda g: (g @ weight.values.T, x.values.T @ g, g.sum(axis=0)),
    )


# Nonlinearities
def relu(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    mask = a.values > 0
    return _result(np.where(mask, a.values, 0.0), "relu", (a,), lambda g: (g * mask,))


def leaky_relu(a: ArrayLike, slope: float = 0.01) -> Tensor:
    a = as_tensor(a)
    factor = np.where(a.values > 0, 1.0, slope)
    return _result(a.values * factor, "leaky_relu", (a,), lambda g: (g * factor,))


def tanh(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.values)
    return _result(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))


def exponential(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.values)
    return _result(out, "exponential", (a,), lambda g: (g * out,))


def sin(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(np.sin(a.values), "sin", (a,), lambda g: (g * np.cos(a.values),))


def cos(a: ArrayLike) -> Tensor:
    a = as_tensor(a)
    return _result(np.cos(a.values), "cos", (a,), lambda g: (-g * np.sin(a.values),))


# Reductions and layout
def sum(a: ArrayLike, axis: Optional[int] = None) -> Tensor:  # noqa: A001
    a = as_tensor(a)

    def rule(g: np.ndarray):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.sum(a.values, axis=axis), "sum", (a,), rule)


def mean(a: ArrayLike, axis: Optional[int] = None) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / count)


def concatenate(tensors: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        out = np.concatenate([t.values for t in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError("concatenate", tensors[0].shape, [t.shape for t in tensors[1:]]) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(out, "concatenate", tensors, lambda g: tuple(np.split(g, bounds, axis=axis)))


def reshape(a: ArrayLike, shape: Tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.values.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", a.shape, shape) from None
    return _result(out, "reshape", (a,), lambda g: (g.reshape(a.shape),))


# Variational helpers
def reparameterize(mu: Tensor, log_var: Tensor, noise: ArrayLike) -> Tensor:
    """z = mu + exp(log_var / 2) * noise"""
    noise = as_tensor(noise)
    if mu.shape != log_var.shape or mu.shape != noise.shape:
        raise ShapeMismatchError("reparameterize", mu.shape, log_var.shape if mu.shape != log_var.shape else noise.shape)
    return add(mu, multiply(exponential(scale(log_var, 0.5)), noise))


def kl_to_standard_normal(mu: Tensor, log_var: Tensor) -> Tensor:
    """KL(N(mu, exp(log_var)) || N(0, I)) summed over every entry"""
    if mu.shape != log_var.shape:
        raise ShapeMismatchError("kl_to_standard_normal", mu.shape, log_var.shape)
    inner = sub(sub(add(square(mu), exponential(log_var)), log_var), 1.0)
    return scale(sum(inner), 0.5)


# Layers
class Dense:
    """Fully connected layer with Glorot-uniform weights and zero bias"""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, name: str = "dense"):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        self.weight = Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: ArrayLike) -> Tensor:
        return affine(x, self.weight, self.bias)

    def parameters(self) -> List[Tensor]:
        return [self.weight, self.bias]


ACTIVATIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    "relu": relu,
    "leaky_relu": leaky_relu,
    "tanh": tanh,
}


class MLP:
    """Stack of Dense layers with an activation after each hidden layer"""

    def __init__(
        self,
        sizes: Sequence[int],
        rng: np.random.Generator,
        name: str = "mlp",
        activation: str = "leaky_relu",
        activate_last: bool = False,
    ):
        if len(sizes) < 2:
            raise InvalidInputError("an MLP needs at least an input and an output size")
        if activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {activation!r}")
        self.layers = [
            Dense(fan_in, fan_out, rng, name=f"{name}.{index}")
            for index, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]
        self.activation = ACTIVATIONS[activation]
        self.activate_last = activate_last

    def __call__(self, x: ArrayLike) -> Tensor:
        out = as_tensor(x)
        last = len(self.layers) - 1
        for index, layer in enumerate(self.layers):
            out = layer(out)
            if index < last or self.activate_last:
                out = self.activation(out)
        return out

    def parameters(self) -> List[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


# Optimizer
@dataclass
class AdamState:
    """Adam hyperparameters, step count and per-parameter moment estimates"""
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: List[np.ndarray] = field(default_factory=list, repr=False)
    second_moment: List[np.ndarray] = field(default_factory=list, repr=False)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``params`` in place"""
    if len(params) != len(grads):
        raise InvalidInputError(f"{len(params)} parameters but {len(grads)} gradients")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    elif len(state.first_moment) != len(params):
        raise InvalidInputError("optimizer state was built for a different parameter list")

    for p, g, m in zip(params, grads, state.first_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatchError("adam_step", p.shape, g.shape if p.shape != g.shape else m.shape)

    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step
    step_size = state.lr / bias1
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= step_size * m / (np.sqrt(v / bias2) + state.eps)


class Adam:
    """Adam bound to a list of parameter tensors"""

    def __init__(self, parameters: Sequence[Tensor], lr: float = 1e-3):
        self.parameters = list(parameters)
        self.state = AdamState(lr=lr)

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.values) for p in self.parameters]
        adam_step([p.values for p in self.parameters], grads, self.state)


# Gradient checking
def finite_difference_gradient(loss_fn: Callable[[], float], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``loss_fn`` with respect to ``param``"""
    grad = np.zeros_like(param.values)
    for index in np.ndindex(*param.shape):
        original = param.values[index]
        param.values[index] = original + h
        plus = loss_fn()
        param.values[index] = original - h
        minus = loss_fn()
        param.values[index] = original
        grad[index] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), zero when both vanish"""
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)
