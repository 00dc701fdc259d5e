"""Dense numeric primitives shared by every model module.

Everything operates on plain numpy arrays in double precision. The
finite-difference gradient here is the oracle the analytic gradients of
the model modules are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("sigmoid", "tanh")


def affine(m: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return m @ x + b with explicit dimension checking."""
    m = np.asarray(m, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if m.ndim != 2 or x.ndim != 1 or b.ndim != 1:
        raise ValueError(
            f"affine expects matrix, vector, vector; got shapes {m.shape}, {x.shape}, {b.shape}"
        )
    if m.shape[1] != x.shape[0] or m.shape[0] != b.shape[0]:
        raise ValueError(
            f"affine dimension mismatch: m is {m.shape}, x is {x.shape}, b is {b.shape}"
        )
    return m @ x + b


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable log-softmax of a 1-D vector.

    Max-subtraction keeps the exponentials bounded, so any finite input
    yields a finite output whose exponentials sum to 1.
    """
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"log_softmax expects a vector, got shape {x.shape}")
    shifted = x - x.max()
    return shifted - np.log(np.exp(shifted).sum())


def activate(x: np.ndarray, kind: str) -> np.ndarray:
    """Element-wise sigmoid or tanh, stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "sigmoid":
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ez = np.exp(x[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_derivative(x: np.ndarray, kind: str) -> np.ndarray:
    """Derivative of `activate` evaluated at x."""
    y = activate(x, kind)
    if kind == "sigmoid":
        return y * (1.0 - y)
    return 1.0 - y * y


@dataclass
class Parameter:
    """A named tensor with a same-shaped gradient accumulator."""

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.value = np.asarray(self.value)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


@dataclass
class OptimizerState:
    """Configuration and per-parameter moment state for SGD or Adam."""

    kind: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    _moments: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")

    def moments_for(self, param: Parameter) -> tuple[np.ndarray, np.ndarray]:
        if param.name not in self._moments:
            self._moments[param.name] = (
                np.zeros_like(param.value),
                np.zeros_like(param.value),
            )
        m, v = self._moments[param.name]
        if m.shape != param.value.shape:
            raise ValueError(f"moment shape mismatch for parameter {param.name!r}")
        return m, v


def optimizer_step(params: list[Parameter], state: OptimizerState) -> None:
    """Apply one descent step in place; gradients must already be populated.

    Gradients are of the negative log-likelihood, so stepping along
    -grad ascends the likelihood.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient for parameter {p.name!r}")
    if state.kind == "sgd":
        for p in params:
            p.value -= state.learning_rate * p.grad
        state.step_count += 1
        return
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p in params:
        m, v = state.moments_for(p)
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad * p.grad
        p.value -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def finite_difference_gradient(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array.

    Perturbs one coordinate at a time; `theta` is restored afterwards.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.zeros_like(theta)
    flat = theta.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(theta)
        flat[i] = orig - h
        fm = f(theta)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
