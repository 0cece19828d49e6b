"""Minimal dense-network building blocks with hand-written backprop.

Everything is float64 numpy, batch-first (B, D). Batch-norm layers keep
running statistics (momentum 0.9) and always use them outside training,
so single-sample inference is well defined. Dropout is inverted (scaled
at train time) and active only when a dropout RNG is supplied.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch

BCE_CLAMP = 1e-7


class Param:
    """A learnable array with its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)


class Dense:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        limit = 1.0 / np.sqrt(in_dim)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = Param("w", rng.uniform(-limit, limit, (in_dim, out_dim)))
        self.b = Param("b", rng.uniform(-limit, limit, out_dim))
        self._x = None

    def forward(self, x, bn_train, dropout_rng):
        if x.shape[1] != self.in_dim:
            raise ShapeMismatch(f"dense expects {self.in_dim} features, got {x.shape[1]}")
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, grad):
        self.w.grad += self._x.T @ grad
        self.b.grad += grad.sum(axis=0)
        return grad @ self.w.value.T

    def params(self):
        return [self.w, self.b]

    def state(self):
        return []


class BatchNorm:
    def __init__(self, dim: int, momentum: float = 0.9, eps: float = 1e-5):
        self.dim = dim
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param("gamma", np.ones(dim))
        self.beta = Param("beta", np.zeros(dim))
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self._xhat = None
        self._ivar = None

    def forward(self, x, bn_train, dropout_rng):
        if bn_train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            # in place, so external references to the stats stay valid
            self.running_mean *= self.momentum
            self.running_mean += (1.0 - self.momentum) * mean
            self.running_var *= self.momentum
            self.running_var += (1.0 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        ivar = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * ivar
        self._xhat = xhat
        self._ivar = ivar
        self._train = bn_train
        return self.gamma.value * xhat + self.beta.value

    def backward(self, grad):
        xhat = self._xhat
        self.gamma.grad += (grad * xhat).sum(axis=0)
        self.beta.grad += grad.sum(axis=0)
        dxhat = grad * self.gamma.value
        if not self._train:
            return dxhat * self._ivar
        n = grad.shape[0]
        return (
            self._ivar
            / n
            * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        )

    def params(self):
        return [self.gamma, self.beta]

    def state(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def set_state(self, name, value):
        setattr(self, name, np.asarray(value, dtype=np.float64).copy())


class ReLU:
    def forward(self, x, bn_train, dropout_rng):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad):
        return np.where(self._mask, grad, 0.0)

    def params(self):
        return []

    def state(self):
        return []


class Dropout:
    """Inverted dropout; identity whenever no RNG is supplied."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.p = p
        self._mask = None

    def forward(self, x, bn_train, dropout_rng):
        if dropout_rng is None or self.p == 0.0:
            self._mask = None
            return x
        keep = dropout_rng.random(x.shape) >= self.p
        self._mask = keep / (1.0 - self.p)
        return x * self._mask

    def backward(self, grad):
        if self._mask is None:
            return grad
        return grad * self._mask

    def params(self):
        return []

    def state(self):
        return []


class Sigmoid:
    def forward(self, x, bn_train, dropout_rng):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        self._out = out
        return out

    def backward(self, grad):
        return grad * self._out * (1.0 - self._out)

    def params(self):
        return []

    def state(self):
        return []


class Sequential:
    def __init__(self, layers: list):
        self.layers = layers

    def forward(self, x, bn_train, dropout_rng):
        for layer in self.layers:
            x = layer.forward(x, bn_train, dropout_rng)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self):
        return [p for layer in self.layers for p in layer.params()]


def loss_bce(pred: float, label: float) -> float:
    """Binary cross-entropy on a probability, clamped away from 0 and 1."""
    p = min(max(float(pred), BCE_CLAMP), 1.0 - BCE_CLAMP)
    y = float(label)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def bce_batch(preds: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean BCE over a batch plus the gradient w.r.t. each prediction.

    The gradient respects the clamp: it is zero where the prediction sits
    outside the clamp interval, matching what finite differences see.
    """
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    clamped = np.clip(preds, BCE_CLAMP, 1.0 - BCE_CLAMP)
    losses = -(labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped))
    inside = (preds > BCE_CLAMP) & (preds < 1.0 - BCE_CLAMP)
    grad = np.where(
        inside, (-labels / clamped + (1.0 - labels) / (1.0 - clamped)), 0.0
    ) / preds.size
    return float(losses.mean()), grad


class SGD:
    def __init__(self, params: list[Param], lr: float):
        self.params = params
        self.lr = lr

    def step(self):
        for p in self.params:
            p.value -= self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0


class Adam:
    """Adaptive-moment estimation with bias correction."""

    def __init__(
        self,
        params: list[Param],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            p.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0
