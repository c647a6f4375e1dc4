"""Small dense feed-forward networks with hand-written backprop and Adam."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .numerics import as_generator, sigmoid

ACTIVATIONS = ("relu", "linear", "sigmoid")


class StaleCacheError(RuntimeError):
    """Backward was called with a cache from before the last parameter update."""


@dataclass
class Layer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError(f"bias shape {self.b.shape} does not match weight shape {self.W.shape}")

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]


def _init_weight(g, n_in, n_out, activation):
    if activation == "relu":
        limit = np.sqrt(6.0 / n_in)
    else:
        limit = np.sqrt(6.0 / (n_in + n_out))
    return g.uniform(-limit, limit, size=(n_out, n_in))


def _activate(z, activation):
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "sigmoid":
        return sigmoid(z)
    return z


@dataclass
class ForwardCache:
    inputs: list
    pre: list
    output: np.ndarray
    net_id: int
    version: int


class DenseNet:
    """A chain of affine layers, each followed by an elementwise activation."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("a network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer widths do not chain: {a.n_out} -> {b.n_in}")
        self.layers = layers
        self.version = 0

    @classmethod
    def build(cls, sizes, activations, rng) -> "DenseNet":
        """``sizes = [in, h1, ..., out]``; one activation per layer (or a single string for all)."""
        if isinstance(activations, str):
            activations = [activations] * (len(sizes) - 1)
        if len(activations) != len(sizes) - 1:
            raise ValueError("need one activation per layer")
        g = as_generator(rng)
        layers = [
            Layer(_init_weight(g, i, o, act), np.zeros(o), act)
            for i, o, act in zip(sizes[:-1], sizes[1:], activations)
        ]
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.W, layer.b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def touch(self) -> None:
        """Mark parameters as changed; outstanding caches become stale."""
        self.version += 1

    def copy(self) -> "DenseNet":
        net = DenseNet([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])
        return net

    def forward(self, X) -> tuple[np.ndarray, ForwardCache]:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise ValueError(f"expected input of width {self.n_in}, got shape {X.shape}")
        inputs, pre = [], []
        h = X
        for layer in self.layers:
            inputs.append(h)
            z = h @ layer.W.T + layer.b
            pre.append(z)
            h = _activate(z, layer.activation)
        return h, ForwardCache(inputs, pre, h, id(self), self.version)

    def predict(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def backward(self, cache: ForwardCache, grad_out, input_grad: bool = True, preactivation: bool = False):
        """Reverse-mode gradients.

        ``grad_out`` is dL/d(output), or dL/d(last pre-activation) when
        ``preactivation=True`` (useful for sigmoid + cross-entropy).
        Returns ``(grads, dX)`` with ``grads`` aligned to :meth:`params`.
        """
        if cache.net_id != id(self) or cache.version != self.version:
            raise StaleCacheError("forward cache does not match the current parameters")
        grad = np.asarray(grad_out, dtype=float)
        if grad.shape != cache.output.shape:
            raise ValueError(f"gradient shape {grad.shape} != output shape {cache.output.shape}")
        grads = [None] * (2 * len(self.layers))
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            z = cache.pre[k]
            if k == len(self.layers) - 1 and preactivation:
                dz = grad
            elif layer.activation == "relu":
                dz = grad * (z > 0)
            elif layer.activation == "sigmoid":
                s = sigmoid(z)
                dz = grad * s * (1.0 - s)
            else:
                dz = grad
            grads[2 * k] = dz.T @ cache.inputs[k]
            grads[2 * k + 1] = dz.sum(axis=0)
            if k > 0 or input_grad:
                grad = dz @ layer.W
        return grads, (grad if input_grad else None)

    # -- checkpoints ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "in": l.n_in,
                    "out": l.n_out,
                    "activation": l.activation,
                    "W": l.W.ravel().tolist(),
                    "b": l.b.tolist(),
                }
                for l in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "DenseNet":
        layers = []
        for spec in blob["layers"]:
            W = np.array(spec["W"], dtype=float).reshape(spec["out"], spec["in"])
            layers.append(Layer(W, np.array(spec["b"], dtype=float), spec["activation"]))
        return cls(layers)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "DenseNet":
        return cls.from_dict(json.loads(Path(path).read_text()))


@njit(cache=True)
def _adam_update(p, g, m, v, lr, b1, b2, c1, c2, eps):
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + (1.0 - b1) * gi
        vi = b2 * v[i] + (1.0 - b2) * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)


class AdamState:
    """Bias-corrected Adam over a fixed list of parameter arrays (updated in place)."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"expected {len(self.params)} gradients, got {len(grads)}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            _adam_update(p.reshape(-1), np.ascontiguousarray(g, dtype=float).reshape(-1),
                         m.reshape(-1), v.reshape(-1), self.lr, b1, b2, c1, c2, self.eps)


def adam_step(nets, grads, state: AdamState) -> None:
    """Apply one Adam update and invalidate the nets' forward caches."""
    state.step(grads)
    for net in nets if isinstance(nets, (list, tuple)) else [nets]:
        net.touch()


def minibatches(n: int, batch: int, rng):
    """Shuffled index batches covering ``range(n)`` once."""
    order = as_generator(rng).permutation(n)
    for start in range(0, n, batch):
        yield order[start:start + batch]


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean over rows of the squared error (summed over outputs) and its gradient."""
    diff = pred - target
    b = pred.shape[0]
    return float(np.sum(diff * diff) / b), 2.0 * diff / b
