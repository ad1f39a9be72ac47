"""Fully connected ReLU network with explicit backpropagation."""
from __future__ import annotations

from typing import Sequence

import numpy as np


class Mlp:
    """Affine layers with ReLU between them and a linear output.

    Weights are stored as ``(fan_in, fan_out)`` so a batch ``x`` of shape
    ``(n, fan_in)`` maps to ``x @ W + b``.
    """

    def __init__(self, sizes: Sequence[int], rng: np.random.Generator | None = None,
                 out_scale: float = 1.0, dtype=np.float64):
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"bad layer sizes {sizes}")
        self.sizes = [int(s) for s in sizes]
        self.dtype = np.dtype(dtype)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            bound = np.sqrt(6.0 / n_in)  # He-uniform
            w = rng.uniform(-bound, bound, (n_in, n_out))
            if i == len(self.sizes) - 2:
                w *= out_scale
            self.weights.append(w.astype(self.dtype))
            self.biases.append(np.zeros(n_out, dtype=self.dtype))

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, x: np.ndarray, keep: bool = False):
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.sizes[0]}")
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        y = h[0] if squeeze else h
        return (y, acts) if keep else y

    __call__ = forward

    def backward(self, acts: list[np.ndarray], dy: np.ndarray) -> list[np.ndarray]:
        """Gradients of the loss w.r.t. ``params`` given ``dLoss/dy``."""
        g = np.asarray(dy, dtype=self.dtype)
        if g.ndim == 1:
            g = g[None]
        if g.shape != acts[-1].shape:
            raise ValueError(f"gradient shape {g.shape} != output shape {acts[-1].shape}")
        grads_w, grads_b = [], []
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w.append(acts[i].T @ g)
            grads_b.append(g.sum(axis=0))
            if i > 0:
                g = (g @ self.weights[i].T) * (acts[i] > 0)
        grads_w.reverse()
        grads_b.reverse()
        return [p for pair in zip(grads_w, grads_b) for p in pair]

    def sgd(self, grads: list[np.ndarray], lr: float) -> None:
        for p, g in zip(self.params, grads):
            p -= lr * g

    def copy(self) -> "Mlp":
        twin = Mlp.__new__(Mlp)
        twin.sizes = list(self.sizes)
        twin.dtype = self.dtype
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def soft_update(self, source: "Mlp", rate: float) -> None:
        for p, q in zip(self.params, source.params):
            p *= 1.0 - rate
            p += rate * q

    def finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)
