"""Minimal dense feed-forward network with exact gradients and a flat parameter view.

All math is float64. Gradients and parameters share one canonical flat
ordering: layer-major, each layer contributing its weight matrix in C order
(shape n_in x n_out) followed by its bias vector. Flat vectors are plain
numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np


class ShapeMismatch(ValueError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


_ACTIVATIONS = ("tanh", "relu")


class MlpModel:
    """Fully-connected net: hidden layers with tanh or relu, linear output."""

    def __init__(self, layer_sizes, activation: str = "tanh", seed: int = 0):
        if len(layer_sizes) < 2:
            raise ShapeMismatch("need at least input and output sizes")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        self.activation = activation
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = math.sqrt(6.0 / (n_in + n_out))
            self.weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def _act(self, z):
        return np.tanh(z) if self.activation == "tanh" else np.maximum(z, 0.0)

    def _act_grad(self, a):
        # derivative expressed through the post-activation value
        return 1.0 - a * a if self.activation == "tanh" else (a > 0.0).astype(float)

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.layer_sizes[0]:
            raise ShapeMismatch(f"input width {x.shape} incompatible with {self.layer_sizes[0]}")
        return x, squeeze

    def forward(self, x):
        """Forward pass for a single feature vector or a batch (rows)."""
        x, squeeze = self._check_input(x)
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = self._act(h)
        return h[0] if squeeze else h

    def _forward_cached(self, x):
        acts = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < len(self.weights) - 1:
                h = self._act(h)
            acts.append(h)
        return acts

    def backward(self, x, d_out):
        """Reverse pass from an output-side gradient.

        Returns (flat parameter gradient, gradient w.r.t. the inputs).
        """
        x, _ = self._check_input(x)
        d_out = np.asarray(d_out, dtype=float).reshape(x.shape[0], self.layer_sizes[-1])
        acts = self._forward_cached(x)
        delta = d_out
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * self._act_grad(acts[i])
            else:
                delta = delta @ self.weights[i].T
        flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)])
        return flat, delta

    def backward_mse(self, inputs, targets):
        """Mean-squared-error loss over a batch and its exact parameter gradient.

        loss = (1/N) sum_n ||f(x_n) - t_n||^2
        """
        x, _ = self._check_input(inputs)
        t = np.asarray(targets, dtype=float).reshape(x.shape[0], self.layer_sizes[-1])
        if x.shape[0] == 0:
            raise ShapeMismatch("empty batch")
        out = self.forward(x)
        res = out - t
        loss = float((res * res).sum() / x.shape[0])
        if not math.isfinite(loss):
            raise NonFiniteLoss(f"loss={loss}")
        grad, _ = self.backward(x, 2.0 * res / x.shape[0])
        return loss, grad

    # -- flat parameter view --------------------------------------------------

    def flatten(self) -> np.ndarray:
        return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)])

    def load_flat(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.n_params,):
            raise ShapeMismatch(f"expected {self.n_params} parameters, got {vec.shape}")
        i = 0
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[li] = vec[i:i + w.size].reshape(w.shape).copy()
            i += w.size
            self.biases[li] = vec[i:i + b.size].copy()
            i += b.size

    def clone_params(self) -> np.ndarray:
        return self.flatten()

    def clone(self) -> "MlpModel":
        m = MlpModel(self.layer_sizes, self.activation, seed=0)
        m.load_flat(self.flatten())
        return m

    # -- checkpointing --------------------------------------------------------

    def save(self, path):
        with open(path, "w") as f:
            f.write("llpl-mlp v1\n")
            f.write(" ".join(str(n) for n in self.layer_sizes) + f" {self.activation}\n")
            f.write(" ".join(f"{v:.17g}" for v in self.flatten()) + "\n")

    @classmethod
    def load(cls, path) -> "MlpModel":
        with open(path) as f:
            header = f.readline().strip()
            if header != "llpl-mlp v1":
                raise ValueError(f"unsupported checkpoint header {header!r}")
            tokens = f.readline().split()
            activation = "tanh"
            if tokens and not tokens[-1].lstrip("-").isdigit():
                activation = tokens.pop()
            sizes = [int(t) for t in tokens]
            params = np.array(f.read().split(), dtype=float)
        m = cls(sizes, activation, seed=0)
        m.load_flat(params)
        return m


def sgd_step(model: MlpModel, grad, lr: float):
    """params <- params - lr * grad in the canonical flat ordering."""
    if lr <= 0.0:
        raise ValueError("lr must be positive")
    grad = np.asarray(grad, dtype=float)
    if grad.shape != (model.n_params,):
        raise ShapeMismatch(f"gradient length {grad.shape} != {model.n_params}")
    model.load_flat(model.flatten() - lr * grad)


def soft_update(target: MlpModel, source: MlpModel, tau: float):
    """target <- tau * source + (1 - tau) * target (tau=1 is a hard copy)."""
    if target.layer_sizes != source.layer_sizes:
        raise ShapeMismatch("mismatched layer sizes")
    target.load_flat(tau * source.flatten() + (1.0 - tau) * target.flatten())


class Normalizer:
    """Per-feature standardization, std floored at 1e-6."""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.maximum(np.asarray(std, dtype=float), 1e-6)

    @classmethod
    def fit(cls, features) -> "Normalizer":
        f = np.asarray(features, dtype=float)
        return cls(f.mean(axis=0), f.std(axis=0))

    def transform(self, features):
        return (np.asarray(features, dtype=float) - self.mean) / self.std

    def inverse(self, normalized):
        return np.asarray(normalized, dtype=float) * self.std + self.mean

    def save(self, path):
        with open(path, "w") as f:
            f.write("llpl-norm v1\n")
            f.write(" ".join(f"{v:.17g}" for v in self.mean) + "\n")
            f.write(" ".join(f"{v:.17g}" for v in self.std) + "\n")

    @classmethod
    def load(cls, path) -> "Normalizer":
        with open(path) as f:
            if f.readline().strip() != "llpl-norm v1":
                raise ValueError("unsupported normalizer header")
            mean = np.array(f.readline().split(), dtype=float)
            std = np.array(f.readline().split(), dtype=float)
        return cls(mean, std)
