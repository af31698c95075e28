"""Minimal dense feedforward network with exact backprop and Adam.

Just enough machinery for small actor/critic/regressor networks: rectifier
hidden layers, identity or tanh output, reverse-mode gradients, a
bias-corrected adaptive-moment optimizer, and a fixed-endianness binary
checkpoint format.

Checkpoint byte layout (all integers little-endian, floats little-endian
IEEE 754 binary64):

    offset  size          field
    0       8             magic ``DRBIDNN1`` (format version 1)
    8       4             uint32 L, number of weight layers
    12      4*(L+1)       uint32 layer widths, input first
    ...     1             uint8 hidden activation code
    ...     1             uint8 output activation code
    ...     2             zero padding
    ...                   per layer k: W_k row-major (widths[k] x widths[k+1])
                          then b_k (widths[k+1]), both float64

The format is flat and self-describing, so checkpoints round-trip
bit-for-bit across runs and platforms.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"DRBIDNN1"

_ACTIVATION_CODES = {"identity": 0, "relu": 1, "tanh": 2}
_ACTIVATION_NAMES = {v: k for k, v in _ACTIVATION_CODES.items()}


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "identity":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {name!r}")


def _activate_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(z)
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    raise ValueError(f"unknown activation {name!r}")


class DenseNetwork:
    """Fully connected stack with one activation for all hidden layers.

    Weights are fan-in uniform initialized; pass ``final_init_scale`` to
    shrink the last layer's initialization (actors start near the midpoint
    of their action range that way).
    """

    def __init__(
        self,
        sizes: list[int],
        hidden_activation: str = "relu",
        output_activation: str = "identity",
        rng: np.random.Generator | None = None,
        final_init_scale: float | None = None,
    ):
        if len(sizes) < 2:
            raise ValueError(f"need at least input and output widths, got {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer widths must be positive: {sizes}")
        for name in (hidden_activation, output_activation):
            if name not in _ACTIVATION_CODES:
                raise ValueError(f"unknown activation {name!r}")
        self.sizes = list(sizes)
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        rng = rng or np.random.default_rng()
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(n_in)
            if final_init_scale is not None and k == len(sizes) - 2:
                bound = final_init_scale
            self.weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
            self.biases.append(rng.uniform(-bound, bound, size=n_out))
        self._cache: tuple[list[np.ndarray], list[np.ndarray]] | None = None

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def parameters(self) -> list[np.ndarray]:
        """Weights and biases interleaved, layer by layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def _layer_activation(self, k: int) -> str:
        return self.output_activation if k == self.n_layers - 1 else self.hidden_activation

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batched forward pass; caches intermediates for backward."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != first layer {self.sizes[0]}")
        pre, post = [], [x]
        a = x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w + b
            a = _activate(self._layer_activation(k), z)
            pre.append(z)
            post.append(a)
        self._cache = (pre, post)
        return a

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Forward pass for inference only; leaves the backward cache alone."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != first layer {self.sizes[0]}")
        a = x
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = _activate(self._layer_activation(k), a @ w + b)
        return a

    def backward(self, output_grad: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Exact reverse-mode gradients for the cached forward pass.

        ``output_grad`` holds dL/d(output) per batch row; returns the
        parameter gradients in ``parameters()`` order plus dL/d(input).
        The cache is consumed: a second backward without a new forward
        raises.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        pre, post = self._cache
        self._cache = None
        delta = np.atleast_2d(np.asarray(output_grad, dtype=float))
        if delta.shape != pre[-1].shape:
            raise ValueError(f"upstream gradient shape {delta.shape} != output {pre[-1].shape}")
        grads: list[np.ndarray] = [np.empty(0)] * (2 * self.n_layers)
        for k in range(self.n_layers - 1, -1, -1):
            delta = delta * _activate_grad(self._layer_activation(k), pre[k], post[k + 1])
            grads[2 * k] = post[k].T @ delta
            grads[2 * k + 1] = delta.sum(axis=0)
            delta = delta @ self.weights[k].T
        return grads, delta

    def copy(self) -> "DenseNetwork":
        dup = DenseNetwork.__new__(DenseNetwork)
        dup.sizes = list(self.sizes)
        dup.hidden_activation = self.hidden_activation
        dup.output_activation = self.output_activation
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        dup._cache = None
        return dup

    # -- checkpoint format -------------------------------------------------

    def save(self, path: str | Path) -> None:
        parts = [MAGIC, struct.pack("<I", self.n_layers)]
        parts.append(struct.pack(f"<{len(self.sizes)}I", *self.sizes))
        parts.append(
            struct.pack(
                "<BBxx",
                _ACTIVATION_CODES[self.hidden_activation],
                _ACTIVATION_CODES[self.output_activation],
            )
        )
        for w, b in zip(self.weights, self.biases):
            parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
            parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
        Path(path).write_bytes(b"".join(parts))

    @classmethod
    def load(cls, path: str | Path) -> "DenseNetwork":
        raw = Path(path).read_bytes()
        if raw[:8] != MAGIC:
            raise ValueError(f"{path}: not a network checkpoint (bad magic {raw[:8]!r})")
        (n_layers,) = struct.unpack_from("<I", raw, 8)
        sizes = list(struct.unpack_from(f"<{n_layers + 1}I", raw, 12))
        off = 12 + 4 * (n_layers + 1)
        hidden_code, output_code = struct.unpack_from("<BBxx", raw, off)
        off += 4
        net = cls.__new__(cls)
        net.sizes = sizes
        net.hidden_activation = _ACTIVATION_NAMES[hidden_code]
        net.output_activation = _ACTIVATION_NAMES[output_code]
        net.weights, net.biases = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            w = np.frombuffer(raw, dtype="<f8", count=n_in * n_out, offset=off)
            off += 8 * n_in * n_out
            b = np.frombuffer(raw, dtype="<f8", count=n_out, offset=off)
            off += 8 * n_out
            net.weights.append(w.reshape(n_in, n_out).copy())
            net.biases.append(b.copy())
        if off != len(raw):
            raise ValueError(f"{path}: trailing bytes in checkpoint")
        net._cache = None
        return net


class AdamOptimizer:
    """Adaptive-moment estimation with bias correction."""

    def __init__(
        self,
        network: DenseNetwork,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        params = network.parameters()
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, network: DenseNetwork, grads: list[np.ndarray]) -> None:
        """One in-place update of the network's parameters."""
        params = network.parameters()
        if len(grads) != len(params):
            raise ValueError(f"got {len(grads)} gradients for {len(params)} parameters")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise ValueError(
                    f"non-finite gradient (max |g| = {np.max(np.abs(g))}) at step "
                    f"{self.step_count + 1}"
                )
        self.step_count += 1
        t = self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def soft_update(target: DenseNetwork, online: DenseNetwork, tau: float) -> None:
    """Move target parameters a fraction tau toward the online network."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    for pt, po in zip(target.parameters(), online.parameters()):
        pt *= 1.0 - tau
        pt += tau * po
