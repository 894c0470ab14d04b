"""Small coordinate-network head: sine-activated MLP with a linear output.

Two hidden layers by default.  The first sine layer runs at a higher
frequency than the rest, following the usual sinusoidal-network recipe; a
ReLU fallback and a test-only linear mode are selectable per config.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("sine", "relu", "linear")


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_width: int = 192
    hidden_layers: int = 2
    omega_first: float = 30.0
    omega_hidden: float = 1.0
    activation: str = "sine"

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_width < 1 or self.hidden_layers < 1:
            raise ValueError("input_dim, hidden_width and hidden_layers must be >= 1")
        if not (self.omega_first > 0 and self.omega_hidden > 0):
            raise ValueError("sine frequencies must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    def layer_dims(self):
        """(fan_in, fan_out) per linear layer, hidden layers plus output."""
        dims = [self.input_dim] + [self.hidden_width] * self.hidden_layers + [1]
        return list(zip(dims[:-1], dims[1:]))

    def omega(self, layer: int) -> float:
        return self.omega_first if layer == 0 else self.omega_hidden


@dataclass
class MlpParams:
    weights: list  # per layer, shape (fan_out, fan_in)
    biases: list  # per layer, shape (fan_out,)

    def validate(self, config: MlpConfig):
        dims = config.layer_dims()
        if len(self.weights) != len(dims) or len(self.biases) != len(dims):
            raise ValueError("parameter count does not match config depth")
        for (fan_in, fan_out), w, b in zip(dims, self.weights, self.biases):
            if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                raise ValueError(f"layer shape mismatch: {w.shape}, {b.shape} vs ({fan_out}, {fan_in})")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("parameters contain non-finite values")


def init_params(config: MlpConfig, seed: int, dtype=np.float32) -> MlpParams:
    """Sine-network initialization.

    First layer weights are uniform in [-1/input_dim, 1/input_dim]; later
    layers (output included) are uniform in +-sqrt(6/fan_in)/omega.  Biases
    start at zero.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for layer, (fan_in, fan_out) in enumerate(config.layer_dims()):
        if layer == 0:
            bound = 1.0 / fan_in
        else:
            bound = np.sqrt(6.0 / fan_in) / config.omega(layer)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(weights, biases)


def _act(z, omega, kind):
    if kind == "sine":
        return np.sin(omega * z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_deriv(z, omega, kind):
    if kind == "sine":
        return omega * np.cos(omega * z)
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


def mlp_forward_batch(features, config: MlpConfig, params: MlpParams):
    """Evaluate the network on features (P, input_dim).

    Returns ``(outputs, cache)`` with outputs of shape (P,); the cache holds
    the pre-activations needed by :func:`mlp_backward_batch`.
    """
    x = np.asarray(features)
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ValueError(f"features must have shape (P, {config.input_dim}), got {x.shape}")
    n_layers = len(params.weights)
    h = x
    pre, hidden = [], [x]
    for layer in range(n_layers - 1):
        z = h @ params.weights[layer].T + params.biases[layer]
        pre.append(z)
        h = _act(z, config.omega(layer), config.activation)
        hidden.append(h)
    out = h @ params.weights[-1].T + params.biases[-1]
    return out[:, 0], (pre, hidden)


def mlp_backward_batch(cache, config: MlpConfig, params: MlpParams, upstream):
    """Reverse-mode gradients for a batch.

    ``upstream`` has shape (P,) and multiplies the scalar outputs.  Returns
    ``(grads, dfeatures)`` where grads is an MlpParams-shaped container of
    gradient arrays and dfeatures has the input's shape.
    """
    pre, hidden = cache
    dy = np.asarray(upstream)[:, np.newaxis]  # (P, 1)
    n_layers = len(params.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    delta = dy
    gw[-1] = delta.T @ hidden[-1]
    gb[-1] = delta.sum(axis=0)
    dh = delta @ params.weights[-1]
    for layer in range(n_layers - 2, -1, -1):
        dz = dh * _act_deriv(pre[layer], config.omega(layer), config.activation)
        gw[layer] = dz.T @ hidden[layer]
        gb[layer] = dz.sum(axis=0)
        dh = dz @ params.weights[layer]
    return MlpParams(gw, gb), dh


def mlp_forward(features, config: MlpConfig, params: MlpParams) -> float:
    """Scalar convenience wrapper for a single feature vector."""
    out, _ = mlp_forward_batch(np.asarray(features, dtype=np.float64).reshape(1, -1), config, params)
    return float(out[0])


def mlp_backward(features, config: MlpConfig, params: MlpParams, upstream: float):
    """Gradients of ``upstream * output`` for a single feature vector."""
    x = np.asarray(features, dtype=np.float64).reshape(1, -1)
    _, cache = mlp_forward_batch(x, config, params)
    grads, dx = mlp_backward_batch(cache, config, params, np.array([float(upstream)]))
    return grads, dx[0]
