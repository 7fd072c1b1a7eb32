"""Tiny feed-forward networks with hand-written backprop (float64, numpy).

Both the control policy and the curriculum setter are small MLPs; autodiff
frameworks are deliberately avoided so every gradient path can be checked
against finite differences. The forward pass keeps per-layer activations as
a cache, and ``backward`` turns a loss gradient at the output into gradients
for every weight and bias.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "relu")

# Effectively -inf for masked logits; finite so exp() underflows cleanly.
MASKED_LOGIT = -1e30


class GradientError(RuntimeError):
    """Non-finite values showed up in a forward/backward pass."""


@dataclass
class MlpParams:
    """Per-layer weights/biases; ``sizes`` includes input and output widths."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    sizes: tuple[int, ...]
    activation: str = "tanh"

    def copy(self) -> "MlpParams":
        return MlpParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            sizes=self.sizes,
            activation=self.activation,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.weights + self.biases])

    def assign_flat(self, vec: np.ndarray) -> None:
        k = 0
        for arr in self.weights + self.biases:
            arr[...] = vec[k : k + arr.size].reshape(arr.shape)
            k += arr.size


def init_mlp(sizes, rng: np.random.Generator, activation: str = "tanh",
             last_layer_scale: float = 0.01) -> MlpParams:
    """He-style Gaussian init; the final layer starts small so the first
    policy/setter distributions are near uniform."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {ACTIVATIONS}")
    sizes = tuple(int(s) for s in sizes)
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        scale = np.sqrt(2.0 / fan_in)
        if i == len(sizes) - 2:
            scale *= last_layer_scale
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases, sizes=sizes, activation=activation)


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Batched forward pass; returns (output, cache of layer activations).

    ``x`` is (batch, in) or (in,); the output matches. The cache holds the
    post-activation values of every layer, input included, as needed by
    :func:`backward`.
    """
    squeeze = x.ndim == 1
    h = np.atleast_2d(np.asarray(x, dtype=float))
    if h.shape[1] != params.sizes[0]:
        raise GradientError(f"input width {h.shape[1]} != {params.sizes[0]}")
    if not np.all(np.isfinite(h)):
        raise GradientError("non-finite network input")
    cache = [h]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h) if params.activation == "tanh" else np.maximum(h, 0.0)
        cache.append(h)
    return (h[0] if squeeze else h), cache


def backward(params: MlpParams, cache: list[np.ndarray], grad_out: np.ndarray
             ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Backpropagate d(loss)/d(output) through the cached forward pass."""
    g = np.atleast_2d(np.asarray(grad_out, dtype=float))
    d_weights = [np.empty_like(w) for w in params.weights]
    d_biases = [np.empty_like(b) for b in params.biases]
    last = len(params.weights) - 1
    for i in range(last, -1, -1):
        if i < last:
            act = cache[i + 1]
            if params.activation == "tanh":
                g = g * (1.0 - act * act)
            else:
                g = g * (act > 0.0)
        d_weights[i] = cache[i].T @ g
        d_biases[i] = g.sum(axis=0)
        if i > 0:
            g = g @ params.weights[i].T
    return d_weights, d_biases


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Log-probabilities with illegal entries forced to (effectively) -inf."""
    z = np.where(mask, logits, MASKED_LOGIT)
    z = z - z.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return z - log_norm


def masked_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    probs = np.exp(masked_log_softmax(logits, mask))
    return np.where(mask, probs, 0.0)


def entropy_and_grad(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shannon entropy of each row plus its gradient w.r.t. the logits.

    Zero-probability (masked) entries contribute nothing to either.
    """
    logp = np.where(probs > 0.0, np.log(np.where(probs > 0.0, probs, 1.0)), 0.0)
    ent = -(probs * logp).sum(axis=-1)
    grad = -probs * (logp + ent[..., None])
    return ent, grad


@dataclass
class AdamState:
    """First/second moment accumulators for one MlpParams instance."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: MlpParams) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in params.weights],
            v_w=[np.zeros_like(w) for w in params.weights],
            m_b=[np.zeros_like(b) for b in params.biases],
            v_b=[np.zeros_like(b) for b in params.biases],
        )


def adam_step(params: MlpParams, d_weights, d_biases, state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One in-place Adam update with bias correction."""
    state.step += 1
    t = state.step
    corr1 = 1.0 - beta1 ** t
    corr2 = 1.0 - beta2 ** t
    for w, g, m, v in zip(params.weights, d_weights, state.m_w, state.v_w):
        m[...] = beta1 * m + (1.0 - beta1) * g
        v[...] = beta2 * v + (1.0 - beta2) * g * g
        w -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
    for b, g, m, v in zip(params.biases, d_biases, state.m_b, state.v_b):
        m[...] = beta1 * m + (1.0 - beta1) * g
        v[...] = beta2 * v + (1.0 - beta2) * g * g
        b -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)


def sgd_step(params: MlpParams, d_weights, d_biases, lr: float) -> None:
    """Plain gradient descent, used by the REINFORCE-style setter update."""
    for w, g in zip(params.weights, d_weights):
        w -= lr * g
    for b, g in zip(params.biases, d_biases):
        b -= lr * g


CHECKPOINT_VERSION = 1


def save_params(path, params: MlpParams, extra: dict | None = None) -> None:
    """Write an ``.npz`` checkpoint with a versioned header.

    Layout: ``version`` (int), ``sizes`` (int array), ``activation`` (str),
    ``w0..wk`` / ``b0..bk`` weight and bias matrices, plus any ``extra``
    scalar metadata prefixed with ``meta_``.
    """
    payload = {
        "version": np.array(CHECKPOINT_VERSION),
        "sizes": np.array(params.sizes),
        "activation": np.array(params.activation),
    }
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        payload[f"w{i}"] = w
        payload[f"b{i}"] = b
    for key, value in (extra or {}).items():
        payload[f"meta_{key}"] = np.array(value)
    np.savez(path, **payload)


def load_params(path) -> tuple[MlpParams, dict]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        sizes = tuple(int(s) for s in data["sizes"])
        activation = str(data["activation"])
        weights = [data[f"w{i}"] for i in range(len(sizes) - 1)]
        biases = [data[f"b{i}"] for i in range(len(sizes) - 1)]
        extra = {
            key[5:]: data[key].item() if data[key].ndim == 0 else data[key]
            for key in data.files
            if key.startswith("meta_")
        }
    return MlpParams(weights=weights, biases=biases, sizes=sizes, activation=activation), extra
