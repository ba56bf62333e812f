"""Small feed-forward networks with explicit forward/backward and Adam.

Shared by the policy, value, and constraint networks. Everything is plain
numpy; a forward pass records the activations needed for an exact
reverse-mode backward pass.
"""

import json
from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("tanh", "relu", "linear")


@dataclass
class MlpParams:
    """Layer weights (fan_in x fan_out), biases, and hidden activation tags."""

    weights: list  # list of np.ndarray
    biases: list  # list of np.ndarray
    activations: list  # one tag per layer; last is usually "linear"

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("layer lists must have equal length")
        for W, b in zip(self.weights, self.biases):
            if W.shape[1] != b.shape[0]:
                raise ValueError("bias shape must match weight fan_out")
        for W_prev, W_next in zip(self.weights, self.weights[1:]):
            if W_prev.shape[1] != W_next.shape[0]:
                raise ValueError("consecutive layer dimensions must chain")
        for act in self.activations:
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")

    @property
    def n_in(self):
        return self.weights[0].shape[0]

    @property
    def n_out(self):
        return self.weights[-1].shape[1]

    def copy(self):
        return MlpParams(
            [W.copy() for W in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )


def _orthogonal(rng, fan_in, fan_out, gain):
    a = rng.standard_normal((fan_in, fan_out))
    q, r = np.linalg.qr(a if fan_in >= fan_out else a.T)
    q = q * np.sign(np.diag(r))
    if fan_in < fan_out:
        q = q.T
    return gain * q[:fan_in, :fan_out]


def init_mlp(rng, sizes, hidden_activation="tanh", out_gain=1.0):
    """Orthogonal weights, zero biases; out_gain scales the final layer."""
    weights, biases, acts = [], [], []
    for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        gain = out_gain if last else np.sqrt(2.0) if hidden_activation == "relu" else 1.0
        weights.append(_orthogonal(rng, fi, fo, gain))
        biases.append(np.zeros(fo))
        acts.append("linear" if last else hidden_activation)
    return MlpParams(weights, biases, acts)


def _apply_act(act, z):
    if act == "tanh":
        return np.tanh(z)
    if act == "relu":
        return np.maximum(0.0, z)
    return z


def _act_grad(act, z, h):
    if act == "tanh":
        return 1.0 - h * h
    if act == "relu":
        # subgradient 0 exactly at the kink
        return (z > 0).astype(float)
    return np.ones_like(z)


def forward(params, x):
    """Run the network; returns (output, tape) with tape usable by backward.

    Accepts a single input vector (1-D) or a batch (2-D, rows are samples).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.n_in:
        raise ValueError(f"input dim {h.shape[1]} != network fan_in {params.n_in}")
    pre, post = [], [h]
    for W, b, act in zip(params.weights, params.biases, params.activations):
        z = h @ W + b
        h = _apply_act(act, z)
        pre.append(z)
        post.append(h)
    tape = {"pre": pre, "post": post, "single": single, "params": params}
    return (h[0] if single else h), tape


def backward(tape, output_gradient):
    """Exact reverse-mode gradients of the recorded forward pass.

    Returns (weight_grads, bias_grads, input_gradient). Gradients are summed
    over the batch, matching d(sum of per-sample losses)/d(params).
    """
    params = tape["params"]
    g = np.asarray(output_gradient, dtype=float)
    if tape["single"]:
        g = g[None, :]
    w_grads = [None] * len(params.weights)
    b_grads = [None] * len(params.biases)
    for li in reversed(range(len(params.weights))):
        z, h_in = tape["pre"][li], tape["post"][li]
        h_out = tape["post"][li + 1]
        g = g * _act_grad(params.activations[li], z, h_out)
        w_grads[li] = h_in.T @ g
        b_grads[li] = g.sum(axis=0)
        g = g @ params.weights[li].T
    return w_grads, b_grads, (g[0] if tape["single"] else g)


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators shaped like the parameters."""

    m_w: list
    v_w: list
    m_b: list
    v_b: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(
            [np.zeros_like(W) for W in params.weights],
            [np.zeros_like(W) for W in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(b) for b in params.biases],
            0, lr, beta1, beta2, eps,
        )


class NonFiniteGradientError(RuntimeError):
    """A gradient contained NaN/inf; the update step was rejected."""


def adam_step(params, w_grads, b_grads, state):
    """In-place Adam update; rejects non-finite gradients."""
    for g in w_grads + b_grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("non-finite gradient, step rejected")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, (W, gw) in enumerate(zip(params.weights, w_grads)):
        state.m_w[i] = state.beta1 * state.m_w[i] + (1 - state.beta1) * gw
        state.v_w[i] = state.beta2 * state.v_w[i] + (1 - state.beta2) * gw * gw
        W -= state.lr * (state.m_w[i] / bc1) / (np.sqrt(state.v_w[i] / bc2) + state.eps)
    for i, (b, gb) in enumerate(zip(params.biases, b_grads)):
        state.m_b[i] = state.beta1 * state.m_b[i] + (1 - state.beta1) * gb
        state.v_b[i] = state.beta2 * state.v_b[i] + (1 - state.beta2) * gb * gb
        b -= state.lr * (state.m_b[i] / bc1) / (np.sqrt(state.v_b[i] / bc2) + state.eps)
    return params, state


CHECKPOINT_VERSION = 1


def save_checkpoint(path, params, extra=None):
    """Write a JSON checkpoint that round-trips float64 bit-exactly."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "activations": list(params.activations),
        "layers": [
            {
                "shape": list(W.shape),
                "weights": W.ravel().tolist(),
                "bias": b.tolist(),
            }
            for W, b in zip(params.weights, params.biases)
        ],
        "extra": extra or {},
    }
    with open(path, "w") as f:
        json.dump(payload, f)


def load_checkpoint(path):
    """Returns (MlpParams, extra dict)."""
    with open(path) as f:
        payload = json.load(f)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    weights = [
        np.array(layer["weights"], dtype=float).reshape(layer["shape"])
        for layer in payload["layers"]
    ]
    biases = [np.array(layer["bias"], dtype=float) for layer in payload["layers"]]
    return MlpParams(weights, biases, payload["activations"]), payload["extra"]
