"""Minimal dense neural-network kernel in float64 numpy.

Provides exactly what the TD3 agents and the similarity VAE need: MLP
forward/backward with analytic gradients, bias-corrected Adam, Gaussian
reparameterized sampling, and bit-exact checkpointing. Everything is
computed in 64-bit floats; networks here are tiny, so determinism and
gradient exactness win over speed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    ContractViolationError,
    DimensionError,
    DomainError,
    NumericError,
)

CHECKPOINT_VERSION = 1
HEADS = ("identity", "softmax", "tanh")


@dataclass
class Mlp:
    """Fully connected net: ReLU hidden layers, configurable output head."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = "identity"

    def __post_init__(self) -> None:
        if self.head not in HEADS:
            raise DomainError(f"unknown head {self.head!r}")
        for i in range(len(self.weights) - 1):
            if self.weights[i].shape[1] != self.weights[i + 1].shape[0]:
                raise DimensionError(
                    f"layer {i} output dim {self.weights[i].shape[1]} does not "
                    f"chain into layer {i + 1}"
                )
        for w, b in zip(self.weights, self.biases):
            if b.shape != (w.shape[1],):
                raise DimensionError("bias shape must match layer output dim")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def sizes(self) -> list[int]:
        return [self.in_dim] + [w.shape[1] for w in self.weights]

    def copy(self) -> "Mlp":
        return Mlp(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.head,
        )


def init_mlp(sizes: list[int], head: str, rng: np.random.Generator) -> Mlp:
    """Glorot-uniform weights, zero biases."""

    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(weights, biases, head)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax; accepts 1-D or 2-D input."""

    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class ForwardCache:
    params: Mlp
    inputs: list[np.ndarray]  # activation entering each layer
    output: np.ndarray
    was_1d: bool


def _apply_head(head: str, z: np.ndarray) -> np.ndarray:
    if head == "identity":
        return z
    if head == "softmax":
        return softmax(z)
    return np.tanh(z)


def mlp_forward(params: Mlp, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass; returns output and a cache for exact backprop.

    ``x`` may be a single vector or a (batch, dim) matrix; the output
    matches the input's dimensionality.
    """

    x = np.asarray(x, dtype=np.float64)
    was_1d = x.ndim == 1
    h = x[None, :] if was_1d else x
    if h.ndim != 2 or h.shape[1] != params.in_dim:
        raise DimensionError(
            f"input dim {x.shape} does not match network input {params.in_dim}"
        )
    inputs = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        z = h @ w + b
        h = _apply_head(params.head, z) if i == params.n_layers - 1 else np.maximum(z, 0.0)
    cache = ForwardCache(params, inputs, h, was_1d)
    return (h[0] if was_1d else h), cache


def mlp_logits(params: Mlp, x: np.ndarray) -> np.ndarray:
    """Pre-head output of the final layer (used for logit-space noise)."""

    x = np.asarray(x, dtype=np.float64)
    was_1d = x.ndim == 1
    h = x[None, :] if was_1d else x
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        h = z if i == params.n_layers - 1 else np.maximum(z, 0.0)
    return h[0] if was_1d else h


def mlp_backward(
    params: Mlp, cache: ForwardCache, output_gradient: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Exact gradients of the forward map.

    Returns ``(grads, input_gradient)`` where ``grads[i] = (dW_i, db_i)``.
    """

    if cache.params is not params:
        raise ContractViolationError("cache does not belong to these parameters")
    dout = np.asarray(output_gradient, dtype=np.float64)
    was_1d = dout.ndim == 1
    d = dout[None, :] if was_1d else dout
    if d.shape != cache.output.shape:
        raise DimensionError(
            f"output gradient shape {dout.shape} does not match forward output"
        )

    # Head backward.
    y = cache.output
    if params.head == "softmax":
        d = y * (d - (d * y).sum(axis=1, keepdims=True))
    elif params.head == "tanh":
        d = d * (1.0 - y * y)

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * params.n_layers
    for i in range(params.n_layers - 1, -1, -1):
        h_in = cache.inputs[i]
        if i < params.n_layers - 1:
            # ReLU applied after this layer on the way forward: the stored
            # input of layer i+1 is exactly relu(z_i).
            d = d * (cache.inputs[i + 1] > 0)
        grads[i] = (h_in.T @ d, d.sum(axis=0))
        d = d @ params.weights[i].T
    return grads, (d[0] if was_1d else d)


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators mirroring an Mlp's shapes."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Mlp, **kwargs) -> "AdamState":
        return cls(
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(w) for w in params.weights],
            [np.zeros_like(b) for b in params.biases],
            [np.zeros_like(b) for b in params.biases],
            **kwargs,
        )

    def reset(self) -> None:
        for arrs in (self.m_w, self.v_w, self.m_b, self.v_b):
            for a in arrs:
                a.fill(0.0)
        self.t = 0


def adam_step(
    adam: AdamState,
    params: Mlp,
    grads: list[tuple[np.ndarray, np.ndarray]],
    lr: float,
    skip_layers: frozenset[int] = frozenset(),
) -> Mlp:
    """In-place Adam update; layers in ``skip_layers`` are left untouched."""

    if len(grads) != params.n_layers:
        raise DimensionError("one gradient pair per layer required")
    for i, (dw, db) in enumerate(grads):
        if dw.shape != params.weights[i].shape or db.shape != params.biases[i].shape:
            raise DimensionError(f"gradient shape mismatch at layer {i}")
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise NumericError(f"non-finite gradient at layer {i}")
    adam.t += 1
    c1 = 1.0 - adam.beta1**adam.t
    c2 = 1.0 - adam.beta2**adam.t
    for i, (dw, db) in enumerate(grads):
        if i in skip_layers:
            continue
        for acc_m, acc_v, g, target in (
            (adam.m_w[i], adam.v_w[i], dw, params.weights[i]),
            (adam.m_b[i], adam.v_b[i], db, params.biases[i]),
        ):
            acc_m *= adam.beta1
            acc_m += (1.0 - adam.beta1) * g
            acc_v *= adam.beta2
            acc_v += (1.0 - adam.beta2) * g * g
            target -= lr * (acc_m / c1) / (np.sqrt(acc_v / c2) + adam.eps)
    return params


def gaussian_sample(
    mu: np.ndarray, sigma: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Reparameterized draw z = mu + sigma * eps, eps ~ N(0, I)."""

    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0):
        raise DomainError("sigma must be entrywise >= 0")
    return mu + sigma * rng.standard_normal(np.broadcast(mu, sigma).shape)


# ---------------------------------------------------------------------------
# Checkpointing: versioned npz, bit-exact on round trip.
# ---------------------------------------------------------------------------


def _mlp_to_arrays(name: str, params: Mlp) -> dict[str, np.ndarray]:
    out = {f"{name}.head": np.array(params.head)}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        out[f"{name}.w{i}"] = w
        out[f"{name}.b{i}"] = b
    return out


def _mlp_from_arrays(name: str, data) -> Mlp:
    weights, biases = [], []
    i = 0
    while f"{name}.w{i}" in data:
        weights.append(np.array(data[f"{name}.w{i}"], dtype=np.float64))
        biases.append(np.array(data[f"{name}.b{i}"], dtype=np.float64))
        i += 1
    return Mlp(weights, biases, str(data[f"{name}.head"]))


def _adam_to_arrays(name: str, adam: AdamState) -> dict[str, np.ndarray]:
    out = {
        f"{name}.adam_meta": np.array(
            [adam.t, adam.beta1, adam.beta2, adam.eps], dtype=np.float64
        )
    }
    for i in range(len(adam.m_w)):
        out[f"{name}.mw{i}"] = adam.m_w[i]
        out[f"{name}.vw{i}"] = adam.v_w[i]
        out[f"{name}.mb{i}"] = adam.m_b[i]
        out[f"{name}.vb{i}"] = adam.v_b[i]
    return out


def _adam_from_arrays(name: str, data) -> AdamState:
    meta = data[f"{name}.adam_meta"]
    m_w, v_w, m_b, v_b = [], [], [], []
    i = 0
    while f"{name}.mw{i}" in data:
        m_w.append(np.array(data[f"{name}.mw{i}"]))
        v_w.append(np.array(data[f"{name}.vw{i}"]))
        m_b.append(np.array(data[f"{name}.mb{i}"]))
        v_b.append(np.array(data[f"{name}.vb{i}"]))
        i += 1
    return AdamState(
        m_w, v_w, m_b, v_b,
        t=int(meta[0]), beta1=float(meta[1]), beta2=float(meta[2]),
        eps=float(meta[3]),
    )


def save_checkpoint(
    path,
    nets: dict[str, Mlp],
    adams: dict[str, AdamState] | None = None,
    meta: dict | None = None,
) -> None:
    arrays: dict[str, np.ndarray] = {
        "version": np.array(CHECKPOINT_VERSION),
        "net_names": np.array(sorted(nets)),
        "meta_json": np.array(json.dumps(meta or {}, sort_keys=True)),
    }
    for name in sorted(nets):
        arrays.update(_mlp_to_arrays(name, nets[name]))
    if adams:
        arrays["adam_names"] = np.array(sorted(adams))
        for name in sorted(adams):
            arrays.update(_adam_to_arrays(name, adams[name]))
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[dict[str, Mlp], dict[str, AdamState], dict]:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ContractViolationError(
                f"unsupported checkpoint version {version}"
            )
        nets = {str(n): _mlp_from_arrays(str(n), data) for n in data["net_names"]}
        adams = {}
        if "adam_names" in data:
            adams = {
                str(n): _adam_from_arrays(str(n), data)
                for n in data["adam_names"]
            }
        meta = json.loads(str(data["meta_json"]))
    return nets, adams, meta
