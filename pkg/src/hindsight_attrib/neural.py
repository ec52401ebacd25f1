"""Small dense networks on plain numpy.

Forward passes cache layer activations so a matching backward pass can run
without recomputation.  Any parameter update bumps a version counter; a
backward pass against a cache from an older version raises StaleCache
instead of silently mixing states.  Forward and backward accept batches,
which is what keeps path-integral attribution cheap.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BadArchitecture, DimensionMismatch, StaleCache

logger = logging.getLogger(__name__)

_HIDDEN_ACTS = {"tanh", "relu", "identity"}
_FINAL_ACTS = _HIDDEN_ACTS | {"softmax"}


def _apply(act: str, z: np.ndarray) -> np.ndarray:
    if act == "tanh":
        return np.tanh(z)
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "identity":
        return z
    # softmax, stabilized per row
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _backprop(act: str, z: np.ndarray, a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gradient through an activation given pre-activation z, output a, upstream g."""
    if act == "tanh":
        return g * (1.0 - a * a)
    if act == "relu":
        return g * (z > 0)
    if act == "identity":
        return g
    return a * (g - (g * a).sum(axis=-1, keepdims=True))


class DenseNet:
    """Fully connected net; sizes[0] inputs, sizes[-1] outputs."""

    def __init__(self, sizes: list[int], activations: list[str], seed: int = 0):
        if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
            raise BadArchitecture(f"need >=2 positive layer sizes, got {sizes}")
        if len(activations) != len(sizes) - 1:
            raise BadArchitecture(
                f"{len(sizes) - 1} activations required, got {len(activations)}"
            )
        for j, act in enumerate(activations):
            allowed = _FINAL_ACTS if j == len(activations) - 1 else _HIDDEN_ACTS
            if act not in allowed:
                raise BadArchitecture(f"activation {act!r} not allowed at layer {j}")
        self.sizes = [int(s) for s in sizes]
        self.activations = list(activations)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        self.version = 0
        self._cache = None

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.ndim != 2 or a.shape[1] != self.in_dim:
            raise DimensionMismatch(f"input shape {x.shape} incompatible with {self.in_dim} inputs")
        acts = [a]
        pre = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ w + b
            a = _apply(act, z)
            pre.append(z)
            acts.append(a)
        self._cache = {"acts": acts, "pre": pre, "single": single, "version": self.version}
        return a[0] if single else a

    def backward(self, grad_out: np.ndarray | None = None):
        """Backprop dL/dy through the cached forward pass.

        grad_out defaults to ones (the gradient of summing every output).
        Returns (weight_grads, bias_grads, input_grad); parameter gradients
        are summed over the batch, the input gradient keeps the batch shape.
        """
        cache = self._cache
        if cache is None or cache["version"] != self.version:
            raise StaleCache("backward called without a forward pass at this version")
        acts, pre, single = cache["acts"], cache["pre"], cache["single"]
        out = acts[-1]
        if grad_out is None:
            g = np.ones_like(out)
        else:
            g = np.asarray(grad_out, dtype=float)
            if single:
                g = g[None, :]
            if g.shape != out.shape:
                raise DimensionMismatch(f"grad_out shape {g.shape} != output {out.shape}")
        w_grads = [None] * len(self.weights)
        b_grads = [None] * len(self.biases)
        for j in range(len(self.weights) - 1, -1, -1):
            g = _backprop(self.activations[j], pre[j], acts[j + 1], g)
            w_grads[j] = acts[j].T @ g
            b_grads[j] = g.sum(axis=0)
            g = g @ self.weights[j].T
        return w_grads, b_grads, (g[0] if single else g)

    def input_gradient(self, x: np.ndarray) -> np.ndarray:
        """d(sum of outputs)/dx, batched; the workhorse for scalar critics."""
        self.forward(x)
        return self.backward()[2]

    def to_dict(self) -> dict:
        return {
            "format": 1,
            "sizes": self.sizes,
            "activations": self.activations,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        net = cls(d["sizes"], d["activations"], seed=0)
        for j, (w, b) in enumerate(zip(d["weights"], d["biases"])):
            w = np.asarray(w, dtype=float)
            b = np.asarray(b, dtype=float)
            if w.shape != net.weights[j].shape or b.shape != net.biases[j].shape:
                raise BadArchitecture(f"checkpoint layer {j} shape mismatch")
            net.weights[j] = w
            net.biases[j] = b
        net.version = 0
        net._cache = None
        return net


def save_checkpoint(net: DenseNet, path) -> None:
    with open(path, "w") as fh:
        json.dump(net.to_dict(), fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> DenseNet:
    with open(path) as fh:
        return DenseNet.from_dict(json.load(fh))


@dataclass
class AdamState:
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_net(cls, net: DenseNet) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in net.weights],
            v_w=[np.zeros_like(w) for w in net.weights],
            m_b=[np.zeros_like(b) for b in net.biases],
            v_b=[np.zeros_like(b) for b in net.biases],
        )


def sgd_step(net: DenseNet, w_grads, b_grads, lr: float) -> None:
    """In-place descent step; bumps the net version so stale caches are caught."""
    for j in range(len(net.weights)):
        net.weights[j] -= lr * w_grads[j]
        net.biases[j] -= lr * b_grads[j]
    net.version += 1


def adam_step(
    net: DenseNet,
    w_grads,
    b_grads,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    state.step += 1
    t = state.step
    for j in range(len(net.weights)):
        for grads, params, ms, vs in (
            (w_grads[j], net.weights[j], state.m_w, state.v_w),
            (b_grads[j], net.biases[j], state.m_b, state.v_b),
        ):
            ms[j] = beta1 * ms[j] + (1 - beta1) * grads
            vs[j] = beta2 * vs[j] + (1 - beta2) * grads * grads
            m_hat = ms[j] / (1 - beta1**t)
            v_hat = vs[j] / (1 - beta2**t)
            params -= lr * m_hat / (np.sqrt(v_hat) + eps)
    net.version += 1
