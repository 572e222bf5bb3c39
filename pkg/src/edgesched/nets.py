"""Dense feedforward networks with analytic backpropagation.

Self-contained numpy numerics: ReLU hidden layers, tanh or linear output,
Adam with bias correction, soft target blending, and a versioned binary
parameter format. No autodiff framework; gradients are exact and checked
against finite differences in the test suite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain import DimensionError, ValidationError

__all__ = [
    "Mlp",
    "ForwardCache",
    "AdamState",
    "soft_update",
    "save_mlp",
    "load_mlp",
    "PARAM_MAGIC",
    "PARAM_VERSION",
]

_ACTIVATIONS = ("linear", "tanh")


@dataclass
class ForwardCache:
    """Activations retained by forward() so backward() can run."""

    x: np.ndarray                 # input, shape (B, in)
    pre: list[np.ndarray]         # pre-activations per layer
    post: list[np.ndarray]        # post-activations per layer
    squeeze: bool                 # input arrived as a 1-D vector


class Mlp:
    """Fully connected network; weights[l] has shape (in_l, out_l).

    The standard policy/value factory builds two ReLU hidden layers; the
    math below supports any depth so tiny hand-checkable nets work too.
    """

    def __init__(self, layer_sizes: list[int], output_activation: str,
                 weights: list[np.ndarray] | None = None,
                 biases: list[np.ndarray] | None = None):
        if len(layer_sizes) < 2:
            raise ValidationError("need at least input and output layer sizes")
        if any(s < 1 for s in layer_sizes):
            raise ValidationError(f"layer sizes must be >= 1, got {layer_sizes}")
        if output_activation not in _ACTIVATIONS:
            raise ValidationError(f"unknown output activation {output_activation!r}")
        self.layer_sizes = list(layer_sizes)
        self.output_activation = output_activation
        if weights is None:
            self.weights = [np.zeros((a, b)) for a, b in zip(layer_sizes, layer_sizes[1:])]
            self.biases = [np.zeros(b) for b in layer_sizes[1:]]
        else:
            assert biases is not None
            self.weights = weights
            self.biases = biases
            for l, (w, b) in enumerate(zip(weights, biases)):
                if w.shape != (layer_sizes[l], layer_sizes[l + 1]) or b.shape != (layer_sizes[l + 1],):
                    raise DimensionError(f"parameter shapes inconsistent at layer {l}")

    @classmethod
    def create(cls, in_dim: int, hidden: int, out_dim: int, output_activation: str,
               rng: np.random.Generator) -> "Mlp":
        """Two ReLU hidden layers of equal width; standard deterministic-policy init.

        Hidden parameters are uniform in +/- 1/sqrt(fan_in); the final layer
        uniform in +/- 3e-3 so tanh heads start near the box midpoint.
        """
        sizes = [in_dim, hidden, hidden, out_dim]
        net = cls(sizes, output_activation)
        for l in range(len(net.weights)):
            fan_in = sizes[l]
            bound = 3e-3 if l == len(net.weights) - 1 else 1.0 / np.sqrt(fan_in)
            net.weights[l] = rng.uniform(-bound, bound, size=net.weights[l].shape)
            net.biases[l] = rng.uniform(-bound, bound, size=net.biases[l].shape)
        return net

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.output_activation,
                   [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def params(self) -> list[np.ndarray]:
        """Interleaved [W0, b0, W1, b1, ...]; live views, not copies."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x) -> tuple[np.ndarray, ForwardCache]:
        """Affine/activation composition; accepts (in,) or (B, in) input."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.layer_sizes[0]:
            raise DimensionError(
                f"input shape {x.shape} incompatible with input size {self.layer_sizes[0]}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("non-finite network input")
        pre, post = [], []
        a = x
        for l in range(self.n_layers):
            z = a @ self.weights[l] + self.biases[l]
            pre.append(z)
            if l < self.n_layers - 1:
                a = np.maximum(z, 0.0)
            elif self.output_activation == "tanh":
                a = np.tanh(z)
            else:
                a = z
            post.append(a)
        out = post[-1][0] if squeeze else post[-1]
        return out, ForwardCache(x=x, pre=pre, post=post, squeeze=squeeze)

    def backward(self, cache: ForwardCache, output_gradient) -> tuple[list[np.ndarray], np.ndarray]:
        """Exact gradients of sum(output_gradient * output).

        Returns (param_grads interleaved like params(), input_grad). The
        cache must come from this network's matching forward call.
        """
        if len(cache.pre) != self.n_layers or cache.pre[-1].shape[1] != self.layer_sizes[-1]:
            raise ValidationError("cache does not match this network")
        g = np.asarray(output_gradient, dtype=np.float64)
        if cache.squeeze and g.ndim == 1:
            g = g[None, :]
        if g.shape != cache.post[-1].shape:
            raise DimensionError(
                f"output_gradient shape {g.shape} != output shape {cache.post[-1].shape}")
        if self.output_activation == "tanh":
            dz = g * (1.0 - cache.post[-1] ** 2)
        else:
            dz = g
        param_grads: list[np.ndarray] = []
        for l in range(self.n_layers - 1, -1, -1):
            a_prev = cache.x if l == 0 else cache.post[l - 1]
            dw = a_prev.T @ dz
            db = dz.sum(axis=0)
            param_grads[:0] = [dw, db]
            da = dz @ self.weights[l].T
            if l > 0:
                dz = da * (cache.pre[l - 1] > 0.0)
        input_grad = da[0] if cache.squeeze else da
        return param_grads, input_grad

    def check_finite(self) -> None:
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"non-finite parameters in layer {l}")


class AdamState:
    """Adam moments for one parameter list; updates in place."""

    def __init__(self, params: list[np.ndarray], learning_rate: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.timestep = 0
        self.first_moment = [np.zeros_like(p) for p in params]
        self.second_moment = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """One bias-corrected Adam update, mutating params in place."""
        if len(params) != len(self.first_moment) or len(grads) != len(params):
            raise DimensionError("parameter/gradient count mismatch")
        for i, g in enumerate(grads):
            if not np.all(np.isfinite(g)):
                raise ValidationError(f"non-finite gradient for tensor {i}")
        self.timestep += 1
        t = self.timestep
        lr = self.learning_rate
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, m, v in zip(params, grads, self.first_moment, self.second_moment):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.epsilon)


def soft_update(target: Mlp, source: Mlp, tau: float) -> None:
    """Blend source into target: p' <- tau*p + (1-tau)*p'."""
    if target.layer_sizes != source.layer_sizes or \
            target.output_activation != source.output_activation:
        raise ValidationError("target and source architectures differ")
    for tp, sp in zip(target.params(), source.params()):
        tp *= 1.0 - tau
        tp += tau * sp


# Binary parameter file, little-endian throughout:
#   8s   magic "EMLPNET1"
#   I    format version (currently 1)
#   I    number of layer sizes  (n)
#   nI   layer sizes
#   B    output activation tag (0=linear, 1=tanh)
# then per weight layer l: W_l as float64 row-major (in_l x out_l), b_l float64.
PARAM_MAGIC = b"EMLPNET1"
PARAM_VERSION = 1


def save_mlp(net: Mlp, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(PARAM_MAGIC)
        fh.write(struct.pack("<II", PARAM_VERSION, len(net.layer_sizes)))
        fh.write(struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes))
        fh.write(struct.pack("<B", _ACTIVATIONS.index(net.output_activation)))
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


class ParamLoadError(ValidationError):
    """Raised for corrupt, truncated, or incompatible parameter files."""


def load_mlp(path: str | Path, expect_sizes: list[int] | None = None) -> Mlp:
    """Load a parameter file written by save_mlp; bit-exact round trip.

    Raises ParamLoadError on corruption, truncation, version mismatch, or
    (when expect_sizes is given) architecture mismatch. No partial state
    escapes a failed load.
    """
    data = Path(path).read_bytes()
    view = memoryview(data)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise ParamLoadError(f"{path}: truncated parameter file")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(8)) != PARAM_MAGIC:
        raise ParamLoadError(f"{path}: not a parameter file (bad magic)")
    version, n_sizes = struct.unpack("<II", take(8))
    if version != PARAM_VERSION:
        raise ParamLoadError(f"{path}: unsupported format version {version}")
    if not (2 <= n_sizes <= 64):
        raise ParamLoadError(f"{path}: implausible layer count {n_sizes}")
    sizes = list(struct.unpack(f"<{n_sizes}I", take(4 * n_sizes)))
    (act_tag,) = struct.unpack("<B", take(1))
    if act_tag >= len(_ACTIVATIONS):
        raise ParamLoadError(f"{path}: unknown activation tag {act_tag}")
    if expect_sizes is not None and sizes != list(expect_sizes):
        raise ParamLoadError(
            f"{path}: architecture mismatch, file has layers {sizes}, expected {list(expect_sizes)}")
    weights, biases = [], []
    for a, b in zip(sizes, sizes[1:]):
        w = np.frombuffer(take(8 * a * b), dtype="<f8").reshape(a, b).copy()
        bias = np.frombuffer(take(8 * b), dtype="<f8").copy()
        weights.append(w)
        biases.append(bias)
    if pos != len(view):
        raise ParamLoadError(f"{path}: {len(view) - pos} trailing bytes")
    return Mlp(sizes, _ACTIVATIONS[act_tag], weights, biases)
