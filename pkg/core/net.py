"""
Minimal fully connected network with softmax cross-entropy and manual backprop.

Weights are stored as (in_dim, out_dim) matrices so a layer computes
``inputs @ W + b``. The flat parameter vector lists, layer by layer, the
row-major weight matrix followed by the bias vector.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple, NamedTuple, Sequence

import numpy as np

from utils.run_guard import ShapeMismatchError


logger = logging.getLogger(__name__)


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: Activation = Activation.RELU

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        object.__setattr__(self, 'activation', Activation(self.activation))

    @property
    def n_params(self) -> int:
        return self.in_dim * self.out_dim + self.out_dim

    @classmethod
    def from_model(cls, model) -> "LayerSpec":
        """Build from a validated config entry"""
        return cls(model.in_dim, model.out_dim, Activation(model.activation))


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ShapeMismatchError(f"inputs must be a matrix, got shape {self.inputs.shape}")
        if len(self.inputs) != len(self.labels):
            raise ShapeMismatchError(
                f"inputs have {len(self.inputs)} rows but labels have {len(self.labels)}"
            )

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index: np.ndarray) -> "Batch":
        return Batch(self.inputs[index], self.labels[index])


@dataclass
class Network:
    layers: List[LayerSpec]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    rng_seed: int = 0

    def __post_init__(self):
        check_chain(self.layers)
        for spec, w, b in zip(self.layers, self.weights, self.biases):
            if w.shape != (spec.in_dim, spec.out_dim) or b.shape != (spec.out_dim,):
                raise ShapeMismatchError(
                    f"layer {spec.in_dim}x{spec.out_dim} got weight {w.shape} and bias {b.shape}"
                )

    @property
    def n_params(self) -> int:
        return sum(spec.n_params for spec in self.layers)

    @property
    def n_classes(self) -> int:
        return self.layers[-1].out_dim

    def layer_offsets(self) -> List[Tuple[int, int]]:
        """(start, stop) of each layer's slice of the flat vector"""
        offsets = []
        start = 0
        for spec in self.layers:
            offsets.append((start, start + spec.n_params))
            start += spec.n_params
        return offsets

    def copy(self) -> "Network":
        return Network(
            layers=list(self.layers),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            rng_seed=self.rng_seed
        )


class ForwardCache(NamedTuple):
    # inputs to each layer and its pre-activation
    layer_inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]


def check_chain(layers: Sequence[LayerSpec]):
    """Consecutive layer dims must chain"""
    if not layers:
        raise ShapeMismatchError("network needs at least one layer")
    for k, (prev, nxt) in enumerate(zip(layers, layers[1:])):
        if prev.out_dim != nxt.in_dim:
            raise ShapeMismatchError(
                f"layer {k} out_dim {prev.out_dim} does not match layer {k + 1} in_dim {nxt.in_dim}"
            )


def init_network(layers: Sequence[LayerSpec], seed: int) -> Network:
    """Glorot-uniform weights, zero biases, fully determined by the seed"""
    layers = list(layers)
    check_chain(layers)
    rng = np.random.default_rng(seed)

    weights, biases = [], []
    for spec in layers:
        limit = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
        weights.append(rng.uniform(-limit, limit, size=(spec.in_dim, spec.out_dim)))
        biases.append(np.zeros(spec.out_dim, dtype=np.float64))

    return Network(layers=layers, weights=weights, biases=biases, rng_seed=seed)


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RELU:
        return np.maximum(z, 0.0)
    return z


def forward(net: Network, batch: Batch) -> Tuple[np.ndarray, ForwardCache]:
    """Logits of shape (samples, classes) plus the activation record for backward"""
    x = batch.inputs
    if x.shape[1] != net.layers[0].in_dim:
        raise ShapeMismatchError(
            f"input width {x.shape[1]} does not match first layer in_dim {net.layers[0].in_dim}"
        )

    layer_inputs, pre_activations = [], []
    a = x
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        layer_inputs.append(a)
        z = a @ w + b
        pre_activations.append(z)
        a = _activate(z, spec.activation)

    return a, ForwardCache(layer_inputs, pre_activations)


def _check_labels(net: Network, batch: Batch):
    if len(batch) and (batch.labels.min() < 0 or batch.labels.max() >= net.n_classes):
        raise ShapeMismatchError(f"labels must lie in [0, {net.n_classes})")


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy, max-subtracted for stability"""
    log_probs = _log_softmax(logits)
    return float(-log_probs[np.arange(len(labels)), labels].mean())


def loss(net: Network, batch: Batch) -> float:
    """Forward-only loss (evaluation and landscape sweeps)"""
    _check_labels(net, batch)
    logits, _ = forward(net, batch)
    return cross_entropy(logits, batch.labels)


def accuracy(net: Network, batch: Batch) -> float:
    logits, _ = forward(net, batch)
    return float(np.mean(np.argmax(logits, axis=1) == batch.labels))


def evaluate(net: Network, batch: Batch) -> Tuple[float, float]:
    """(loss, accuracy) from a single forward pass"""
    _check_labels(net, batch)
    logits, _ = forward(net, batch)
    return cross_entropy(logits, batch.labels), float(np.mean(np.argmax(logits, axis=1) == batch.labels))


def loss_and_grad(net: Network, batch: Batch) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy and its flat gradient aligned with flatten(net)"""
    _check_labels(net, batch)
    logits, cache = forward(net, batch)
    n = len(batch)

    log_probs = _log_softmax(logits)
    value = float(-log_probs[np.arange(n), batch.labels].mean())

    # d loss / d logits
    delta = np.exp(log_probs)
    delta[np.arange(n), batch.labels] -= 1.0
    delta /= n

    grad_w: List[np.ndarray] = [None] * len(net.layers)
    grad_b: List[np.ndarray] = [None] * len(net.layers)
    for k in range(len(net.layers) - 1, -1, -1):
        grad_w[k] = cache.layer_inputs[k].T @ delta
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ net.weights[k].T
            if net.layers[k - 1].activation is Activation.RELU:
                # subgradient 0 at the kink
                delta = delta * (cache.pre_activations[k - 1] > 0)

    flat = np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grad_w, grad_b)])
    return value, flat


def flatten(net: Network) -> np.ndarray:
    """Copy of all parameters as one float64 vector"""
    return np.concatenate([np.concatenate([w.ravel(), b]) for w, b in zip(net.weights, net.biases)])


def unflatten(net: Network, vec: np.ndarray):
    """Write a flat vector back into the network's weights and biases in place"""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or len(vec) != net.n_params:
        raise ShapeMismatchError(f"expected a vector of {net.n_params} parameters, got shape {vec.shape}")

    for k, (start, stop) in enumerate(net.layer_offsets()):
        spec = net.layers[k]
        n_w = spec.in_dim * spec.out_dim
        net.weights[k][...] = vec[start:start + n_w].reshape(spec.in_dim, spec.out_dim)
        net.biases[k][...] = vec[start + n_w:stop]


def locate_parameter(net: Network, flat_index: int) -> Tuple[int, str, Tuple[int, ...]]:
    """Map a flat index to (layer, 'weight' | 'bias', position)"""
    for k, (start, stop) in enumerate(net.layer_offsets()):
        if start <= flat_index < stop:
            spec = net.layers[k]
            local = flat_index - start
            n_w = spec.in_dim * spec.out_dim
            if local < n_w:
                return k, 'weight', divmod(local, spec.out_dim)
            return k, 'bias', (local - n_w,)
    raise IndexError(f"flat index {flat_index} out of range for {net.n_params} parameters")
