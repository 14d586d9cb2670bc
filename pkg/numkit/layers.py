"""
ViBE - Dense layers
Fully connected layers and rectifier MLPs with exact reverse-mode gradients.
All arithmetic is float64; inputs may be a single vector or a batch of rows.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, NumericError, StaleTapeError


def dense_matrix(values: Sequence[float], rows: int, cols: int) -> np.ndarray:
    """Build a validated row-major float64 matrix"""
    data = np.asarray(values, dtype=np.float64).ravel()
    if data.size != rows * cols:
        raise DimensionMismatchError("matrix values", rows * cols, data.size)
    if not np.all(np.isfinite(data)):
        raise NumericError("matrix contains non-finite entries")
    return data.reshape(rows, cols)


@dataclass
class LinearLayer:
    """Affine map: weights (out x in), bias (out)"""
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64).ravel()
        if self.weights.ndim != 2:
            raise NumericError("layer weights must be a matrix")
        if self.bias.size != self.weights.shape[0]:
            raise DimensionMismatchError("bias length", self.weights.shape[0], self.bias.size)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_params(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class LayerGradient:
    weights: np.ndarray
    bias: np.ndarray


class Mlp:
    """
    Stack of linear layers with a rectifier between consecutive layers
    and no activation after the last one.
    """

    def __init__(self, layers: Sequence[LinearLayer]):
        if not layers:
            raise NumericError("an MLP needs at least one layer")
        for i in range(len(layers) - 1):
            if layers[i].out_dim != layers[i + 1].in_dim:
                raise DimensionMismatchError(
                    f"layer {i + 1} input", layers[i].out_dim, layers[i + 1].in_dim
                )
        self.layers: List[LinearLayer] = list(layers)
        # bumped on every parameter assignment so old tapes can be detected
        self.version = 0

    @classmethod
    def initialize(cls, widths: Sequence[int], rng: np.random.Generator) -> "Mlp":
        """Symmetric uniform init with scale 1/sqrt(fan_in)"""
        layers = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            layers.append(LinearLayer(
                weights=rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                bias=rng.uniform(-bound, bound, size=fan_out),
            ))
        return cls(layers)

    @classmethod
    def zeros(cls, widths: Sequence[int]) -> "Mlp":
        return cls([
            LinearLayer(np.zeros((fan_out, fan_in)), np.zeros(fan_out))
            for fan_in, fan_out in zip(widths[:-1], widths[1:])
        ])

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> List[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    @property
    def n_params(self) -> int:
        return sum(layer.n_params for layer in self.layers)

    def get_flat(self) -> np.ndarray:
        """Parameters as one vector: per layer, weights row-major then bias"""
        parts = []
        for layer in self.layers:
            parts.append(layer.weights.ravel())
            parts.append(layer.bias)
        return np.concatenate(parts)

    def set_flat(self, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.size != self.n_params:
            raise DimensionMismatchError("flat parameter vector", self.n_params, values.size)
        offset = 0
        for layer in self.layers:
            n_w = layer.weights.size
            layer.weights = values[offset:offset + n_w].reshape(layer.weights.shape).copy()
            offset += n_w
            layer.bias = values[offset:offset + layer.out_dim].copy()
            offset += layer.out_dim
        self.version += 1

    def copy(self) -> "Mlp":
        return Mlp([LinearLayer(layer.weights.copy(), layer.bias.copy()) for layer in self.layers])

    def __repr__(self):
        return f"Mlp({' -> '.join(str(w) for w in self.widths)})"


@dataclass
class Tape:
    """Activation cache from one mlp_apply call"""
    net_id: int
    version: int
    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    single: bool = False


def mlp_apply(net: Mlp, inputs: np.ndarray) -> Tuple[np.ndarray, Tape]:
    """Forward pass; returns the output and the tape needed by mlp_backprop"""
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.in_dim:
        raise DimensionMismatchError("MLP input", net.in_dim, x.shape[1])

    tape = Tape(net_id=id(net), version=net.version, single=single)
    activation = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        tape.inputs.append(activation)
        pre = activation @ layer.weights.T + layer.bias
        tape.pre_activations.append(pre)
        activation = np.maximum(pre, 0.0) if i < last else pre

    return (activation[0] if single else activation), tape


def mlp_backprop(
    net: Mlp, tape: Tape, output_gradient: np.ndarray
) -> Tuple[List[LayerGradient], np.ndarray]:
    """
    Reverse pass through a recorded forward pass.

    Gradients are summed over the batch rows. The rectifier passes no
    gradient where its pre-activation is exactly zero.
    """
    if tape.net_id != id(net) or tape.version != net.version:
        raise StaleTapeError("tape was not recorded on this network state")
    if len(tape.inputs) != len(net.layers):
        raise StaleTapeError("tape depth does not match the network")

    grad = np.atleast_2d(np.asarray(output_gradient, dtype=np.float64))
    expected_rows = tape.inputs[0].shape[0]
    if grad.shape != (expected_rows, net.out_dim):
        raise DimensionMismatchError("output gradient", net.out_dim, grad.shape[-1])

    last = len(net.layers) - 1
    layer_grads: List[Optional[LayerGradient]] = [None] * len(net.layers)
    for i in range(last, -1, -1):
        if i < last:
            grad = grad * (tape.pre_activations[i] > 0.0)
        layer_grads[i] = LayerGradient(
            weights=grad.T @ tape.inputs[i],
            bias=grad.sum(axis=0),
        )
        grad = grad @ net.layers[i].weights

    return layer_grads, (grad[0] if tape.single else grad)


def flatten_gradients(layer_grads: Sequence[LayerGradient]) -> np.ndarray:
    """Same ordering as Mlp.get_flat"""
    parts = []
    for g in layer_grads:
        parts.append(g.weights.ravel())
        parts.append(g.bias)
    return np.concatenate(parts)
