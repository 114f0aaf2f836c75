"""Affine layers and ReLU multilayer perceptrons on top of :mod:`.autodiff`."""
import numpy as np

from ..errors import ShapeError
from .autodiff import Tensor, relu, tensor

ACTIVATIONS = ("relu", "identity")


class AffineLayer:
    """``y = x @ weight.T + bias`` for row-stacked samples ``x`` of shape [batch, in]."""

    def __init__(self, weight, bias=None, use_bias=True):
        weight = np.asarray(weight, dtype=np.float64) if not isinstance(weight, np.ndarray) else weight
        if weight.ndim != 2:
            raise ShapeError(f"weight must be 2-D, got {weight.shape}")
        self.weight = Tensor(weight, requires_grad=True, name="weight")
        self.bias = None
        if use_bias:
            b = np.zeros(weight.shape[0], dtype=weight.dtype) if bias is None else np.asarray(bias)
            if b.shape != (weight.shape[0],):
                raise ShapeError(f"bias shape {b.shape} does not match {weight.shape[0]} outputs")
            self.bias = Tensor(b, requires_grad=True, name="bias")

    @classmethod
    def init(cls, n_in, n_out, rng, use_bias=True):
        bound = 1.0 / np.sqrt(n_in)
        weight = rng.uniform(-bound, bound, size=(n_out, n_in))
        return cls(weight, use_bias=use_bias)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def parameters(self):
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def __call__(self, x):
        x = tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"layer expects [batch, {self.in_dim}] input, got {x.shape}")
        out = x @ self.weight.T
        return out if self.bias is None else out + self.bias


class Mlp:
    """Chain of affine layers with ``activation`` between them (never after the last)."""

    def __init__(self, layers, activation="relu"):
        if not layers:
            raise ShapeError("an Mlp needs at least one layer")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        for prev, nxt in zip(layers[:-1], layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")
        self.layers = list(layers)
        self.activation = activation

    @classmethod
    def init(cls, dims, rng, activation="relu", use_bias=True):
        layers = [AffineLayer.init(a, b, rng, use_bias=use_bias) for a, b in zip(dims[:-1], dims[1:])]
        return cls(layers, activation)

    @classmethod
    def identity(cls, dim):
        return cls([AffineLayer(np.eye(dim))], activation="identity")

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    @property
    def dims(self):
        return [self.in_dim] + [layer.out_dim for layer in self.layers]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, x):
        h = x
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i != last and self.activation == "relu":
                h = relu(h)
        return h


def mlp_forward(m, x):
    """Evaluate ``m`` on a plain array and return a plain array."""
    out = m(Tensor(np.asarray(x)))
    return out.data
