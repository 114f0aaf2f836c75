"""Encode/decode maps shared by every surrogate family.

A stack is an ordered list of groups; each group owns a set of variables and one
coder (a truncated POD basis or a neural encoder/decoder pair). The physical
vector seen by a stack is the vertical concatenation of its groups' variables in
declared order, and the latent vector the concatenation of group codes.

Two calling conventions exist side by side: ``encode``/``decode`` work on plain
snapshot matrices (one column per time step) and ``encode_rows``/``decode_rows``
work on row-stacked samples wrapped in autodiff tensors for training.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParam, InvalidRank, MissingVariable, ShapeError
from .linalg import svd_randomized
from .nn.autodiff import Tensor, concat, no_grad, tensor
from .nn.layers import AffineLayer, Mlp


@dataclass(frozen=True)
class PodBasis:
    modes: np.ndarray
    mean: np.ndarray
    energy: np.ndarray
    singular_values: np.ndarray
    centered: bool = True

    @property
    def latent_dim(self):
        return self.modes.shape[1]

    @property
    def in_dim(self):
        return self.modes.shape[0]

    def encode(self, x):
        return self.modes.T @ (x - self.mean[:, None])

    def decode(self, z):
        return self.modes @ z + self.mean[:, None]

    def encode_rows(self, x):
        return Tensor((tensor(x).data - self.mean) @ self.modes)

    def decode_rows(self, z):
        return tensor(z) @ Tensor(self.modes.T) + Tensor(self.mean)

    def parameters(self):
        return []

    def to_arrays(self):
        return {"modes": self.modes, "mean": self.mean, "energy": self.energy,
                "singular_values": self.singular_values}

    def describe(self):
        return {"type": "pod", "latent_dim": self.latent_dim, "in_dim": self.in_dim,
                "centered": self.centered}

    @classmethod
    def from_arrays(cls, doc, arrays):
        return cls(arrays["modes"], arrays["mean"], arrays["energy"], arrays["singular_values"],
                   doc.get("centered", True))


def pod_fit(x, r, seed=0, center=True, oversample=10, power_iters=2):
    """Truncated POD of the snapshot matrix ``x`` [n_space, n_time] with ``r`` modes.

    Oversampling is clipped so that ``r`` up to ``min(x.shape)`` stays admissible.
    """
    x = np.asarray(x, dtype=np.float64)
    n_space, n_time = x.shape
    if not (1 <= r <= min(n_space, n_time)):
        raise InvalidRank(f"r={r} must lie in [1, {min(n_space, n_time)}]")
    mean = x.mean(axis=1) if center else np.zeros(n_space)
    xc = x - mean[:, None]
    oversample = min(oversample, min(n_space, n_time) - r)
    svd = svd_randomized(xc, r, oversample=oversample, power_iters=power_iters, seed=seed)
    total = float(np.sum(xc * xc))
    energy = svd.s ** 2 / total if total > 0 else np.zeros(r)
    modes = svd.u.copy()
    # fix the sign of each mode so that fitted bases are reproducible across BLAS builds
    signs = np.sign(modes[np.argmax(np.abs(modes), axis=0), np.arange(r)])
    signs[signs == 0] = 1.0
    modes *= signs
    return PodBasis(modes, mean, energy, svd.s, center)


def recon_error_curve(x, ranks, seed=0, center=True):
    """Relative reconstruction RMSE of ``x`` for each POD rank in ``ranks``.

    The error is the RMSE over all entries divided by the value range of ``x``. One
    basis is fitted at the largest rank and truncated, so the curve is monotone.
    """
    x = np.asarray(x, dtype=np.float64)
    ranks = [int(r) for r in ranks]
    if not ranks:
        return np.zeros(0)
    basis = pod_fit(x, max(ranks), seed=seed, center=center)
    span = float(x.max() - x.min()) or 1.0
    xc = x - basis.mean[:, None]
    out = []
    for r in ranks:
        if r < 1:
            raise InvalidRank(f"rank {r} must be positive")
        modes = basis.modes[:, :r]
        resid = xc - modes @ (modes.T @ xc)
        out.append(np.sqrt(np.mean(resid * resid)) / span)
    return np.array(out)


class NeuralCoder:
    """Encoder MLP with an optional decoder MLP (forcing coders only need the encoder)."""

    def __init__(self, encoder, decoder=None):
        if decoder is not None:
            if encoder.out_dim != decoder.in_dim or encoder.in_dim != decoder.out_dim:
                raise ShapeError("encoder and decoder dims do not mirror each other")
        self.encoder = encoder
        self.decoder = decoder

    @classmethod
    def build(cls, in_dim, latent_dim, rng, hidden=(), linear=True, with_decoder=True):
        activation = "identity" if linear else "relu"
        hidden = () if linear else tuple(hidden)
        enc = Mlp.init([in_dim, *hidden, latent_dim], rng, activation)
        dec = Mlp.init([latent_dim, *reversed(hidden), in_dim], rng, activation) if with_decoder else None
        return cls(enc, dec)

    @property
    def latent_dim(self):
        return self.encoder.out_dim

    @property
    def in_dim(self):
        return self.encoder.in_dim

    @property
    def linear(self):
        return self.encoder.activation == "identity" or len(self.encoder.layers) == 1

    def encode_rows(self, x):
        return self.encoder(tensor(x))

    def decode_rows(self, z):
        if self.decoder is None:
            raise InvalidParam("this coder has no decoder")
        return self.decoder(tensor(z))

    def encode(self, x):
        with no_grad():
            return self.encode_rows(np.asarray(x).T).data.T

    def decode(self, z):
        with no_grad():
            return self.decode_rows(np.asarray(z).T).data.T

    def parameters(self):
        params = self.encoder.parameters()
        return params + (self.decoder.parameters() if self.decoder is not None else [])

    def to_arrays(self):
        arrays = {}
        for tag, net in (("enc", self.encoder), ("dec", self.decoder)):
            if net is None:
                continue
            for i, layer in enumerate(net.layers):
                arrays[f"{tag}{i}_weight"] = layer.weight.data
                if layer.bias is not None:
                    arrays[f"{tag}{i}_bias"] = layer.bias.data
        return arrays

    def describe(self):
        return {"type": "neural", "latent_dim": self.latent_dim, "in_dim": self.in_dim,
                "encoder_dims": self.encoder.dims, "activation": self.encoder.activation,
                "decoder_dims": self.decoder.dims if self.decoder is not None else None}

    @classmethod
    def from_arrays(cls, doc, arrays):
        def net(tag, dims):
            layers = []
            for i in range(len(dims) - 1):
                bias = arrays.get(f"{tag}{i}_bias")
                layers.append(AffineLayer(arrays[f"{tag}{i}_weight"], bias, use_bias=bias is not None))
            return Mlp(layers, doc["activation"])

        enc = net("enc", doc["encoder_dims"])
        dec = net("dec", doc["decoder_dims"]) if doc.get("decoder_dims") else None
        return cls(enc, dec)


def coder_from_arrays(doc, arrays):
    if doc["type"] == "pod":
        return PodBasis.from_arrays(doc, arrays)
    return NeuralCoder.from_arrays(doc, arrays)


@dataclass(frozen=True)
class Group:
    variables: tuple
    coder: object


class AutoencoderStack:
    """Variable-separated composition of coders with a fixed concatenation order."""

    def __init__(self, groups, sizes):
        """``sizes`` maps every variable to its spatial dimension."""
        self.groups = [Group(tuple(g.variables), g.coder) for g in groups]
        seen = [v for g in self.groups for v in g.variables]
        if len(seen) != len(set(seen)):
            raise InvalidParam(f"a variable appears in more than one group: {seen}")
        self.sizes = {v: int(sizes[v]) for v in seen}
        for g in self.groups:
            n_in = sum(self.sizes[v] for v in g.variables)
            if g.coder.in_dim != n_in:
                raise ShapeError(f"group {g.variables} has {n_in} inputs but coder expects {g.coder.in_dim}")

    @property
    def variables(self):
        return [v for g in self.groups for v in g.variables]

    @property
    def latent_dims(self):
        return [g.coder.latent_dim for g in self.groups]

    @property
    def latent_dim(self):
        return sum(self.latent_dims)

    @property
    def phys_dim(self):
        return sum(self.sizes.values())

    def _group_bounds(self, dims):
        bounds = np.cumsum([0] + list(dims))
        return list(zip(bounds[:-1], bounds[1:]))

    def phys_bounds(self):
        return self._group_bounds([sum(self.sizes[v] for v in g.variables) for g in self.groups])

    def latent_bounds(self):
        return self._group_bounds(self.latent_dims)

    def stack(self, values):
        """Concatenate per-variable snapshot matrices into this stack's physical vector."""
        try:
            return np.vstack([np.asarray(values[v]) for v in self.variables])
        except KeyError as exc:
            raise MissingVariable(f"variable {exc.args[0]!r} required by the stack is missing") from exc

    def unstack(self, x):
        out, lo = {}, 0
        for v in self.variables:
            out[v] = x[lo:lo + self.sizes[v]]
            lo += self.sizes[v]
        return out

    def encode(self, values):
        """Snapshot columns (dict of variables or stacked matrix) -> latent [latent_dim, n_time]."""
        x = self.stack(values) if isinstance(values, dict) else np.asarray(values)
        if x.shape[0] != self.phys_dim:
            raise ShapeError(f"expected {self.phys_dim} physical rows, got {x.shape[0]}")
        return np.vstack([g.coder.encode(x[lo:hi]) for g, (lo, hi) in zip(self.groups, self.phys_bounds())])

    def decode(self, z):
        """Latent [latent_dim, n_time] -> dict of per-variable snapshot matrices."""
        z = np.asarray(z)
        if z.shape[0] != self.latent_dim:
            raise ShapeError(f"expected latent dim {self.latent_dim}, got {z.shape[0]}")
        x = np.vstack([g.coder.decode(z[lo:hi]) for g, (lo, hi) in zip(self.groups, self.latent_bounds())])
        return self.unstack(x)

    def decode_stacked(self, z):
        z = np.asarray(z)
        return np.vstack([g.coder.decode(z[lo:hi]) for g, (lo, hi) in zip(self.groups, self.latent_bounds())])

    def encode_rows(self, x):
        """Row-stacked physical samples [batch, phys_dim] -> latent tensor [batch, latent_dim]."""
        x = tensor(x)
        parts = [g.coder.encode_rows(x[:, lo:hi] if len(self.groups) > 1 else x)
                 for g, (lo, hi) in zip(self.groups, self.phys_bounds())]
        return parts[0] if len(parts) == 1 else concat(parts, axis=1)

    def decode_rows(self, z):
        z = tensor(z)
        parts = [g.coder.decode_rows(z[:, lo:hi] if len(self.groups) > 1 else z)
                 for g, (lo, hi) in zip(self.groups, self.latent_bounds())]
        return parts[0] if len(parts) == 1 else concat(parts, axis=1)

    def parameters(self):
        return [p for g in self.groups for p in g.coder.parameters()]

    def to_json(self):
        """Layout document plus a flat dict of named arrays."""
        doc, arrays = [], {}
        for i, g in enumerate(self.groups):
            desc = g.coder.describe()
            desc["variables"] = list(g.variables)
            desc["sizes"] = [self.sizes[v] for v in g.variables]
            doc.append(desc)
            for name, arr in g.coder.to_arrays().items():
                arrays[f"g{i}_{name}"] = arr
        return doc, arrays

    @classmethod
    def from_json(cls, doc, arrays):
        groups, sizes = [], {}
        for i, desc in enumerate(doc):
            prefix = f"g{i}_"
            own = {k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)}
            groups.append(Group(tuple(desc["variables"]), coder_from_arrays(desc, own)))
            sizes.update(zip(desc["variables"], desc["sizes"]))
        return cls(groups, sizes)


def fit_pod_stack(values, layout, sizes, seed=0, center=True):
    """Fit one POD basis per ``(variables, r)`` entry of ``layout`` on snapshot matrices."""
    groups = []
    for i, (variables, r) in enumerate(layout):
        x = np.vstack([values[v] for v in variables])
        groups.append(Group(tuple(variables), pod_fit(x, r, seed=seed + i, center=center)))
    return AutoencoderStack(groups, sizes)
