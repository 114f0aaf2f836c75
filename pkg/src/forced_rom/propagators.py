"""Latent one-step maps ``z' = M(z, w, w')``.

``z`` is the latent state, ``w`` and ``w'`` the latent forcings at the current and
next step. Linear maps store ``A = [A_zz | A_wz | A_w'z]`` of shape
``[nz, nz + 2 nw]``.
"""
import numpy as np

from .errors import ShapeError, UnsupportedPropagator
from .linalg import eig_magnitudes, qr_solve_least_squares
from .nn.autodiff import Tensor, concat, no_grad, tensor
from .nn.layers import AffineLayer, Mlp


def _check_dims(prop, z, w, w_next):
    for name, a, n in (("state", z, prop.state_dim), ("forcing", w, prop.forcing_dim),
                       ("next forcing", w_next, prop.forcing_dim)):
        if np.shape(a)[0] != n:
            raise ShapeError(f"{name} has leading dim {np.shape(a)[0]}, propagator expects {n}")


class LinearPropagator:
    kind = "linear"

    def __init__(self, A, state_dim, forcing_dim):
        A = np.asarray(A, dtype=np.float64)
        if A.shape != (state_dim, state_dim + 2 * forcing_dim):
            raise ShapeError(f"operator must be {state_dim}x{state_dim + 2 * forcing_dim}, got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("operator has non-finite entries")
        self.weight = Tensor(A, requires_grad=True, name="A")
        self.state_dim = state_dim
        self.forcing_dim = forcing_dim

    @classmethod
    def init(cls, state_dim, forcing_dim, rng):
        layer = AffineLayer.init(state_dim + 2 * forcing_dim, state_dim, rng, use_bias=False)
        return cls(layer.weight.data, state_dim, forcing_dim)

    @property
    def A(self):
        return self.weight.data

    @property
    def inner(self):
        return self.A[:, :self.state_dim]

    @property
    def input_dim(self):
        return self.state_dim + 2 * self.forcing_dim

    def blocks(self):
        n, m = self.state_dim, self.forcing_dim
        return self.A[:, :n], self.A[:, n:n + m], self.A[:, n + m:]

    def parameters(self):
        return [self.weight]

    def step_rows(self, z, w, w_next):
        return concat([tensor(z), tensor(w), tensor(w_next)], axis=1) @ self.weight.T

    def step(self, z, w, w_next):
        """Column convention: vectors or [dim, batch] matrices."""
        _check_dims(self, z, w, w_next)
        n, m = self.state_dim, self.forcing_dim
        A = self.A
        return A[:, :n] @ z + A[:, n:n + m] @ w + A[:, n + m:] @ w_next

    def to_arrays(self):
        return {"A": self.A}

    def describe(self):
        return {"kind": self.kind, "state_dim": self.state_dim, "forcing_dim": self.forcing_dim}


class KoopmanOperator(LinearPropagator):
    """Non-square forced Koopman matrix ``C_f``; it advances the latent state only."""

    kind = "koopman"


class MlpPropagator:
    kind = "mlp"

    def __init__(self, net, state_dim, forcing_dim):
        if net.in_dim != state_dim + 2 * forcing_dim or net.out_dim != state_dim:
            raise ShapeError("MLP dims do not match the latent layout")
        self.net = net
        self.state_dim = state_dim
        self.forcing_dim = forcing_dim

    @classmethod
    def init(cls, state_dim, forcing_dim, rng, hidden=None, n_hidden=2):
        width = state_dim + 2 * forcing_dim
        hidden = [width] * n_hidden if hidden is None else list(hidden)
        return cls(Mlp.init([width, *hidden, state_dim], rng, "relu"), state_dim, forcing_dim)

    @property
    def input_dim(self):
        return self.state_dim + 2 * self.forcing_dim

    def parameters(self):
        return self.net.parameters()

    def step_rows(self, z, w, w_next):
        return self.net(concat([tensor(z), tensor(w), tensor(w_next)], axis=1))

    def step(self, z, w, w_next):
        z, w, w_next = (np.asarray(a) for a in (z, w, w_next))
        _check_dims(self, z, w, w_next)
        vec = z.ndim == 1
        cols = [a[:, None] if vec else a for a in (z, w, w_next)]
        with no_grad():
            out = self.net(Tensor(np.vstack(cols).T)).data.T
        return out[:, 0] if vec else out

    def to_arrays(self):
        arrays = {}
        for i, layer in enumerate(self.net.layers):
            arrays[f"l{i}_weight"] = layer.weight.data
            arrays[f"l{i}_bias"] = layer.bias.data
        return arrays

    def describe(self):
        return {"kind": self.kind, "state_dim": self.state_dim, "forcing_dim": self.forcing_dim,
                "dims": self.net.dims}


def propagator_from_arrays(doc, arrays):
    kind = doc["kind"]
    if kind in ("linear", "koopman"):
        cls = KoopmanOperator if kind == "koopman" else LinearPropagator
        return cls(arrays["A"], doc["state_dim"], doc["forcing_dim"])
    if kind == "mlp":
        dims = doc["dims"]
        layers = [AffineLayer(arrays[f"l{i}_weight"], arrays[f"l{i}_bias"]) for i in range(len(dims) - 1)]
        return MlpPropagator(Mlp(layers, "relu"), doc["state_dim"], doc["forcing_dim"])
    raise UnsupportedPropagator(f"unknown propagator kind {kind!r}")


def ols_fit(z, w, w_next, z_next, cls=LinearPropagator):
    """Least-squares operator for ``z_next ~ A [z; w; w_next]`` (columns are samples)."""
    z, w, w_next, z_next = (np.asarray(a, dtype=np.float64) for a in (z, w, w_next, z_next))
    n_cols = {a.shape[1] for a in (z, w, w_next, z_next)}
    if len(n_cols) != 1:
        raise ShapeError(f"column counts differ: {[a.shape[1] for a in (z, w, w_next, z_next)]}")
    design = np.vstack([z, w, w_next])
    coef = qr_solve_least_squares(design.T, z_next.T)
    return cls(coef.T, z.shape[0], w.shape[0])


def step(prop, z, w, w_next):
    return prop.step(z, w, w_next)


def inner_spectral_radius(prop):
    if not isinstance(prop, LinearPropagator):
        raise UnsupportedPropagator(f"{type(prop).__name__} has no linear inner block")
    mags = eig_magnitudes(prop.inner)
    return float(mags[0]) if mags.size else 0.0
