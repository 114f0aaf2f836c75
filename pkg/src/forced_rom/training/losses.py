"""Loss terms: eigenvalue penalty, one-step Koopman-autoencoder loss, unrolled loss, windows."""
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import DegenerateSpectrum, InvalidParam, ShapeError
from ..linalg import eig_magnitudes
from ..nn.autodiff import custom, mse, tensor


@dataclass(frozen=True)
class LossConfig:
    alpha_pred: float = 1.0
    alpha_recon: float = 1.0
    alpha_eig: float = 0.0

    def __post_init__(self):
        for name in ("alpha_pred", "alpha_recon", "alpha_eig"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise InvalidParam(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class UnrollConfig:
    steps: int = 10
    window_stride: int = 4

    def __post_init__(self):
        if self.steps < 1 or self.window_stride < 1:
            raise InvalidParam("unroll steps and window stride must be >= 1")


def eig_penalty(a_inner):
    """Sum over eigenvalues of ``max(0, |lambda| - 1)``."""
    mags = eig_magnitudes(a_inner)
    return float(np.sum(np.maximum(mags - 1.0, 0.0)))


def _fd_gradient(a, h=1e-6):
    g = np.zeros_like(a)
    for idx in np.ndindex(a.shape):
        up, dn = a.copy(), a.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (eig_penalty(up) - eig_penalty(dn)) / (2 * h)
    return g


def eig_penalty_gradient(a_inner, degeneracy_tol=1e-6):
    """Gradient of :func:`eig_penalty` from first-order eigenvalue perturbation.

    For a simple eigenvalue with right/left eigenvectors ``x``/``y``,
    ``d lambda = y^H dA x / (y^H x)`` and ``d|lambda| = Re(conj(lambda) d lambda) / |lambda|``.
    Eigenvalues with ``|lambda| <= 1`` contribute nothing. A penalized eigenvalue that
    nearly coincides with another one triggers a DegenerateSpectrum warning and a
    central finite-difference fallback.
    """
    a = np.asarray(a_inner, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"eigenvalue penalty needs a square matrix, got {a.shape}")
    lam, vl, vr = scipy.linalg.eig(a, left=True, right=True)
    mags = np.abs(lam)
    grad = np.zeros_like(a)
    active = np.flatnonzero(mags > 1.0)
    if active.size == 0:
        return grad
    for i in active:
        others = np.delete(lam, i)
        if others.size and np.min(np.abs(others - lam[i])) < degeneracy_tol * max(1.0, mags[i]):
            warnings.warn("penalized eigenvalue is nearly repeated; using finite differences",
                          DegenerateSpectrum, stacklevel=2)
            return _fd_gradient(a)
        y, x = vl[:, i], vr[:, i]
        dlam = np.outer(y.conj(), x) / (y.conj() @ x)
        grad += np.real(np.conj(lam[i]) / mags[i] * dlam)
    return grad


def eig_penalty_t(weight, state_dim):
    """Differentiable penalty on the inner block ``weight[:, :state_dim]`` of a linear operator."""
    weight = tensor(weight)
    inner = weight.data[:, :state_dim]
    value = eig_penalty(inner)

    def bw(g):
        full = np.zeros_like(weight.data)
        if value > 0:
            full[:, :state_dim] = g * eig_penalty_gradient(inner)
        return (full,)

    return custom(value, (weight,), bw)


def loss_kae_onestep(model, batch, loss_cfg):
    """One-step objective with the prediction and reconstruction measured in physical space.

    ``batch`` is ``(x_k, u_k, u_k1, x_k1)`` as row-stacked arrays. Returns tensors
    ``(total, pred, recon, eig)``.
    """
    x_k, u_k, u_k1, x_k1 = batch
    z = model.state_stack.encode_rows(x_k)
    w = model.forcing_stack.encode_rows(u_k)
    w1 = model.forcing_stack.encode_rows(u_k1)
    z1 = model.propagator.step_rows(z, w, w1)
    pred = mse(model.state_stack.decode_rows(z1), x_k1)
    recon = mse(model.state_stack.decode_rows(z), x_k)
    eig = _penalty_term(model.propagator, loss_cfg)
    total = loss_cfg.alpha_pred * pred + loss_cfg.alpha_recon * recon + loss_cfg.alpha_eig * eig
    return total, pred, recon, eig


def loss_latent_onestep(propagator, batch, loss_cfg):
    """One-step objective in latent space for fixed (POD) coders: ``MSE(M(z, w, w'), z')``."""
    z, w, w1, z1 = batch
    pred = mse(propagator.step_rows(z, w, w1), z1)
    eig = _penalty_term(propagator, loss_cfg)
    total = loss_cfg.alpha_pred * pred + loss_cfg.alpha_eig * eig
    return total, pred, tensor(0.0), eig


def _penalty_term(propagator, loss_cfg):
    if loss_cfg.alpha_eig == 0 or not hasattr(propagator, "weight"):
        return tensor(0.0)
    return eig_penalty_t(propagator.weight, propagator.state_dim)


def loss_unrolled(propagator, z_window, w_window):
    """Sum over ``s = 1..N`` of ``MSE(M^s(z_0, ...), z_s)`` with the correct forcings per step.

    ``z_window`` and ``w_window`` are sequences of ``N + 1`` row-stacked latent
    states/forcings (tensors or arrays). Step ``s`` consumes ``(w_{s-1}, w_s)``.
    """
    n = len(z_window) - 1
    if n < 1 or len(w_window) != n + 1:
        raise ShapeError(f"window needs N+1 states and forcings, got {len(z_window)} and {len(w_window)}")
    z = tensor(z_window[0])
    total = None
    for s in range(1, n + 1):
        z = propagator.step_rows(z, w_window[s - 1], w_window[s])
        term = mse(z, z_window[s])
        total = term if total is None else total + term
    return total


def window_starts(n_time, steps, stride):
    """Start indices of all in-bounds windows of ``steps + 1`` consecutive snapshots."""
    if n_time - steps <= 0:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_time - steps, stride, dtype=np.int64)


def make_unroll_batches(latents, forcing_latents, cfg, batch_size, seed):
    """Shuffled batches of strided windows.

    ``latents`` [T, nz] and ``forcing_latents`` [T, nw] are row-stacked. Each batch
    is ``(starts, z_window, w_window)`` where the windows are lists of ``steps + 1``
    arrays of shape [batch, nz] / [batch, nw].
    """
    latents = np.asarray(latents)
    forcing_latents = np.asarray(forcing_latents)
    if latents.shape[0] != forcing_latents.shape[0]:
        raise ShapeError("state and forcing latents must cover the same time steps")
    starts = window_starts(latents.shape[0], cfg.steps, cfg.window_stride)
    order = np.random.default_rng(seed).permutation(starts.size)
    batches = []
    for lo in range(0, starts.size, batch_size):
        s = starts[order[lo:lo + batch_size]]
        z_win = [latents[s + j] for j in range(cfg.steps + 1)]
        w_win = [forcing_latents[s + j] for j in range(cfg.steps + 1)]
        batches.append((s, z_win, w_win))
    return batches
