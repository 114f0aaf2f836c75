"""Frozen surrogates and autoregressive inference with prescribed forcings."""
import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingVariable, ShapeError


class Surrogate:
    """Normalization + state/forcing coders + latent propagator, frozen after training."""

    def __init__(self, family, norm, state_stack, forcing_stack, propagator, provenance=None, log=None):
        if propagator.state_dim != state_stack.latent_dim:
            raise ShapeError("propagator state dim does not match the state coder")
        if propagator.forcing_dim != forcing_stack.latent_dim:
            raise ShapeError("propagator forcing dim does not match the forcing coder")
        self.family = family
        self.norm = norm
        self.state_stack = state_stack
        self.forcing_stack = forcing_stack
        self.propagator = propagator
        self.provenance = dict(provenance or {})
        self.log = list(log or [])

    @property
    def state_variables(self):
        return self.state_stack.variables

    @property
    def forcing_variables(self):
        return self.forcing_stack.variables

    def _normalized(self, stack, values):
        missing = [v for v in stack.variables if v not in values]
        if missing:
            raise MissingVariable(f"missing variables {missing}")
        return stack.stack({v: self.norm.forward(v, np.asarray(values[v], dtype=np.float64))
                            for v in stack.variables})

    def encode_state(self, values):
        return self.state_stack.encode(self._normalized(self.state_stack, values))

    def encode_forcing(self, values):
        return self.forcing_stack.encode(self._normalized(self.forcing_stack, values))

    def decode_state(self, z):
        out = self.state_stack.decode(z)
        return {v: self.norm.inverse(v, x) for v, x in out.items()}

    def inner_spectral_radius(self):
        from .propagators import inner_spectral_radius

        return inner_spectral_radius(self.propagator)


@dataclass
class RolloutResult:
    predictions: dict
    latent: np.ndarray = None
    duration: float = 0.0
    diverged_at: int = None
    initial_projection_error: float = 0.0
    steps: int = 0
    meta: dict = field(default_factory=dict)


def _column(values, names):
    out = {}
    for v in names:
        arr = np.asarray(values[v], dtype=np.float64)
        out[v] = arr.reshape(-1, 1) if arr.ndim == 1 else arr[:, :1]
    return out


def rollout(s, x0, forcings, horizon, decode="end", keep_latent=True):
    """Encode ``x0`` once, apply the propagator ``horizon`` times, decode.

    ``forcings`` maps each forcing variable to a matrix with at least ``horizon + 1``
    columns (index 0 is the forcing at the initial time). ``decode="step"`` decodes
    every latent state as soon as it is produced; the result is identical to decoding
    the whole latent trajectory at the end. Intermediate predictions are never
    re-encoded. A non-finite latent state stops the rollout and sets ``diverged_at``.
    """
    if decode not in ("end", "step"):
        raise ValueError("decode must be 'end' or 'step'")
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    t_start = time.perf_counter()
    w = s.encode_forcing({v: np.asarray(forcings[v])[:, :horizon + 1] for v in s.forcing_variables})
    if w.shape[1] < horizon + 1:
        raise ShapeError(f"forcings cover {w.shape[1]} steps, need {horizon + 1}")
    x0 = _column(x0, s.state_variables)
    z = np.empty((s.propagator.state_dim, horizon + 1))
    z[:, 0] = s.encode_state(x0)[:, 0]

    recon = s.decode_state(z[:, :1])
    proj_err = float(np.sqrt(np.mean(np.concatenate([(recon[v] - x0[v]).ravel() for v in x0]) ** 2)))

    per_step = [] if decode == "step" else None
    diverged = None
    prop = s.propagator
    for k in range(horizon):
        nxt = prop.step(z[:, k], w[:, k], w[:, k + 1])
        if not np.all(np.isfinite(nxt)):
            diverged = k + 1
            break
        z[:, k + 1] = nxt
        if per_step is not None:
            per_step.append(s.decode_state(z[:, k + 1:k + 2]))
    done = horizon if diverged is None else diverged - 1

    if per_step is not None:
        preds = {v: (np.hstack([p[v] for p in per_step]) if per_step else np.zeros((s.state_stack.sizes[v], 0)))
                 for v in s.state_variables}
    else:
        preds = _decode_columns(s, z[:, 1:done + 1])
    return RolloutResult(
        predictions=preds,
        latent=z[:, :done + 1] if keep_latent else None,
        duration=time.perf_counter() - t_start,
        diverged_at=diverged,
        initial_projection_error=proj_err,
        steps=done,
    )


def _decode_columns(s, z):
    # column-at-a-time keeps decode-at-end bit-identical to decode-per-step
    if z.shape[1] == 0:
        return {v: np.zeros((s.state_stack.sizes[v], 0)) for v in s.state_variables}
    cols = [s.decode_state(z[:, k:k + 1]) for k in range(z.shape[1])]
    return {v: np.hstack([c[v] for c in cols]) for v in s.state_variables}


def environment_descriptor():
    return {"python": platform.python_version(), "machine": platform.machine(),
            "processor": platform.processor() or platform.machine(), "numpy": np.__version__}


def bench_inference(s, horizon, seed=0, chunk=2048):
    """Time a full-resolution rollout: encode forcings, propagate, decode every step.

    Decoded states are produced chunk by chunk and discarded, so memory stays bounded
    for long horizons. Returns steps/second, total seconds and an environment record.
    """
    rng = np.random.default_rng(seed)
    forcings = {v: rng.standard_normal((s.forcing_stack.sizes[v], horizon + 1)) for v in s.forcing_variables}
    x0 = {v: rng.standard_normal(s.state_stack.sizes[v]) for v in s.state_variables}
    t0 = time.perf_counter()
    w = s.encode_forcing(forcings)
    z = np.empty((s.propagator.state_dim, horizon + 1))
    z[:, 0] = s.encode_state(_column(x0, s.state_variables))[:, 0]
    for k in range(horizon):
        z[:, k + 1] = s.propagator.step(z[:, k], w[:, k], w[:, k + 1])
    checksum = 0.0
    for lo in range(1, horizon + 1, chunk):
        out = s.decode_state(z[:, lo:min(lo + chunk, horizon + 1)])
        checksum += float(sum(np.sum(x) for x in out.values()))
    seconds = time.perf_counter() - t0
    return {
        "horizon": horizon,
        "n_space": s.state_stack.phys_dim,
        "seconds": seconds,
        "steps_per_second": horizon / seconds if horizon and seconds > 0 else 0.0,
        "finite": bool(np.isfinite(checksum)),
        "environment": environment_descriptor(),
    }
