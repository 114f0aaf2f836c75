"""Datasets of state/forcing snapshot blocks, normalization, splits, generators and bundles.

A block stores one variable as a snapshot matrix of shape [n_space, n_time]
(one column per time step). Splits are chronological: columns ``[0, train_end)``
are fitted on, ``[train_end, val_end)`` is the validation tail of the training
period and ``[val_end, n_time)`` is the test period.
"""
import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import CflError, ConfigError, EmptySplit, InvalidParam, MissingVariable, ShapeError
from .linalg import spectral_radius as _spectral_radius

FORMAT_VERSION = 1
KINDS = ("state", "forcing")


@dataclass(frozen=True)
class VariableBlock:
    name: str
    kind: str
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParam(f"block {self.name!r}: kind must be one of {KINDS}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"block {self.name!r} must be [n_space, n_time], got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidParam(f"block {self.name!r} has non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n_space(self):
        return self.values.shape[0]

    @property
    def n_time(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class Dataset:
    blocks: tuple
    dt_seconds: float
    element_weights: np.ndarray
    train_end: int
    val_end: int
    t0_index: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise InvalidParam("a dataset needs at least one block")
        names = [b.name for b in blocks]
        if len(set(names)) != len(names):
            raise InvalidParam(f"duplicate block names in {names}")
        n_time = {b.n_time for b in blocks}
        if len(n_time) != 1:
            raise ShapeError(f"blocks disagree on n_time: {sorted(n_time)}")
        if self.dt_seconds <= 0:
            raise InvalidParam("dt_seconds must be positive")
        weights = np.asarray(self.element_weights, dtype=np.float64)
        object.__setattr__(self, "element_weights", weights)
        states = self.state_blocks
        if states:
            sizes = {b.n_space for b in states}
            if len(sizes) != 1:
                raise ShapeError(f"state blocks live on different meshes: {sorted(sizes)}")
            if weights.shape != (states[0].n_space,):
                raise ShapeError(f"need {states[0].n_space} element weights, got {weights.shape}")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise InvalidParam("element weights must be finite and strictly positive")
        if not (0 <= self.train_end <= self.val_end <= self.n_time):
            raise InvalidParam(
                f"invalid split train_end={self.train_end}, val_end={self.val_end}, n_time={self.n_time}"
            )

    @property
    def n_time(self):
        return self.blocks[0].n_time

    @property
    def names(self):
        return [b.name for b in self.blocks]

    @property
    def state_blocks(self):
        return [b for b in self.blocks if b.kind == "state"]

    @property
    def forcing_blocks(self):
        return [b for b in self.blocks if b.kind == "forcing"]

    def block(self, name):
        for b in self.blocks:
            if b.name == name:
                return b
        raise MissingVariable(f"dataset has no variable {name!r}")

    def values(self, names):
        return {n: self.block(n).values for n in names}

    def with_values(self, values):
        """Copy with the named blocks' values replaced (same shapes)."""
        blocks = []
        for b in self.blocks:
            blocks.append(replace(b, values=values[b.name]) if b.name in values else b)
        return replace(self, blocks=tuple(blocks))

    def time_slice(self, lo, hi):
        blocks = tuple(replace(b, values=b.values[:, lo:hi]) for b in self.blocks)
        n = hi - lo
        train_end = min(max(self.train_end - lo, 0), n)
        val_end = min(max(self.val_end - lo, 0), n)
        return replace(self, blocks=blocks, train_end=train_end, val_end=val_end,
                       t0_index=self.t0_index + lo)


def default_split(n_time, test_fraction=0.2, val_fraction=0.1):
    """Chronological split: test tail, and the last ``val_fraction`` of the rest as validation."""
    val_end = int(round(n_time * (1.0 - test_fraction)))
    train_end = val_end - int(round(val_fraction * val_end))
    return train_end, val_end


def uniform_weights(n_space):
    return np.full(n_space, 1.0 / n_space)


@dataclass(frozen=True)
class NormStats:
    """Per-block scalar mean and standard deviation computed on the fit portion."""

    mean: dict
    std: dict
    mode: str = "zscore"

    def forward(self, name, values):
        return (values - self.mean[name]) / self.std[name]

    def inverse(self, name, values):
        return values * self.std[name] + self.mean[name]

    def to_json(self):
        return {"mode": self.mode, "mean": dict(self.mean), "std": dict(self.std)}

    @classmethod
    def from_json(cls, doc):
        return cls(mean={k: float(v) for k, v in doc["mean"].items()},
                   std={k: float(v) for k, v in doc["std"].items()}, mode=doc.get("mode", "zscore"))


NORM_MODES = ("zscore", "scale", "none")


def fit_norm_stats(d, mode="zscore"):
    if mode not in NORM_MODES:
        raise InvalidParam(f"normalization mode must be one of {NORM_MODES}")
    if d.train_end < 1:
        raise EmptySplit("training split is empty")
    mean, std = {}, {}
    for b in d.blocks:
        fit = b.values[:, :d.train_end]
        mu = float(fit.mean()) if mode == "zscore" else 0.0
        sd = float(fit.std()) if mode != "none" else 1.0
        if mode == "scale":
            sd = float(np.sqrt(np.mean(fit * fit)))
        if not sd > 0:
            sd = 1.0
        mean[b.name], std[b.name] = mu, sd
    return NormStats(mean, std, mode)


def normalize(d, mode="zscore", stats=None):
    """Return the normalized dataset and the statistics used (fitted on the train split)."""
    stats = fit_norm_stats(d, mode) if stats is None else stats
    out = d.with_values({b.name: stats.forward(b.name, b.values) for b in d.blocks})
    return out, stats


def denormalize(d, stats):
    return d.with_values({b.name: stats.inverse(b.name, b.values) for b in d.blocks})


def stack_blocks(d, names, lo=0, hi=None):
    """Vertically concatenate the named blocks over columns ``[lo, hi)``."""
    return np.vstack([d.block(n).values[:, lo:hi] for n in names])


def snapshot_split(x, u):
    """Shifted snapshot matrices ``(X, X', U, U')`` of a state and a forcing trajectory.

    ``X`` holds columns 0..T-2 and ``X'`` columns 1..T-1; ``U`` is aligned with ``X``
    and ``U'`` with ``X'``.
    """
    x = np.asarray(x)
    u = np.asarray(u)
    if x.shape[1] != u.shape[1]:
        raise ShapeError(f"state has {x.shape[1]} steps but forcing has {u.shape[1]}")
    if x.shape[1] < 2:
        raise EmptySplit("need at least two time steps")
    return x[:, :-1], x[:, 1:], u[:, :-1], u[:, 1:]


# ---------------------------------------------------------------- generators


@dataclass(frozen=True)
class LinearTruth:
    A: np.ndarray
    B: np.ndarray
    B_next: np.ndarray

    def step(self, x, u, u_next):
        return self.A @ x + self.B @ u + self.B_next @ u_next


def sinusoid_forcing(n_u, n_t, rng, n_modes=16, min_period=8.0, max_period=400.0, amplitude=1.0):
    """Sums of sinusoids with random periods and phases, one row per channel."""
    k = np.arange(n_t)
    out = np.zeros((n_u, n_t))
    for j in range(n_u):
        periods = np.exp(rng.uniform(np.log(min_period), np.log(max_period), n_modes))
        phases = rng.uniform(0.0, 2.0 * np.pi, n_modes)
        weights = rng.uniform(0.5, 1.0, n_modes)
        out[j] = (weights[:, None] * np.sin(2 * np.pi * k[None, :] / periods[:, None] + phases[:, None])).sum(0)
        out[j] *= amplitude / np.sqrt(0.5 * np.sum(weights ** 2))
    return out


def gen_linear_forced(n_x, n_u, n_t, spectral_radius=0.95, seed=0, forcing_amplitude=1.0,
                      x0_scale=1.0, n_modes=16, allow_unstable=False, split=None):
    """Trajectory of ``x' = A x + B u + B_next u'`` with ``A`` rescaled to a given spectral radius.

    Returns ``(dataset, LinearTruth)``. ``allow_unstable`` lifts the ``spectral_radius <= 1``
    restriction for short stabilization experiments.
    """
    if n_x < 1 or n_u < 1:
        raise InvalidParam("n_x and n_u must be positive")
    rho_max = np.inf if allow_unstable else 1.0
    if not (0 < spectral_radius <= rho_max):
        raise InvalidParam(f"spectral_radius must lie in (0, {rho_max}], got {spectral_radius}")
    if n_t < 10 * (n_x + 2 * n_u):
        raise InvalidParam(f"n_t={n_t} is below 10*(n_x + 2*n_u) = {10 * (n_x + 2 * n_u)}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n_x, n_x))
    A *= spectral_radius / _spectral_radius(A)
    B = rng.standard_normal((n_x, n_u)) / np.sqrt(n_u)
    B_next = rng.standard_normal((n_x, n_u)) / np.sqrt(n_u)
    u = sinusoid_forcing(n_u, n_t, rng, n_modes=n_modes, amplitude=forcing_amplitude)
    x = np.zeros((n_x, n_t))
    x[:, 0] = x0_scale * rng.standard_normal(n_x)
    for k in range(n_t - 1):
        x[:, k + 1] = A @ x[:, k] + B @ u[:, k] + B_next @ u[:, k + 1]
    if not np.all(np.isfinite(x)):
        raise InvalidParam("trajectory overflowed; reduce n_t or spectral_radius")
    train_end, val_end = split or default_split(n_t)
    meta = {"generator": {"name": "linear", "n_x": n_x, "n_u": n_u, "n_t": n_t,
                          "spectral_radius": spectral_radius, "seed": seed,
                          "forcing_amplitude": forcing_amplitude, "x0_scale": x0_scale,
                          "n_modes": n_modes, "allow_unstable": allow_unstable}}
    d = Dataset(
        blocks=(VariableBlock("x", "state", x), VariableBlock("u", "forcing", u)),
        dt_seconds=1.0, element_weights=uniform_weights(n_x),
        train_end=train_end, val_end=val_end, meta=meta,
    )
    return d, LinearTruth(A, B, B_next)


@dataclass(frozen=True)
class BoundarySignal:
    """Inflow value ``mean + sum_m a_m sin(2 pi t / P_m + phi_m) + noise(t)``.

    Phases and noise knots are drawn from ``seed``; the noise is a monotone cubic
    interpolant through Gaussian knots spaced ``noise_scale`` apart, so the signal
    is a function of physical time only and does not depend on the solver step.
    """

    mean: float = 1.0
    amplitudes: tuple = (0.3, 0.15)
    periods: tuple = (1.3, 0.45)
    noise_amp: float = 0.05
    noise_scale: float = 0.1

    def build(self, t_end, seed):
        rng = np.random.default_rng(seed)
        phases = rng.uniform(0.0, 2 * np.pi, len(self.amplitudes))
        n_knots = int(np.ceil(t_end / self.noise_scale)) + 2
        knots_t = np.arange(n_knots) * self.noise_scale
        knots_v = self.noise_amp * rng.standard_normal(n_knots)
        noise = PchipInterpolator(knots_t, knots_v) if self.noise_amp > 0 else None
        amps = np.asarray(self.amplitudes, dtype=np.float64)
        periods = np.asarray(self.periods, dtype=np.float64)

        def signal(t):
            t = np.asarray(t, dtype=np.float64)
            val = self.mean + (amps[:, None] * np.sin(2 * np.pi * t[None, :] / periods[:, None]
                                                       + phases[:, None])).sum(0)
            return val + noise(t) if noise is not None else val

        return signal

    def bound(self):
        return abs(self.mean) + float(np.sum(np.abs(self.amplitudes))) + 4.0 * self.noise_amp

    def to_json(self):
        return {"mean": self.mean, "amplitudes": list(self.amplitudes), "periods": list(self.periods),
                "noise_amp": self.noise_amp, "noise_scale": self.noise_scale}


def burgers_step(u, left, dx, dt, viscosity):
    """One explicit step: first-order upwind convection, central diffusion.

    ``left`` is the Dirichlet inflow value; the right boundary is zero-gradient outflow.
    """
    ext = np.concatenate(([left], u, [u[-1]]))
    back = (ext[1:-1] - ext[:-2]) / dx
    fwd = (ext[2:] - ext[1:-1]) / dx
    conv = np.where(u > 0, u * back, u * fwd)
    diff = viscosity * (ext[2:] - 2.0 * ext[1:-1] + ext[:-2]) / (dx * dx)
    return u + dt * (diff - conv)


def burgers_cfl(max_speed, dx, dt, viscosity):
    return dt * (max_speed / dx + 2.0 * viscosity / (dx * dx))


def gen_burgers_forced(n_cells=128, n_t=4000, viscosity=0.01, dt=1e-3, boundary_signal=None,
                       seed=0, initial=None, split=None, cfl_limit=0.9, save_every=1):
    """Viscous Burgers on [0, 1] driven by a time-varying inflow at the left boundary.

    The state block ``"velocity"`` holds the cell values, the forcing block ``"inflow"``
    the boundary value at every snapshot. ``initial`` defaults to the inflow value at t=0.
    The solver advances with ``dt``; every ``save_every``-th state becomes a snapshot,
    so snapshots are ``dt * save_every`` apart.
    """
    if n_cells < 32:
        raise InvalidParam(f"n_cells must be at least 32, got {n_cells}")
    if n_t < 2 or viscosity < 0 or dt <= 0 or save_every < 1:
        raise InvalidParam("need n_t >= 2, viscosity >= 0, dt > 0 and save_every >= 1")
    sig = boundary_signal or BoundarySignal()
    dx = 1.0 / n_cells
    n_steps = (n_t - 1) * save_every
    times = np.arange(n_steps + 1) * dt
    inflow = sig.build(times[-1] + dt, seed)(times)
    if initial is None:
        x0 = np.full(n_cells, inflow[0])
    else:
        x0 = np.broadcast_to(np.asarray(initial, dtype=np.float64), (n_cells,)).copy()
    speed = max(float(np.max(np.abs(inflow))), float(np.max(np.abs(x0))))
    factor = burgers_cfl(speed, dx, dt, viscosity)
    if factor > cfl_limit:
        raise CflError(factor, cfl_limit)

    x = np.empty((n_cells, n_t))
    x[:, 0] = u = x0
    for k in range(n_steps):
        u = burgers_step(u, inflow[k], dx, dt, viscosity)
        if (k + 1) % save_every == 0:
            x[:, (k + 1) // save_every] = u
    train_end, val_end = split or default_split(n_t)
    meta = {"generator": {"name": "burgers", "n_cells": n_cells, "n_t": n_t, "viscosity": viscosity,
                          "dt": dt, "save_every": save_every, "seed": seed, "boundary_signal": sig.to_json(),
                          "cfl_factor": factor}}
    return Dataset(
        blocks=(VariableBlock("velocity", "state", x, "m/s"),
                VariableBlock("inflow", "forcing", inflow[None, ::save_every].copy(), "m/s")),
        dt_seconds=dt * save_every, element_weights=uniform_weights(n_cells),
        train_end=train_end, val_end=val_end, meta=meta,
    )


# ---------------------------------------------------------------- bundles


def write_raw(path, array):
    np.ascontiguousarray(array, dtype="<f8").tofile(path)


def read_raw(path, shape):
    arr = np.fromfile(path, dtype="<f8")
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise ConfigError(f"{path} holds {arr.size} values, manifest says {expected}")
    return arr.reshape(shape).astype(np.float64)


def atomic_directory(path, force=False):
    """Context helper: returns (tmp_dir, commit) writing into a sibling temp dir."""
    path = Path(path)
    if path.exists() and not force:
        raise ConfigError(f"{path} exists; pass force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))

    def commit():
        if path.exists():
            shutil.rmtree(path)
        os.replace(tmp, path)

    return tmp, commit


def dump_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_dataset(d, path, stats=None, force=False):
    tmp, commit = atomic_directory(path, force)
    try:
        blocks = []
        for i, b in enumerate(d.blocks):
            fname = f"block_{i:02d}_{b.name}.bin"
            write_raw(tmp / fname, b.values)
            blocks.append({"name": b.name, "kind": b.kind, "units": b.units,
                           "shape": list(b.values.shape), "file": fname})
        write_raw(tmp / "weights.bin", d.element_weights)
        manifest = {
            "format_version": FORMAT_VERSION,
            "dt_seconds": d.dt_seconds,
            "blocks": blocks,
            "weights": {"file": "weights.bin", "length": int(d.element_weights.size)},
            "split": {"train_end_index": d.train_end, "val_end_index": d.val_end},
            "t0_index": d.t0_index,
            "meta": d.meta,
        }
        if stats is not None:
            manifest["normalization"] = stats.to_json()
        dump_json(tmp / "manifest.json", manifest)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    commit()
    return Path(path)


def load_dataset(path):
    """Read a dataset bundle; returns ``(dataset, NormStats or None)``."""
    path = Path(path)
    try:
        with open(path / "manifest.json") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"no manifest.json in {path}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported dataset format {manifest.get('format_version')}")
    blocks = tuple(
        VariableBlock(b["name"], b["kind"], read_raw(path / b["file"], tuple(b["shape"])), b.get("units", ""))
        for b in manifest["blocks"]
    )
    weights = read_raw(path / manifest["weights"]["file"], (manifest["weights"]["length"],))
    d = Dataset(blocks=blocks, dt_seconds=manifest["dt_seconds"], element_weights=weights,
                train_end=manifest["split"]["train_end_index"], val_end=manifest["split"]["val_end_index"],
                t0_index=manifest.get("t0_index", 0), meta=manifest.get("meta", {}))
    stats = NormStats.from_json(manifest["normalization"]) if "normalization" in manifest else None
    return d, stats
