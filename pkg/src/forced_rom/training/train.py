"""Training loops for the five surrogate families.

PODLR      POD coders + closed-form least-squares propagator (no epochs).
PODLRt     POD coders + linear propagator trained by gradient descent.
PODMLP     POD coders + ReLU MLP propagator.
LKAE       linear state and forcing coders trained jointly with a Koopman matrix.
KAE        linear state coder, nonlinear forcing encoder, Koopman matrix.

Every gradient-trained family can add the eigenvalue penalty (linear propagators
only) and temporal unrolling. Validation on the chronological tail of the
training period drives the learning-rate scheduler and early stopping.
"""
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..autoencoders import AutoencoderStack, Group, NeuralCoder, fit_pod_stack
from ..data import normalize
from ..errors import ConfigError, EmptySplit, InvalidParam, NonFiniteGradient, TrainingDiverged
from ..nn.autodiff import backward, mse, no_grad
from ..nn.optim import Adam, EarlyStopping, PlateauScheduler
from ..propagators import KoopmanOperator, LinearPropagator, MlpPropagator, inner_spectral_radius, ols_fit
from ..rollout import Surrogate
from .losses import (LossConfig, UnrollConfig, eig_penalty_t, loss_kae_onestep, loss_latent_onestep,
                     loss_unrolled, make_unroll_batches)

log = logging.getLogger(__name__)

FAMILIES = ("PODLR", "PODLRt", "PODMLP", "LKAE", "KAE")
POD_FAMILIES = ("PODLR", "PODLRt", "PODMLP")


@dataclass(frozen=True)
class StackSpec:
    """Group layout of the state and forcing coders.

    Each group is ``(variables, latent_dim)``. ``forcing_hidden`` sets the hidden
    widths of the nonlinear forcing encoder used by KAE; ``propagator_hidden`` the
    hidden widths of the PODMLP propagator (default: two layers as wide as its input).
    """

    state_groups: tuple
    forcing_groups: tuple
    center: bool = True
    norm_mode: str = "zscore"
    forcing_hidden: tuple = (64, 64)
    propagator_hidden: tuple = None

    def __post_init__(self):
        norm = lambda groups: tuple((tuple(v), int(r)) for v, r in groups)  # noqa: E731
        object.__setattr__(self, "state_groups", norm(self.state_groups))
        object.__setattr__(self, "forcing_groups", norm(self.forcing_groups))
        object.__setattr__(self, "forcing_hidden", tuple(self.forcing_hidden))
        if self.propagator_hidden is not None:
            object.__setattr__(self, "propagator_hidden", tuple(self.propagator_hidden))

    def to_json(self):
        doc = asdict(self)
        doc["state_groups"] = [[list(v), r] for v, r in self.state_groups]
        doc["forcing_groups"] = [[list(v), r] for v, r in self.forcing_groups]
        doc["forcing_hidden"] = list(self.forcing_hidden)
        doc["propagator_hidden"] = None if self.propagator_hidden is None else list(self.propagator_hidden)
        return doc

    @classmethod
    def from_json(cls, doc):
        return cls(**doc)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    optimizer: str = "adam"
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scheduler_patience: int = 10
    scheduler_factor: float = 0.1
    scheduler_min_improvement: float = 0.0
    min_lr: float = 0.0
    early_stop_tol: float = 1e-2
    early_stop_patience: int = 20
    max_epochs: int = 200
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)
    unroll: UnrollConfig = None
    clip_norm: float = None
    restore_best: bool = False

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 0 or self.lr <= 0:
            raise InvalidParam("batch_size, max_epochs and lr must be positive")
        if self.optimizer not in ("adam", "adamw"):
            raise InvalidParam(f"optimizer must be 'adam' or 'adamw', got {self.optimizer!r}")
        if self.unroll is not None and self.unroll.steps >= self.batch_size:
            raise InvalidParam("unroll steps must be smaller than the batch size")

    def to_json(self):
        doc = asdict(self)
        doc["loss"] = asdict(self.loss)
        doc["unroll"] = None if self.unroll is None else asdict(self.unroll)
        return doc

    @classmethod
    def from_json(cls, doc):
        doc = dict(doc)
        if "loss" in doc:
            doc["loss"] = LossConfig(**doc["loss"])
        if doc.get("unroll") is not None:
            doc["unroll"] = UnrollConfig(**doc["unroll"])
        return cls(**doc)


def config_hash(family, spec, cfg):
    doc = {"family": family, "stack": spec.to_json(), "train": cfg.to_json()}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def log_digest(entries):
    return hashlib.sha256("\n".join(json.dumps(e, sort_keys=True) for e in entries).encode()).hexdigest()


def _check_layout(dataset, spec):
    kinds = {b.name: b.kind for b in dataset.blocks}
    for groups, kind in ((spec.state_groups, "state"), (spec.forcing_groups, "forcing")):
        if not groups:
            raise ConfigError(f"at least one {kind} group is required")
        covered = [v for vs, _ in groups for v in vs]
        for v in covered:
            if v not in kinds:
                raise ConfigError(f"unknown variable {v!r}")
            if kinds[v] != kind:
                raise ConfigError(f"variable {v!r} is a {kinds[v]} block, not {kind}")
        expected = sorted(n for n, k in kinds.items() if k == kind)
        if sorted(covered) != expected:
            raise ConfigError(f"{kind} groups must cover each of {expected} exactly once, got {covered}")


class _Model:
    def __init__(self, state_stack, forcing_stack, propagator):
        self.state_stack = state_stack
        self.forcing_stack = forcing_stack
        self.propagator = propagator

    def parameters(self):
        return self.state_stack.parameters() + self.forcing_stack.parameters() + self.propagator.parameters()


def _neural_stack(groups, sizes, rng, linear, hidden, with_decoder):
    built = []
    for variables, r in groups:
        n_in = sum(sizes[v] for v in variables)
        built.append(Group(variables, NeuralCoder.build(n_in, r, rng, hidden=hidden, linear=linear,
                                                        with_decoder=with_decoder)))
    return AutoencoderStack(built, sizes)


def train(family, dataset, spec, cfg, on_epoch=None):
    """Fit a surrogate of ``family`` on ``dataset`` and return it frozen.

    For the POD families the reconstruction weight is forced to zero. Raises
    TrainingDiverged when a loss or gradient becomes non-finite.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}; expected one of {FAMILIES}")
    _check_layout(dataset, spec)
    if family in POD_FAMILIES and cfg.loss.alpha_recon != 0:
        cfg = replace(cfg, loss=replace(cfg.loss, alpha_recon=0.0))
    if family == "PODMLP" and cfg.loss.alpha_eig > 0:
        raise InvalidParam("the eigenvalue penalty needs a linear propagator; PODMLP has none")
    te, ve = dataset.train_end, dataset.val_end
    if te < 2:
        raise EmptySplit("training split needs at least two time steps")

    norm_d, stats = normalize(dataset, spec.norm_mode)
    sizes = {b.name: b.n_space for b in dataset.blocks}
    rng = np.random.default_rng(cfg.seed)
    svars = [v for vs, _ in spec.state_groups for v in vs]
    fvars = [v for vs, _ in spec.forcing_groups for v in vs]
    X = np.vstack([norm_d.block(v).values for v in svars])
    U = np.vstack([norm_d.block(v).values for v in fvars])

    if family in POD_FAMILIES:
        fit_vals = {b.name: b.values[:, :te] for b in norm_d.blocks}
        state_stack = fit_pod_stack(fit_vals, spec.state_groups, sizes, seed=cfg.seed, center=spec.center)
        forcing_stack = fit_pod_stack(fit_vals, spec.forcing_groups, sizes, seed=cfg.seed + 7919,
                                      center=spec.center)
        Z = state_stack.encode(X)
        W = forcing_stack.encode(U)
        nz, nw = Z.shape[0], W.shape[0]
        if family == "PODLR":
            prop = ols_fit(Z[:, :te - 1], W[:, :te - 1], W[:, 1:te], Z[:, 1:te])
            entries = []
        else:
            if family == "PODLRt":
                prop = LinearPropagator.init(nz, nw, rng)
            else:
                prop = MlpPropagator.init(nz, nw, rng, hidden=spec.propagator_hidden)
            model = _Model(state_stack, forcing_stack, prop)
            entries = _fit(model, _LatentTask(Z.T, W.T, te, ve, cfg), cfg, on_epoch)
    else:
        state_stack = _neural_stack(spec.state_groups, sizes, rng, linear=True, hidden=(), with_decoder=True)
        forcing_stack = _neural_stack(spec.forcing_groups, sizes, rng, linear=(family == "LKAE"),
                                      hidden=spec.forcing_hidden, with_decoder=False)
        prop = KoopmanOperator.init(state_stack.latent_dim, forcing_stack.latent_dim, rng)
        model = _Model(state_stack, forcing_stack, prop)
        entries = _fit(model, _PhysicalTask(X.T, U.T, te, ve, cfg), cfg, on_epoch)

    provenance = {
        "family": family,
        "config_hash": config_hash(family, spec, cfg),
        "seed": cfg.seed,
        "epochs": len(entries),
        "log_digest": log_digest(entries),
        "stack": spec.to_json(),
        "train": cfg.to_json(),
    }
    return Surrogate(family, stats, state_stack, forcing_stack, prop, provenance, entries)


class _LatentTask:
    """Objectives on fixed latent trajectories (POD coders)."""

    def __init__(self, Z, W, te, ve, cfg):
        self.Z, self.W, self.te, self.ve, self.cfg = Z, W, te, ve, cfg

    def batches(self, model, seed):
        cfg = self.cfg
        if cfg.unroll is not None:
            for _, z_win, w_win in make_unroll_batches(self.Z[:self.te], self.W[:self.te], cfg.unroll,
                                                       cfg.batch_size, seed):
                yield lambda z_win=z_win, w_win=w_win: self._unrolled(model, z_win, w_win)
            return
        order = np.random.default_rng(seed).permutation(self.te - 1)
        for lo in range(0, order.size, cfg.batch_size):
            k = order[lo:lo + cfg.batch_size]
            yield lambda k=k: self._onestep(model, k)

    def _onestep(self, model, k):
        batch = (self.Z[k], self.W[k], self.W[k + 1], self.Z[k + 1])
        return loss_latent_onestep(model.propagator, batch, self.cfg.loss)

    def _unrolled(self, model, z_win, w_win):
        lc = self.cfg.loss
        pred = loss_unrolled(model.propagator, z_win, w_win)
        eig = _penalty(model.propagator, lc)
        total = lc.alpha_pred * pred + (lc.alpha_eig * eig if eig is not None else 0.0)
        return total, pred, None, eig

    def validation(self, model):
        lo, hi = (self.te, self.ve) if self.ve - self.te > self._need() else (0, self.te)
        Z, W = self.Z[lo:hi], self.W[lo:hi]
        if self.cfg.unroll is not None:
            batches = make_unroll_batches(Z, W, self.cfg.unroll, Z.shape[0], 0)
            return sum(float(self._unrolled(model, zw, ww)[0].data) * len(s) for s, zw, ww in batches) / \
                max(1, sum(len(s) for s, _, _ in batches))
        k = np.arange(Z.shape[0] - 1)
        batch = (Z[k], W[k], W[k + 1], Z[k + 1])
        return float(loss_latent_onestep(model.propagator, batch, self.cfg.loss)[0].data)

    def _need(self):
        return 1 if self.cfg.unroll is None else self.cfg.unroll.steps


class _PhysicalTask:
    """Objectives for jointly trained coders; one-step losses in normalized physical space,
    unrolled prediction losses in latent space."""

    def __init__(self, X, U, te, ve, cfg):
        self.X, self.U, self.te, self.ve, self.cfg = X, U, te, ve, cfg

    def batches(self, model, seed):
        cfg = self.cfg
        if cfg.unroll is not None:
            starts = np.arange(0, self.te - cfg.unroll.steps, cfg.unroll.window_stride)
            order = np.random.default_rng(seed).permutation(starts.size)
            for lo in range(0, order.size, cfg.batch_size):
                s = starts[order[lo:lo + cfg.batch_size]]
                yield lambda s=s: self._unrolled(model, s)
            return
        order = np.random.default_rng(seed).permutation(self.te - 1)
        for lo in range(0, order.size, cfg.batch_size):
            k = order[lo:lo + cfg.batch_size]
            yield lambda k=k: self._onestep(model, k)

    def _onestep(self, model, k):
        batch = (self.X[k], self.U[k], self.U[k + 1], self.X[k + 1])
        total, pred, recon, eig = loss_kae_onestep(model, batch, self.cfg.loss)
        return total, pred, recon, eig

    def _unrolled(self, model, s):
        lc, n = self.cfg.loss, self.cfg.unroll.steps
        b = len(s)
        idx = np.concatenate([s + j for j in range(n + 1)])
        x_all = self.X[idx]
        z_all = model.state_stack.encode_rows(x_all)
        w_all = model.forcing_stack.encode_rows(self.U[idx])
        z_win = [z_all[j * b:(j + 1) * b] for j in range(n + 1)]
        w_win = [w_all[j * b:(j + 1) * b] for j in range(n + 1)]
        pred = loss_unrolled(model.propagator, z_win, w_win)
        recon = mse(model.state_stack.decode_rows(z_all), x_all)
        total = lc.alpha_pred * pred + lc.alpha_recon * recon
        eig = _penalty(model.propagator, lc)
        if eig is not None:
            total = total + lc.alpha_eig * eig
        return total, pred, recon, eig

    def validation(self, model):
        need = 1 if self.cfg.unroll is None else self.cfg.unroll.steps
        lo, hi = (self.te, self.ve) if self.ve - self.te > need else (0, self.te)
        if self.cfg.unroll is not None:
            s = np.arange(lo, hi - need, self.cfg.unroll.window_stride)
            return float(self._unrolled(model, s)[0].data)
        k = np.arange(lo, hi - 1)
        return float(self._onestep(model, k)[0].data)


def _penalty(prop, lc):
    if lc.alpha_eig == 0 or not isinstance(prop, LinearPropagator):
        return None
    return eig_penalty_t(prop.weight, prop.state_dim)


def _value(t):
    return None if t is None else float(np.asarray(t.data if hasattr(t, "data") else t))


def _fit(model, task, cfg, on_epoch):
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
               weight_decay=cfg.weight_decay, kind=cfg.optimizer, clip_norm=cfg.clip_norm)
    sched = PlateauScheduler(cfg.scheduler_patience, cfg.scheduler_factor,
                             cfg.scheduler_min_improvement, cfg.min_lr)
    stopper = EarlyStopping(cfg.early_stop_tol, cfg.early_stop_patience)
    epoch_rng = np.random.default_rng([cfg.seed, 1])
    best_val, best_params = np.inf, None
    entries = []
    for epoch in range(cfg.max_epochs):
        sums = {"total": 0.0, "pred": 0.0, "recon": 0.0, "eig": 0.0}
        n_batches = 0
        for closure in task.batches(model, int(epoch_rng.integers(2**62))):
            total, pred, recon, eig = closure()
            value = float(total.data)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, "non-finite training loss")
            opt.zero_grad()
            backward(total)
            try:
                opt.step()
            except NonFiniteGradient as exc:
                raise TrainingDiverged(epoch, str(exc)) from exc
            sums["total"] += value
            sums["pred"] += _value(pred) or 0.0
            sums["recon"] += _value(recon) or 0.0
            sums["eig"] += _value(eig) or 0.0
            n_batches += 1
        with no_grad():
            val = task.validation(model)
        if not np.isfinite(val):
            raise TrainingDiverged(epoch, "non-finite validation loss")
        entry = {"epoch": epoch, "lr": opt.lr, "val_loss": val}
        entry.update({f"train_{k}": v / max(n_batches, 1) for k, v in sums.items()})
        if isinstance(model.propagator, LinearPropagator):
            entry["spectral_radius"] = inner_spectral_radius(model.propagator)
        entries.append(entry)
        if on_epoch is not None:
            on_epoch(entry)
        log.debug("epoch %d: %s", epoch, entry)
        if cfg.restore_best and val < best_val:
            best_val, best_params = val, [p.data.copy() for p in params]
        opt.lr = sched.step(val, opt.lr)
        if stopper.step(val) == "stop":
            break
    if cfg.restore_best and best_params is not None:
        for p, data in zip(params, best_params):
            p.data = data
    return entries
