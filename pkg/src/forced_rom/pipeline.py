"""Glue shared by the CLI and the acceptance harness: forecasts, prediction bundles, runs."""
import copy
import itertools
import time
from dataclasses import replace

import numpy as np

from .data import Dataset, VariableBlock
from .errors import ConfigError, ForcedRomError
from .metrics import evaluate
from .rollout import bench_inference, rollout
from .training.train import train


class EvalMismatch(ConfigError):
    """Prediction and truth bundles do not line up (variables, shapes or time indices)."""


def forecast(s, dataset, start, horizon=None, decode="end"):
    """Roll ``s`` out from the true state at column ``start`` with the dataset's forcings.

    Returns ``(RolloutResult, truth)`` where ``truth`` maps state variables to the
    reference columns ``start + 1 .. start + steps``.
    """
    n = dataset.n_time
    if not 0 <= start < n - 1:
        raise ConfigError(f"rollout start {start} leaves no steps in a series of {n}")
    horizon = n - 1 - start if horizon is None else min(horizon, n - 1 - start)
    x0 = {v: dataset.block(v).values[:, start] for v in s.state_variables}
    forcings = {v: dataset.block(v).values[:, start:start + horizon + 1] for v in s.forcing_variables}
    res = rollout(s, x0, forcings, horizon, decode=decode)
    truth = {v: dataset.block(v).values[:, start + 1:start + 1 + res.steps] for v in s.state_variables}
    return res, truth


def prediction_dataset(s, dataset, start, res):
    """Pack a rollout as a Dataset aligned with the source through ``t0_index``."""
    blocks = [VariableBlock(v, "state", res.predictions[v], dataset.block(v).units) for v in s.state_variables]
    lo, hi = start + 1, start + 1 + res.steps
    blocks += [VariableBlock(v, "forcing", dataset.block(v).values[:, lo:hi].copy(), dataset.block(v).units)
               for v in s.forcing_variables]
    meta = {"prediction": {"family": s.family, "config_hash": s.provenance.get("config_hash"),
                           "start_index": dataset.t0_index + start, "steps": res.steps,
                           "diverged_at": res.diverged_at,
                           "initial_projection_error": res.initial_projection_error}}
    return Dataset(blocks=tuple(blocks), dt_seconds=dataset.dt_seconds, element_weights=dataset.element_weights,
                   train_end=0, val_end=0, t0_index=dataset.t0_index + lo, meta=meta)


def align(pred, truth):
    """Return ``(truth_values, pred_values)`` dicts over the prediction's time window."""
    lo = pred.t0_index - truth.t0_index
    hi = lo + pred.n_time
    if lo < 0 or hi > truth.n_time:
        raise EvalMismatch(f"prediction covers [{pred.t0_index}, {pred.t0_index + pred.n_time}) "
                           f"outside the truth range [{truth.t0_index}, {truth.t0_index + truth.n_time})")
    t, p = {}, {}
    for b in pred.state_blocks:
        if b.name not in truth.names:
            raise EvalMismatch(f"truth lacks variable {b.name!r}")
        ref = truth.block(b.name).values[:, lo:hi]
        if ref.shape != b.values.shape:
            raise EvalMismatch(f"{b.name}: prediction {b.values.shape} vs truth {ref.shape}")
        t[b.name], p[b.name] = ref, b.values
    if pred.element_weights.shape != truth.element_weights.shape:
        raise EvalMismatch("element weights differ in length")
    return t, p


def score(s, dataset, start, horizon=None, percentiles=(2.0, 98.0)):
    """Forecast and evaluate; a diverged rollout scores ``inf``."""
    res, truth = forecast(s, dataset, start, horizon)
    if res.diverged_at is not None or res.steps == 0:
        return res, None
    pred = {v: res.predictions[v] for v in truth}
    return res, evaluate(truth, pred, dataset.element_weights, percentiles)


def mean_rel_rmse(report):
    return float(np.mean([v.rel_rmse for v in report.variables.values()]))


def run_experiment(cfg, dataset=None, split="test", bench_horizon=None):
    """Train ``cfg`` and score it on the test (or validation) period.

    Returns ``(surrogate, row)``. ``row`` holds the scores and wall-clock timings.
    """
    dataset = dataset if dataset is not None else cfg.dataset.load()
    t0 = time.perf_counter()
    s = train(cfg.family, dataset, cfg.stack, cfg.train)
    train_seconds = time.perf_counter() - t0
    if split == "test":
        start, horizon = dataset.val_end, cfg.rollout.horizon
    else:
        start = dataset.train_end
        span = dataset.val_end - dataset.train_end - 1
        horizon = span if cfg.rollout.horizon is None else min(span, cfg.rollout.horizon)
    res, report = score(s, dataset, start, horizon, cfg.metrics.percentiles)
    bench = bench_inference(s, bench_horizon or max(res.steps, 1))
    row = {
        "label": cfg.name,
        "family": s.family,
        "status": "ok" if report is not None else f"diverged at step {res.diverged_at}",
        "epochs": len(s.log),
        "steps": res.steps,
        "rel_rmse": mean_rel_rmse(report) if report else float("inf"),
        "spread_lo": min(v.spread[0] for v in report.variables.values()) if report else float("inf"),
        "spread_hi": max(v.spread[1] for v in report.variables.values()) if report else float("inf"),
        "r2": float(np.mean([v.r2 for v in report.variables.values()])) if report else float("-inf"),
        "train_seconds": train_seconds,
        "inference_seconds": bench["seconds"],
        "steps_per_second": bench["steps_per_second"],
    }
    return s, row


def run_many(cfgs, split="test"):
    """Run each config; failures become rows with a failure status instead of aborting."""
    rows = []
    for cfg in cfgs:
        try:
            _, row = run_experiment(cfg, split=split)
        except ForcedRomError as exc:
            row = {"label": cfg.name, "family": cfg.family, "status": f"failed: {type(exc).__name__}: {exc}"}
        rows.append(row)
    return rows


COLUMNS = ("label", "family", "status", "epochs", "rel_rmse", "spread_lo", "spread_hi", "r2",
           "train_seconds", "inference_seconds")


def format_table(rows, columns=COLUMNS):
    """Aligned plain-text table; missing cells print as ``-``."""
    def cell(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4g}"
        return str(v)

    body = [[cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines) + "\n"


def expand_grid(base_doc, axes):
    """Cartesian product of ``axes`` (dotted key -> list of values) applied to ``base_doc``.

    Order is deterministic: axes sorted by key, values in the listed order.
    """
    keys = sorted(axes)
    for key in keys:
        if not isinstance(axes[key], list) or not axes[key]:
            raise ConfigError("grid axis must be a non-empty list", f"axes.{key}")
    out = []
    for i, combo in enumerate(itertools.product(*(axes[k] for k in keys))):
        doc = copy.deepcopy(base_doc)
        for key, value in zip(keys, combo):
            node = doc
            parts = key.split(".")
            for part in parts[:-1]:
                if not isinstance(node.get(part), dict):
                    node[part] = {} if node.get(part) is None else node[part]
                node = node[part]
            node[parts[-1]] = value
        doc["name"] = f"{base_doc.get('name', 'run')}-{i:03d}"
        out.append((doc, dict(zip(keys, combo))))
    return out


def seeded(cfg, seed):
    return cfg if seed is None else replace(cfg, train=replace(cfg.train, seed=seed))


__all__ = ["EvalMismatch", "forecast", "prediction_dataset", "align", "score", "run_experiment", "run_many",
           "format_table", "expand_grid", "seeded"]
