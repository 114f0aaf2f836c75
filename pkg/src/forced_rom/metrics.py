"""Evaluation metrics: weighted R2 and RMSE, range-normalized RMSE, error spread, skill retention.

All functions take snapshot matrices ``[n_space, n_time]`` and per-element weights
of length ``n_space``. Weights are rescaled so they sum to ``n_space``; a uniform
mesh therefore gets ``w_i = 1``.
"""
import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateVariance, ShapeError

DEFAULT_PERCENTILES = (2.0, 98.0)


def _prepare(truth, pred, weights=None):
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.ndim == 1:
        truth = truth[:, None]
    if pred.ndim == 1:
        pred = pred[:, None]
    if truth.shape != pred.shape:
        raise ShapeError(f"truth {truth.shape} and prediction {pred.shape} differ")
    n = truth.shape[0]
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape != (n,):
            raise ShapeError(f"expected {n} weights, got {w.shape}")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        w = w * (n / w.sum())
    return truth, pred, w


def normalized_weights(weights, n):
    _, _, w = _prepare(np.zeros((n, 1)), np.zeros((n, 1)), weights)
    return w


def r2(truth, pred, weights=None):
    """``1 - SS_res / SS_tot`` with the weighted space-time mean as reference."""
    truth, pred, w = _prepare(truth, pred, weights)
    mean = np.sum(w[:, None] * truth) / (w.sum() * truth.shape[1])
    ss_tot = np.sum(w[:, None] * (truth - mean) ** 2)
    if ss_tot <= 0:
        raise DegenerateVariance("truth is constant; R2 is undefined")
    return float(1.0 - np.sum(w[:, None] * (truth - pred) ** 2) / ss_tot)


def rmse_weighted(truth, pred, weights=None):
    truth, pred, w = _prepare(truth, pred, weights)
    return float(np.sqrt(np.mean(w[:, None] * (truth - pred) ** 2)))


def _ranges(truth):
    rng = truth.max(axis=1) - truth.min(axis=1)
    keep = rng > 0
    if not np.any(keep):
        raise DegenerateVariance("every element has zero temporal range")
    return rng, keep


def rel_rmse_elements(truth, pred, weights=None):
    """Per-element ``sqrt(mean_k w_i e_ki^2) / range_i``; NaN where the range is zero."""
    truth, pred, w = _prepare(truth, pred, weights)
    rng, keep = _ranges(truth)
    out = np.full(truth.shape[0], np.nan)
    err = np.sqrt(np.mean(w[:, None] * (truth - pred) ** 2, axis=1))
    out[keep] = err[keep] / rng[keep]
    return out


def rel_rmse(truth, pred, weights=None, return_excluded=False):
    """Mean over elements of range-normalized temporal RMSE; zero-range elements are skipped."""
    per = rel_rmse_elements(truth, pred, weights)
    keep = ~np.isnan(per)
    value = float(np.mean(per[keep]))
    if return_excluded:
        return value, int(np.sum(~keep))
    return value


def error_spread(truth, pred, percentiles=DEFAULT_PERCENTILES):
    """Temporal percentiles of the per-step worst range-normalized absolute error."""
    truth, pred, _ = _prepare(truth, pred)
    rng, keep = _ranges(truth)
    if truth.shape[1] == 0:
        raise ShapeError("no time steps")
    worst = np.max(np.abs(truth - pred)[keep] / rng[keep, None], axis=0)
    lo, hi = np.percentile(worst, list(percentiles), method="linear")
    return float(lo), float(hi)


def skill_retention(rmse_surrogate, rmse_reference):
    """Percentage change in RMSE of the surrogate relative to the reference model."""
    if rmse_reference <= 0:
        raise DegenerateVariance("reference RMSE must be positive")
    return 100.0 * (rmse_surrogate - rmse_reference) / rmse_reference


@dataclass
class VariableScores:
    r2: float
    rmse: float
    rel_rmse: float
    spread: tuple
    excluded: int


@dataclass
class EvalReport:
    variables: dict
    percentiles: tuple = DEFAULT_PERCENTILES
    steps: int = 0
    skill: dict = field(default_factory=dict)
    per_element: dict = field(default_factory=dict, repr=False)

    def to_json(self):
        return {
            "percentiles": list(self.percentiles),
            "steps": self.steps,
            "variables": {k: {"r2": v.r2, "rmse": v.rmse, "rel_rmse": v.rel_rmse,
                              "spread": list(v.spread), "excluded_elements": v.excluded}
                          for k, v in self.variables.items()},
            "skill": self.skill,
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def element_csv(self):
        """CSV with one row per (variable, element): weighted temporal RMSE and its range-normalized value."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["variable", "element", "rmse", "rel_rmse"])
        for name, (rmse_e, rel_e) in self.per_element.items():
            for i, (a, b) in enumerate(zip(rmse_e, rel_e)):
                wr.writerow([name, i, repr(float(a)), "" if np.isnan(b) else repr(float(b))])
        return buf.getvalue()


def evaluate(truth, pred, weights=None, percentiles=DEFAULT_PERCENTILES, reference=None):
    """Score each variable in ``truth`` (dict of snapshot matrices) against ``pred``.

    ``reference`` optionally maps variable names to reference-model predictions;
    the report then carries the surrogate and reference RMSE and the percentage change.
    """
    scores, per_element, skill = {}, {}, {}
    steps = 0
    for name, t in truth.items():
        if name not in pred:
            raise ShapeError(f"prediction lacks variable {name!r}")
        t, p, w = _prepare(t, pred[name], weights)
        steps = t.shape[1]
        rel, excluded = rel_rmse(t, p, w, return_excluded=True)
        rmse = rmse_weighted(t, p, w)
        scores[name] = VariableScores(r2(t, p, w), rmse, rel, error_spread(t, p, percentiles), excluded)
        per_element[name] = (np.sqrt(np.mean(w[:, None] * (t - p) ** 2, axis=1)), rel_rmse_elements(t, p, w))
        if reference is not None and name in reference:
            ref = rmse_weighted(t, reference[name], w)
            skill[name] = {"rmse_surrogate": rmse, "rmse_reference": ref,
                           "increase_percent": skill_retention(rmse, ref)}
    return EvalReport(scores, tuple(percentiles), steps, skill, per_element)
