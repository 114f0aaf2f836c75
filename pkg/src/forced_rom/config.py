"""Experiment configuration documents (JSON) with strict validation.

Every section is checked against the fields it may contain; unknown keys and
invalid values raise ConfigError carrying the dotted path of the offending field.
Defaults are materialized by :meth:`RunConfig.to_json`, so a saved config fully
describes a run.
"""
import inspect
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import gen_burgers_forced, gen_linear_forced, load_dataset
from .errors import ConfigError, ForcedRomError
from .training.losses import LossConfig, UnrollConfig
from .training.train import FAMILIES, StackSpec, TrainConfig

GENERATORS = {"linear": gen_linear_forced, "burgers": gen_burgers_forced}


def _check_keys(doc, allowed, path):
    if not isinstance(doc, dict):
        raise ConfigError(f"expected an object, got {type(doc).__name__}", path)
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", f"{path}.{unknown[0]}" if path else unknown[0])


def _build(cls, doc, path, convert=None):
    _check_keys(doc, [f.name for f in fields(cls)], path)
    doc = dict(doc)
    for key, fn in (convert or {}).items():
        if doc.get(key) is not None:
            doc[key] = fn(doc[key], f"{path}.{key}")
    try:
        return cls(**doc)
    except ConfigError:
        raise
    except (ForcedRomError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path) from exc


def parse_train(doc, path="train"):
    return _build(TrainConfig, doc, path, {
        "loss": lambda d, p: _build(LossConfig, d, p),
        "unroll": lambda d, p: _build(UnrollConfig, d, p),
    })


def parse_stack(doc, path="stack"):
    spec = _build(StackSpec, doc, path)
    for name in ("state_groups", "forcing_groups"):
        for i, (_, r) in enumerate(getattr(spec, name)):
            if r < 1:
                raise ConfigError("latent dimension must be >= 1", f"{path}.{name}[{i}]")
    return spec


@dataclass(frozen=True)
class DatasetSource:
    path: str = None
    generator: str = None
    params: dict = field(default_factory=dict)

    def to_json(self):
        if self.path is not None:
            return {"path": self.path}
        return {"generator": self.generator, "params": dict(self.params)}

    def load(self, seed=None):
        """Return the dataset (generated or read from disk)."""
        if self.path is not None:
            try:
                return load_dataset(self.path)[0]
            except FileNotFoundError as exc:
                raise ConfigError(f"dataset bundle {self.path} not found", "dataset.path") from exc
        return generate(self.generator, self.params, seed)


def parse_source(doc, path="dataset"):
    _check_keys(doc, ["path", "generator", "params"], path)
    if ("path" in doc) == ("generator" in doc):
        raise ConfigError("give exactly one of 'path' or 'generator'", path)
    if "path" in doc:
        if "params" in doc:
            raise ConfigError("'params' only applies to generators", f"{path}.params")
        return DatasetSource(path=str(doc["path"]))
    check_generator(doc["generator"], doc.get("params", {}), path)
    return DatasetSource(generator=doc["generator"], params=dict(doc.get("params", {})))


def check_generator(name, params, path="generator"):
    if name not in GENERATORS:
        raise ConfigError(f"unknown generator {name!r}; expected one of {sorted(GENERATORS)}", f"{path}.generator")
    allowed = [p for p in inspect.signature(GENERATORS[name]).parameters if p not in ("boundary_signal", "initial")]
    _check_keys(params, allowed, f"{path}.params")


def generate(name, params, seed=None, path="dataset"):
    """Run a generator; returns the Dataset. ``seed`` overrides ``params["seed"]``."""
    check_generator(name, params, path)
    kw = dict(params)
    if seed is not None:
        kw["seed"] = seed
    if "split" in kw and kw["split"] is not None:
        kw["split"] = tuple(kw["split"])
    try:
        out = GENERATORS[name](**kw)
    except ConfigError:
        raise
    except (ForcedRomError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), f"{path}.params") from exc
    d = out[0] if isinstance(out, tuple) else out
    d.meta.setdefault("generator", {}).update({"name": name, "params": kw})
    return d


@dataclass(frozen=True)
class RolloutOptions:
    horizon: int = None
    decode: str = "end"

    def __post_init__(self):
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.decode not in ("end", "step"):
            raise ValueError("decode must be 'end' or 'step'")


@dataclass(frozen=True)
class MetricOptions:
    percentiles: tuple = (2.0, 98.0)
    element_csv: bool = False

    def __post_init__(self):
        p = tuple(float(v) for v in self.percentiles)
        if len(p) != 2 or not (0 <= p[0] <= p[1] <= 100):
            raise ValueError("percentiles must be a pair 0 <= lo <= hi <= 100")
        object.__setattr__(self, "percentiles", p)


@dataclass(frozen=True)
class RunConfig:
    name: str
    family: str
    dataset: DatasetSource
    stack: StackSpec
    train: TrainConfig = field(default_factory=TrainConfig)
    rollout: RolloutOptions = field(default_factory=RolloutOptions)
    metrics: MetricOptions = field(default_factory=MetricOptions)
    output: str = None

    def to_json(self):
        return {
            "name": self.name,
            "family": self.family,
            "dataset": self.dataset.to_json(),
            "stack": self.stack.to_json(),
            "train": self.train.to_json(),
            "rollout": {"horizon": self.rollout.horizon, "decode": self.rollout.decode},
            "metrics": {"percentiles": list(self.metrics.percentiles), "element_csv": self.metrics.element_csv},
            "output": self.output,
        }

    def with_seed(self, seed):
        from dataclasses import replace

        return replace(self, train=replace(self.train, seed=seed))


def parse_run(doc, path=""):
    _check_keys(doc, [f.name for f in fields(RunConfig)], path)
    pre = f"{path}." if path else ""
    for key in ("name", "family", "dataset", "stack"):
        if key not in doc:
            raise ConfigError("missing required key", f"{pre}{key}")
    if not isinstance(doc["name"], str) or not doc["name"]:
        raise ConfigError("name must be a non-empty string", f"{pre}name")
    if doc["family"] not in FAMILIES:
        raise ConfigError(f"unknown family {doc['family']!r}; expected one of {list(FAMILIES)}", f"{pre}family")
    return RunConfig(
        name=doc["name"],
        family=doc["family"],
        dataset=parse_source(doc["dataset"], f"{pre}dataset"),
        stack=parse_stack(doc["stack"], f"{pre}stack"),
        train=parse_train(doc.get("train", {}), f"{pre}train"),
        rollout=_build(RolloutOptions, doc.get("rollout", {}), f"{pre}rollout"),
        metrics=_build(MetricOptions, doc.get("metrics", {}), f"{pre}metrics"),
        output=doc.get("output"),
    )


def read_json(path):
    try:
        with open(Path(path)) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
